use std::collections::{BTreeSet, HashMap};

use super::token::Token;
use super::SmilesError;

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
pub const SPECIALS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Dense token-id mapping; ids 0..4 are the special symbols.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    id_of: HashMap<String, u32>,
}

impl Vocabulary {
    /// Specials first, then the distinct token texts in sorted order.
    pub fn from_tokens<'a, I>(tokens: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let distinct: BTreeSet<&str> = tokens
            .into_iter()
            .filter(|t| !SPECIALS.contains(t))
            .collect();
        let all = SPECIALS
            .iter()
            .copied()
            .chain(distinct)
            .map(str::to_string)
            .collect();
        Self::from_list(all)
    }

    fn from_list(tokens: Vec<String>) -> Self {
        let id_of = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, id_of }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, text: &str) -> u32 {
        self.id_of.get(text).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_special(id: u32) -> bool {
        id < SPECIALS.len() as u32
    }

    /// BOS, token ids, EOS.
    pub fn encode(&self, tokens: &[Token]) -> Vec<u32> {
        let mut ids = Vec::with_capacity(tokens.len() + 2);
        ids.push(BOS);
        ids.extend(tokens.iter().map(|t| self.id(&t.text)));
        ids.push(EOS);
        ids
    }

    /// Join the texts of non-special ids.
    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .filter(|&&i| !Self::is_special(i))
            .filter_map(|&i| self.token(i))
            .collect()
    }

    /// One token per line in id order.
    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self, SmilesError> {
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        if tokens.len() < SPECIALS.len() || tokens[..4] != SPECIALS {
            return Err(SmilesError::BadVocabulary(
                "special tokens must come first".into(),
            ));
        }
        let distinct: BTreeSet<&String> = tokens.iter().collect();
        if distinct.len() != tokens.len() || tokens.iter().any(|t| t.is_empty()) {
            return Err(SmilesError::BadVocabulary(
                "duplicate or empty token".into(),
            ));
        }
        Ok(Self::from_list(tokens))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smiles::tokenize;

    #[test]
    fn dense_ids_and_specials() {
        let v = Vocabulary::from_tokens(["C", "O", "C", "("]);
        assert_eq!(v.len(), 7);
        assert_eq!(v.token(0), Some("<pad>"));
        assert_eq!(v.id("("), 4);
        assert_eq!(v.id("Xx"), UNK);
        let ids = v.encode(&tokenize("CO").unwrap());
        assert_eq!(ids, vec![BOS, v.id("C"), v.id("O"), EOS]);
        assert_eq!(v.decode(&ids), "CO");
    }

    #[test]
    fn text_round_trip() {
        let v = Vocabulary::from_tokens(["C", "[nH]", "%12"]);
        assert_eq!(Vocabulary::from_text(&v.to_text()).unwrap(), v);
        assert!(Vocabulary::from_text("C\nO\n").is_err());
    }
}
