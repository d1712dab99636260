use std::fmt;

use super::SmilesError;

/// Lexical class of a SMILES token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    BracketAtom,
    OrganicAtom,
    AromaticAtom,
    Bond,
    Branch,
    RingBond,
    Dot,
    Wildcard,
}

/// One lexeme of a SMILES string.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub text: String,
    pub kind: TokenKind,
}

impl Token {
    fn new(text: &str, kind: TokenKind) -> Self {
        Self {
            text: text.to_string(),
            kind,
        }
    }

    pub fn is_atom(&self) -> bool {
        matches!(
            self.kind,
            TokenKind::BracketAtom
                | TokenKind::OrganicAtom
                | TokenKind::AromaticAtom
                | TokenKind::Wildcard
        )
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// Split a SMILES string into lexemes.
///
/// Multi-character lexemes (bracket atoms, `Cl`, `Br`, `%NN`) win over their
/// single-character prefixes, so joining the token texts gives back the input.
pub fn tokenize(smiles: &str) -> Result<Vec<Token>, SmilesError> {
    if smiles.is_empty() {
        return Err(SmilesError::EmptyInput);
    }
    let bytes = smiles.as_bytes();
    let mut tokens = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let (len, kind) = match c {
            b'[' => match bytes[i + 1..].iter().position(|&b| b == b']') {
                Some(end)
                    if bytes[i + 1..i + 1 + end]
                        .iter()
                        .all(|b| b.is_ascii_graphic() && *b != b'[') =>
                {
                    (end + 2, TokenKind::BracketAtom)
                }
                Some(_) => return Err(SmilesError::UnlexableCharacter(i)),
                None => return Err(SmilesError::UnterminatedBracket(i)),
            },
            b'B' if bytes.get(i + 1) == Some(&b'r') => (2, TokenKind::OrganicAtom),
            b'C' if bytes.get(i + 1) == Some(&b'l') => (2, TokenKind::OrganicAtom),
            b'B' | b'C' | b'N' | b'O' | b'P' | b'S' | b'F' | b'I' => (1, TokenKind::OrganicAtom),
            b'b' | b'c' | b'n' | b'o' | b'p' | b's' => (1, TokenKind::AromaticAtom),
            b'(' | b')' => (1, TokenKind::Branch),
            b'.' => (1, TokenKind::Dot),
            b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => (1, TokenKind::Bond),
            b'0'..=b'9' => (1, TokenKind::RingBond),
            b'%' => match (bytes.get(i + 1), bytes.get(i + 2)) {
                (Some(a), Some(b)) if a.is_ascii_digit() && b.is_ascii_digit() => {
                    (3, TokenKind::RingBond)
                }
                _ => return Err(SmilesError::UnlexableCharacter(i)),
            },
            b'*' => (1, TokenKind::Wildcard),
            _ => return Err(SmilesError::UnlexableCharacter(i)),
        };
        tokens.push(Token::new(&smiles[i..i + len], kind));
        i += len;
    }
    Ok(tokens)
}

/// Concatenate token texts.
pub fn detokenize<'a, I>(tokens: I) -> String
where
    I: IntoIterator<Item = &'a Token>,
{
    tokens.into_iter().map(|t| t.text.as_str()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(s: &str) -> Vec<String> {
        tokenize(s).unwrap().into_iter().map(|t| t.text).collect()
    }

    #[test]
    fn simple_chain() {
        assert_eq!(texts("CCO"), ["C", "C", "O"]);
    }

    #[test]
    fn longest_match_halogens() {
        assert_eq!(texts("C(Cl)Br"), ["C", "(", "Cl", ")", "Br"]);
        // "B" followed by something other than "r" stays boron
        assert_eq!(texts("BC"), ["B", "C"]);
    }

    #[test]
    fn bracket_and_percent_ring() {
        // c | 1 | c | c | [nH] | c | 1 | %12
        assert_eq!(
            texts("c1cc[nH]c1%12"),
            ["c", "1", "c", "c", "[nH]", "c", "1", "%12"]
        );
        let kinds: Vec<_> = tokenize("c1cc[nH]c1%12")
            .unwrap()
            .iter()
            .map(|t| t.kind)
            .collect();
        assert_eq!(kinds[4], TokenKind::BracketAtom);
        assert_eq!(kinds[7], TokenKind::RingBond);
    }

    #[test]
    fn stereo_bonds_are_lexed() {
        assert_eq!(texts("F/C=C\\F"), ["F", "/", "C", "=", "C", "\\", "F"]);
        assert_eq!(texts("[C@@H](O)N"), ["[C@@H]", "(", "O", ")", "N"]);
    }

    #[test]
    fn errors() {
        assert_eq!(tokenize("CX"), Err(SmilesError::UnlexableCharacter(1)));
        assert_eq!(tokenize("C[NH"), Err(SmilesError::UnterminatedBracket(1)));
        assert_eq!(tokenize("C%1"), Err(SmilesError::UnlexableCharacter(1)));
        assert_eq!(tokenize(""), Err(SmilesError::EmptyInput));
        assert_eq!(tokenize("Cé"), Err(SmilesError::UnlexableCharacter(1)));
    }
}
