//! Token ids to 256 Bernoulli logits: scaled embedding plus positional
//! encoding, convolution + GeLU + highway, pre-norm Transformer stack,
//! fixed-length pooling and a final linear map.

use rand::Rng;

use crate::model::{ModelConfig, ModelError};
use crate::nn::layers::{Conv1dSame, Embedding, EncoderLayer, Highway, LayerNorm, Linear};
use crate::nn::tensor::positional_encoding;
use crate::nn::{AttnMask, Graph, ParamStore, Tensor, Var};
use crate::smiles::PAD;

/// Number of pooled vectors: `x_0`, the global mean and `S^m_n` for
/// `n = 2..=5`, `m = 0..n`.
pub const POOL_SLOTS: usize = 16;
const POOL_MAX_N: usize = 5;

#[derive(Debug, Clone)]
pub struct Encoder {
    pub embed: Embedding,
    pub conv: Conv1dSame,
    pub highway: Highway,
    pub layers: Vec<EncoderLayer>,
    pub final_ln: LayerNorm,
    pub to_logits: Linear,
    pe: Tensor,
    d_emb: usize,
    max_len: usize,
}

/// `√d · emb + pe / √d` for rows of `emb`.
pub fn scaled_embedding(g: &mut Graph, emb: Var, pe: &Tensor) -> Result<Var, crate::nn::NnError> {
    let d = g.value(emb).cols() as f64;
    let len = g.value(emb).rows();
    let scaled = g.scale(emb, d.sqrt());
    let pe_rows = pe.data()[..len * pe.cols()]
        .iter()
        .map(|v| v / d.sqrt())
        .collect();
    let pe_var = g.constant(Tensor::matrix(len, pe.cols(), pe_rows));
    g.add(scaled, pe_var)
}

/// Averaging matrix (`POOL_SLOTS × len`) over the given row positions.
pub fn pooling_matrix(len: usize, real: &[usize]) -> Tensor {
    let mut p = vec![0.0; POOL_SLOTS * len];
    let mut fill = |slot: usize, members: &[usize]| {
        if members.is_empty() {
            return;
        }
        let w = 1.0 / members.len() as f64;
        for &i in members {
            p[slot * len + i] = w;
        }
    };
    fill(0, &real[..real.len().min(1)]);
    fill(1, real);
    let mut slot = 2;
    for n in 2..=POOL_MAX_N {
        for m in 0..n {
            let members: Vec<usize> = real
                .iter()
                .enumerate()
                .filter(|(i, _)| i % n == m)
                .map(|(_, &r)| r)
                .collect();
            fill(slot, &members);
            slot += 1;
        }
    }
    Tensor::matrix(POOL_SLOTS, len, p)
}

impl Encoder {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        cfg: &ModelConfig,
        vocab: usize,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        let layers = (0..cfg.enc_layers)
            .map(|i| {
                EncoderLayer::new(
                    store,
                    &format!("enc.layer{i}"),
                    cfg.d_model,
                    cfg.heads,
                    cfg.d_ff,
                    rng,
                )
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            embed: Embedding::new(store, "enc.embed", vocab, cfg.d_emb, rng),
            conv: Conv1dSame::new(
                store,
                "enc.conv",
                cfg.d_emb,
                cfg.d_model,
                cfg.conv_width,
                rng,
            ),
            highway: Highway::new(store, "enc.highway", cfg.d_model, rng),
            layers,
            final_ln: LayerNorm::new(store, "enc.final_ln", cfg.d_model),
            to_logits: Linear::new(
                store,
                "enc.to_logits",
                POOL_SLOTS * cfg.d_model,
                cfg.n_latent(),
                rng,
            ),
            pe: positional_encoding(cfg.max_len, cfg.d_emb),
            d_emb: cfg.d_emb,
            max_len: cfg.max_len,
        })
    }

    fn check_ids(&self, ids: &[usize]) -> Result<(), ModelError> {
        if ids.len() > self.max_len {
            return Err(ModelError::SequenceTooLong {
                len: ids.len(),
                max: self.max_len,
            });
        }
        if let Some(&id) = ids.iter().find(|&&i| i >= self.embed.vocab) {
            return Err(ModelError::TokenOutOfRange {
                id,
                vocab: self.embed.vocab,
            });
        }
        Ok(())
    }

    /// `len × d_emb`; PAD rows are zeroed so they never leak through the
    /// convolution window.
    pub fn embed_with_position(&self, g: &mut Graph, ids: &[usize]) -> Result<Var, ModelError> {
        self.check_ids(ids)?;
        let emb = self.embed.forward(g, ids)?;
        let x = scaled_embedding(g, emb, &self.pe)?;
        if !ids.contains(&(PAD as usize)) {
            return Ok(x);
        }
        let mask = ids
            .iter()
            .flat_map(|&id| {
                std::iter::repeat_n(if id == PAD as usize { 0.0 } else { 1.0 }, self.d_emb)
            })
            .collect();
        let m = g.constant(Tensor::matrix(ids.len(), self.d_emb, mask));
        Ok(g.mul(x, m)?)
    }

    /// Convolution, GeLU, highway: `len × d_model`.
    pub fn preprocess(&self, g: &mut Graph, x: Var) -> Result<Var, ModelError> {
        let c = self.conv.forward(g, x)?;
        let a = g.gelu(c);
        Ok(self.highway.forward(g, a)?)
    }

    /// Transformer stack; `real[i]` marks non-PAD positions.
    pub fn encode(&self, g: &mut Graph, x: Var, real: &[bool]) -> Result<Var, ModelError> {
        let mask = if real.iter().all(|r| *r) {
            AttnMask::None
        } else {
            AttnMask::Keys(real.to_vec())
        };
        let mut h = x;
        for layer in &self.layers {
            h = layer.forward(g, h, &mask)?;
        }
        Ok(self.final_ln.forward(g, h)?)
    }

    /// The 16 pooled vectors concatenated into one `1 × 16·d_model` row,
    /// with indices counted over non-PAD positions.
    pub fn fixed_length_pool(
        &self,
        g: &mut Graph,
        x: Var,
        real: &[bool],
    ) -> Result<Var, ModelError> {
        let positions: Vec<usize> = real
            .iter()
            .enumerate()
            .filter(|(_, r)| **r)
            .map(|(i, _)| i)
            .collect();
        if positions.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        let len = g.value(x).rows();
        let d = g.value(x).cols();
        let p = g.constant(pooling_matrix(len, &positions));
        let pooled = g.matmul(p, x)?;
        Ok(g.reshape(pooled, &[1, POOL_SLOTS * d])?)
    }

    pub fn posterior_logits(&self, g: &mut Graph, code: Var) -> Result<Var, ModelError> {
        Ok(self.to_logits.forward(g, code)?)
    }

    /// Full encoder: ids to `1 × n_latent` logits.
    pub fn forward(&self, g: &mut Graph, ids: &[usize]) -> Result<Var, ModelError> {
        let real: Vec<bool> = ids.iter().map(|&i| i != PAD as usize).collect();
        let x = self.embed_with_position(g, ids)?;
        let x = self.preprocess(g, x)?;
        let x = self.encode(g, x, &real)?;
        let code = self.fixed_length_pool(g, x, &real)?;
        self.posterior_logits(g, code)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn pooling_slots() {
        let p = pooling_matrix(5, &[0, 1, 2, 3, 4]);
        // S^0_2 = {0, 2, 4} sits in slot 2
        let s02: Vec<f64> = p.row_slice(2).to_vec();
        assert_eq!(s02, vec![1.0 / 3.0, 0.0, 1.0 / 3.0, 0.0, 1.0 / 3.0]);
        assert_eq!(p.row_slice(0), &[1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(p.row_slice(1).iter().all(|v| (*v - 0.2).abs() < 1e-15));
        let one = pooling_matrix(1, &[0]);
        let nonzero: Vec<usize> = (0..POOL_SLOTS)
            .filter(|&s| one.row_slice(s)[0] != 0.0)
            .collect();
        // x_0, mean, S^0_2, S^0_3, S^0_4, S^0_5
        assert_eq!(nonzero, vec![0, 1, 2, 4, 7, 11]);
    }

    #[test]
    fn embedding_correction() {
        let cfg = ModelConfig::tiny();
        let mut s = ParamStore::new();
        let enc = Encoder::new(&mut s, &cfg, 7, &mut stream(0, "t", 0, 0)).unwrap();
        *s.get_mut(enc.embed.table) = Tensor::zeros(&[7, 4]);
        let mut g = Graph::new(&s);
        let x = enc.embed_with_position(&mut g, &[1, 4, 2]).unwrap();
        let pe = positional_encoding(3, 4);
        let expect = pe.map(|v| v / 2.0);
        assert!(g.value(x).max_abs_diff(&expect) < 1e-15);
        assert_eq!(g.value(x).row_slice(0)[..2], [0.0, 0.5]);
        assert!(matches!(
            enc.embed_with_position(&mut g, &[9]),
            Err(ModelError::TokenOutOfRange { id: 9, vocab: 7 })
        ));
        assert!(matches!(
            enc.embed_with_position(&mut g, &[1; 13]),
            Err(ModelError::SequenceTooLong { .. })
        ));
    }

    #[test]
    fn trailing_pad_does_not_change_logits() {
        let cfg = ModelConfig::tiny();
        let mut s = ParamStore::new();
        let enc = Encoder::new(&mut s, &cfg, 7, &mut stream(4, "t", 0, 0)).unwrap();
        let run = |ids: &[usize]| {
            let mut g = Graph::new(&s);
            let v = enc.forward(&mut g, ids).unwrap();
            g.value(v).clone()
        };
        let a = run(&[1, 4, 5, 6, 2]);
        let b = run(&[1, 4, 5, 6, 2, 0, 0, 0]);
        assert_eq!(a.shape(), &[1, 6]);
        assert!(a.max_abs_diff(&b) < 1e-12);
        assert_eq!(a, run(&[1, 4, 5, 6, 2]));
    }
}
