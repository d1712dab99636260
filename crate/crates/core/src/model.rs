//! The full model: encoder, RBM prior and decoder sharing one parameter store.

use thiserror::Error;

use crate::decoder::{DecodeMode, Decoded, Decoder};
use crate::encoder::Encoder;
use crate::latent::{
    kl_var, posterior_probs, zeta_var, LatentError, NegativePhase, SpikeExpConfig,
};
use crate::nn::{Graph, NnError, ParamStore, Tensor, Var};
use crate::rbm::RbmParams;
use crate::rng::{stream, StreamRng};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Latent(#[from] LatentError),
    #[error("token id {id} outside vocabulary of {vocab}")]
    TokenOutOfRange { id: usize, vocab: usize },
    #[error("sequence of {len} tokens exceeds the limit of {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("empty sequence")]
    EmptySequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub d_emb: usize,
    pub d_model: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub d_ff: usize,
    pub heads: usize,
    pub dropout: f64,
    /// Longest framed sequence (BOS and EOS included).
    pub max_len: usize,
    pub conv_width: usize,
    pub n_visible: usize,
    pub n_hidden: usize,
    pub beta_se: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_emb: 32,
            d_model: 160,
            enc_layers: 5,
            dec_layers: 5,
            d_ff: 320,
            heads: 10,
            dropout: 0.1,
            max_len: 202,
            conv_width: 5,
            n_visible: 128,
            n_hidden: 128,
            beta_se: 10.0,
        }
    }
}

impl ModelConfig {
    /// A very small configuration for tests.
    pub fn tiny() -> Self {
        Self {
            d_emb: 4,
            d_model: 6,
            enc_layers: 1,
            dec_layers: 1,
            d_ff: 8,
            heads: 2,
            dropout: 0.1,
            max_len: 12,
            conv_width: 5,
            n_visible: 3,
            n_hidden: 3,
            beta_se: 10.0,
        }
    }

    pub fn n_latent(&self) -> usize {
        self.n_visible + self.n_hidden
    }

    pub fn spike_exp(&self) -> SpikeExpConfig {
        SpikeExpConfig {
            beta_se: self.beta_se,
        }
    }

    /// Field list used for checkpoint metadata.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("d_emb", self.d_emb.to_string()),
            ("d_model", self.d_model.to_string()),
            ("enc_layers", self.enc_layers.to_string()),
            ("dec_layers", self.dec_layers.to_string()),
            ("d_ff", self.d_ff.to_string()),
            ("heads", self.heads.to_string()),
            ("dropout", self.dropout.to_string()),
            ("max_len", self.max_len.to_string()),
            ("conv_width", self.conv_width.to_string()),
            ("n_visible", self.n_visible.to_string()),
            ("n_hidden", self.n_hidden.to_string()),
            ("beta_se", self.beta_se.to_string()),
        ]
    }

    /// Set one field by name; `Err` carries a description.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("{key}: cannot parse {v:?}"))
        }
        match key {
            "d_emb" => self.d_emb = num(key, value)?,
            "d_model" => self.d_model = num(key, value)?,
            "enc_layers" => self.enc_layers = num(key, value)?,
            "dec_layers" => self.dec_layers = num(key, value)?,
            "d_ff" => self.d_ff = num(key, value)?,
            "heads" => self.heads = num(key, value)?,
            "dropout" => self.dropout = num(key, value)?,
            "max_len" => self.max_len = num(key, value)?,
            "conv_width" => self.conv_width = num(key, value)?,
            "n_visible" => self.n_visible = num(key, value)?,
            "n_hidden" => self.n_hidden = num(key, value)?,
            "beta_se" => self.beta_se = num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Per-sequence loss pieces. `kl` includes `log Z` only when one was
/// supplied.
#[derive(Debug, Clone, Copy)]
pub struct SequenceLoss {
    pub loss: Var,
    pub recon: f64,
    pub kl: f64,
}

/// `log Z` as seen by the tape: a value (possibly a placeholder) and the
/// model expectations that form its gradient.
#[derive(Debug, Clone, Copy)]
pub struct LogPartition<'a> {
    pub value: f64,
    pub phase: &'a NegativePhase,
}

#[derive(Debug, Clone)]
pub struct Dvae {
    pub cfg: ModelConfig,
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub rbm: RbmParams,
}

impl Dvae {
    /// Build the model and its freshly initialized parameters.
    pub fn new(
        cfg: &ModelConfig,
        vocab: usize,
        seed: u64,
    ) -> Result<(Self, ParamStore), ModelError> {
        if cfg.heads == 0 || cfg.d_model % cfg.heads != 0 {
            return Err(NnError::WidthNotDivisible {
                width: cfg.d_model,
                heads: cfg.heads,
            }
            .into());
        }
        let mut store = ParamStore::new();
        let mut rng = stream(seed, "init", 0, 0);
        let encoder = Encoder::new(&mut store, cfg, vocab, &mut rng)?;
        let rbm = RbmParams::new(&mut store, cfg.n_visible, cfg.n_hidden, &mut rng);
        let decoder = Decoder::new(&mut store, cfg, vocab, &mut rng)?;
        Ok((
            Self {
                cfg: cfg.clone(),
                encoder,
                decoder,
                rbm,
            },
            store,
        ))
    }

    /// `recon + β·KL` for one framed sequence with the uniforms `rho`.
    pub fn sequence_loss(
        &self,
        g: &mut Graph,
        ids: &[usize],
        rho: &[f64],
        beta: f64,
        log_z: Option<LogPartition>,
    ) -> Result<SequenceLoss, ModelError> {
        let logits = self.encoder.forward(g, ids)?;
        let q = posterior_probs(g, logits);
        let zeta = zeta_var(g, q, rho, self.cfg.spike_exp())?;
        let memory = self.decoder.latent_to_memory(g, zeta)?;
        let recon = self.decoder.reconstruction_loss(g, ids, memory)?;
        let mut kl = kl_var(g, q, &self.rbm)?;
        if let Some(lz) = log_z {
            let (nv, nh) = (self.rbm.nv, self.rbm.nh);
            let a = g.param(self.rbm.a);
            let b = g.param(self.rbm.b);
            let w = g.param(self.rbm.w);
            let node = g.scalar_with_grads(
                lz.value,
                vec![
                    (a, Tensor::matrix(1, nv, lz.phase.mean_v.clone())),
                    (b, Tensor::matrix(1, nh, lz.phase.mean_h.clone())),
                    (w, Tensor::matrix(nv, nh, lz.phase.mean_vh.clone())),
                ],
            )?;
            kl = g.add(kl, node)?;
        }
        let weighted = g.scale(kl, beta);
        let loss = g.add(recon, weighted)?;
        Ok(SequenceLoss {
            loss,
            recon: g.value(recon).item(),
            kl: g.value(kl).item(),
        })
    }

    /// Clamped posterior probabilities in evaluation mode.
    pub fn posterior(&self, store: &ParamStore, ids: &[usize]) -> Result<Vec<f64>, ModelError> {
        let mut g = Graph::new(store);
        let logits = self.encoder.forward(&mut g, ids)?;
        let q = posterior_probs(&mut g, logits);
        Ok(g.value(q).data().to_vec())
    }

    pub fn decode_zeta(
        &self,
        store: &ParamStore,
        zeta: &[f64],
        max_len: usize,
        mode: DecodeMode,
        rng: &mut StreamRng,
    ) -> Result<Decoded, ModelError> {
        let memory = self.decoder.memory_of(store, zeta)?;
        self.decoder
            .decode_sample(store, &memory, max_len, mode, rng)
    }
}
