//! Conditional Transformer decoder `p(x | ζ)`: a 16-slot memory built from
//! ζ, teacher-forced training mode and cached autoregressive sampling.

use rand::Rng;

use crate::encoder::{scaled_embedding, POOL_SLOTS};
use crate::model::{ModelConfig, ModelError};
use crate::nn::layers::{DecoderLayer, Embedding, LayerNorm, Linear};
use crate::nn::tensor::{positional_encoding, softmax_rows};
use crate::nn::{Graph, ParamStore, Tensor, Var};
use crate::rng::StreamRng;
use crate::smiles::{BOS, EOS, PAD, UNK};

pub const MEMORY_SLOTS: usize = POOL_SLOTS;
pub const DEFAULT_MAX_DECODE: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecodeMode {
    Greedy,
    Multinomial { temperature: f64 },
}

/// Output of [`Decoder::decode_sample`]; `ids` excludes BOS and includes the
/// final EOS when one was produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub ids: Vec<usize>,
    pub truncated: bool,
}

#[derive(Debug, Clone)]
pub struct Decoder {
    pub embed: Embedding,
    pub latent: Linear,
    pub mem_ln: LayerNorm,
    pub layers: Vec<DecoderLayer>,
    pub final_ln: LayerNorm,
    pub out: Linear,
    pe: Tensor,
    d_model: usize,
    max_len: usize,
}

impl Decoder {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        cfg: &ModelConfig,
        vocab: usize,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        let layers = (0..cfg.dec_layers)
            .map(|i| {
                DecoderLayer::new(
                    store,
                    &format!("dec.layer{i}"),
                    cfg.d_model,
                    cfg.heads,
                    cfg.d_ff,
                    rng,
                )
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            embed: Embedding::new(store, "dec.embed", vocab, cfg.d_model, rng),
            latent: Linear::new(
                store,
                "dec.latent",
                cfg.n_latent(),
                MEMORY_SLOTS * cfg.d_model,
                rng,
            ),
            mem_ln: LayerNorm::new(store, "dec.mem_ln", cfg.d_model),
            layers,
            final_ln: LayerNorm::new(store, "dec.final_ln", cfg.d_model),
            out: Linear::new(store, "dec.out", cfg.d_model, vocab, rng),
            pe: positional_encoding(cfg.max_len, cfg.d_model),
            d_model: cfg.d_model,
            max_len: cfg.max_len,
        })
    }

    pub fn vocab(&self) -> usize {
        self.embed.vocab
    }

    /// ζ (`1 × n_latent`) to a layer-normalized `16 × d_model` memory.
    pub fn latent_to_memory(&self, g: &mut Graph, zeta: Var) -> Result<Var, ModelError> {
        let flat = self.latent.forward(g, zeta)?;
        let mem = g.reshape(flat, &[MEMORY_SLOTS, self.d_model])?;
        Ok(self.mem_ln.forward(g, mem)?)
    }

    /// Next-token logits for every position of `input` (which starts with BOS).
    pub fn decode_teacher_forced(
        &self,
        g: &mut Graph,
        input: &[usize],
        memory: Var,
    ) -> Result<Var, ModelError> {
        if input.len() > self.max_len {
            return Err(ModelError::SequenceTooLong {
                len: input.len(),
                max: self.max_len,
            });
        }
        if let Some(&id) = input.iter().find(|&&i| i >= self.vocab()) {
            return Err(ModelError::TokenOutOfRange {
                id,
                vocab: self.vocab(),
            });
        }
        let emb = self.embed.forward(g, input)?;
        let mut x = scaled_embedding(g, emb, &self.pe)?;
        for layer in &self.layers {
            x = layer.forward(g, x, memory)?;
        }
        let x = self.final_ln.forward(g, x)?;
        Ok(self.out.forward(g, x)?)
    }

    /// Summed cross-entropy of `ids` (BOS … EOS) given the memory; PAD
    /// targets are skipped.
    pub fn reconstruction_loss(
        &self,
        g: &mut Graph,
        ids: &[usize],
        memory: Var,
    ) -> Result<Var, ModelError> {
        if ids.len() < 2 {
            return Err(ModelError::EmptySequence);
        }
        let logits = self.decode_teacher_forced(g, &ids[..ids.len() - 1], memory)?;
        let targets = &ids[1..];
        if !targets.contains(&(PAD as usize)) {
            return Ok(g.cross_entropy(logits, targets)?);
        }
        let keep: Vec<usize> = (0..targets.len())
            .filter(|&i| targets[i] != PAD as usize)
            .collect();
        let v = self.vocab();
        let mut sel = vec![0.0; keep.len() * targets.len()];
        for (r, &i) in keep.iter().enumerate() {
            sel[r * targets.len() + i] = 1.0;
        }
        let sel = g.constant(Tensor::matrix(keep.len(), targets.len(), sel));
        let picked = g.matmul(sel, logits)?;
        debug_assert_eq!(g.value(picked).cols(), v);
        let kept: Vec<usize> = keep.iter().map(|&i| targets[i]).collect();
        Ok(g.cross_entropy(picked, &kept)?)
    }

    /// Memory as a plain tensor, for inference.
    pub fn memory_of(&self, store: &ParamStore, zeta: &[f64]) -> Result<Tensor, ModelError> {
        let flat = self.latent.apply(store, &Tensor::row(zeta.to_vec()))?;
        let mem = flat.reshaped(&[MEMORY_SLOTS, self.d_model])?;
        Ok(self.mem_ln.apply(store, &mem))
    }

    /// Autoregressive generation from BOS with per-layer key/value caches.
    /// PAD, BOS and UNK are never emitted.
    pub fn decode_sample(
        &self,
        store: &ParamStore,
        memory: &Tensor,
        max_len: usize,
        mode: DecodeMode,
        rng: &mut StreamRng,
    ) -> Result<Decoded, ModelError> {
        let mut state = IncrementalState::new(self, store, memory)?;
        let limit = max_len.min(self.max_len.saturating_sub(1));
        let mut ids = Vec::new();
        let mut next = BOS as usize;
        while ids.len() < limit {
            let mut logits = state.step(self, store, next)?;
            for banned in [PAD, BOS, UNK] {
                if let Some(l) = logits.get_mut(banned as usize) {
                    *l = f64::NEG_INFINITY;
                }
            }
            next = pick(&mut logits, mode, rng);
            ids.push(next);
            if next == EOS as usize {
                return Ok(Decoded {
                    ids,
                    truncated: false,
                });
            }
        }
        Ok(Decoded {
            ids,
            truncated: true,
        })
    }
}

fn pick(logits: &mut [f64], mode: DecodeMode, rng: &mut StreamRng) -> usize {
    match mode {
        DecodeMode::Greedy => {
            let mut best = 0;
            for (i, l) in logits.iter().enumerate() {
                if *l > logits[best] {
                    best = i;
                }
            }
            best
        }
        DecodeMode::Multinomial { temperature } => {
            let t = temperature.max(1e-6);
            logits.iter_mut().for_each(|l| *l /= t);
            let n = logits.len();
            softmax_rows(logits, n, |_, _| true);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut last = 0;
            for (i, p) in logits.iter().enumerate() {
                if *p > 0.0 {
                    last = i;
                    acc += p;
                    if u < acc {
                        return i;
                    }
                }
            }
            last
        }
    }
}

/// Per-layer self-attention caches and precomputed cross-attention keys.
pub struct IncrementalState {
    self_k: Vec<Vec<f64>>,
    self_v: Vec<Vec<f64>>,
    cross_k: Vec<Tensor>,
    cross_v: Vec<Tensor>,
    pos: usize,
}

impl IncrementalState {
    pub fn new(dec: &Decoder, store: &ParamStore, memory: &Tensor) -> Result<Self, ModelError> {
        let mut cross_k = Vec::new();
        let mut cross_v = Vec::new();
        for layer in &dec.layers {
            cross_k.push(layer.cross_attn.k.apply(store, memory)?);
            cross_v.push(layer.cross_attn.v.apply(store, memory)?);
        }
        Ok(Self {
            self_k: vec![Vec::new(); dec.layers.len()],
            self_v: vec![Vec::new(); dec.layers.len()],
            cross_k,
            cross_v,
            pos: 0,
        })
    }

    /// Feed one token and return the logits for the following one.
    pub fn step(
        &mut self,
        dec: &Decoder,
        store: &ParamStore,
        token: usize,
    ) -> Result<Vec<f64>, ModelError> {
        if self.pos >= dec.max_len {
            return Err(ModelError::SequenceTooLong {
                len: self.pos + 1,
                max: dec.max_len,
            });
        }
        if token >= dec.vocab() {
            return Err(ModelError::TokenOutOfRange {
                id: token,
                vocab: dec.vocab(),
            });
        }
        let d = dec.d_model;
        let sd = (d as f64).sqrt();
        let table = store.get(dec.embed.table);
        let pe = dec.pe.row_slice(self.pos);
        let mut x = Tensor::row(
            table
                .row_slice(token)
                .iter()
                .zip(pe)
                .map(|(e, p)| sd * e + p / sd)
                .collect(),
        );
        let n_keys = self.pos + 1;
        for (l, layer) in dec.layers.iter().enumerate() {
            let n = layer.ln1.apply(store, &x);
            let att = &layer.self_attn;
            self.self_k[l].extend_from_slice(att.k.apply(store, &n)?.data());
            self.self_v[l].extend_from_slice(att.v.apply(store, &n)?.data());
            let q = att.q.apply(store, &n)?;
            let a = att.attend_row(q.data(), &self.self_k[l], &self.self_v[l], n_keys);
            x.add_assign(&att.o.apply(store, &Tensor::row(a))?);

            let n = layer.ln2.apply(store, &x);
            let cross = &layer.cross_attn;
            let q = cross.q.apply(store, &n)?;
            let c = cross.attend_row(
                q.data(),
                self.cross_k[l].data(),
                self.cross_v[l].data(),
                MEMORY_SLOTS,
            );
            x.add_assign(&cross.o.apply(store, &Tensor::row(c))?);

            let n = layer.ln3.apply(store, &x);
            x.add_assign(&layer.ff.apply(store, &n)?);
        }
        self.pos += 1;
        let x = dec.final_ln.apply(store, &x);
        Ok(dec.out.apply(store, &x)?.into_data())
    }
}
