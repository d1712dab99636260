//! Parameterized layers. Each layer owns [`ParamId`]s into a shared
//! [`ParamStore`] and offers a taped `forward` plus, where the incremental
//! decoder needs it, a tape-free `apply`.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::graph::{AttnMask, Graph, Var};
use super::params::{ParamId, ParamStore};
use super::tensor::{self, gemm, Tensor};
use super::NnError;

pub fn xavier_uniform<R: Rng>(
    rows: usize,
    cols: usize,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Tensor {
    let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-s..s)).collect();
    Tensor::matrix(rows, cols, data)
}

pub fn normal_tensor<R: Rng>(shape: &[usize], std: f64, rng: &mut R) -> Tensor {
    let dist = Normal::new(0.0, std).expect("finite std");
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| dist.sample(rng)).collect()).expect("shape")
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Self {
        let w = store.add(
            &format!("{name}.w"),
            xavier_uniform(d_in, d_out, d_in, d_out, rng),
        );
        let b = store.add(&format!("{name}.b"), Tensor::zeros(&[1, d_out]));
        Self { w, b, d_in, d_out }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, NnError> {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let y = g.matmul(x, w)?;
        g.add_row(y, b)
    }

    pub fn apply(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor, NnError> {
        if x.cols() != self.d_in {
            return Err(NnError::ShapeMismatch(format!(
                "linear expects {} columns, got {}",
                self.d_in,
                x.cols()
            )));
        }
        let rows = x.rows();
        let bias = store.get(self.b).data();
        let mut out = Vec::with_capacity(rows * self.d_out);
        for _ in 0..rows {
            out.extend_from_slice(bias);
        }
        gemm(
            rows,
            self.d_in,
            self.d_out,
            x.data(),
            false,
            store.get(self.w).data(),
            false,
            &mut out,
            true,
        );
        Ok(Tensor::matrix(rows, self.d_out, out))
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        let gain = store.add(&format!("{name}.gain"), Tensor::full(&[1, dim], 1.0));
        let bias = store.add(&format!("{name}.bias"), Tensor::zeros(&[1, dim]));
        Self { gain, bias }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, NnError> {
        let gain = g.param(self.gain);
        let bias = g.param(self.bias);
        g.layer_norm(x, gain, bias)
    }

    pub fn apply(&self, store: &ParamStore, x: &Tensor) -> Tensor {
        let mut out = vec![0.0; x.len()];
        tensor::layer_norm_rows(
            x.data(),
            x.cols(),
            store.get(self.gain).data(),
            store.get(self.bias).data(),
            &mut out,
        );
        Tensor::matrix(x.rows(), x.cols(), out)
    }
}

/// Same-length 1-D convolution over the sequence axis with zero padding.
#[derive(Debug, Clone)]
pub struct Conv1dSame {
    pub kernel: Linear,
    pub width: usize,
    pub d_in: usize,
}

impl Conv1dSame {
    /// `width` must be odd.
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        filters: usize,
        width: usize,
        rng: &mut R,
    ) -> Self {
        assert!(width % 2 == 1, "convolution width must be odd");
        let w = store.add(
            &format!("{name}.w"),
            xavier_uniform(width * d_in, filters, width * d_in, filters, rng),
        );
        let b = store.add(&format!("{name}.b"), Tensor::zeros(&[1, filters]));
        Self {
            kernel: Linear {
                w,
                b,
                d_in: width * d_in,
                d_out: filters,
            },
            width,
            d_in,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, NnError> {
        if g.shape(x).last() != Some(&self.d_in) {
            return Err(NnError::ShapeMismatch(format!(
                "conv expects {} channels, got {:?}",
                self.d_in,
                g.shape(x)
            )));
        }
        let cols = g.unfold(x, self.width, self.width / 2);
        self.kernel.forward(g, cols)
    }
}

/// `y = T(x)·H(x) + (1 − T(x))·x` with `H = gelu(linear)`, `T = sigmoid(linear)`.
#[derive(Debug, Clone)]
pub struct Highway {
    pub h: Linear,
    pub t: Linear,
}

pub const HIGHWAY_GATE_BIAS: f64 = -1.0;

impl Highway {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, rng: &mut R) -> Self {
        let h = Linear::new(store, &format!("{name}.h"), dim, dim, rng);
        let t = Linear::new(store, &format!("{name}.t"), dim, dim, rng);
        *store.get_mut(t.b) = Tensor::full(&[1, dim], HIGHWAY_GATE_BIAS);
        Self { h, t }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, NnError> {
        let hl = self.h.forward(g, x)?;
        let h = g.gelu(hl);
        let tl = self.t.forward(g, x)?;
        let t = g.sigmoid(tl);
        let carry = g.one_minus(t);
        let a = g.mul(t, h)?;
        let c = g.mul(carry, x)?;
        g.add(a, c)
    }
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl MultiHeadAttention {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        if heads == 0 || dim % heads != 0 {
            return Err(NnError::WidthNotDivisible { width: dim, heads });
        }
        Ok(Self {
            q: Linear::new(store, &format!("{name}.q"), dim, dim, rng),
            k: Linear::new(store, &format!("{name}.k"), dim, dim, rng),
            v: Linear::new(store, &format!("{name}.v"), dim, dim, rng),
            o: Linear::new(store, &format!("{name}.o"), dim, dim, rng),
            heads,
            dim,
        })
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    /// Queries from `query`, keys and values from `memory`.
    pub fn forward(
        &self,
        g: &mut Graph,
        query: Var,
        memory: Var,
        mask: &AttnMask,
    ) -> Result<Var, NnError> {
        let q = self.q.forward(g, query)?;
        let k = self.k.forward(g, memory)?;
        let v = self.v.forward(g, memory)?;
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice_cols(q, h * dh, dh)?;
            let kh = g.slice_cols(k, h * dh, dh)?;
            let vh = g.slice_cols(v, h * dh, dh)?;
            let raw = g.matmul_t(qh, false, kh, true)?;
            let scores = g.scale(raw, scale);
            let weights = g.softmax(scores, mask);
            let weights = g.dropout(weights);
            outs.push(g.matmul(weights, vh)?);
        }
        let joined = g.concat_cols(&outs)?;
        self.o.forward(g, joined)
    }

    /// Attention of one query row over precomputed key/value rows.
    pub fn attend_row(&self, q: &[f64], keys: &[f64], values: &[f64], n_keys: usize) -> Vec<f64> {
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = vec![0.0; self.dim];
        let mut scores = vec![0.0; n_keys];
        for h in 0..self.heads {
            let qh = &q[h * dh..(h + 1) * dh];
            for (j, s) in scores.iter_mut().enumerate() {
                let kh = &keys[j * self.dim + h * dh..j * self.dim + (h + 1) * dh];
                *s = qh.iter().zip(kh).map(|(a, b)| a * b).sum::<f64>() * scale;
            }
            tensor::softmax_rows(&mut scores, n_keys, |_, _| true);
            let oh = &mut out[h * dh..(h + 1) * dh];
            for (j, w) in scores.iter().enumerate() {
                let vh = &values[j * self.dim + h * dh..j * self.dim + (h + 1) * dh];
                for (o, v) in oh.iter_mut().zip(vh) {
                    *o += w * v;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct FeedForward {
    pub l1: Linear,
    pub l2: Linear,
}

impl FeedForward {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        d_ff: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            l1: Linear::new(store, &format!("{name}.l1"), dim, d_ff, rng),
            l2: Linear::new(store, &format!("{name}.l2"), d_ff, dim, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, NnError> {
        let h = self.l1.forward(g, x)?;
        let a = g.gelu(h);
        let a = g.dropout(a);
        self.l2.forward(g, a)
    }

    pub fn apply(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor, NnError> {
        let h = self.l1.apply(store, x)?.map(tensor::gelu);
        self.l2.apply(store, &h)
    }
}

/// Pre-norm encoder block: `x + attn(ln(x))`, then `x + ff(ln(x))`.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub ln1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub ff: FeedForward,
}

impl EncoderLayer {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        d_ff: usize,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        Ok(Self {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), dim),
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), dim, heads, rng)?,
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), dim),
            ff: FeedForward::new(store, &format!("{name}.ff"), dim, d_ff, rng),
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var, mask: &AttnMask) -> Result<Var, NnError> {
        let n = self.ln1.forward(g, x)?;
        let a = self.attn.forward(g, n, n, mask)?;
        let x = g.add(x, a)?;
        let n = self.ln2.forward(g, x)?;
        let f = self.ff.forward(g, n)?;
        g.add(x, f)
    }
}

/// Pre-norm decoder block: causal self-attention, cross-attention to a
/// memory, feed-forward.
#[derive(Debug, Clone)]
pub struct DecoderLayer {
    pub ln1: LayerNorm,
    pub self_attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub cross_attn: MultiHeadAttention,
    pub ln3: LayerNorm,
    pub ff: FeedForward,
}

impl DecoderLayer {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        d_ff: usize,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        Ok(Self {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), dim),
            self_attn: MultiHeadAttention::new(store, &format!("{name}.self"), dim, heads, rng)?,
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), dim),
            cross_attn: MultiHeadAttention::new(store, &format!("{name}.cross"), dim, heads, rng)?,
            ln3: LayerNorm::new(store, &format!("{name}.ln3"), dim),
            ff: FeedForward::new(store, &format!("{name}.ff"), dim, d_ff, rng),
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var, memory: Var) -> Result<Var, NnError> {
        let n = self.ln1.forward(g, x)?;
        let a = self.self_attn.forward(g, n, n, &AttnMask::Causal)?;
        let x = g.add(x, a)?;
        let n = self.ln2.forward(g, x)?;
        let c = self.cross_attn.forward(g, n, memory, &AttnMask::None)?;
        let x = g.add(x, c)?;
        let n = self.ln3.forward(g, x)?;
        let f = self.ff.forward(g, n)?;
        g.add(x, f)
    }
}

#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: ParamId,
    pub vocab: usize,
    pub dim: usize,
}

impl Embedding {
    /// Entries drawn from `N(0, 1/dim)`.
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        vocab: usize,
        dim: usize,
        rng: &mut R,
    ) -> Self {
        let table = store.add(
            name,
            normal_tensor(&[vocab, dim], 1.0 / (dim as f64).sqrt(), rng),
        );
        Self { table, vocab, dim }
    }

    pub fn forward(&self, g: &mut Graph, ids: &[usize]) -> Result<Var, NnError> {
        let t = g.param(self.table);
        g.gather(t, ids)
    }
}
