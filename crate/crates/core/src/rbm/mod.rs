//! The latent prior: a bipartite binary Boltzmann machine with
//! `E(v, h) = −aᵀv − bᵀh − vᵀWh`, its samplers and exact oracles.

mod ising;
mod sampler;

use rand::Rng;
use thiserror::Error;

use crate::nn::layers::normal_tensor;
use crate::nn::tensor::sigmoid;
use crate::nn::{ParamId, ParamStore, Tensor};

pub use ising::{spins_of, IsingProblem, Neighbours, ISING_HEADER};
pub use sampler::{
    sim_anneal_sample, AnnealSchedule, Sampler, SamplerKind, DEFAULT_CHAINS, DEFAULT_PCD_K,
};

/// Largest model the exhaustive oracles accept.
pub const MAX_EXACT_UNITS: usize = 20;
pub const DEFAULT_W_STD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RbmError {
    #[error("{0} units is too many for exhaustive enumeration (limit {MAX_EXACT_UNITS})")]
    TooLarge(usize),
    #[error("invalid annealing schedule: {0}")]
    InvalidSchedule(String),
    #[error("bad Ising problem text: {0}")]
    BadIsing(String),
    #[error("sampler state does not match the model: {0}")]
    StateMismatch(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rbm {
    pub nv: usize,
    pub nh: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// `nv × nh`, row-major.
    pub w: Vec<f64>,
}

/// Locations of the RBM parameters inside a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct RbmParams {
    pub a: ParamId,
    pub b: ParamId,
    pub w: ParamId,
    pub nv: usize,
    pub nh: usize,
}

impl RbmParams {
    /// Zero biases, `W ~ N(0, 0.01²)`.
    pub fn new<R: Rng>(store: &mut ParamStore, nv: usize, nh: usize, rng: &mut R) -> Self {
        let a = store.add("rbm.a", Tensor::zeros(&[1, nv]));
        let b = store.add("rbm.b", Tensor::zeros(&[1, nh]));
        let w = store.add("rbm.w", normal_tensor(&[nv, nh], DEFAULT_W_STD, rng));
        Self { a, b, w, nv, nh }
    }

    pub fn read(&self, store: &ParamStore) -> Rbm {
        Rbm {
            nv: self.nv,
            nh: self.nh,
            a: store.get(self.a).data().to_vec(),
            b: store.get(self.b).data().to_vec(),
            w: store.get(self.w).data().to_vec(),
        }
    }

    pub fn write(&self, store: &mut ParamStore, rbm: &Rbm) {
        store.get_mut(self.a).data_mut().copy_from_slice(&rbm.a);
        store.get_mut(self.b).data_mut().copy_from_slice(&rbm.b);
        store.get_mut(self.w).data_mut().copy_from_slice(&rbm.w);
    }
}

/// Exact expectations under the model distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub log_z: f64,
    pub mean_v: Vec<f64>,
    pub mean_h: Vec<f64>,
    pub mean_vh: Vec<f64>,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl Rbm {
    pub fn zeros(nv: usize, nh: usize) -> Self {
        Self {
            nv,
            nh,
            a: vec![0.0; nv],
            b: vec![0.0; nh],
            w: vec![0.0; nv * nh],
        }
    }

    /// Every parameter drawn from `N(0, std²)`.
    pub fn random<R: Rng>(nv: usize, nh: usize, std: f64, rng: &mut R) -> Self {
        Self {
            nv,
            nh,
            a: normal_tensor(&[nv], std, rng).into_data(),
            b: normal_tensor(&[nh], std, rng).into_data(),
            w: normal_tensor(&[nv * nh], std, rng).into_data(),
        }
    }

    pub fn units(&self) -> usize {
        self.nv + self.nh
    }

    /// Energy of a binary state `z = (v, h)`.
    pub fn energy(&self, z: &[u8]) -> f64 {
        let (v, h) = z.split_at(self.nv);
        let mut e = 0.0;
        for i in 0..self.nv {
            if v[i] == 0 {
                continue;
            }
            e -= self.a[i];
            let row = &self.w[i * self.nh..(i + 1) * self.nh];
            for j in 0..self.nh {
                if h[j] != 0 {
                    e -= row[j];
                }
            }
        }
        for j in 0..self.nh {
            if h[j] != 0 {
                e -= self.b[j];
            }
        }
        e
    }

    /// The energy polynomial evaluated at real-valued `(v, h)`.
    pub fn energy_real(&self, v: &[f64], h: &[f64]) -> f64 {
        let wh = self.w_times_h(h);
        let mut e = 0.0;
        for i in 0..self.nv {
            e -= v[i] * (self.a[i] + wh[i]);
        }
        for j in 0..self.nh {
            e -= h[j] * self.b[j];
        }
        e
    }

    pub fn w_times_h(&self, h: &[f64]) -> Vec<f64> {
        (0..self.nv)
            .map(|i| {
                self.w[i * self.nh..(i + 1) * self.nh]
                    .iter()
                    .zip(h)
                    .map(|(w, h)| w * h)
                    .sum()
            })
            .collect()
    }

    pub fn wt_times_v(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nh];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(&self.w[i * self.nh..(i + 1) * self.nh]) {
                *o += vi * w;
            }
        }
        out
    }

    /// `b_j + Σ_i v_i W_ij` for binary `v`.
    fn hidden_input(&self, v: &[u8]) -> Vec<f64> {
        let mut x = self.b.clone();
        for i in 0..self.nv {
            if v[i] != 0 {
                for (o, w) in x.iter_mut().zip(&self.w[i * self.nh..(i + 1) * self.nh]) {
                    *o += w;
                }
            }
        }
        x
    }

    fn visible_input(&self, h: &[u8]) -> Vec<f64> {
        (0..self.nv)
            .map(|i| {
                let row = &self.w[i * self.nh..(i + 1) * self.nh];
                self.a[i]
                    + row
                        .iter()
                        .zip(h)
                        .filter(|(_, h)| **h != 0)
                        .map(|(w, _)| w)
                        .sum::<f64>()
            })
            .collect()
    }

    /// `p(h_j = 1 | v) = σ(b_j + Σ_i v_i W_ij)`.
    pub fn hidden_probs(&self, v: &[u8]) -> Vec<f64> {
        self.hidden_input(v).into_iter().map(sigmoid).collect()
    }

    pub fn visible_probs(&self, h: &[u8]) -> Vec<f64> {
        self.visible_input(h).into_iter().map(sigmoid).collect()
    }

    /// One block-Gibbs sweep of `e^{−β E}`: `h | v`, then `v | h`.
    pub fn gibbs_sweep_at<R: Rng>(&self, z: &mut [u8], beta: f64, rng: &mut R) {
        let (v, h) = z.split_at_mut(self.nv);
        for (hj, x) in h.iter_mut().zip(self.hidden_input(v)) {
            *hj = (rng.random::<f64>() < sigmoid(beta * x)) as u8;
        }
        for (vi, x) in v.iter_mut().zip(self.visible_input(h)) {
            *vi = (rng.random::<f64>() < sigmoid(beta * x)) as u8;
        }
    }

    pub fn gibbs_sweep<R: Rng>(&self, z: &mut [u8], rng: &mut R) {
        self.gibbs_sweep_at(z, 1.0, rng);
    }

    /// `log Σ_h e^{−β E(v, h)}`.
    pub fn log_marginal_v(&self, v: &[u8], beta: f64) -> f64 {
        let av: f64 = v
            .iter()
            .zip(&self.a)
            .filter(|(v, _)| **v != 0)
            .map(|(_, a)| a)
            .sum();
        beta * av
            + self
                .hidden_input(v)
                .into_iter()
                .map(|x| softplus(beta * x))
                .sum::<f64>()
    }

    fn check_exact(&self) -> Result<(), RbmError> {
        if self.units() > MAX_EXACT_UNITS {
            return Err(RbmError::TooLarge(self.units()));
        }
        Ok(())
    }

    /// Bits of state index `s` (unit `k` is bit `k`).
    pub fn state_of(&self, s: usize) -> Vec<u8> {
        (0..self.units()).map(|k| ((s >> k) & 1) as u8).collect()
    }

    /// `log Z` by enumerating all `2^(nv+nh)` states.
    pub fn exact_logz(&self) -> Result<f64, RbmError> {
        self.check_exact()?;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for s in 0..1usize << self.units() {
            let x = -self.energy(&self.state_of(s));
            if x > max {
                sum = sum * (max - x).exp() + 1.0;
                max = x;
            } else {
                sum += (x - max).exp();
            }
        }
        Ok(max + sum.ln())
    }

    /// Probability of every state, indexed as in [`Rbm::state_of`].
    pub fn exact_distribution(&self) -> Result<Vec<f64>, RbmError> {
        self.check_exact()?;
        let log_z = self.exact_logz()?;
        Ok((0..1usize << self.units())
            .map(|s| (-self.energy(&self.state_of(s)) - log_z).exp())
            .collect())
    }

    pub fn exact_moments(&self) -> Result<Moments, RbmError> {
        let probs = self.exact_distribution()?;
        let (nv, nh) = (self.nv, self.nh);
        let mut m = Moments {
            log_z: self.exact_logz()?,
            mean_v: vec![0.0; nv],
            mean_h: vec![0.0; nh],
            mean_vh: vec![0.0; nv * nh],
        };
        for (s, p) in probs.iter().enumerate() {
            let z = self.state_of(s);
            for i in 0..nv {
                m.mean_v[i] += p * z[i] as f64;
                for j in 0..nh {
                    m.mean_vh[i * nh + j] += p * (z[i] * z[nv + j]) as f64;
                }
            }
            for j in 0..nh {
                m.mean_h[j] += p * z[nv + j] as f64;
            }
        }
        Ok(m)
    }
}
