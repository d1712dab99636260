//! Spike-and-exponential relaxation of binary latents and the KL divergence
//! between a factorized Bernoulli posterior and the RBM prior.

use thiserror::Error;

use crate::nn::{Graph, NnError, Var};
use crate::rbm::{Rbm, RbmParams};

pub const Q_MIN: f64 = 1e-7;
pub const Q_MAX: f64 = 1.0 - 1e-7;
pub const DEFAULT_BETA_SE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LatentError {
    #[error("negative phase needs at least one sample")]
    SamplerEmpty,
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpikeExpConfig {
    pub beta_se: f64,
}

impl Default for SpikeExpConfig {
    fn default() -> Self {
        Self {
            beta_se: DEFAULT_BETA_SE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZetaSample {
    pub zeta: Vec<f64>,
    pub rho: Vec<f64>,
}

pub fn clamp_q(q: f64) -> f64 {
    q.clamp(Q_MIN, Q_MAX)
}

/// Inverse CDF of `(1−q)·δ(ζ) + q·β e^{βζ}/(e^β−1)` on `[0, 1]`.
pub fn zeta_of(q: f64, rho: f64, beta: f64) -> f64 {
    let q = clamp_q(q);
    if rho <= 1.0 - q {
        return 0.0;
    }
    let u = (rho - 1.0 + q) / q;
    (u * beta.exp_m1()).ln_1p() / beta
}

/// `∂ζ/∂q` at fixed `ρ`; zero on the spike.
pub fn zeta_grad(q: f64, rho: f64, beta: f64) -> f64 {
    let q = clamp_q(q);
    if rho <= 1.0 - q {
        return 0.0;
    }
    let c = beta.exp_m1();
    let u = (rho - 1.0 + q) / q;
    let du = (1.0 - rho) / (q * q);
    c * du / (beta * (1.0 + u * c))
}

pub fn sample_zeta(q: &[f64], rho: &[f64], cfg: SpikeExpConfig) -> ZetaSample {
    ZetaSample {
        zeta: q
            .iter()
            .zip(rho)
            .map(|(q, r)| zeta_of(*q, *r, cfg.beta_se))
            .collect(),
        rho: rho.to_vec(),
    }
}

/// `E[ζ]` under the exponential branch alone.
pub fn exponential_mean(beta: f64) -> f64 {
    (beta.exp() * (beta - 1.0) + 1.0) / (beta * beta.exp_m1())
}

/// Taped `ζ(q)` for a `1 × n` row of clamped probabilities.
pub fn zeta_var(
    g: &mut Graph,
    q: Var,
    rho: &[f64],
    cfg: SpikeExpConfig,
) -> Result<Var, LatentError> {
    let qs = g.value(q).data().to_vec();
    if qs.len() != rho.len() {
        return Err(LatentError::LengthMismatch(format!(
            "{} probabilities, {} uniforms",
            qs.len(),
            rho.len()
        )));
    }
    let values = qs
        .iter()
        .zip(rho)
        .map(|(q, r)| zeta_of(*q, *r, cfg.beta_se))
        .collect();
    let grads = qs
        .iter()
        .zip(rho)
        .map(|(q, r)| zeta_grad(*q, *r, cfg.beta_se))
        .collect();
    Ok(g.elementwise(q, values, grads)?)
}

/// Sigmoid of logits clamped to `[Q_MIN, Q_MAX]`.
pub fn posterior_probs(g: &mut Graph, logits: Var) -> Var {
    let q = g.sigmoid(logits);
    g.clamp(q, Q_MIN, Q_MAX)
}

fn neg_entropy(q: f64) -> f64 {
    q * q.ln() + (1.0 - q) * (1.0 - q).ln()
}

/// `Σ q ln q + (1−q) ln(1−q) + E_q[E(z)]`: the KL without `log Z`, with `q`
/// clamped first.
pub fn kl_without_logz(q: &[f64], rbm: &Rbm) -> f64 {
    let q: Vec<f64> = q.iter().map(|&x| clamp_q(x)).collect();
    let (qv, qh) = q.split_at(rbm.nv);
    let ent: f64 = q.iter().map(|&x| neg_entropy(x)).sum();
    ent + rbm.energy_real(qv, qh)
}

/// Full `KL(q ‖ p)` given `log Z`.
pub fn kl_value(q: &[f64], rbm: &Rbm, log_z: f64) -> f64 {
    kl_without_logz(q, rbm) + log_z
}

/// Sample averages of `v`, `h` and `v hᵀ`; these estimate the gradient of
/// `log Z` with respect to `a`, `b` and `W`, up to sign.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativePhase {
    pub mean_v: Vec<f64>,
    pub mean_h: Vec<f64>,
    pub mean_vh: Vec<f64>,
}

impl NegativePhase {
    pub fn from_samples(rbm: &Rbm, samples: &[Vec<u8>]) -> Result<Self, LatentError> {
        if samples.is_empty() {
            return Err(LatentError::SamplerEmpty);
        }
        let (nv, nh) = (rbm.nv, rbm.nh);
        let mut mean_v = vec![0.0; nv];
        let mut mean_h = vec![0.0; nh];
        let mut mean_vh = vec![0.0; nv * nh];
        for z in samples {
            if z.len() != nv + nh {
                return Err(LatentError::LengthMismatch(format!(
                    "sample of {} units",
                    z.len()
                )));
            }
            let (v, h) = z.split_at(nv);
            for i in 0..nv {
                if v[i] == 0 {
                    continue;
                }
                mean_v[i] += 1.0;
                for j in 0..nh {
                    mean_vh[i * nh + j] += h[j] as f64;
                }
            }
            for j in 0..nh {
                mean_h[j] += h[j] as f64;
            }
        }
        let inv = 1.0 / samples.len() as f64;
        for x in mean_v.iter_mut().chain(&mut mean_h).chain(&mut mean_vh) {
            *x *= inv;
        }
        Ok(Self {
            mean_v,
            mean_h,
            mean_vh,
        })
    }
}

/// Value and gradients of the KL for one posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct KlTerm {
    /// KL minus `log Z`.
    pub value_without_logz: f64,
    pub grad_q: Vec<f64>,
    pub grad_a: Vec<f64>,
    pub grad_b: Vec<f64>,
    pub grad_w: Vec<f64>,
}

/// KL value (without `log Z`) and gradients with the `log Z` part of the
/// θ-gradient estimated from `neg_samples`.
pub fn kl_term(q: &[f64], rbm: &Rbm, neg_samples: &[Vec<u8>]) -> Result<KlTerm, LatentError> {
    let neg = NegativePhase::from_samples(rbm, neg_samples)?;
    kl_term_with(q, rbm, &neg)
}

pub fn kl_term_with(q: &[f64], rbm: &Rbm, neg: &NegativePhase) -> Result<KlTerm, LatentError> {
    let (nv, nh) = (rbm.nv, rbm.nh);
    if q.len() != nv + nh {
        return Err(LatentError::LengthMismatch(format!(
            "{} probabilities for {} units",
            q.len(),
            nv + nh
        )));
    }
    let q: Vec<f64> = q.iter().map(|&x| clamp_q(x)).collect();
    let (qv, qh) = q.split_at(nv);
    let wqh = rbm.w_times_h(qh);
    let wtqv = rbm.wt_times_v(qv);
    let mut grad_q = Vec::with_capacity(nv + nh);
    for i in 0..nv {
        grad_q.push((qv[i] / (1.0 - qv[i])).ln() - rbm.a[i] - wqh[i]);
    }
    for j in 0..nh {
        grad_q.push((qh[j] / (1.0 - qh[j])).ln() - rbm.b[j] - wtqv[j]);
    }
    let grad_a = (0..nv).map(|i| neg.mean_v[i] - qv[i]).collect();
    let grad_b = (0..nh).map(|j| neg.mean_h[j] - qh[j]).collect();
    let mut grad_w = vec![0.0; nv * nh];
    for i in 0..nv {
        for j in 0..nh {
            grad_w[i * nh + j] = neg.mean_vh[i * nh + j] - qv[i] * qh[j];
        }
    }
    Ok(KlTerm {
        value_without_logz: kl_without_logz(&q, rbm),
        grad_q,
        grad_a,
        grad_b,
        grad_w,
    })
}

/// Taped KL minus `log Z` for a `1 × (nv+nh)` row of probabilities, with the
/// RBM parameters taken from the graph's store.
pub fn kl_var(g: &mut Graph, q: Var, rbm: &RbmParams) -> Result<Var, LatentError> {
    let qs = g.value(q).data().to_vec();
    let ent_vals = qs.iter().map(|&x| neg_entropy(x)).collect();
    let ent_grads = qs.iter().map(|&x| (x / (1.0 - x)).ln()).collect();
    let ent = g.elementwise(q, ent_vals, ent_grads)?;
    let ent = g.sum(ent);
    let nv = rbm.nv;
    let qv = g.slice_cols(q, 0, nv)?;
    let qh = g.slice_cols(q, nv, rbm.nh)?;
    let a = g.param(rbm.a);
    let b = g.param(rbm.b);
    let w = g.param(rbm.w);
    let av = g.matmul_t(qv, false, a, true)?;
    let bh = g.matmul_t(qh, false, b, true)?;
    let vw = g.matmul(qv, w)?;
    let vwh = g.matmul_t(vw, false, qh, true)?;
    let lin = g.add(av, bh)?;
    let lin = g.add(lin, vwh)?;
    Ok(g.sub(ent, lin)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn zeta_examples() {
        assert_eq!(zeta_of(0.0, 0.99, 10.0), 0.0);
        let z = zeta_of(1.0, 0.5, 1.0);
        assert!((z - (0.5 * (std::f64::consts::E - 1.0) + 1.0).ln()).abs() < 1e-6);
        assert!((z - 0.62011).abs() < 1e-5);
        for beta in [0.5, 3.0, 10.0, 30.0] {
            assert!((zeta_of(0.5, 1.0 - 1e-15, beta) - 1.0).abs() < 1e-9);
        }
        let s = sample_zeta(&[0.3, 0.9], &[0.5, 0.95], SpikeExpConfig::default());
        assert_eq!(s.zeta[0], 0.0);
        assert!(s.zeta[1] > 0.0 && s.zeta[1] <= 1.0);
    }

    #[test]
    fn zeta_grad_matches_differences() {
        let mut rng = stream(5, "t", 0, 0);
        let mut checked = 0;
        while checked < 100 {
            let q: f64 = rng.random_range(0.02..0.98);
            let rho: f64 = rng.random();
            let beta: f64 = rng.random_range(0.5..15.0);
            let h = 1e-6 * q.min(1.0 - q);
            if rho <= 1.0 - q + 2.0 * h {
                continue;
            }
            let num = (zeta_of(q + h, rho, beta) - zeta_of(q - h, rho, beta)) / (2.0 * h);
            let ana = zeta_grad(q, rho, beta);
            assert!(
                (ana - num).abs() / (ana.abs() + num.abs() + 1e-12) < 1e-5,
                "{q} {rho} {beta}"
            );
            checked += 1;
        }
    }

    #[test]
    fn zero_rbm_kl() {
        let rbm = Rbm::zeros(128, 128);
        let log_z = 256.0 * std::f64::consts::LN_2;
        assert!(kl_value(&[0.5; 256], &rbm, log_z).abs() < 1e-9);
        let kl = kl_value(&[1.0; 256].map(clamp_q), &rbm, log_z);
        assert!((kl - 177.445).abs() < 1e-3);
    }

    #[test]
    fn empty_negative_phase_is_an_error() {
        let rbm = Rbm::zeros(2, 2);
        assert_eq!(
            kl_term(&[0.5; 4], &rbm, &[]).unwrap_err(),
            LatentError::SamplerEmpty
        );
    }
}
