use rand::Rng;
use rayon::prelude::*;

use super::ising::{IsingProblem, Neighbours};
use super::{Rbm, RbmError};
use crate::rng::{stream, StreamRng};

pub const DEFAULT_CHAINS: usize = 64;
pub const DEFAULT_PCD_K: usize = 30;

/// Geometric inverse-temperature ladder for single-spin Metropolis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealSchedule {
    pub beta_start: f64,
    /// Final inverse temperature; samples approximate `e^{−β_eff E}`.
    pub beta_eff: f64,
    pub sweeps: usize,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self {
            beta_start: 0.1,
            beta_eff: 1.0,
            sweeps: 1000,
        }
    }
}

impl AnnealSchedule {
    pub fn validate(&self) -> Result<(), RbmError> {
        let ok = self.beta_start.is_finite()
            && self.beta_eff.is_finite()
            && self.beta_start > 0.0
            && self.beta_eff >= self.beta_start
            && self.sweeps > 0;
        if ok {
            Ok(())
        } else {
            Err(RbmError::InvalidSchedule(format!(
                "need 0 < beta_start <= beta_eff and sweeps > 0, got {self:?}"
            )))
        }
    }

    pub fn beta_at(&self, sweep: usize) -> f64 {
        if self.sweeps == 1 {
            return self.beta_eff;
        }
        let t = sweep as f64 / (self.sweeps - 1) as f64;
        self.beta_start * (self.beta_eff / self.beta_start).powf(t)
    }
}

fn anneal_one(
    p: &IsingProblem,
    adj: &Neighbours,
    schedule: &AnnealSchedule,
    rng: &mut StreamRng,
) -> Vec<u8> {
    let n = p.len();
    let mut s: Vec<i8> = (0..n)
        .map(|_| if rng.random::<bool>() { 1 } else { -1 })
        .collect();
    let mut field: Vec<f64> = (0..n)
        .map(|i| {
            let (idx, w) = adj.of(i);
            p.h[i]
                + idx
                    .iter()
                    .zip(w)
                    .map(|(&j, &jv)| jv * s[j] as f64)
                    .sum::<f64>()
        })
        .collect();
    for sweep in 0..schedule.sweeps {
        let beta = schedule.beta_at(sweep);
        for i in 0..n {
            let delta = -2.0 * s[i] as f64 * field[i];
            if delta <= 0.0 || rng.random::<f64>() < (-beta * delta).exp() {
                s[i] = -s[i];
                let twice = 2.0 * s[i] as f64;
                let (idx, w) = adj.of(i);
                match adj.run[i] {
                    Some(lo) => {
                        for (f, &jv) in field[lo..lo + w.len()].iter_mut().zip(w) {
                            *f += twice * jv;
                        }
                    }
                    None => {
                        for (&j, &jv) in idx.iter().zip(w) {
                            field[j] += twice * jv;
                        }
                    }
                }
            }
        }
    }
    s.iter().map(|&x| (x > 0) as u8).collect()
}

/// `n` independent annealing runs; run `i` draws from `stream(seed, "anneal", round, i)`.
pub fn sim_anneal_sample(
    p: &IsingProblem,
    n: usize,
    schedule: &AnnealSchedule,
    seed: u64,
    round: u64,
) -> Result<Vec<Vec<u8>>, RbmError> {
    schedule.validate()?;
    let adj = p.adjacency();
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            anneal_one(
                p,
                &adj,
                schedule,
                &mut stream(seed, "anneal", round, i as u64),
            )
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    GibbsPcd,
    SimAnneal,
    ExactEnum,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::GibbsPcd => "gibbs",
            SamplerKind::SimAnneal => "simanneal",
            SamplerKind::ExactEnum => "exact",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gibbs" => Some(SamplerKind::GibbsPcd),
            "simanneal" => Some(SamplerKind::SimAnneal),
            "exact" => Some(SamplerKind::ExactEnum),
            _ => None,
        }
    }
}

/// A source of binary latent states from the current prior. Randomness is
/// keyed by `(seed, round, index)`, so the sampler's whole state is its
/// chains and round counter.
#[derive(Debug, Clone, PartialEq)]
pub struct Sampler {
    pub kind: SamplerKind,
    pub seed: u64,
    /// Number of completed draw rounds.
    pub round: u64,
    /// Persistent chains (PCD only).
    pub chains: Vec<Vec<u8>>,
    pub pcd_k: usize,
    pub schedule: AnnealSchedule,
}

impl Sampler {
    /// `n_chains` persistent chains initialized uniformly at random.
    pub fn gibbs_pcd(units: usize, n_chains: usize, k: usize, seed: u64) -> Self {
        let chains = (0..n_chains)
            .map(|c| {
                let mut rng = stream(seed, "pcd-init", 0, c as u64);
                (0..units).map(|_| rng.random_range(0..2u8)).collect()
            })
            .collect();
        Self {
            kind: SamplerKind::GibbsPcd,
            seed,
            round: 0,
            chains,
            pcd_k: k,
            schedule: AnnealSchedule::default(),
        }
    }

    pub fn sim_anneal(schedule: AnnealSchedule, seed: u64) -> Result<Self, RbmError> {
        schedule.validate()?;
        Ok(Self {
            kind: SamplerKind::SimAnneal,
            seed,
            round: 0,
            chains: Vec::new(),
            pcd_k: 0,
            schedule,
        })
    }

    pub fn exact(seed: u64) -> Self {
        Self {
            kind: SamplerKind::ExactEnum,
            seed,
            round: 0,
            chains: Vec::new(),
            pcd_k: 0,
            schedule: AnnealSchedule::default(),
        }
    }

    /// Advance every persistent chain `k` sweeps.
    pub fn advance_chains(&mut self, rbm: &Rbm, k: usize) -> Result<(), RbmError> {
        if let Some(c) = self.chains.iter().find(|c| c.len() != rbm.units()) {
            return Err(RbmError::StateMismatch(format!(
                "chain of {} units, model has {}",
                c.len(),
                rbm.units()
            )));
        }
        let (seed, round) = (self.seed, self.round);
        self.chains.par_iter_mut().enumerate().for_each(|(c, z)| {
            let mut rng = stream(seed, "pcd", round, c as u64);
            for _ in 0..k {
                rbm.gibbs_sweep(z, &mut rng);
            }
        });
        self.round += 1;
        Ok(())
    }

    /// `n` binary states of length `rbm.units()`.
    ///
    /// PCD advances its chains `pcd_k` sweeps per round and emits every chain,
    /// repeating rounds until `n` states are collected; the chains keep their
    /// new positions.
    pub fn draw(&mut self, rbm: &Rbm, n: usize) -> Result<Vec<Vec<u8>>, RbmError> {
        if n == 0 {
            return Ok(Vec::new());
        }
        match self.kind {
            SamplerKind::GibbsPcd => {
                if self.chains.is_empty() {
                    return Err(RbmError::StateMismatch("no persistent chains".into()));
                }
                let mut out = Vec::with_capacity(n);
                while out.len() < n {
                    self.advance_chains(rbm, self.pcd_k)?;
                    out.extend(self.chains.iter().take(n - out.len()).cloned());
                }
                Ok(out)
            }
            SamplerKind::SimAnneal => {
                let out =
                    sim_anneal_sample(&rbm.to_ising(), n, &self.schedule, self.seed, self.round)?;
                self.round += 1;
                Ok(out)
            }
            SamplerKind::ExactEnum => {
                let probs = rbm.exact_distribution()?;
                let mut rng = stream(self.seed, "exact", self.round, 0);
                self.round += 1;
                Ok((0..n)
                    .map(|_| {
                        let u: f64 = rng.random();
                        let mut acc = 0.0;
                        let mut pick = probs.len() - 1;
                        for (s, p) in probs.iter().enumerate() {
                            acc += p;
                            if u < acc {
                                pick = s;
                                break;
                            }
                        }
                        rbm.state_of(pick)
                    })
                    .collect())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_validation() {
        assert!(AnnealSchedule::default().validate().is_ok());
        let bad = AnnealSchedule {
            beta_start: 2.0,
            beta_eff: 1.0,
            sweeps: 10,
        };
        assert!(matches!(bad.validate(), Err(RbmError::InvalidSchedule(_))));
        let s = AnnealSchedule::default();
        assert!((s.beta_at(0) - 0.1).abs() < 1e-15 && (s.beta_at(999) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pcd_preserves_chain_count_and_k0_is_identity() {
        let rbm = Rbm::random(3, 3, 1.0, &mut stream(0, "t", 0, 0));
        let mut s = Sampler::gibbs_pcd(6, 7, 0, 1);
        let before = s.chains.clone();
        let out = s.draw(&rbm, 7).unwrap();
        assert_eq!(out, before);
        assert_eq!(s.chains.len(), 7);
        s.pcd_k = 3;
        assert_eq!(s.draw(&rbm, 7).unwrap().len(), 7);
        assert_eq!(s.draw(&rbm, 20).unwrap().len(), 20);
        assert!(s.draw(&rbm, 0).unwrap().is_empty());
    }

    #[test]
    fn exact_sampler_refuses_large_models() {
        let mut s = Sampler::exact(0);
        assert!(matches!(
            s.draw(&Rbm::zeros(16, 16), 1),
            Err(RbmError::TooLarge(32))
        ));
    }

    #[test]
    fn ferromagnetic_pair_agrees() {
        let p = IsingProblem {
            h: vec![0.0, 0.0],
            couplings: vec![(0, 1, -5.0)],
            offset: 0.0,
        };
        let out = sim_anneal_sample(
            &p,
            2000,
            &AnnealSchedule {
                sweeps: 50,
                ..Default::default()
            },
            3,
            0,
        )
        .unwrap();
        let agree = out.iter().filter(|z| z[0] == z[1]).count();
        assert!(agree as f64 >= 0.99 * 2000.0);
    }

    #[test]
    fn zero_problem_is_uniform() {
        let out = sim_anneal_sample(
            &IsingProblem::zeros(4),
            10_000,
            &AnnealSchedule {
                sweeps: 5,
                ..Default::default()
            },
            9,
            0,
        )
        .unwrap();
        for k in 0..4 {
            let mean = out.iter().map(|z| z[k] as f64).sum::<f64>() / 1e4;
            assert!((mean - 0.5).abs() < 3.0 * 0.005);
        }
    }
}
