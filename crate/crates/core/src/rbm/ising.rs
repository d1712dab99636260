use std::fmt::Write as _;

use super::{Rbm, RbmError};

pub const ISING_HEADER: &str = "# dvae-ising v1";

/// Neighbours of spin `i` are `index[start[i]..start[i + 1]]` with couplings
/// at the same positions of `weight`.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbours {
    pub start: Vec<usize>,
    pub index: Vec<usize>,
    pub weight: Vec<f64>,
    /// First neighbour of each spin whose neighbours are consecutive spins.
    pub run: Vec<Option<usize>>,
}

impl Neighbours {
    pub fn of(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.start[i]..self.start[i + 1];
        (&self.index[r.clone()], &self.weight[r])
    }
}

/// Spin form `E(s) = Σ_{(i,j)} J_ij s_i s_j + Σ_i h_i s_i + offset` over
/// `s ∈ {−1, +1}`, each coupled pair listed once. Visible unit `i` is spin
/// `i`, hidden unit `j` is spin `nv + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct IsingProblem {
    pub h: Vec<f64>,
    pub couplings: Vec<(usize, usize, f64)>,
    pub offset: f64,
}

impl IsingProblem {
    pub fn zeros(n: usize) -> Self {
        Self {
            h: vec![0.0; n],
            couplings: Vec::new(),
            offset: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn energy(&self, s: &[i8]) -> f64 {
        let field: f64 = self.h.iter().zip(s).map(|(h, s)| h * *s as f64).sum();
        let pair: f64 = self
            .couplings
            .iter()
            .map(|&(i, j, jv)| jv * (s[i] * s[j]) as f64)
            .sum();
        pair + field + self.offset
    }

    /// Neighbour lists of every spin in compressed rows.
    pub fn adjacency(&self) -> Neighbours {
        let n = self.len();
        let mut degree = vec![0usize; n];
        for &(i, j, _) in &self.couplings {
            degree[i] += 1;
            degree[j] += 1;
        }
        let mut start = vec![0usize; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + degree[i];
        }
        let mut fill = start.clone();
        let mut index = vec![0usize; start[n]];
        let mut weight = vec![0.0; start[n]];
        for &(i, j, jv) in &self.couplings {
            for (a, b) in [(i, j), (j, i)] {
                index[fill[a]] = b;
                weight[fill[a]] = jv;
                fill[a] += 1;
            }
        }
        let run = (0..n)
            .map(|i| {
                let idx = &index[start[i]..start[i + 1]];
                let lo = *idx.first()?;
                idx.iter()
                    .enumerate()
                    .all(|(k, &j)| j == lo + k)
                    .then_some(lo)
            })
            .collect();
        Neighbours {
            start,
            index,
            weight,
            run,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{ISING_HEADER} n={} offset={}\n", self.len(), self.offset);
        for (i, h) in self.h.iter().enumerate() {
            let _ = writeln!(s, "{i} {h}");
        }
        for &(i, j, jv) in &self.couplings {
            let _ = writeln!(s, "{i} {j} {jv}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, RbmError> {
        let bad = |m: String| RbmError::BadIsing(m);
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty input".into()))?;
        let rest = header
            .strip_prefix(ISING_HEADER)
            .ok_or_else(|| bad(format!("expected header {ISING_HEADER:?}")))?;
        let mut n = None;
        let mut offset = None;
        for field in rest.split_whitespace() {
            match field.split_once('=') {
                Some(("n", v)) => n = v.parse::<usize>().ok(),
                Some(("offset", v)) => offset = v.parse::<f64>().ok(),
                _ => return Err(bad(format!("unknown header field {field}"))),
            }
        }
        let n = n.ok_or_else(|| bad("header lacks n".into()))?;
        let mut p = IsingProblem::zeros(n);
        p.offset = offset.ok_or_else(|| bad("header lacks offset".into()))?;
        for (k, line) in lines.enumerate() {
            let cols: Vec<&str> = line.split_whitespace().collect();
            let idx = |s: &str| -> Result<usize, RbmError> {
                let i: usize = s
                    .parse()
                    .map_err(|_| bad(format!("line {}: bad index {s}", k + 2)))?;
                if i >= n {
                    return Err(bad(format!("line {}: index {i} out of range", k + 2)));
                }
                Ok(i)
            };
            let val = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| bad(format!("line {}: bad value {s}", k + 2)))
            };
            match cols.as_slice() {
                [] => {}
                [i, h] => p.h[idx(i)?] = val(h)?,
                [i, j, jv] => p.couplings.push((idx(i)?, idx(j)?, val(jv)?)),
                _ => return Err(bad(format!("line {}: expected 2 or 3 columns", k + 2))),
            }
        }
        Ok(p)
    }
}

impl Rbm {
    /// Exact change of variables `z = (s + 1)/2`.
    pub fn to_ising(&self) -> IsingProblem {
        let (nv, nh) = (self.nv, self.nh);
        let mut h = vec![0.0; nv + nh];
        let mut couplings = Vec::with_capacity(nv * nh);
        for i in 0..nv {
            h[i] = -self.a[i] / 2.0;
        }
        for j in 0..nh {
            h[nv + j] = -self.b[j] / 2.0;
        }
        let mut offset = -self.a.iter().sum::<f64>() / 2.0 - self.b.iter().sum::<f64>() / 2.0;
        for i in 0..nv {
            for j in 0..nh {
                let w = self.w[i * nh + j];
                h[i] -= w / 4.0;
                h[nv + j] -= w / 4.0;
                offset -= w / 4.0;
                if w != 0.0 {
                    couplings.push((i, nv + j, -w / 4.0));
                }
            }
        }
        IsingProblem {
            h,
            couplings,
            offset,
        }
    }
}

pub fn spins_of(z: &[u8]) -> Vec<i8> {
    z.iter().map(|&b| if b != 0 { 1 } else { -1 }).collect()
}
