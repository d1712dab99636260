//! Reverse-mode tape. A [`Graph`] records every operation applied to its
//! [`Var`]s; [`Graph::backward`] walks the tape once in reverse and returns
//! parameter gradients.

use rand::Rng;

use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::{self, gemm, Tensor};
use super::NnError;
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Which attention scores are allowed.
#[derive(Debug, Clone, PartialEq)]
pub enum AttnMask {
    None,
    /// Query `i` may attend keys `0..=i`.
    Causal,
    /// Only keys flagged `true` are visible.
    Keys(Vec<bool>),
}

impl AttnMask {
    pub fn allows(&self, query: usize, key: usize) -> bool {
        match self {
            AttnMask::None => true,
            AttnMask::Causal => key <= query,
            AttnMask::Keys(k) => k[key],
        }
    }
}

enum Value {
    Owned(Tensor),
    Param(ParamId),
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul {
        a: Var,
        b: Var,
        a_t: bool,
        b_t: bool,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    Gelu(Var),
    Sigmoid(Var),
    Clamp(Var, f64, f64),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        rstd: Vec<f64>,
    },
    Softmax(Var),
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    Unfold {
        x: Var,
        width: usize,
        pad: usize,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Reshape(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
    Sum(Var),
    ElementwiseGrad {
        x: Var,
        dydx: Vec<f64>,
    },
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
    Scalar {
        inputs: Vec<(Var, Tensor)>,
    },
}

struct Node {
    value: Value,
    op: Op,
}

/// Dropout configuration of a graph: `None` means evaluation mode.
pub struct DropoutRng {
    pub rate: f64,
    pub rng: StreamRng,
}

pub struct Graph<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
    dropout: Option<DropoutRng>,
}

fn mismatch(op: &str, a: &[usize], b: &[usize]) -> NnError {
    NnError::ShapeMismatch(format!("{op}: {a:?} vs {b:?}"))
}

impl<'s> Graph<'s> {
    /// Evaluation-mode graph (dropout is the identity).
    pub fn new(store: &'s ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            param_vars: vec![None; store.len()],
            dropout: None,
        }
    }

    /// Training-mode graph with inverted dropout drawn from `rng`.
    pub fn with_dropout(store: &'s ParamStore, rate: f64, rng: StreamRng) -> Self {
        let mut g = Self::new(store);
        if rate > 0.0 {
            g.dropout = Some(DropoutRng { rate, rng });
        }
        g
    }

    pub fn is_training(&self) -> bool {
        self.dropout.is_some()
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self.store.get(*id),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// A constant input; receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        let t = self.value(v);
        (t.rows(), t.cols())
    }

    /// `op(a) · op(b)` with optional transposes.
    pub fn matmul_t(&mut self, a: Var, a_t: bool, b: Var, b_t: bool) -> Result<Var, NnError> {
        let (ar, ac) = self.dims(a);
        let (br, bc) = self.dims(b);
        let (m, k) = if a_t { (ac, ar) } else { (ar, ac) };
        let (k2, n) = if b_t { (bc, br) } else { (br, bc) };
        if k != k2 {
            return Err(mismatch("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            a_t,
            self.value(b).data(),
            b_t,
            &mut out,
            false,
        );
        Ok(self.push(Tensor::matrix(m, n, out), Op::MatMul { a, b, a_t, b_t }))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.matmul_t(a, false, b, false)
    }

    fn zip(
        &mut self,
        a: Var,
        b: Var,
        name: &str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, NnError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(name, ta.shape(), tb.shape()));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        Tensor::new(ta.shape(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let t = self.zip(a, b, "add", |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let t = self.zip(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let t = self.zip(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    /// Broadcast a `1 × n` row over every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var, NnError> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let n = tx.cols();
        if tb.len() != n {
            return Err(mismatch("add_row", tx.shape(), tb.shape()));
        }
        let mut out = tx.clone();
        for row in out.data_mut().chunks_mut(n) {
            for (o, b) in row.iter_mut().zip(tb.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRow(x, bias)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let t = self.value(x).map(|v| v * s);
        self.push(t, Op::Scale(x, s))
    }

    pub fn one_minus(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| 1.0 - v);
        self.push(t, Op::OneMinus(x))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let t = self.value(x).map(tensor::gelu);
        self.push(t, Op::Gelu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.value(x).map(tensor::sigmoid);
        self.push(t, Op::Sigmoid(x))
    }

    /// Clamp to `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let t = self.value(x).map(|v| v.clamp(lo, hi));
        self.push(t, Op::Clamp(x, lo, hi))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var, NnError> {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let n = tx.cols();
        if tg.len() != n || tb.len() != n {
            return Err(mismatch("layer_norm", tx.shape(), tg.shape()));
        }
        let mut out = vec![0.0; tx.len()];
        let rstd = tensor::layer_norm_rows(tx.data(), n, tg.data(), tb.data(), &mut out);
        let t = Tensor::new(tx.shape(), out)?;
        Ok(self.push(
            t,
            Op::LayerNorm {
                x,
                gain,
                bias,
                rstd,
            },
        ))
    }

    /// Row softmax with masked entries forced to zero weight.
    pub fn softmax(&mut self, x: Var, mask: &AttnMask) -> Var {
        let mut t = self.value(x).clone();
        let n = t.cols();
        tensor::softmax_rows(t.data_mut(), n, |r, c| mask.allows(r, c));
        self.push(t, Op::Softmax(x))
    }

    /// Rows of `table` selected by `ids`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var, NnError> {
        let t = self.value(table);
        let (rows, cols) = (t.rows(), t.cols());
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(NnError::IndexOutOfRange {
                index: bad,
                len: rows,
            });
        }
        let mut out = Vec::with_capacity(ids.len() * cols);
        for &i in ids {
            out.extend_from_slice(t.row_slice(i));
        }
        let v = Tensor::matrix(ids.len(), cols, out);
        Ok(self.push(
            v,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Sliding windows for a same-length 1-D convolution: row `t` holds rows
    /// `t-pad ..= t-pad+width-1` of `x` concatenated, zeros outside.
    pub fn unfold(&mut self, x: Var, width: usize, pad: usize) -> Var {
        let t = self.value(x);
        let (len, ch) = (t.rows(), t.cols());
        let mut out = vec![0.0; len * width * ch];
        for pos in 0..len {
            for w in 0..width {
                let src = pos as isize + w as isize - pad as isize;
                if src < 0 || src >= len as isize {
                    continue;
                }
                let dst = pos * width * ch + w * ch;
                out[dst..dst + ch].copy_from_slice(t.row_slice(src as usize));
            }
        }
        let v = Tensor::matrix(len, width * ch, out);
        self.push(v, Op::Unfold { x, width, pad })
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NnError> {
        let t = self.value(x);
        let (rows, cols) = (t.rows(), t.cols());
        if start + len > cols {
            return Err(NnError::ShapeMismatch(format!(
                "slice {start}+{len} of {cols} columns"
            )));
        }
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&t.row_slice(r)[start..start + len]);
        }
        let v = Tensor::matrix(rows, len, out);
        Ok(self.push(v, Op::SliceCols { x, start }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let rows = self.value(parts[0]).rows();
        if parts.iter().any(|p| self.value(*p).rows() != rows) {
            return Err(NnError::ShapeMismatch(
                "concat_cols: row counts differ".into(),
            ));
        }
        let total: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                out.extend_from_slice(self.value(*p).row_slice(r));
            }
        }
        let v = Tensor::matrix(rows, total, out);
        Ok(self.push(v, Op::ConcatCols(parts.to_vec())))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, NnError> {
        let t = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(t, Op::Reshape(x)))
    }

    /// Summed cross-entropy of each logits row against its target id.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var, NnError> {
        let t = self.value(logits);
        let (rows, cols) = (t.rows(), t.cols());
        if rows != targets.len() {
            return Err(NnError::ShapeMismatch(format!(
                "{rows} logit rows, {} targets",
                targets.len()
            )));
        }
        if let Some(&bad) = targets.iter().find(|&&i| i >= cols) {
            return Err(NnError::IndexOutOfRange {
                index: bad,
                len: cols,
            });
        }
        let mut probs = t.data().to_vec();
        tensor::softmax_rows(&mut probs, cols, |_, _| true);
        let mut loss = 0.0;
        for (r, &y) in targets.iter().enumerate() {
            let row = t.row_slice(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[y];
        }
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// Elementwise function given its values and pointwise derivatives.
    pub fn elementwise(
        &mut self,
        x: Var,
        values: Vec<f64>,
        dydx: Vec<f64>,
    ) -> Result<Var, NnError> {
        let shape = self.shape(x).to_vec();
        let t = Tensor::new(&shape, values)?;
        if dydx.len() != t.len() {
            return Err(NnError::ShapeMismatch(
                "elementwise derivative length".into(),
            ));
        }
        Ok(self.push(t, Op::ElementwiseGrad { x, dydx }))
    }

    /// A scalar computed outside the tape, given its value and its gradient
    /// with respect to each input.
    pub fn scalar_with_grads(
        &mut self,
        value: f64,
        inputs: Vec<(Var, Tensor)>,
    ) -> Result<Var, NnError> {
        for (v, t) in &inputs {
            if self.shape(*v) != t.shape() {
                return Err(mismatch("scalar_with_grads", self.shape(*v), t.shape()));
            }
        }
        Ok(self.push(Tensor::scalar(value), Op::Scalar { inputs }))
    }

    /// Inverted dropout at the graph's rate; identity in evaluation mode.
    pub fn dropout(&mut self, x: Var) -> Var {
        let Some(d) = self.dropout.as_mut() else {
            return x;
        };
        let keep = 1.0 - d.rate;
        let n = match &self.nodes[x.0].value {
            Value::Owned(t) => t.len(),
            Value::Param(id) => self.store.get(*id).len(),
        };
        let mask: Vec<f64> = (0..n)
            .map(|_| {
                if d.rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let t = self.value(x);
        let data = t.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Tensor::new(t.shape(), data).expect("same shape");
        self.push(out, Op::Dropout { x, mask })
    }

    /// Gradients of the scalar `loss` with respect to every parameter used.
    pub fn backward(&self, loss: Var) -> Gradients {
        self.backward_scaled(loss, 1.0)
    }

    pub fn backward_scaled(&self, loss: Var, seed: f64) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut out = Gradients::new(self.store);
        let loss_t = self.value(loss);
        grads[loss.0] = Some(Tensor::full(loss_t.shape(), seed));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Param(id) => out.accumulate(*id, &g),
                Op::MatMul { a, b, a_t, b_t } => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (ar, ac) = (ta.rows(), ta.cols());
                    let (br, bc) = (tb.rows(), tb.cols());
                    let (m, k) = if *a_t { (ac, ar) } else { (ar, ac) };
                    let n = if *b_t { br } else { bc };
                    // dA' = G · op(B)ᵀ, stored in A's own layout
                    let mut da = vec![0.0; ar * ac];
                    if *a_t {
                        // A is k×m: dA = op(B) · Gᵀ
                        gemm(k, n, m, tb.data(), *b_t, g.data(), true, &mut da, false);
                    } else {
                        gemm(m, n, k, g.data(), false, tb.data(), !*b_t, &mut da, false);
                    }
                    let mut db = vec![0.0; br * bc];
                    if *b_t {
                        // B is n×k: dB = Gᵀ · op(A)
                        gemm(n, m, k, g.data(), true, ta.data(), *a_t, &mut db, false);
                    } else {
                        gemm(k, m, n, ta.data(), !*a_t, g.data(), false, &mut db, false);
                    }
                    acc(&mut grads, *a, Tensor::new(ta.shape(), da).expect("shape"));
                    acc(&mut grads, *b, Tensor::new(tb.shape(), db).expect("shape"));
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.map(|v| -v));
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = zip_with(&g, self.value(*b), |x, y| x * y);
                    let gb = zip_with(&g, self.value(*a), |x, y| x * y);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::AddRow(x, bias) => {
                    let n = g.cols();
                    let mut gb = vec![0.0; n];
                    for row in g.data().chunks(n) {
                        for (o, v) in gb.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    let bshape = self.shape(*bias).to_vec();
                    acc(&mut grads, *bias, Tensor::new(&bshape, gb).expect("shape"));
                    acc(&mut grads, *x, g);
                }
                Op::Scale(x, s) => acc(&mut grads, *x, g.map(|v| v * s)),
                Op::OneMinus(x) => acc(&mut grads, *x, g.map(|v| -v)),
                Op::Gelu(x) => {
                    let gx = zip_with(&g, self.value(*x), |gv, xv| gv * tensor::gelu_grad(xv));
                    acc(&mut grads, *x, gx);
                }
                Op::Sigmoid(x) => {
                    let y = self.value(Var(i));
                    let gx = zip_with(&g, y, |gv, yv| gv * yv * (1.0 - yv));
                    acc(&mut grads, *x, gx);
                }
                Op::Clamp(x, lo, hi) => {
                    let gx = zip_with(&g, self.value(*x), |gv, xv| {
                        if xv < *lo || xv > *hi {
                            0.0
                        } else {
                            gv
                        }
                    });
                    acc(&mut grads, *x, gx);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    rstd,
                } => {
                    let tx = self.value(*x);
                    let tg = self.value(*gain);
                    let n = tx.cols();
                    let mut dx = vec![0.0; tx.len()];
                    let mut dgain = vec![0.0; n];
                    let mut dbias = vec![0.0; n];
                    let mut xhat = vec![0.0; n];
                    let mut dxhat = vec![0.0; n];
                    for (r, &inv) in rstd.iter().enumerate() {
                        let row = tx.row_slice(r);
                        let grow = g.row_slice(r);
                        let mean = row.iter().sum::<f64>() / n as f64;
                        for j in 0..n {
                            xhat[j] = (row[j] - mean) * inv;
                            dxhat[j] = grow[j] * tg.data()[j];
                            dgain[j] += grow[j] * xhat[j];
                            dbias[j] += grow[j];
                        }
                        let mean_d = dxhat.iter().sum::<f64>() / n as f64;
                        let mean_dx =
                            dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                        for j in 0..n {
                            dx[r * n + j] = inv * (dxhat[j] - mean_d - xhat[j] * mean_dx);
                        }
                    }
                    let (gs, bs) = (tg.shape().to_vec(), self.shape(*bias).to_vec());
                    acc(&mut grads, *x, Tensor::new(tx.shape(), dx).expect("shape"));
                    acc(&mut grads, *gain, Tensor::new(&gs, dgain).expect("shape"));
                    acc(&mut grads, *bias, Tensor::new(&bs, dbias).expect("shape"));
                }
                Op::Softmax(x) => {
                    let y = self.value(Var(i));
                    let n = y.cols();
                    let mut dx = vec![0.0; y.len()];
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row_slice(r), g.row_slice(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            dx[r * n + j] = yr[j] * (gr[j] - dot);
                        }
                    }
                    let shape = y.shape().to_vec();
                    acc(&mut grads, *x, Tensor::new(&shape, dx).expect("shape"));
                }
                Op::Gather { table, ids } => {
                    let tt = self.value(*table);
                    let cols = tt.cols();
                    let mut dt = vec![0.0; tt.len()];
                    for (r, &id) in ids.iter().enumerate() {
                        for (o, v) in dt[id * cols..(id + 1) * cols]
                            .iter_mut()
                            .zip(g.row_slice(r))
                        {
                            *o += v;
                        }
                    }
                    acc(
                        &mut grads,
                        *table,
                        Tensor::new(tt.shape(), dt).expect("shape"),
                    );
                }
                Op::Unfold { x, width, pad } => {
                    let tx = self.value(*x);
                    let (len, ch) = (tx.rows(), tx.cols());
                    let mut dx = vec![0.0; tx.len()];
                    for pos in 0..len {
                        for w in 0..*width {
                            let src = pos as isize + w as isize - *pad as isize;
                            if src < 0 || src >= len as isize {
                                continue;
                            }
                            let from = pos * width * ch + w * ch;
                            let to = src as usize * ch;
                            for c in 0..ch {
                                dx[to + c] += g.data()[from + c];
                            }
                        }
                    }
                    acc(&mut grads, *x, Tensor::new(tx.shape(), dx).expect("shape"));
                }
                Op::SliceCols { x, start } => {
                    let tx = self.value(*x);
                    let (rows, cols) = (tx.rows(), tx.cols());
                    let len = g.cols();
                    let mut dx = vec![0.0; rows * cols];
                    for r in 0..rows {
                        dx[r * cols + start..r * cols + start + len]
                            .copy_from_slice(g.row_slice(r));
                    }
                    acc(&mut grads, *x, Tensor::new(tx.shape(), dx).expect("shape"));
                }
                Op::ConcatCols(parts) => {
                    let total = g.cols();
                    let mut offset = 0;
                    for p in parts {
                        let tp = self.value(*p);
                        let (rows, cols) = (tp.rows(), tp.cols());
                        let mut dp = Vec::with_capacity(rows * cols);
                        for r in 0..rows {
                            dp.extend_from_slice(
                                &g.data()[r * total + offset..r * total + offset + cols],
                            );
                        }
                        offset += cols;
                        let shape = tp.shape().to_vec();
                        acc(&mut grads, *p, Tensor::new(&shape, dp).expect("shape"));
                    }
                }
                Op::Reshape(x) => {
                    let shape = self.shape(*x).to_vec();
                    acc(&mut grads, *x, g.reshaped(&shape).expect("shape"));
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    probs,
                } => {
                    let s = g.item();
                    let tl = self.value(*logits);
                    let cols = tl.cols();
                    let mut dl: Vec<f64> = probs.iter().map(|p| p * s).collect();
                    for (r, &y) in targets.iter().enumerate() {
                        dl[r * cols + y] -= s;
                    }
                    acc(
                        &mut grads,
                        *logits,
                        Tensor::new(tl.shape(), dl).expect("shape"),
                    );
                }
                Op::Sum(x) => {
                    let shape = self.shape(*x).to_vec();
                    acc(&mut grads, *x, Tensor::full(&shape, g.item()));
                }
                Op::ElementwiseGrad { x, dydx } => {
                    let data = g.data().iter().zip(dydx).map(|(a, b)| a * b).collect();
                    let shape = self.shape(*x).to_vec();
                    acc(&mut grads, *x, Tensor::new(&shape, data).expect("shape"));
                }
                Op::Scalar { inputs } => {
                    let s = g.item();
                    for (v, t) in inputs {
                        acc(&mut grads, *v, t.map(|x| x * s));
                    }
                }
                Op::Dropout { x, mask } => {
                    let data = g.data().iter().zip(mask).map(|(a, b)| a * b).collect();
                    let shape = self.shape(*x).to_vec();
                    acc(&mut grads, *x, Tensor::new(&shape, data).expect("shape"));
                }
            }
        }
        out
    }
}

fn zip_with(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| f(*x, *y))
        .collect();
    Tensor::new(a.shape(), data).expect("same shape")
}

fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(t) => t.add_assign(&g),
        slot => *slot = Some(g),
    }
}
