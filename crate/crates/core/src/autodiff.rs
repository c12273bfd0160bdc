//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Every primitive evaluates eagerly and appends a node to the [`Tape`]; the
//! backward pass walks the nodes in exact reverse order, so gradients are
//! bit-reproducible for identical inputs.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::{gemm, Tensor};

/// Batch-norm variance epsilon.
pub const BATCHNORM_EPS: f64 = 1e-5;
/// Probability clamp used by [`Tape::bce`].
pub const BCE_CLAMP: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Boolean attention mask, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    keep: Vec<bool>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize, keep: Vec<bool>) -> Mask {
        assert_eq!(rows * cols, keep.len());
        Mask { rows, cols, keep }
    }

    pub fn keeps(&self, r: usize, c: usize) -> bool {
        self.keep[r * self.cols + c]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// 0/1 matrix with the same pattern.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::matrix(
            self.rows,
            self.cols,
            self.keep.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect(),
        )
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Scale(Var, f64),
    Hadamard(Var, Var),
    Relu(Var),
    Softmax(Var),
    MaskedSoftmax(Var),
    Concat(Vec<Var>),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Mean(Var),
    Bce { p: Var, labels: Rc<[f64]> },
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Learnable tensor with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub value: Tensor,
    pub grad: Tensor,
}

impl Parameter {
    pub fn new(value: Tensor) -> Parameter {
        let grad = Tensor::zeros(value.shape());
        Parameter { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(0.0);
    }

    pub fn accumulate(&mut self, g: &Tensor) {
        self.grad.add_assign(g);
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

#[cfg(test)]
thread_local! {
    /// Flips the sign of the relu backward rule; lets tests confirm the
    /// finite-difference verifier notices a broken rule.
    pub(crate) static RELU_SIGN_BUG: std::cell::Cell<bool> = const { std::cell::Cell::new(false) };
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn require_matrix(op: &'static str, t: &Tensor) -> Result<()> {
    if t.is_matrix() {
        Ok(())
    } else {
        Err(Error::Shape {
            op,
            lhs: t.shape().to_vec(),
            rhs: vec![],
        })
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.push_shared(Rc::new(value), op, requires_grad)
    }

    fn push_shared(&mut self, value: Rc<Tensor>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A differentiable input.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A non-differentiable input; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A constant shared with the caller instead of copied.
    pub fn constant_shared(&mut self, value: Rc<Tensor>) -> Var {
        self.push_shared(value, Op::Leaf, false)
    }

    pub fn param(&mut self, p: &Parameter) -> Var {
        self.variable(p.value.clone())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        require_matrix("matmul", ta)?;
        require_matrix("matmul", tb)?;
        if ta.cols() != tb.rows() {
            return Err(shape_err("matmul", ta, tb));
        }
        let out = gemm(ta, false, tb, false);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ` without materializing the transpose.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        require_matrix("matmul_t", ta)?;
        require_matrix("matmul_t", tb)?;
        if ta.cols() != tb.cols() {
            return Err(shape_err("matmul_t", ta, tb));
        }
        let out = gemm(ta, false, tb, true);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMulT(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        require_matrix("transpose", self.value(a))?;
        let out = self.value(a).transpose();
        let rg = self.rg(a);
        Ok(self.push(out, Op::Transpose(a), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("add", ta, tb));
        }
        let mut out = ta.clone();
        out.add_assign(tb);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= k);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, k), rg)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("hadamard", ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Hadamard(a, b), rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        require_matrix("softmax", t)?;
        let mut out = t.clone();
        for r in 0..t.rows() {
            let row = out.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                z += *v;
            }
            row.iter_mut().for_each(|v| *v /= z);
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::Softmax(a), rg))
    }

    /// Row softmax over kept entries only. Excluded entries are exactly 0,
    /// and a row with nothing kept is all zero.
    pub fn masked_softmax_rows(&mut self, a: Var, mask: &Mask) -> Result<Var> {
        let t = self.value(a);
        require_matrix("masked_softmax", t)?;
        if t.rows() != mask.rows || t.cols() != mask.cols {
            return Err(Error::Shape {
                op: "masked_softmax",
                lhs: t.shape().to_vec(),
                rhs: vec![mask.rows, mask.cols],
            });
        }
        let mut out = Tensor::zeros(t.shape());
        let cols = t.cols();
        for r in 0..t.rows() {
            let src = t.row(r);
            let keep = &mask.keep[r * cols..(r + 1) * cols];
            let max = src
                .iter()
                .zip(keep)
                .filter(|(_, k)| **k)
                .map(|(v, _)| *v)
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue;
            }
            let dst = out.row_mut(r);
            let mut z = 0.0;
            for c in 0..cols {
                if keep[c] {
                    dst[c] = (src[c] - max).exp();
                    z += dst[c];
                }
            }
            dst.iter_mut().for_each(|v| *v /= z);
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::MaskedSoftmax(a), rg))
    }

    /// Concatenate matrices with equal row counts along the column axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat: no inputs"))?;
        let rows = self.value(*first).rows();
        for p in parts {
            let t = self.value(*p);
            require_matrix("concat", t)?;
            if t.rows() != rows {
                return Err(shape_err("concat", self.value(*first), t));
            }
        }
        let total: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(r));
            }
        }
        let rg = parts.iter().any(|p| self.rg(*p));
        Ok(self.push(Tensor::matrix(rows, total, data), Op::Concat(parts.to_vec()), rg))
    }

    /// Per-column normalization over rows with learnable `1 × cols` scale and shift.
    pub fn batchnorm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let t = self.value(x);
        require_matrix("batchnorm", t)?;
        let (n, d) = (t.rows(), t.cols());
        for g in [gamma, beta] {
            let gv = self.value(g);
            if gv.len() != d {
                return Err(shape_err("batchnorm", t, gv));
            }
        }
        if n == 0 {
            return Err(Error::invalid("batchnorm: empty batch"));
        }
        let mut mean = vec![0.0; d];
        for r in 0..n {
            for (m, v) in mean.iter_mut().zip(t.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for r in 0..n {
            for ((s, v), m) in var.iter_mut().zip(t.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let inv_std: Vec<f64> = var
            .iter()
            .map(|s| 1.0 / (s / n as f64 + BATCHNORM_EPS).sqrt())
            .collect();
        let mut xhat = vec![0.0; n * d];
        let mut out = vec![0.0; n * d];
        let (gv, bv) = (self.value(gamma).data(), self.value(beta).data());
        for r in 0..n {
            for c in 0..d {
                let h = (t.data()[r * d + c] - mean[c]) * inv_std[c];
                xhat[r * d + c] = h;
                out[r * d + c] = gv[c] * h + bv[c];
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            Tensor::matrix(n, d, out),
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    /// Mean of every entry, as a `1 × 1` tensor.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(Error::invalid("mean: empty tensor"));
        }
        let m = t.data().iter().sum::<f64>() / t.len() as f64;
        let rg = self.rg(a);
        Ok(self.push(Tensor::scalar(m), Op::Mean(a), rg))
    }

    /// Mean binary cross-entropy of probabilities `p` against 0/1 `labels`.
    pub fn bce(&mut self, p: Var, labels: &[f64]) -> Result<Var> {
        let t = self.value(p);
        if t.is_empty() {
            return Err(Error::invalid("bce: empty batch"));
        }
        if t.len() != labels.len() {
            return Err(Error::Shape {
                op: "bce",
                lhs: t.shape().to_vec(),
                rhs: vec![labels.len()],
            });
        }
        let loss = bce_value(t.data(), labels);
        let rg = self.rg(p);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Bce {
                p,
                labels: labels.into(),
            },
            rg,
        ))
    }

    /// Rows `indices` of `a`, via a constant one-hot selection matrix.
    pub fn select_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let n = self.value(a).rows();
        let mut sel = Tensor::zeros(&[indices.len(), n]);
        for (r, &i) in indices.iter().enumerate() {
            if i >= n {
                return Err(Error::invalid(format!("select_rows: index {i} out of range for {n} rows")));
            }
            sel.set(r, i, 1.0);
        }
        let s = self.constant(sel);
        self.matmul(s, a)
    }

    /// Column `col` of `a` as a column vector, via a constant selection vector.
    pub fn select_column(&mut self, a: Var, col: usize) -> Result<Var> {
        let c = self.value(a).cols();
        if col >= c {
            return Err(Error::invalid(format!("select_column: column {col} out of range for {c}")));
        }
        let mut e = Tensor::zeros(&[c, 1]);
        e.set(col, 0, 1.0);
        let e = self.constant(e);
        self.matmul(a, e)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::invalid("backward: empty tape"));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::invalid(format!(
                "backward: loss must be scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(self.value(loss).shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let acc = |v: Var, contrib: Tensor, grads: &mut [Option<Tensor>]| {
            if !self.rg(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&contrib),
                slot @ None => *slot = Some(contrib),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    acc(*a, gemm(g, false, self.value(*b), true), grads);
                }
                if self.rg(*b) {
                    acc(*b, gemm(self.value(*a), true, g, false), grads);
                }
            }
            Op::MatMulT(a, b) => {
                if self.rg(*a) {
                    acc(*a, gemm(g, false, self.value(*b), false), grads);
                }
                if self.rg(*b) {
                    acc(*b, gemm(g, true, self.value(*a), false), grads);
                }
            }
            Op::Transpose(a) => acc(*a, g.transpose(), grads),
            Op::Add(a, b) => {
                acc(*a, g.clone(), grads);
                acc(*b, g.clone(), grads);
            }
            Op::Scale(a, k) => {
                let mut d = g.clone();
                d.data_mut().iter_mut().for_each(|v| *v *= k);
                acc(*a, d, grads);
            }
            Op::Hadamard(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    let d = g.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
                    acc(*a, Tensor::new(g.shape().to_vec(), d)?, grads);
                }
                if self.rg(*b) {
                    let d = g.data().iter().zip(va.data()).map(|(x, y)| x * y).collect();
                    acc(*b, Tensor::new(g.shape().to_vec(), d)?, grads);
                }
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                #[cfg(test)]
                let sign = if RELU_SIGN_BUG.with(|b| b.get()) { -1.0 } else { 1.0 };
                #[cfg(not(test))]
                let sign = 1.0;
                let d = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(gv, xv)| if *xv > 0.0 { sign * gv } else { 0.0 })
                    .collect();
                acc(*a, Tensor::new(g.shape().to_vec(), d)?, grads);
            }
            Op::Softmax(a) | Op::MaskedSoftmax(a) => {
                let y = &node.value;
                let mut d = Tensor::zeros(y.shape());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for (o, (yv, gv)) in d.row_mut(r).iter_mut().zip(yr.iter().zip(gr)) {
                        *o = yv * (gv - dot);
                    }
                }
                acc(*a, d, grads);
            }
            Op::Concat(parts) => {
                let rows = g.rows();
                let mut offset = 0;
                for p in parts {
                    let w = self.value(*p).cols();
                    if self.rg(*p) {
                        let mut d = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            d.extend_from_slice(&g.row(r)[offset..offset + w]);
                        }
                        acc(*p, Tensor::matrix(rows, w, d), grads);
                    }
                    offset += w;
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let (n, d) = (g.rows(), g.cols());
                let gv = self.value(*gamma);
                let mut dgamma = vec![0.0; d];
                let mut dbeta = vec![0.0; d];
                for r in 0..n {
                    for c in 0..d {
                        let gg = g.data()[r * d + c];
                        dgamma[c] += gg * xhat[r * d + c];
                        dbeta[c] += gg;
                    }
                }
                if self.rg(*x) {
                    let nf = n as f64;
                    let mut dx = vec![0.0; n * d];
                    for r in 0..n {
                        for c in 0..d {
                            let gg = g.data()[r * d + c];
                            dx[r * d + c] = gv.data()[c] * inv_std[c] / nf
                                * (nf * gg - dbeta[c] - xhat[r * d + c] * dgamma[c]);
                        }
                    }
                    acc(*x, Tensor::matrix(n, d, dx), grads);
                }
                let gshape = gv.shape().to_vec();
                acc(*gamma, Tensor::new(gshape.clone(), dgamma)?, grads);
                acc(*beta, Tensor::new(gshape, dbeta)?, grads);
            }
            Op::Mean(a) => {
                let t = self.value(*a);
                let v = g.data()[0] / t.len() as f64;
                acc(*a, Tensor::filled(t.shape(), v), grads);
            }
            Op::Bce { p, labels } => {
                let t = self.value(*p);
                let m = t.len() as f64;
                let scale = g.data()[0] / m;
                let d = t
                    .data()
                    .iter()
                    .zip(labels.iter())
                    .map(|(&pv, &y)| {
                        if pv < BCE_CLAMP || pv > 1.0 - BCE_CLAMP {
                            0.0
                        } else {
                            scale * (-y / pv + (1.0 - y) / (1.0 - pv))
                        }
                    })
                    .collect();
                acc(*p, Tensor::new(t.shape().to_vec(), d)?, grads);
            }
        }
        Ok(())
    }
}

/// Mean binary cross-entropy with probabilities clamped to `[1e-12, 1 - 1e-12]`.
pub fn bce_value(probs: &[f64], labels: &[f64]) -> f64 {
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    total / probs.len() as f64
}

/// Worst relative error between analytic gradients and central differences.
///
/// `f` returns the scalar value and the analytic gradient for every tensor in
/// `params`. Each entry is perturbed by `±h`; the relative error uses the
/// denominator `max(|analytic|, |numeric|, 1e-8)`.
pub fn finite_difference_check<F>(f: F, params: &[Tensor], h: f64) -> Result<f64>
where
    F: FnMut(&[Tensor]) -> Result<(f64, Vec<Tensor>)>,
{
    finite_difference_check_with_floor(f, params, h, 1e-8)
}

/// [`finite_difference_check`] with a caller-chosen denominator floor, for
/// cases where gradients near zero fall below the resolution of `f`.
pub fn finite_difference_check_with_floor<F>(mut f: F, params: &[Tensor], h: f64, floor: f64) -> Result<f64>
where
    F: FnMut(&[Tensor]) -> Result<(f64, Vec<Tensor>)>,
{
    let (_, analytic) = f(params)?;
    if analytic.len() != params.len() {
        return Err(Error::invalid("finite_difference_check: gradient count mismatch"));
    }
    let mut work = params.to_vec();
    let mut worst: f64 = 0.0;
    for (pi, grad) in analytic.iter().enumerate() {
        for e in 0..work[pi].len() {
            let orig = work[pi].data()[e];
            work[pi].data_mut()[e] = orig + h;
            let (plus, _) = f(&work)?;
            work[pi].data_mut()[e] = orig - h;
            let (minus, _) = f(&work)?;
            work[pi].data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = grad.data()[e];
            let denom = a.abs().max(numeric.abs()).max(floor);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn row(v: &[f64]) -> Tensor {
        Tensor::matrix(1, v.len(), v.to_vec())
    }

    #[test]
    fn softmax_of_equal_scores_is_uniform() {
        let mut t = Tape::new();
        let x = t.constant(row(&[0.0, 0.0]));
        let y = t.softmax_rows(x).unwrap();
        assert_eq!(t.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn masked_softmax_excludes_entries() {
        let mut t = Tape::new();
        let x = t.variable(row(&[5.0, 1.0, 3.0]));
        let mask = Mask::new(1, 3, vec![true, false, true]);
        let y = t.masked_softmax_rows(x, &mask).unwrap();
        let v = t.value(y).data().to_vec();
        assert_eq!(v[1], 0.0);
        let e2 = 2f64.exp();
        assert!((v[0] - e2 / (e2 + 1.0)).abs() < 1e-15);
        assert!((v[0] + v[2] - 1.0).abs() < 1e-15);

        // Gradient at the excluded position is exactly zero.
        let w = t.constant(row(&[0.3, -2.0, 1.7]));
        let prod = t.hadamard(y, w).unwrap();
        let loss = t.mean(prod).unwrap();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data()[1], 0.0);
    }

    #[test]
    fn fully_masked_row_is_zero() {
        let mut t = Tape::new();
        let x = t.variable(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        let mask = Mask::new(2, 2, vec![false, false, true, true]);
        let y = t.masked_softmax_rows(x, &mask).unwrap();
        assert_eq!(t.value(y).row(0), &[0.0, 0.0]);
        assert!(t.value(y).all_finite());
    }

    #[test]
    fn relu_values() {
        let mut t = Tape::new();
        let x = t.constant(row(&[-1.0, 0.0, 2.0]));
        let y = t.relu(x);
        assert_eq!(t.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn mean_relu_gradient() {
        let mut t = Tape::new();
        let w = t.variable(row(&[-1.0, 2.0]));
        let r = t.relu(w);
        let loss = t.mean(r).unwrap();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[0.0, 0.5]);
    }

    #[test]
    fn bilinear_gradient() {
        // sum(x ⊙ y) = n · mean(x ⊙ y)
        let mut t = Tape::new();
        let xv = row(&[1.0, -2.0, 3.0]);
        let yv = row(&[0.5, 4.0, -1.0]);
        let x = t.variable(xv.clone());
        let y = t.variable(yv.clone());
        let p = t.hadamard(x, y).unwrap();
        let m = t.mean(p).unwrap();
        let s = t.scale(m, 3.0);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap(), &yv);
        assert_eq!(g.get(y).unwrap(), &xv);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::new();
        let x = t.variable(row(&[1.0, 2.0]));
        assert!(t.backward(x).is_err());
        assert!(Tape::new().backward(Var(0)).is_err());
    }

    #[test]
    fn shape_errors_name_the_primitive() {
        let mut t = Tape::new();
        let a = t.variable(Tensor::zeros(&[2, 3]));
        let b = t.variable(Tensor::zeros(&[2, 3]));
        let err = t.matmul(a, b).unwrap_err().to_string();
        assert!(err.starts_with("matmul"), "{err}");
        let c = t.variable(Tensor::zeros(&[3, 2]));
        assert!(t.add(a, c).unwrap_err().to_string().starts_with("add"));
    }

    #[test]
    fn quadratic_is_exact() {
        let theta = vec![Tensor::matrix(2, 2, vec![0.3, -1.2, 2.5, 0.7])];
        let err = finite_difference_check(
            |p| Ok((p[0].data().iter().map(|v| v * v).sum::<f64>() / 2.0, vec![p[0].clone()])),
            &theta,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-9, "{err}");
    }

    fn relu_chain(p: &[Tensor]) -> Result<(f64, Vec<Tensor>)> {
        let mut t = Tape::new();
        let w = t.variable(p[0].clone());
        let x = t.constant(Tensor::matrix(3, 2, vec![1.0, -0.5, 0.2, 0.8, -1.1, 0.7]));
        let h = t.matmul(x, w)?;
        let r = t.relu(h);
        let sq = t.hadamard(r, r)?;
        let loss = t.mean(sq)?;
        let g = t.backward(loss)?;
        Ok((t.value(loss).data()[0], vec![g.get(w).unwrap().clone()]))
    }

    #[test]
    fn verifier_detects_wrong_backward_rule() {
        let w = vec![Tensor::matrix(2, 2, vec![0.9, 0.4, -0.3, 1.1])];
        let good = finite_difference_check(relu_chain, &w, 1e-5).unwrap();
        assert!(good < 1e-6, "{good}");
        RELU_SIGN_BUG.with(|b| b.set(true));
        let bad = finite_difference_check(relu_chain, &w, 1e-5).unwrap();
        RELU_SIGN_BUG.with(|b| b.set(false));
        assert!(bad > 1e-2, "{bad}");
    }

    // Magnitudes bounded away from zero keep gradients above roundoff.
    fn rand_t(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        let data = (0..r * c)
            .map(|_| {
                let m = rng.random_range(0.5..1.5);
                if rng.random::<bool>() { m } else { -m }
            })
            .collect();
        Tensor::matrix(r, c, data)
    }

    #[derive(Debug, Clone, Copy)]
    enum Prim {
        MatMul,
        MatMulT,
        Transpose,
        Add,
        Scale,
        Hadamard,
        Relu,
        Softmax,
        MaskedSoftmax,
        Concat,
        BatchNorm,
        Bce,
    }

    // Scalarize through a fixed random projection so every output entry matters.
    fn check_primitive(prim: Prim, r: usize, c: usize, seed: u64) -> f64 {
        // With two rows every normalized entry sits at ±1 and the input
        // gradient is O(eps), below finite-difference resolution.
        let r = if matches!(prim, Prim::BatchNorm) { r.max(3) } else { r };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inputs = vec![rand_t(&mut rng, r, c), rand_t(&mut rng, r, c)];
        match prim {
            Prim::MatMul => inputs[1] = rand_t(&mut rng, c, r),
            Prim::BatchNorm => {
                inputs[1] = rand_t(&mut rng, 1, c);
                inputs.push(rand_t(&mut rng, 1, c));
            }
            Prim::Bce => {
                inputs.truncate(1);
                for v in inputs[0].data_mut() {
                    *v = 0.1 + 0.8 * (*v + 1.5) / 3.0;
                }
            }
            _ => {}
        }
        let mask_keep: Vec<bool> = (0..r * c).map(|i| i % c == 0 || rng.random::<f64>() < 0.6).collect();
        let mask = Mask::new(r, c, mask_keep);
        let labels: Vec<f64> = (0..r * c).map(|i| (i % 2) as f64).collect();
        let out_shape = match prim {
            Prim::MatMul => (r, r),
            Prim::MatMulT => (r, r),
            Prim::Transpose => (c, r),
            Prim::Concat => (r, 2 * c),
            Prim::Bce => (1, 1),
            _ => (r, c),
        };
        let proj = Tensor::matrix(
            out_shape.0,
            out_shape.1,
            (0..out_shape.0 * out_shape.1).map(|_| rng.random_range(0.5..1.5)).collect(),
        );

        // The output at the unperturbed inputs is subtracted before scalarizing
        // so the loss stays O(h) and its roundoff does not swamp tiny gradients.
        let mut reference: Option<Tensor> = None;
        let mut f = |p: &[Tensor]| -> Result<(f64, Vec<Tensor>)> {
            let mut t = Tape::new();
            let vars: Vec<Var> = p.iter().map(|x| t.variable(x.clone())).collect();
            let out = match prim {
                Prim::MatMul => t.matmul(vars[0], vars[1])?,
                Prim::MatMulT => t.matmul_t(vars[0], vars[1])?,
                Prim::Transpose => t.transpose(vars[0])?,
                Prim::Add => t.add(vars[0], vars[1])?,
                Prim::Scale => t.scale(vars[0], -1.7),
                Prim::Hadamard => t.hadamard(vars[0], vars[1])?,
                Prim::Relu => t.relu(vars[0]),
                Prim::Softmax => t.softmax_rows(vars[0])?,
                Prim::MaskedSoftmax => t.masked_softmax_rows(vars[0], &mask)?,
                Prim::Concat => t.concat(&[vars[0], vars[1]])?,
                Prim::BatchNorm => t.batchnorm(vars[0], vars[1], vars[2])?,
                Prim::Bce => t.bce(vars[0], &labels)?,
            };
            let base = reference.get_or_insert_with(|| t.value(out).clone());
            let mut neg = base.clone();
            neg.data_mut().iter_mut().for_each(|v| *v = -*v);
            let nb = t.constant(neg);
            let centred = t.add(out, nb)?;
            let pc = t.constant(proj.clone());
            let w = t.hadamard(centred, pc)?;
            let loss = t.mean(w)?;
            let g = t.backward(loss)?;
            let grads = vars
                .iter()
                .map(|v| g.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(t.value(*v).shape())))
                .collect();
            Ok((t.value(loss).data()[0], grads))
        };
        // Entries below 1e-4 are compared absolutely; FD noise there is ~1e-11.
        finite_difference_check_with_floor(&mut f, &inputs, 2e-6, 1e-4).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn every_primitive_passes_gradient_check(r in 2usize..=8, c in 2usize..=8, seed in 0u64..1000) {
            for prim in [
                Prim::MatMul, Prim::MatMulT, Prim::Transpose, Prim::Add, Prim::Scale, Prim::Hadamard,
                Prim::Relu, Prim::Softmax, Prim::MaskedSoftmax, Prim::Concat,
                Prim::BatchNorm, Prim::Bce,
            ] {
                let err = check_primitive(prim, r, c, seed);
                prop_assert!(err < 1e-6, "{:?} {}x{} seed {}: {}", prim, r, c, seed, err);
            }
        }
    }

    #[test]
    fn replay_is_bit_identical() {
        let p = vec![Tensor::matrix(2, 2, vec![0.9, 0.4, -0.3, 1.1])];
        let a = relu_chain(&p).unwrap();
        let b = relu_chain(&p).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1, b.1);
    }
}
