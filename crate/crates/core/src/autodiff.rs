//! Reverse-mode differentiation over dense row-major `f64` matrices.
//!
//! A [`Tape`] records every operation eagerly; [`Tape::backward`] walks it in
//! reverse and fills the gradient buffer of each [`Tensor`] that depends on a
//! trainable leaf. Graph message passing is expressed with gather / scatter /
//! propagate primitives over explicit `src -> dst` index lists.

use std::sync::Arc;

use ndarray::{s, Array2, Axis, Zip};

use crate::graph::SparseRows;

pub type Matrix = Array2<f64>;

/// Handle to a tensor on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Value plus optional gradient buffer of identical shape.
#[derive(Debug, Clone)]
pub struct Tensor {
    pub value: Matrix,
    pub grad: Option<Matrix>,
}

impl Tensor {
    pub fn shape(&self) -> (usize, usize) {
        self.value.dim()
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    SparseMatMul {
        x: Arc<SparseRows>,
        scale: Option<Arc<[f64]>>,
        w: Var,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    MulConst(Var, Arc<Matrix>),
    Relu(Var),
    Elu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Exp(Var),
    Ln(Var),
    Powf(Var, f64),
    SafeRecip(Var),
    Gather(Var, Arc<[usize]>),
    ScatterAdd(Var, Arc<[usize]>),
    Propagate {
        h: Var,
        coef: Var,
        src: Arc<[usize]>,
        dst: Arc<[usize]>,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    Sum(Var),
    SumSquares(Var),
    SoftmaxXent {
        logits: Var,
        rows: Arc<[usize]>,
        targets: Arc<[usize]>,
        probs: Matrix,
    },
}

#[derive(Debug, Default)]
pub struct Tape {
    tensors: Vec<Tensor>,
    ops: Vec<Op>,
    needs_grad: Vec<bool>,
}

fn one_by_one(x: f64) -> Matrix {
    Array2::from_elem((1, 1), x)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.tensors.push(Tensor { value, grad: None });
        self.ops.push(op);
        self.needs_grad.push(needs_grad);
        Var(self.tensors.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.needs_grad[v.0])
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that receives no gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.tensors[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.tensors[v.0].value[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.tensors[v.0].shape()
    }

    pub fn tensor(&self, v: Var) -> &Tensor {
        &self.tensors[v.0]
    }

    /// Gradient after [`Tape::backward`]; `None` for tensors that do not
    /// depend on a trainable leaf.
    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.tensors[v.0].grad.as_ref()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        assert_eq!(ac, br, "matmul {ar}x{ac} by {br}x{bc}");
        let value = self.value(a).dot(self.value(b));
        let g = self.any_grad(&[a, b]);
        self.push(value, Op::MatMul(a, b), g)
    }

    /// `(X * scale) W` with `X` row-compressed; `scale`, when present, holds
    /// one multiplier per stored entry (input dropout).
    pub fn sparse_matmul(&mut self, x: Arc<SparseRows>, scale: Option<Arc<[f64]>>, w: Var) -> Var {
        let (wr, wc) = self.shape(w);
        assert_eq!(x.cols, wr, "sparse matmul {}x{} by {wr}x{wc}", x.rows, x.cols);
        let wv = self.value(w);
        let mut out = Array2::zeros((x.rows, wc));
        for r in 0..x.rows {
            let mut row = out.row_mut(r);
            for k in x.indptr[r]..x.indptr[r + 1] {
                let mut v = x.values[k];
                if let Some(s) = &scale {
                    v *= s[k];
                }
                if v != 0.0 {
                    row.scaled_add(v, &wv.row(x.indices[k]));
                }
            }
        }
        let g = self.needs_grad[w.0];
        self.push(out, Op::SparseMatMul { x, scale, w }, g)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) {
        assert_eq!(self.shape(a), self.shape(b), "{what}: shape mismatch");
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "add");
        let value = self.value(a) + self.value(b);
        let g = self.any_grad(&[a, b]);
        self.push(value, Op::Add(a, b), g)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "sub");
        let value = self.value(a) - self.value(b);
        let g = self.any_grad(&[a, b]);
        self.push(value, Op::Sub(a, b), g)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "mul");
        let value = self.value(a) * self.value(b);
        let g = self.any_grad(&[a, b]);
        self.push(value, Op::Mul(a, b), g)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "div");
        let value = self.value(a) / self.value(b);
        let g = self.any_grad(&[a, b]);
        self.push(value, Op::Div(a, b), g)
    }

    /// Adds the `1 x C` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (_, c) = self.shape(a);
        assert_eq!(self.shape(b), (1, c), "add_row: bias shape");
        let value = self.value(a) + self.value(b);
        let g = self.any_grad(&[a, b]);
        self.push(value, Op::AddRow(a, b), g)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a) * s;
        let g = self.needs_grad[a.0];
        self.push(value, Op::Scale(a, s), g)
    }

    /// `a + c` for a constant `c` of the same shape.
    pub fn shift(&mut self, a: Var, c: &Matrix) -> Var {
        assert_eq!(self.shape(a), c.dim(), "shift: shape mismatch");
        let value = self.value(a) + c;
        let g = self.needs_grad[a.0];
        self.push(value, Op::Shift(a), g)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) + c;
        let g = self.needs_grad[a.0];
        self.push(value, Op::Shift(a), g)
    }

    /// Elementwise product with a constant (dropout masks).
    pub fn mul_const(&mut self, a: Var, c: Arc<Matrix>) -> Var {
        assert_eq!(self.shape(a), c.dim(), "mul_const: shape mismatch");
        let value = self.value(a) * &*c;
        let g = self.needs_grad[a.0];
        self.push(value, Op::MulConst(a, c), g)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(a).mapv(f);
        let g = self.needs_grad[a.0];
        self.push(value, op, g)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn elu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { x.exp_m1() }, Op::Elu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.unary(
            a,
            move |x| if x > 0.0 { x } else { slope * x },
            Op::LeakyRelu(a, slope),
        )
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Ln(a))
    }

    pub fn powf(&mut self, a: Var, p: f64) -> Var {
        self.unary(a, move |x| x.powf(p), Op::Powf(a, p))
    }

    /// `1 / x` where `x != 0`, and `0` where `x == 0`.
    pub fn safe_recip(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x == 0.0 { 0.0 } else { 1.0 / x }, Op::SafeRecip(a))
    }

    /// Row `i` of the result is row `idx[i]` of `a`.
    pub fn gather(&mut self, a: Var, idx: Arc<[usize]>) -> Var {
        let av = self.value(a);
        let mut out = Array2::zeros((idx.len(), av.ncols()));
        for (i, &j) in idx.iter().enumerate() {
            out.row_mut(i).assign(&av.row(j));
        }
        let g = self.needs_grad[a.0];
        self.push(out, Op::Gather(a, idx), g)
    }

    /// Row `idx[e]` of the `n`-row result accumulates row `e` of `a`.
    pub fn scatter_add(&mut self, a: Var, idx: Arc<[usize]>, n: usize) -> Var {
        let av = self.value(a);
        assert_eq!(av.nrows(), idx.len(), "scatter_add: index length");
        let mut out = Array2::zeros((n, av.ncols()));
        for (e, &j) in idx.iter().enumerate() {
            out.row_mut(j).scaled_add(1.0, &av.row(e));
        }
        let g = self.needs_grad[a.0];
        self.push(out, Op::ScatterAdd(a, idx), g)
    }

    /// Weighted message passing: `out[dst[e]] += coef[e] * h[src[e]]`, with
    /// `coef` an `E x 1` column.
    pub fn propagate(&mut self, h: Var, coef: Var, src: Arc<[usize]>, dst: Arc<[usize]>) -> Var {
        assert_eq!(src.len(), dst.len());
        assert_eq!(self.shape(coef), (src.len(), 1), "propagate: coefficient shape");
        let hv = self.value(h);
        let cv = self.value(coef);
        let mut out = Array2::zeros(hv.dim());
        for e in 0..src.len() {
            let c = cv[[e, 0]];
            if c != 0.0 {
                out.row_mut(dst[e]).scaled_add(c, &hv.row(src[e]));
            }
        }
        let g = self.any_grad(&[h, coef]);
        self.push(out, Op::Propagate { h, coef, src, dst }, g)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("concat_cols: row mismatch");
        let g = self.any_grad(parts);
        self.push(value, Op::ConcatCols(parts.to_vec()), g)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("concat_rows: column mismatch");
        let g = self.any_grad(parts);
        self.push(value, Op::ConcatRows(parts.to_vec()), g)
    }

    /// Rows `start..end` of `a`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice(s![start..end, ..]).to_owned();
        let g = self.needs_grad[a.0];
        self.push(value, Op::SliceRows(a, start), g)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = one_by_one(self.value(a).sum());
        let g = self.needs_grad[a.0];
        self.push(value, Op::Sum(a), g)
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let value = one_by_one(self.value(a).iter().map(|x| x * x).sum());
        let g = self.needs_grad[a.0];
        self.push(value, Op::SumSquares(a), g)
    }

    /// Mean cross-entropy of `softmax(logits[rows[i]])` against `targets[i]`.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        rows: Arc<[usize]>,
        targets: Arc<[usize]>,
    ) -> Var {
        assert_eq!(rows.len(), targets.len());
        assert!(!rows.is_empty(), "cross entropy over no rows");
        let lv = self.value(logits);
        let mut probs = Array2::zeros((rows.len(), lv.ncols()));
        let mut loss = 0.0;
        for (i, (&r, &t)) in rows.iter().zip(targets.iter()).enumerate() {
            let row = lv.row(r);
            let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
            loss += lse - row[t];
            for (j, &x) in row.iter().enumerate() {
                probs[[i, j]] = (x - lse).exp();
            }
        }
        let value = one_by_one(loss / rows.len() as f64);
        let g = self.needs_grad[logits.0];
        self.push(
            value,
            Op::SoftmaxXent {
                logits,
                rows,
                targets,
                probs,
            },
            g,
        )
    }

    /// Populates gradient buffers of every tensor `output` depends on
    /// through trainable leaves. `output` must be `1 x 1`.
    pub fn backward(&mut self, output: Var) {
        assert_eq!(self.shape(output), (1, 1), "backward from a non-scalar");
        for t in &mut self.tensors {
            t.grad = None;
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.tensors.len()).map(|_| None).collect();
        grads[output.0] = Some(one_by_one(1.0));
        for i in (0..=output.0).rev() {
            if !self.needs_grad[i] {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            self.tensors[i].grad = Some(g);
        }
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, delta: Matrix) {
        if !self.needs_grad[v.0] {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => *g += &delta,
            slot => *slot = Some(delta),
        }
    }

    fn backprop_node(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let out = &self.tensors[i].value;
        match &self.ops[i] {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.needs_grad[a.0] {
                    self.accumulate(grads, *a, g.dot(&self.value(*b).t()));
                }
                if self.needs_grad[b.0] {
                    self.accumulate(grads, *b, self.value(*a).t().dot(g));
                }
            }
            Op::SparseMatMul { x, scale, w } => {
                let mut gw = Array2::zeros(self.shape(*w));
                for r in 0..x.rows {
                    let grow = g.row(r);
                    for k in x.indptr[r]..x.indptr[r + 1] {
                        let mut v = x.values[k];
                        if let Some(s) = scale {
                            v *= s[k];
                        }
                        if v != 0.0 {
                            gw.row_mut(x.indices[k]).scaled_add(v, &grow);
                        }
                    }
                }
                self.accumulate(grads, *w, gw);
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, -g);
            }
            Op::Mul(a, b) => {
                self.accumulate(grads, *a, g * self.value(*b));
                self.accumulate(grads, *b, g * self.value(*a));
            }
            Op::Div(a, b) => {
                let bv = self.value(*b);
                self.accumulate(grads, *a, g / bv);
                if self.needs_grad[b.0] {
                    let mut gb = -g * out;
                    gb /= bv;
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::AddRow(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, g * *s),
            Op::Shift(a) => self.accumulate(grads, *a, g.clone()),
            Op::MulConst(a, c) => self.accumulate(grads, *a, g * &**c),
            Op::Relu(a) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(self.value(*a))
                    .for_each(|d, &x| if x <= 0.0 { *d = 0.0 });
                self.accumulate(grads, *a, d);
            }
            Op::Elu(a) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(self.value(*a))
                    .for_each(|d, &x| if x <= 0.0 { *d *= x.exp() });
                self.accumulate(grads, *a, d);
            }
            Op::LeakyRelu(a, slope) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(self.value(*a))
                    .for_each(|d, &x| if x <= 0.0 { *d *= slope });
                self.accumulate(grads, *a, d);
            }
            Op::Sigmoid(a) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(out).for_each(|d, &y| *d *= y * (1.0 - y));
                self.accumulate(grads, *a, d);
            }
            Op::Exp(a) => self.accumulate(grads, *a, g * out),
            Op::Ln(a) => self.accumulate(grads, *a, g / self.value(*a)),
            Op::Powf(a, p) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(self.value(*a))
                    .for_each(|d, &x| *d *= p * x.powf(p - 1.0));
                self.accumulate(grads, *a, d);
            }
            Op::SafeRecip(a) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(self.value(*a)).for_each(|d, &x| {
                    *d = if x == 0.0 { 0.0 } else { -*d / (x * x) };
                });
                self.accumulate(grads, *a, d);
            }
            Op::Gather(a, idx) => {
                let mut d = Array2::zeros(self.shape(*a));
                for (i, &j) in idx.iter().enumerate() {
                    d.row_mut(j).scaled_add(1.0, &g.row(i));
                }
                self.accumulate(grads, *a, d);
            }
            Op::ScatterAdd(a, idx) => {
                let mut d = Array2::zeros(self.shape(*a));
                for (e, &j) in idx.iter().enumerate() {
                    d.row_mut(e).assign(&g.row(j));
                }
                self.accumulate(grads, *a, d);
            }
            Op::Propagate { h, coef, src, dst } => {
                let cv = self.value(*coef);
                if self.needs_grad[h.0] {
                    let mut gh = Array2::zeros(self.shape(*h));
                    for e in 0..src.len() {
                        let c = cv[[e, 0]];
                        if c != 0.0 {
                            gh.row_mut(src[e]).scaled_add(c, &g.row(dst[e]));
                        }
                    }
                    self.accumulate(grads, *h, gh);
                }
                if self.needs_grad[coef.0] {
                    let hv = self.value(*h);
                    let mut gc = Array2::zeros((src.len(), 1));
                    for e in 0..src.len() {
                        gc[[e, 0]] = g.row(dst[e]).dot(&hv.row(src[e]));
                    }
                    self.accumulate(grads, *coef, gc);
                }
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for p in parts {
                    let w = self.shape(*p).1;
                    self.accumulate(grads, *p, g.slice(s![.., start..start + w]).to_owned());
                    start += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for p in parts {
                    let h = self.shape(*p).0;
                    self.accumulate(grads, *p, g.slice(s![start..start + h, ..]).to_owned());
                    start += h;
                }
            }
            Op::SliceRows(a, start) => {
                let mut d = Array2::zeros(self.shape(*a));
                let rows = g.nrows();
                d.slice_mut(s![*start..*start + rows, ..]).assign(g);
                self.accumulate(grads, *a, d);
            }
            Op::Sum(a) => {
                let d = Array2::from_elem(self.shape(*a), g[[0, 0]]);
                self.accumulate(grads, *a, d);
            }
            Op::SumSquares(a) => self.accumulate(grads, *a, self.value(*a) * (2.0 * g[[0, 0]])),
            Op::SoftmaxXent {
                logits,
                rows,
                targets,
                probs,
            } => {
                let scale = g[[0, 0]] / rows.len() as f64;
                let mut d = Array2::zeros(self.shape(*logits));
                for (i, (&r, &t)) in rows.iter().zip(targets.iter()).enumerate() {
                    let mut row = d.row_mut(r);
                    row.scaled_add(scale, &probs.row(i));
                    row[t] -= scale;
                }
                self.accumulate(grads, *logits, d);
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Adam with bias correction, updating a list of parameter matrices in place.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(lr: f64, shapes: &[(usize, usize)]) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            v: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[&Matrix]) {
        assert_eq!(params.len(), self.m.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            Zip::from(&mut **p)
                .and(*g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let mh = *m / bc1;
                    let vh = *v / bc2;
                    *p -= lr * mh / (vh.sqrt() + eps);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Central differences of `f` with respect to every entry of `x`.
    fn numeric_grad(x: &Matrix, f: impl Fn(&Matrix) -> f64) -> Matrix {
        let h = 1e-6;
        let mut g = Array2::zeros(x.dim());
        for idx in 0..x.len() {
            let (r, c) = (idx / x.ncols(), idx % x.ncols());
            let mut xp = x.clone();
            xp[[r, c]] += h;
            let mut xm = x.clone();
            xm[[r, c]] -= h;
            g[[r, c]] = (f(&xp) - f(&xm)) / (2.0 * h);
        }
        g
    }

    fn check(x: Matrix, build: impl Fn(&mut Tape, Var) -> Var) {
        let eval = |m: &Matrix| {
            let mut t = Tape::new();
            let v = t.param(m.clone());
            let out = build(&mut t, v);
            t.scalar(out)
        };
        let mut t = Tape::new();
        let v = t.param(x.clone());
        let out = build(&mut t, v);
        t.backward(out);
        let analytic = t.grad(v).unwrap().clone();
        let numeric = numeric_grad(&x, eval);
        for (a, n) in analytic.iter().zip(numeric.iter()) {
            assert!((a - n).abs() < 1e-6 * (1.0 + n.abs()), "{analytic} vs {numeric}");
        }
    }

    #[test]
    fn elementwise_ops() {
        let x = array![[0.3, -0.7], [1.2, -0.1]];
        check(x.clone(), |t, v| {
            let a = t.relu(v);
            let b = t.elu(v);
            let c = t.leaky_relu(v, 0.2);
            let d = t.sigmoid(v);
            let e = t.exp(v);
            let ab = t.mul(a, b);
            let cd = t.add(c, d);
            let f = t.sub(cd, e);
            let s = t.add(ab, f);
            t.sum_squares(s)
        });
        check(x.mapv(|v: f64| v.abs() + 0.5), |t, v| {
            let a = t.ln(v);
            let b = t.powf(v, -0.5);
            let c = t.safe_recip(v);
            let d = t.div(a, b);
            let e = t.mul(d, c);
            let s = t.scale(e, 3.0);
            t.sum(s)
        });
    }

    #[test]
    fn structural_ops() {
        let x = array![[0.3, -0.7], [1.2, -0.1], [0.5, 0.9]];
        let idx: Arc<[usize]> = Arc::from(vec![2, 0, 0, 1]);
        check(x.clone(), |t, v| {
            let g = t.gather(v, idx.clone());
            let sc = t.scatter_add(g, idx.clone(), 3);
            let top = t.slice_rows(sc, 0, 2);
            let cc = t.concat_cols(&[top, top]);
            let cr = t.concat_rows(&[cc, cc]);
            let w = t.constant(array![[1.0], [2.0], [-1.0], [0.5]]);
            let m = t.matmul(cr, w);
            let m2 = t.mul(m, m);
            t.sum(m2)
        });
    }

    #[test]
    fn propagate_grads_for_both_inputs() {
        let src: Arc<[usize]> = Arc::from(vec![0, 1, 2, 2]);
        let dst: Arc<[usize]> = Arc::from(vec![1, 2, 0, 1]);
        let h = array![[0.3, -0.7], [1.2, -0.1], [0.5, 0.9]];
        let coef = array![[0.5], [-1.0], [2.0], [0.25]];
        {
            let (src, dst, coef) = (src.clone(), dst.clone(), coef.clone());
            check(h.clone(), move |t, v| {
                let c = t.constant(coef.clone());
                let p = t.propagate(v, c, src.clone(), dst.clone());
                t.sum_squares(p)
            });
        }
        check(coef, move |t, v| {
            let hv = t.constant(h.clone());
            let p = t.propagate(hv, v, src.clone(), dst.clone());
            t.sum_squares(p)
        });
    }

    #[test]
    fn cross_entropy_and_sparse_matmul() {
        let x = SparseRows::from_dense(&array![[1.0, 0.0, 2.0], [0.0, 0.5, 0.0]]);
        let x = Arc::new(x);
        let scale: Arc<[f64]> = Arc::from(vec![2.0, 0.0, 1.0]);
        check(array![[0.1, 0.2], [0.3, -0.4], [-0.5, 0.6]], move |t, w| {
            let z = t.sparse_matmul(x.clone(), Some(scale.clone()), w);
            let b = t.constant(array![[0.1, -0.1]]);
            let z = t.add_row(z, b);
            t.softmax_cross_entropy(z, Arc::from(vec![0, 1]), Arc::from(vec![1, 0]))
        });
    }

    #[test]
    fn uniform_logits_give_log_classes() {
        let mut t = Tape::new();
        let z = t.param(Array2::zeros((4, 3)));
        let l = t.softmax_cross_entropy(z, Arc::from(vec![0, 2]), Arc::from(vec![1, 2]));
        assert!((t.scalar(l) - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut p = array![[1.0, -1.0]];
        let g = array![[0.5, -0.5]];
        let mut opt = Adam::new(0.1, &[(1, 2)]);
        opt.step(&mut [&mut p], &[&g]);
        assert!((p[[0, 0]] - 0.9).abs() < 1e-6);
        assert!((p[[0, 1]] + 0.9).abs() < 1e-6);
    }
}
