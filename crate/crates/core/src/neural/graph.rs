//! Tape-based reverse-mode differentiation over [`Matrix`] values.
//!
//! A [`Graph`] records every operation as it is evaluated. Calling
//! [`Graph::backward`] on a scalar node walks the tape in reverse and
//! returns the gradient for every parameter in the store. Shape
//! mismatches inside a graph are programming errors and panic; public
//! layer entry points validate shapes before building graphs.

use super::matrix::gemm;
use super::params::{ParamId, ParamStore};
use super::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    Affine(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    SoftmaxRows(Var),
    LayerNormRows { x: Var, xhat: Matrix, inv_std: Vec<f64> },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Mse(Var, Matrix),
    Sum(Var),
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

const LN_EPS: f64 = 1e-5;

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_vars: vec![None; params.len()],
        }
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1), "scalar of non-scalar node");
        m.get(0, 0)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A constant input; no gradient flows into it.
    pub fn input(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Leaf, false)
    }

    /// The node for a parameter; repeated calls return the same node so
    /// gradients from every use accumulate.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.index()] {
            return v;
        }
        let v = self.push(self.params.get(id).clone(), Op::Param(id.index()), true);
        self.param_vars[id.index()] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (am, bm) = (self.value(a), self.value(b));
        let mut out = Matrix::zeros(am.rows(), bm.cols());
        gemm(1.0, am, false, bm, false, 0.0, &mut out);
        let ng = self.needs(&[a, b]);
        self.push(out, Op::MatMul(a, b), ng)
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let (am, bm) = (self.value(a), self.value(b));
        let mut out = Matrix::zeros(am.rows(), bm.rows());
        gemm(1.0, am, false, bm, true, 0.0, &mut out);
        let ng = self.needs(&[a, b]);
        self.push(out, Op::MatMulT(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let ng = self.needs(&[a, b]);
        self.push(out, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let ng = self.needs(&[a, b]);
        self.push(out, Op::Sub(a, b), ng)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let ng = self.needs(&[a, b]);
        self.push(out, Op::Mul(a, b), ng)
    }

    /// Adds a `1 x c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let out = broadcast_row(self.value(a), self.value(row), |x, y| x + y);
        let ng = self.needs(&[a, row]);
        self.push(out, Op::AddRow(a, row), ng)
    }

    /// Multiplies every row of `a` elementwise by a `1 x c` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let out = broadcast_row(self.value(a), self.value(row), |x, y| x * y);
        let ng = self.needs(&[a, row]);
        self.push(out, Op::MulRow(a, row), ng)
    }

    /// Scales row `r` of `a` by `col[r]` for an `r x 1` column.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let (am, cm) = (self.value(a), self.value(col));
        assert_eq!((cm.rows(), cm.cols()), (am.rows(), 1), "mul_col shape");
        let mut out = am.clone();
        for r in 0..am.rows() {
            let s = cm.get(r, 0);
            out.row_mut(r).iter_mut().for_each(|v| *v *= s);
        }
        let ng = self.needs(&[a, col]);
        self.push(out, Op::MulCol(a, col), ng)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| s * x);
        let ng = self.needs(&[a]);
        self.push(out, Op::Affine(a, s), ng)
    }

    /// `s · a + c`.
    pub fn affine(&mut self, a: Var, s: f64, c: f64) -> Var {
        let out = self.value(a).map(|x| s * x + c);
        let ng = self.needs(&[a]);
        self.push(out, Op::Affine(a, s), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let ng = self.needs(&[a]);
        self.push(out, Op::Sigmoid(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        let ng = self.needs(&[a]);
        self.push(out, Op::Tanh(a), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        let ng = self.needs(&[a]);
        self.push(out, Op::Relu(a), ng)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let out = softmax_rows(self.value(a));
        let ng = self.needs(&[a]);
        self.push(out, Op::SoftmaxRows(a), ng)
    }

    /// Normalizes each row to zero mean and unit variance (no affine).
    pub fn layer_norm_rows(&mut self, a: Var) -> Var {
        let am = self.value(a);
        let n = am.cols() as f64;
        let mut xhat = am.clone();
        let mut inv_std = Vec::with_capacity(am.rows());
        for r in 0..am.rows() {
            let row = xhat.row_mut(r);
            let mu = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
            let is = 1.0 / (var + LN_EPS).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mu) * is);
            inv_std.push(is);
        }
        let ng = self.needs(&[a]);
        self.push(xhat.clone(), Op::LayerNormRows { x: a, xhat, inv_std }, ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut off = 0;
        for p in parts {
            let m = self.value(*p);
            assert_eq!(m.rows(), rows, "concat_cols rows");
            for r in 0..rows {
                out.row_mut(r)[off..off + m.cols()].copy_from_slice(m.row(r));
            }
            off += m.cols();
        }
        let ng = self.needs(parts);
        self.push(out, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let m = self.value(*p);
            assert_eq!(m.cols(), cols, "concat_rows cols");
            data.extend_from_slice(m.data());
            rows += m.rows();
        }
        let ng = self.needs(parts);
        self.push(Matrix::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Var {
        let am = self.value(a);
        assert!(start + width <= am.cols(), "slice_cols range");
        let mut out = Matrix::zeros(am.rows(), width);
        for r in 0..am.rows() {
            out.row_mut(r).copy_from_slice(&am.row(r)[start..start + width]);
        }
        let ng = self.needs(&[a]);
        self.push(out, Op::SliceCols(a, start), ng)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, height: usize) -> Var {
        let am = self.value(a);
        assert!(start + height <= am.rows(), "slice_rows range");
        let c = am.cols();
        let out = Matrix::from_vec(height, c, am.data()[start * c..(start + height) * c].to_vec());
        let ng = self.needs(&[a]);
        self.push(out, Op::SliceRows(a, start), ng)
    }

    /// Mean squared error against a constant target, as a `1 x 1` node.
    pub fn mse(&mut self, pred: Var, target: &Matrix) -> Var {
        let pm = self.value(pred);
        assert_eq!(pm.shape(), target.shape(), "mse shape");
        let n = pm.len().max(1) as f64;
        let s = pm.data().iter().zip(target.data()).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n;
        let ng = self.needs(&[pred]);
        self.push(Matrix::filled(1, 1, s), Op::Mse(pred, target.clone()), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let ng = self.needs(&[a]);
        self.push(Matrix::filled(1, 1, s), Op::Sum(a), ng)
    }

    /// Gradients of the scalar `loss` with respect to every parameter in
    /// the store, in store order. Unused parameters get zero gradients.
    pub fn backward(&self, loss: Var) -> Vec<Matrix> {
        assert_eq!(self.value(loss).shape(), (1, 1), "backward from non-scalar");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));
        let mut out: Vec<Matrix> = self
            .params
            .values()
            .iter()
            .map(|m| Matrix::zeros(m.rows(), m.cols()))
            .collect();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let mut acc = |v: Var, m: Matrix| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(existing) => existing.add_assign(&m),
                    slot @ None => *slot = Some(m),
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(p) => out[*p] = g,
                Op::MatMul(a, b) => {
                    let (am, bm) = (self.value(*a), self.value(*b));
                    if self.nodes[a.0].needs_grad {
                        let mut da = Matrix::zeros(am.rows(), am.cols());
                        gemm(1.0, &g, false, bm, true, 0.0, &mut da);
                        acc(*a, da);
                    }
                    if self.nodes[b.0].needs_grad {
                        let mut db = Matrix::zeros(bm.rows(), bm.cols());
                        gemm(1.0, am, true, &g, false, 0.0, &mut db);
                        acc(*b, db);
                    }
                }
                Op::MatMulT(a, b) => {
                    let (am, bm) = (self.value(*a), self.value(*b));
                    if self.nodes[a.0].needs_grad {
                        let mut da = Matrix::zeros(am.rows(), am.cols());
                        gemm(1.0, &g, false, bm, false, 0.0, &mut da);
                        acc(*a, da);
                    }
                    if self.nodes[b.0].needs_grad {
                        let mut db = Matrix::zeros(bm.rows(), bm.cols());
                        gemm(1.0, &g, true, am, false, 0.0, &mut db);
                        acc(*b, db);
                    }
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Sub(a, b) => {
                    acc(*b, g.map(|x| -x));
                    acc(*a, g);
                }
                Op::Mul(a, b) => {
                    acc(*a, g.zip_map(self.value(*b), |x, y| x * y));
                    acc(*b, g.zip_map(self.value(*a), |x, y| x * y));
                }
                Op::AddRow(a, row) => {
                    acc(*row, col_sums(&g));
                    acc(*a, g);
                }
                Op::MulRow(a, row) => {
                    let prod = g.zip_map(self.value(*a), |x, y| x * y);
                    acc(*row, col_sums(&prod));
                    acc(*a, broadcast_row(&g, self.value(*row), |x, y| x * y));
                }
                Op::MulCol(a, col) => {
                    let am = self.value(*a);
                    let cm = self.value(*col);
                    let mut dcol = Matrix::zeros(am.rows(), 1);
                    let mut da = g.clone();
                    for r in 0..am.rows() {
                        let s: f64 = g.row(r).iter().zip(am.row(r)).map(|(x, y)| x * y).sum();
                        dcol.set(r, 0, s);
                        let c = cm.get(r, 0);
                        da.row_mut(r).iter_mut().for_each(|v| *v *= c);
                    }
                    acc(*col, dcol);
                    acc(*a, da);
                }
                Op::Affine(a, s) => acc(*a, g.map(|x| s * x)),
                Op::Sigmoid(a) => acc(*a, g.zip_map(&node.value, |x, y| x * y * (1.0 - y))),
                Op::Tanh(a) => acc(*a, g.zip_map(&node.value, |x, y| x * (1.0 - y * y))),
                Op::Relu(a) => {
                    let xm = self.value(*a);
                    acc(*a, g.zip_map(xm, |x, v| if v > 0.0 { x } else { 0.0 }));
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut dx = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(p, q)| p * q).sum();
                        for (c, d) in dx.row_mut(r).iter_mut().enumerate() {
                            *d = y.get(r, c) * (g.get(r, c) - dot);
                        }
                    }
                    acc(*a, dx);
                }
                Op::LayerNormRows { x, xhat, inv_std } => {
                    let n = xhat.cols() as f64;
                    let mut dx = Matrix::zeros(xhat.rows(), xhat.cols());
                    for r in 0..xhat.rows() {
                        let gr = g.row(r);
                        let hr = xhat.row(r);
                        let mean_g = gr.iter().sum::<f64>() / n;
                        let mean_gh = gr.iter().zip(hr).map(|(p, q)| p * q).sum::<f64>() / n;
                        for (c, d) in dx.row_mut(r).iter_mut().enumerate() {
                            *d = inv_std[r] * (gr[c] - mean_g - hr[c] * mean_gh);
                        }
                    }
                    acc(*x, dx);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let w = self.value(*p).cols();
                        let mut d = Matrix::zeros(g.rows(), w);
                        for r in 0..g.rows() {
                            d.row_mut(r).copy_from_slice(&g.row(r)[off..off + w]);
                        }
                        acc(*p, d);
                        off += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let c = g.cols();
                    let mut off = 0;
                    for p in parts {
                        let h = self.value(*p).rows();
                        acc(*p, Matrix::from_vec(h, c, g.data()[off * c..(off + h) * c].to_vec()));
                        off += h;
                    }
                }
                Op::SliceCols(a, start) => {
                    let am = self.value(*a);
                    let mut d = Matrix::zeros(am.rows(), am.cols());
                    for r in 0..am.rows() {
                        d.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    acc(*a, d);
                }
                Op::SliceRows(a, start) => {
                    let am = self.value(*a);
                    let c = am.cols();
                    let mut d = Matrix::zeros(am.rows(), c);
                    d.data_mut()[start * c..(start + g.rows()) * c].copy_from_slice(g.data());
                    acc(*a, d);
                }
                Op::Mse(pred, target) => {
                    let s = 2.0 * g.get(0, 0) / target.len().max(1) as f64;
                    acc(*pred, self.value(*pred).zip_map(target, |p, t| s * (p - t)));
                }
                Op::Sum(a) => {
                    let am = self.value(*a);
                    acc(*a, Matrix::filled(am.rows(), am.cols(), g.get(0, 0)));
                }
            }
        }
        out
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..m.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    out
}

fn broadcast_row(a: &Matrix, row: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    assert_eq!((row.rows(), row.cols()), (1, a.cols()), "row broadcast shape");
    let mut out = a.clone();
    let rv = row.row(0);
    for r in 0..a.rows() {
        for (v, b) in out.row_mut(r).iter_mut().zip(rv) {
            *v = f(*v, *b);
        }
    }
    out
}

fn col_sums(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, m.cols());
    for r in 0..m.rows() {
        for (o, v) in out.row_mut(0).iter_mut().zip(m.row(r)) {
            *o += v;
        }
    }
    out
}
