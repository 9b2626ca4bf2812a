//! Reverse-mode differentiation over rank-2 tensors.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters enter as
//! leaves borrowed from a [`ParamStore`]; [`Tape::backward`] returns the
//! gradient of a scalar loss with respect to every parameter it reaches.

use std::sync::Arc;

use crate::autodiff::matrix::{self, Groups, Matrix};
use crate::autodiff::params::{ParamGrads, ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// One candidate block for [`Tape::select_straight_through`]: rows
/// `start..start + len` of the candidate matrix, of which `chosen` (an offset
/// into the block) was picked by the hard argmax.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SelectSpan {
    pub start: usize,
    pub len: usize,
    pub chosen: usize,
}

#[derive(Debug)]
enum Op {
    Constant,
    Param,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    ConcatCols(Var, Var),
    SegmentSum(Var, Arc<Groups>),
    Relu(Var),
    Sigmoid(Var),
    Softplus(Var),
    Abs(Var),
    RowDot(Var, Var),
    Sum(Var),
    Mean(Var),
    BceWithLogits(Var, Arc<Vec<f64>>),
    Bce(Var, Arc<Vec<f64>>),
    Mse(Var, Arc<Vec<f64>>),
    SelectSt {
        cands: Var,
        scores: Var,
        spans: Arc<Vec<SelectSpan>>,
    },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

pub struct Tape<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

const PROB_FLOOR: f64 = 1e-12;

impl<'p> Tape<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Tape {
            store,
            nodes: Vec::new(),
            param_vars: vec![None; store.len()],
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
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

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Leaf for a stored parameter. Repeated calls return the same variable.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let v = self.push(self.store.get(id).clone(), Op::Param, true);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = matrix::matmul(self.value(a), self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// `a` plus a `1 × cols` row broadcast to every row.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let out = matrix::add_row(self.value(a), self.value(bias))?;
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(out, Op::AddRow(a, bias), rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::Shape {
                op,
                lhs: sa,
                rhs: sb,
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let mut out = self.value(a).clone();
        for (o, y) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o -= y;
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|v| v * c);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, c), rg)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = matrix::concat_cols(self.value(a), self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::ConcatCols(a, b), rg))
    }

    /// Row `g` of the result is the sum of the rows of `x` listed in group `g`.
    /// Doubles as a row gather when every group is a singleton.
    pub fn segment_sum(&mut self, x: Var, groups: Arc<Groups>) -> Result<Var> {
        let out = matrix::segment_sum(self.value(x), &groups)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::SegmentSum(x, groups), rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(matrix::relu);
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(matrix::sigmoid);
        let rg = self.rg(a);
        self.push(out, Op::Sigmoid(a), rg)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(matrix::softplus);
        let rg = self.rg(a);
        self.push(out, Op::Softplus(a), rg)
    }

    /// Elementwise `|x|`; the subgradient at 0 is taken as 0.
    pub fn abs(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::abs);
        let rg = self.rg(a);
        self.push(out, Op::Abs(a), rg)
    }

    /// Row-wise inner products, `rows × 1`.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("row_dot", a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let out = Matrix::column(
            (0..va.rows())
                .map(|r| matrix::dot(va.row(r), vb.row(r)))
                .collect(),
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::RowDot(a, b), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Matrix::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.data().iter().sum::<f64>() / v.data().len().max(1) as f64;
        let rg = self.rg(a);
        self.push(Matrix::scalar(s), Op::Mean(a), rg)
    }

    fn check_targets(&self, op: &'static str, a: Var, targets: &[f64]) -> Result<()> {
        let v = self.value(a);
        if v.cols() != 1 || v.rows() != targets.len() || targets.is_empty() {
            return Err(Error::Shape {
                op,
                lhs: v.shape(),
                rhs: (targets.len(), 1),
            });
        }
        Ok(())
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against 0/1 targets,
    /// computed in the numerically stable fused form.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Vec<f64>) -> Result<Var> {
        self.check_targets("bce_with_logits", logits, &targets)?;
        let v = self.value(logits);
        let loss = v
            .data()
            .iter()
            .zip(&targets)
            .map(|(&z, &y)| matrix::softplus(z) - y * z)
            .sum::<f64>()
            / targets.len() as f64;
        let rg = self.rg(logits);
        Ok(self.push(
            Matrix::scalar(loss),
            Op::BceWithLogits(logits, Arc::new(targets)),
            rg,
        ))
    }

    /// Mean binary cross-entropy of probabilities against 0/1 targets.
    pub fn bce(&mut self, probs: Var, targets: Vec<f64>) -> Result<Var> {
        self.check_targets("bce", probs, &targets)?;
        let v = self.value(probs);
        let loss = v
            .data()
            .iter()
            .zip(&targets)
            .map(|(&p, &y)| {
                let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / targets.len() as f64;
        let rg = self.rg(probs);
        Ok(self.push(Matrix::scalar(loss), Op::Bce(probs, Arc::new(targets)), rg))
    }

    pub fn mse(&mut self, pred: Var, targets: Vec<f64>) -> Result<Var> {
        self.check_targets("mse", pred, &targets)?;
        let v = self.value(pred);
        let loss = v
            .data()
            .iter()
            .zip(&targets)
            .map(|(&p, &y)| (p - y) * (p - y))
            .sum::<f64>()
            / targets.len() as f64;
        let rg = self.rg(pred);
        Ok(self.push(Matrix::scalar(loss), Op::Mse(pred, Arc::new(targets)), rg))
    }

    /// Straight-through argmax selection. The forward value of output row `i`
    /// is candidate row `spans[i].start + spans[i].chosen`; the backward pass
    /// sends the incoming gradient to that row and routes the score gradient
    /// through the softmax of the block's scores.
    pub fn select_straight_through(
        &mut self,
        cands: Var,
        scores: Var,
        spans: Vec<SelectSpan>,
    ) -> Result<Var> {
        let c = self.value(cands);
        let s = self.value(scores);
        if s.cols() != 1 || s.rows() != c.rows() {
            return Err(Error::Shape {
                op: "select_straight_through",
                lhs: c.shape(),
                rhs: s.shape(),
            });
        }
        let mut out = Matrix::zeros(spans.len(), c.cols());
        for (i, sp) in spans.iter().enumerate() {
            if sp.len == 0 || sp.chosen >= sp.len || sp.start + sp.len > c.rows() {
                return Err(Error::Shape {
                    op: "select_straight_through",
                    lhs: c.shape(),
                    rhs: (sp.start + sp.len, sp.chosen),
                });
            }
            out.row_mut(i).copy_from_slice(c.row(sp.start + sp.chosen));
        }
        let rg = self.rg(cands) || self.rg(scores);
        Ok(self.push(
            out,
            Op::SelectSt {
                cands,
                scores,
                spans: Arc::new(spans),
            },
            rg,
        ))
    }

    /// Gradient of the scalar `loss` with respect to every parameter leaf.
    pub fn backward(&self, loss: Var) -> Result<ParamGrads> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::Shape {
                op: "backward",
                lhs: lv.shape(),
                rhs: (1, 1),
            });
        }
        if !lv.item().is_finite() {
            return Err(Error::NonFinite(format!("loss = {}", lv.item())));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            match &node.op {
                Op::Constant => {}
                Op::Param => {
                    grads[idx] = Some(g);
                }
                Op::MatMul(a, b) => {
                    if self.rg(*a) {
                        let ga = matrix::matmul_nt(&g, self.value(*b));
                        self.accum(&mut grads, *a, ga);
                    }
                    if self.rg(*b) {
                        let gb = matrix::matmul_tn(self.value(*a), &g);
                        self.accum(&mut grads, *b, gb);
                    }
                }
                Op::AddRow(a, bias) => {
                    if self.rg(*bias) {
                        let mut gb = Matrix::zeros(1, g.cols());
                        for r in 0..g.rows() {
                            for (o, v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                                *o += v;
                            }
                        }
                        self.accum(&mut grads, *bias, gb);
                    }
                    if self.rg(*a) {
                        self.accum(&mut grads, *a, g);
                    }
                }
                Op::Add(a, b) => {
                    if self.rg(*b) {
                        self.accum(&mut grads, *b, g.clone());
                    }
                    if self.rg(*a) {
                        self.accum(&mut grads, *a, g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.rg(*b) {
                        self.accum(&mut grads, *b, g.map(|v| -v));
                    }
                    if self.rg(*a) {
                        self.accum(&mut grads, *a, g);
                    }
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    self.accum(&mut grads, *a, g.map(|v| v * c));
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).cols();
                    let cb = self.value(*b).cols();
                    if self.rg(*a) {
                        let mut ga = Matrix::zeros(g.rows(), ca);
                        for r in 0..g.rows() {
                            ga.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                        }
                        self.accum(&mut grads, *a, ga);
                    }
                    if self.rg(*b) {
                        let mut gb = Matrix::zeros(g.rows(), cb);
                        for r in 0..g.rows() {
                            gb.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                        }
                        self.accum(&mut grads, *b, gb);
                    }
                }
                Op::SegmentSum(x, groups) => {
                    let xv = self.value(*x);
                    let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                    for (gi, members) in groups.iter().enumerate() {
                        let src = g.row(gi);
                        for &m in members {
                            for (o, v) in gx.row_mut(m).iter_mut().zip(src) {
                                *o += v;
                            }
                        }
                    }
                    self.accum(&mut grads, *x, gx);
                }
                Op::Relu(a) => {
                    let av = self.value(*a);
                    let mut ga = g;
                    for (o, &x) in ga.data_mut().iter_mut().zip(av.data()) {
                        if x <= 0.0 {
                            *o = 0.0;
                        }
                    }
                    self.accum(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let mut ga = g;
                    for (o, &y) in ga.data_mut().iter_mut().zip(node.value.data()) {
                        *o *= y * (1.0 - y);
                    }
                    self.accum(&mut grads, *a, ga);
                }
                Op::Softplus(a) => {
                    let av = self.value(*a);
                    let mut ga = g;
                    for (o, &x) in ga.data_mut().iter_mut().zip(av.data()) {
                        *o *= matrix::sigmoid(x);
                    }
                    self.accum(&mut grads, *a, ga);
                }
                Op::Abs(a) => {
                    let av = self.value(*a);
                    let mut ga = g;
                    for (o, &x) in ga.data_mut().iter_mut().zip(av.data()) {
                        *o *= if x > 0.0 {
                            1.0
                        } else if x < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                    }
                    self.accum(&mut grads, *a, ga);
                }
                Op::RowDot(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    if self.rg(*a) {
                        let mut ga = vb.clone();
                        for r in 0..ga.rows() {
                            let s = g.get(r, 0);
                            ga.row_mut(r).iter_mut().for_each(|v| *v *= s);
                        }
                        self.accum(&mut grads, *a, ga);
                    }
                    if self.rg(*b) {
                        let mut gb = va.clone();
                        for r in 0..gb.rows() {
                            let s = g.get(r, 0);
                            gb.row_mut(r).iter_mut().for_each(|v| *v *= s);
                        }
                        self.accum(&mut grads, *b, gb);
                    }
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    self.accum(&mut grads, *a, Matrix::filled(r, c, g.item()));
                }
                Op::Mean(a) => {
                    let (r, c) = self.value(*a).shape();
                    let n = (r * c).max(1) as f64;
                    self.accum(&mut grads, *a, Matrix::filled(r, c, g.item() / n));
                }
                Op::BceWithLogits(a, targets) => {
                    let av = self.value(*a);
                    let n = targets.len() as f64;
                    let s = g.item();
                    let ga = Matrix::column(
                        av.data()
                            .iter()
                            .zip(targets.iter())
                            .map(|(&z, &y)| s * (matrix::sigmoid(z) - y) / n)
                            .collect(),
                    );
                    self.accum(&mut grads, *a, ga);
                }
                Op::Bce(a, targets) => {
                    let av = self.value(*a);
                    let n = targets.len() as f64;
                    let s = g.item();
                    let ga = Matrix::column(
                        av.data()
                            .iter()
                            .zip(targets.iter())
                            .map(|(&p, &y)| {
                                let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
                                s * (-y / p + (1.0 - y) / (1.0 - p)) / n
                            })
                            .collect(),
                    );
                    self.accum(&mut grads, *a, ga);
                }
                Op::Mse(a, targets) => {
                    let av = self.value(*a);
                    let n = targets.len() as f64;
                    let s = g.item();
                    let ga = Matrix::column(
                        av.data()
                            .iter()
                            .zip(targets.iter())
                            .map(|(&p, &y)| s * 2.0 * (p - y) / n)
                            .collect(),
                    );
                    self.accum(&mut grads, *a, ga);
                }
                Op::SelectSt {
                    cands,
                    scores,
                    spans,
                } => {
                    let cv = self.value(*cands);
                    let sv = self.value(*scores);
                    if self.rg(*cands) {
                        let mut gc = Matrix::zeros(cv.rows(), cv.cols());
                        for (i, sp) in spans.iter().enumerate() {
                            gc.row_mut(sp.start + sp.chosen)
                                .iter_mut()
                                .zip(g.row(i))
                                .for_each(|(o, v)| *o += v);
                        }
                        self.accum(&mut grads, *cands, gc);
                    }
                    if self.rg(*scores) {
                        let mut gs = Matrix::zeros(sv.rows(), 1);
                        for (i, sp) in spans.iter().enumerate() {
                            let block = sp.start..sp.start + sp.len;
                            let max = block
                                .clone()
                                .map(|r| sv.get(r, 0))
                                .fold(f64::NEG_INFINITY, f64::max);
                            let w: Vec<f64> =
                                block.clone().map(|r| (sv.get(r, 0) - max).exp()).collect();
                            let z: f64 = w.iter().sum();
                            let gi = g.row(i);
                            let u: Vec<f64> =
                                block.clone().map(|r| matrix::dot(gi, cv.row(r))).collect();
                            let mean_u: f64 = w.iter().zip(&u).map(|(wj, uj)| wj / z * uj).sum();
                            for (j, r) in block.enumerate() {
                                gs.set(r, 0, gs.get(r, 0) + w[j] / z * (u[j] - mean_u));
                            }
                        }
                        self.accum(&mut grads, *scores, gs);
                    }
                }
            }
        }

        let mut out = vec![None; self.store.len()];
        for (pid, var) in self.param_vars.iter().enumerate() {
            if let Some(v) = var {
                out[pid] = grads[v.0].take();
            }
        }
        for g in out.iter().flatten() {
            if !g.is_finite() {
                return Err(Error::NonFinite("gradient".into()));
            }
        }
        Ok(ParamGrads::new(out))
    }

    fn accum(&self, grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_at_zero() {
        let mut store = ParamStore::new();
        let x = store.add("x", Matrix::scalar(0.0));
        let mut t = Tape::new(&store);
        let xv = t.param(x);
        let y = t.sigmoid(xv);
        assert_eq!(t.value(y).item(), 0.5);
        let g = t.backward(y).unwrap();
        assert!((g.get(x).unwrap().item() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn bce_half_is_ln2() {
        let store = ParamStore::new();
        let mut t = Tape::new(&store);
        let p = t.constant(Matrix::scalar(0.5));
        let l = t.bce(p, vec![1.0]).unwrap();
        assert!((t.value(l).item() - 2f64.ln()).abs() < 1e-15);
        let z = t.constant(Matrix::scalar(0.0));
        let l2 = t.bce_with_logits(z, vec![1.0]).unwrap();
        assert!((t.value(l2).item() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn non_finite_loss_is_trapped() {
        let store = ParamStore::new();
        let mut t = Tape::new(&store);
        let p = t.constant(Matrix::scalar(f64::NAN));
        let s = t.sum(p);
        assert!(matches!(t.backward(s), Err(Error::NonFinite(_))));
    }

    #[test]
    fn shape_errors() {
        let store = ParamStore::new();
        let mut t = Tape::new(&store);
        let a = t.constant(Matrix::zeros(2, 3));
        let b = t.constant(Matrix::zeros(2, 3));
        assert!(t.matmul(a, b).is_err());
        assert!(t.add(a, b).is_ok());
        let c = t.constant(Matrix::zeros(3, 2));
        assert!(t.sub(a, c).is_err());
        assert!(t.mse(a, vec![0.0; 2]).is_err());
    }

    #[test]
    fn shared_param_accumulates() {
        let mut store = ParamStore::new();
        let x = store.add("x", Matrix::scalar(3.0));
        let mut t = Tape::new(&store);
        let a = t.param(x);
        let b = t.param(x);
        assert_eq!(a, b);
        let y = t.row_dot(a, b).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn straight_through_forward_is_hard() {
        let store = ParamStore::new();
        let mut t = Tape::new(&store);
        let c = t.constant(Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap());
        let s = t.constant(Matrix::column(vec![0.1, 0.9, 0.3]));
        let out = t
            .select_straight_through(
                c,
                s,
                vec![SelectSpan {
                    start: 0,
                    len: 3,
                    chosen: 1,
                }],
            )
            .unwrap();
        assert_eq!(t.value(out).data(), &[2.0]);
    }
}
