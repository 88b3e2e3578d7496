//! Reverse-mode automatic differentiation over whole-tensor operations.
//!
//! Every operation appends a node holding its output value and what the
//! backward pass needs. [`Tape::backward`] walks the nodes once, newest
//! first, and accumulates gradients additively into each input.

use std::cell::{Ref, RefCell};

use super::conv::{conv_backward, conv_forward, dot, ConvGeom};
use super::gru::{gru_backward, gru_forward, GruGeom};
use super::ops::{self, affine_dims, affine_raw, transpose_block};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<S> {
    Leaf,
    Conv { x: Var, w: Var, b: Var, geom: ConvGeom, batch: usize },
    Relu(Var),
    Gru { x: Var, w_ih: Var, w_hh: Var, b: Var, h0: Var, geom: GruGeom, gates: Vec<S> },
    Affine { x: Var, w: Var, b: Option<Var>, d_in: usize, d_out: usize },
    Concat { a: Var, b: Var },
    RepeatRows { x: Var, factor: usize },
    Transpose(Var),
    ShiftRows(Var),
    Reshape(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, S),
    Sum(Var),
    LogSumExp(Var),
    Scores { z: Var, pred: Var, pred_rows: Vec<usize>, cand: Vec<usize>, n: usize },
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<S> },
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    requires_grad: bool,
}

/// Records operations for a single forward pass.
pub struct Tape<S> {
    nodes: RefCell<Vec<Node<S>>>,
}

impl<S: Real> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients<S> {
    grads: Vec<Option<Tensor<S>>>,
    shapes: Vec<Vec<usize>>,
}

impl<S: Real> Gradients<S> {
    pub fn get(&self, v: Var) -> Option<&Tensor<S>> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, zero when `v` does not influence the loss.
    pub fn wrt(&self, v: Var) -> Tensor<S> {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(self.shapes[v.0].clone()))
    }
}

impl<S: Real> Tape<S> {
    pub fn new() -> Self {
        Self { nodes: RefCell::new(Vec::new()) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor<S>, op: Op<S>, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op, requires_grad });
        Var(nodes.len() - 1)
    }

    fn push_checked(&self, value: Tensor<S>, op: Op<S>, inputs: &[Var], what: &str) -> Result<Var> {
        value.ensure_finite(what)?;
        let rg = inputs.iter().any(|&v| self.requires_grad(v));
        Ok(self.push(value, op, rg))
    }

    fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    /// A trainable leaf: gradients flow into it.
    pub fn param(&self, value: Tensor<S>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives gradients.
    pub fn constant(&self, value: Tensor<S>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> Ref<'_, Tensor<S>> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    /// Copies `v` into a new leaf, blocking gradient flow.
    pub fn detach(&self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    pub fn conv1d(&self, x: Var, w: Var, b: Var, stride: usize) -> Result<Var> {
        let (out, geom, batch) = {
            let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
            let (batch, geom) = ConvGeom::new(xv.shape(), wv.shape(), bv.shape(), stride)?;
            let out = conv_forward(&geom, batch, xv.data(), wv.data(), bv.data());
            let shape = if xv.ndim() == 2 {
                vec![geom.c_out, geom.len_out]
            } else {
                vec![batch, geom.c_out, geom.len_out]
            };
            (Tensor::new(shape, out)?, geom, batch)
        };
        self.push_checked(out, Op::Conv { x, w, b, geom, batch }, &[x, w, b], "conv1d")
    }

    pub fn relu(&self, x: Var) -> Result<Var> {
        let out = ops::relu(&self.value(x));
        self.push_checked(out, Op::Relu(x), &[x], "relu")
    }

    pub fn gru(&self, x: Var, w_ih: Var, w_hh: Var, b: Var, h0: Var) -> Result<Var> {
        let (out, geom, gates) = {
            let xv = self.value(x);
            let (wi, wh, bv, hv) = (self.value(w_ih), self.value(w_hh), self.value(b), self.value(h0));
            let geom = GruGeom::new(xv.shape(), wi.shape(), wh.shape(), bv.shape(), hv.shape())?;
            let (states, gates) = gru_forward(&geom, xv.data(), wi.data(), wh.data(), bv.data(), hv.data());
            let mut shape = xv.shape().to_vec();
            *shape.last_mut().unwrap() = geom.d_h;
            (Tensor::new(shape, states)?, geom, gates)
        };
        self.push_checked(out, Op::Gru { x, w_ih, w_hh, b, h0, geom, gates }, &[x, w_ih, w_hh, b, h0], "gru")
    }

    pub fn affine(&self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (out, d_in, d_out) = {
            let (xv, wv) = (self.value(x), self.value(w));
            let bv = b.map(|b| self.value(b));
            let (d_out, d_in) = affine_dims(xv.shape(), wv.shape(), bv.as_ref().map(|b| b.shape()))?;
            let data = affine_raw(xv.data(), wv.data(), bv.as_ref().map(|b| b.data()), d_in, d_out);
            let mut shape = xv.shape().to_vec();
            *shape.last_mut().unwrap() = d_out;
            (Tensor::new(shape, data)?, d_in, d_out)
        };
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push_checked(out, Op::Affine { x, w, b, d_in, d_out }, &inputs, "affine")
    }

    pub fn concat_last(&self, a: Var, b: Var) -> Result<Var> {
        let out = ops::concat_last(&self.value(a), &self.value(b))?;
        self.push_checked(out, Op::Concat { a, b }, &[a, b], "concat")
    }

    pub fn repeat_rows(&self, x: Var, factor: usize) -> Result<Var> {
        let out = ops::repeat_rows(&self.value(x), factor)?;
        self.push_checked(out, Op::RepeatRows { x, factor }, &[x], "repeat_rows")
    }

    pub fn transpose(&self, x: Var) -> Result<Var> {
        let out = ops::transpose(&self.value(x))?;
        self.push_checked(out, Op::Transpose(x), &[x], "transpose")
    }

    /// Delays a `[.., T, D]` sequence by one row: `out[t] = x[t - 1]`,
    /// `out[0] = 0`.
    pub fn shift_rows(&self, x: Var) -> Result<Var> {
        let out = {
            let xv = self.value(x);
            if xv.ndim() < 2 {
                return Err(Error::shape("shift_rows needs a sequence"));
            }
            let n = xv.ndim();
            let (t, d) = (xv.shape()[n - 2], xv.shape()[n - 1]);
            let mut data = vec![S::zero(); xv.numel()];
            for (src, dst) in xv.data().chunks_exact(t * d).zip(data.chunks_exact_mut(t * d)) {
                dst[d..].copy_from_slice(&src[..(t - 1) * d]);
            }
            Tensor::new(xv.shape().to_vec(), data)?
        };
        self.push_checked(out, Op::ShiftRows(x), &[x], "shift_rows")
    }

    pub fn reshape(&self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        self.push_checked(out, Op::Reshape(x), &[x], "reshape")
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, |x, y| x + y)?;
        self.push_checked(out, Op::Add(a, b), &[a, b], "add")
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, |x, y| x * y)?;
        self.push_checked(out, Op::Mul(a, b), &[a, b], "mul")
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(S, S) -> S) -> Result<Tensor<S>> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape(format!("elementwise {:?} vs {:?}", av.shape(), bv.shape())));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(av.shape().to_vec(), data)
    }

    pub fn scale(&self, x: Var, c: S) -> Result<Var> {
        let out = {
            let xv = self.value(x);
            Tensor::new(xv.shape().to_vec(), xv.data().iter().map(|&v| v * c).collect())?
        };
        self.push_checked(out, Op::Scale(x, c), &[x], "scale")
    }

    pub fn sum(&self, x: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(x).sum());
        self.push_checked(out, Op::Sum(x), &[x], "sum")
    }

    pub fn mean(&self, x: Var) -> Result<Var> {
        let n = self.value(x).numel();
        let s = self.sum(x)?;
        self.scale(s, S::one() / S::of(n as f64))
    }

    /// Row-wise log-sum-exp over the last dimension.
    pub fn log_sum_exp(&self, x: Var) -> Result<Var> {
        let out = ops::log_sum_exp_rows(&self.value(x));
        self.push_checked(out, Op::LogSumExp(x), &[x], "log_sum_exp")
    }

    /// Bilinear candidate scores. Row `r` of the `[R, n]` result holds
    /// `z[cand[r*n + j]] . pred[pred_rows[r]]` for `j < n`.
    ///
    /// `z` and `pred` are viewed as matrices with the same last dimension.
    pub fn candidate_scores(&self, z: Var, pred: Var, pred_rows: Vec<usize>, cand: Vec<usize>, n: usize) -> Result<Var> {
        let out = {
            let (zv, pv) = (self.value(z), self.value(pred));
            let d = zv.last_dim();
            if pv.last_dim() != d {
                return Err(Error::shape(format!("score dims {:?} vs {:?}", zv.shape(), pv.shape())));
            }
            if n == 0 || cand.len() != pred_rows.len() * n || pred_rows.is_empty() {
                return Err(Error::shape("candidate table does not match anchor count"));
            }
            if pred_rows.iter().any(|&r| r >= pv.outer()) || cand.iter().any(|&c| c >= zv.outer()) {
                return Err(Error::shape("candidate index out of range"));
            }
            let mut data = Vec::with_capacity(cand.len());
            for (r, &pr) in pred_rows.iter().enumerate() {
                let p = pv.row(pr);
                for &c in &cand[r * n..(r + 1) * n] {
                    data.push(dot(zv.row(c), p));
                }
            }
            Tensor::new([pred_rows.len(), n], data)?
        };
        self.push_checked(out, Op::Scores { z, pred, pred_rows, cand, n }, &[z, pred], "candidate_scores")
    }

    /// Mean categorical cross entropy of `[R, N]` logits against `targets`.
    pub fn cross_entropy(&self, logits: Var, targets: Vec<usize>) -> Result<Var> {
        let (out, probs) = {
            let lv = self.value(logits);
            let n = lv.last_dim();
            let rows = lv.outer();
            if targets.len() != rows || targets.iter().any(|&t| t >= n) {
                return Err(Error::shape("cross_entropy targets do not match logits"));
            }
            let mut probs = Vec::with_capacity(lv.numel());
            let mut total = 0.0f64;
            for (r, &t) in targets.iter().enumerate() {
                let row = lv.row(r);
                let lse = ops::log_sum_exp(row);
                total += (lse - row[t]).as_f64();
                probs.extend(row.iter().map(|&v| (v - lse).exp()));
            }
            (Tensor::scalar(S::of(total / rows as f64)), probs)
        };
        self.push_checked(out, Op::CrossEntropy { logits, targets, probs }, &[logits], "cross_entropy")
    }

    /// Reverse accumulation from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        let nodes = self.nodes.borrow();
        if nodes[loss.0].value.numel() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got {:?}",
                nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<S>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(nodes[loss.0].value.shape().to_vec(), S::one()));
        for i in (0..=loss.0).rev() {
            if !nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            propagate(&nodes, &nodes[i], &g, &mut grads)?;
            grads[i] = Some(g);
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if matches!(nodes[i].op, Op::Leaf) && !g.is_finite() {
                    return Err(Error::NonFinite(format!("gradient of leaf {i}")));
                }
            }
        }
        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }
}

fn accumulate<S: Real>(nodes: &[Node<S>], grads: &mut [Option<Tensor<S>>], v: Var, data: Vec<S>) -> Result<()> {
    if !nodes[v.0].requires_grad {
        return Ok(());
    }
    match &mut grads[v.0] {
        Some(existing) => {
            existing.data_mut().iter_mut().zip(&data).for_each(|(a, &b)| *a += b);
        }
        slot @ None => {
            *slot = Some(Tensor::new(nodes[v.0].value.shape().to_vec(), data)?);
        }
    }
    Ok(())
}

fn propagate<S: Real>(nodes: &[Node<S>], node: &Node<S>, g: &Tensor<S>, grads: &mut [Option<Tensor<S>>]) -> Result<()> {
    let val = |v: Var| &nodes[v.0].value;
    let rg = |v: Var| nodes[v.0].requires_grad;
    let gd = g.data();
    match &node.op {
        Op::Leaf => {}
        Op::Conv { x, w, b, geom, batch } => {
            let cg = conv_backward(geom, *batch, val(*x).data(), val(*w).data(), gd, rg(*x));
            if let Some(gx) = cg.input {
                accumulate(nodes, grads, *x, gx)?;
            }
            accumulate(nodes, grads, *w, cg.weight)?;
            accumulate(nodes, grads, *b, cg.bias)?;
        }
        Op::Relu(x) => {
            let d = val(*x)
                .data()
                .iter()
                .zip(gd)
                .map(|(&v, &gv)| if v > S::zero() { gv } else { S::zero() })
                .collect();
            accumulate(nodes, grads, *x, d)?;
        }
        Op::Gru { x, w_ih, w_hh, b, h0, geom, gates } => {
            let gg = gru_backward(
                geom,
                val(*x).data(),
                val(*w_ih).data(),
                val(*w_hh).data(),
                val(*h0).data(),
                node.value.data(),
                gates,
                gd,
                rg(*x),
            );
            if let Some(gx) = gg.input {
                accumulate(nodes, grads, *x, gx)?;
            }
            accumulate(nodes, grads, *w_ih, gg.w_ih)?;
            accumulate(nodes, grads, *w_hh, gg.w_hh)?;
            accumulate(nodes, grads, *b, gg.bias)?;
            accumulate(nodes, grads, *h0, gg.h0)?;
        }
        Op::Affine { x, w, b, d_in, d_out } => {
            let (xd, wd) = (val(*x).data(), val(*w).data());
            if rg(*x) {
                let mut gx = vec![S::zero(); xd.len()];
                for (gr, dx) in gd.chunks_exact(*d_out).zip(gx.chunks_exact_mut(*d_in)) {
                    for (o, &gv) in gr.iter().enumerate() {
                        if gv != S::zero() {
                            super::conv::axpy(gv, &wd[o * d_in..(o + 1) * d_in], dx);
                        }
                    }
                }
                accumulate(nodes, grads, *x, gx)?;
            }
            let mut gw = vec![S::zero(); wd.len()];
            for (gr, xr) in gd.chunks_exact(*d_out).zip(xd.chunks_exact(*d_in)) {
                for (o, &gv) in gr.iter().enumerate() {
                    if gv != S::zero() {
                        super::conv::axpy(gv, xr, &mut gw[o * d_in..(o + 1) * d_in]);
                    }
                }
            }
            accumulate(nodes, grads, *w, gw)?;
            if let Some(b) = b {
                let mut gb = vec![S::zero(); *d_out];
                for gr in gd.chunks_exact(*d_out) {
                    gb.iter_mut().zip(gr).for_each(|(a, &v)| *a += v);
                }
                accumulate(nodes, grads, *b, gb)?;
            }
        }
        Op::Concat { a, b } => {
            let (da, db) = (val(*a).last_dim(), val(*b).last_dim());
            let mut ga = Vec::with_capacity(val(*a).numel());
            let mut gb = Vec::with_capacity(val(*b).numel());
            for r in gd.chunks_exact(da + db) {
                ga.extend_from_slice(&r[..da]);
                gb.extend_from_slice(&r[da..]);
            }
            accumulate(nodes, grads, *a, ga)?;
            accumulate(nodes, grads, *b, gb)?;
        }
        Op::RepeatRows { x, factor } => {
            let d = val(*x).last_dim();
            let mut gx = vec![S::zero(); val(*x).numel()];
            for (i, r) in gd.chunks_exact(d).enumerate() {
                let dst = &mut gx[(i / factor) * d..(i / factor + 1) * d];
                dst.iter_mut().zip(r).for_each(|(a, &v)| *a += v);
            }
            accumulate(nodes, grads, *x, gx)?;
        }
        Op::Transpose(x) => {
            // g has the transposed shape; transposing back restores x's layout
            let n = g.ndim();
            let (r, c) = (g.shape()[n - 2], g.shape()[n - 1]);
            let mut gx = vec![S::zero(); gd.len()];
            for (src, dst) in gd.chunks_exact(r * c).zip(gx.chunks_exact_mut(r * c)) {
                transpose_block(src, dst, r, c);
            }
            accumulate(nodes, grads, *x, gx)?;
        }
        Op::ShiftRows(x) => {
            let n = g.ndim();
            let (t, d) = (g.shape()[n - 2], g.shape()[n - 1]);
            let mut gx = vec![S::zero(); gd.len()];
            for (src, dst) in gd.chunks_exact(t * d).zip(gx.chunks_exact_mut(t * d)) {
                dst[..(t - 1) * d].copy_from_slice(&src[d..]);
            }
            accumulate(nodes, grads, *x, gx)?;
        }
        Op::Reshape(x) => accumulate(nodes, grads, *x, gd.to_vec())?,
        Op::Add(a, b) => {
            accumulate(nodes, grads, *a, gd.to_vec())?;
            accumulate(nodes, grads, *b, gd.to_vec())?;
        }
        Op::Mul(a, b) => {
            let ga = gd.iter().zip(val(*b).data()).map(|(&g, &v)| g * v).collect();
            let gb = gd.iter().zip(val(*a).data()).map(|(&g, &v)| g * v).collect();
            accumulate(nodes, grads, *a, ga)?;
            accumulate(nodes, grads, *b, gb)?;
        }
        Op::Scale(x, c) => accumulate(nodes, grads, *x, gd.iter().map(|&v| v * *c).collect())?,
        Op::Sum(x) => accumulate(nodes, grads, *x, vec![gd[0]; val(*x).numel()])?,
        Op::LogSumExp(x) => {
            let xv = val(*x);
            let d = xv.last_dim();
            let mut gx = Vec::with_capacity(xv.numel());
            for ((row, &lse), &gv) in xv.data().chunks_exact(d).zip(node.value.data()).zip(gd) {
                gx.extend(row.iter().map(|&v| gv * (v - lse).exp()));
            }
            accumulate(nodes, grads, *x, gx)?;
        }
        Op::Scores { z, pred, pred_rows, cand, n } => {
            let (zv, pv) = (val(*z), val(*pred));
            let d = zv.last_dim();
            let mut gz = rg(*z).then(|| vec![S::zero(); zv.numel()]);
            let mut gp = rg(*pred).then(|| vec![S::zero(); pv.numel()]);
            for (r, &pr) in pred_rows.iter().enumerate() {
                let p = pv.row(pr);
                for (j, &c) in cand[r * n..(r + 1) * n].iter().enumerate() {
                    let gv = gd[r * n + j];
                    if let Some(gz) = gz.as_mut() {
                        super::conv::axpy(gv, p, &mut gz[c * d..(c + 1) * d]);
                    }
                    if let Some(gp) = gp.as_mut() {
                        super::conv::axpy(gv, zv.row(c), &mut gp[pr * d..(pr + 1) * d]);
                    }
                }
            }
            if let Some(gz) = gz {
                accumulate(nodes, grads, *z, gz)?;
            }
            if let Some(gp) = gp {
                accumulate(nodes, grads, *pred, gp)?;
            }
        }
        Op::CrossEntropy { logits, targets, probs } => {
            let n = val(*logits).last_dim();
            let scale = gd[0] / S::of(targets.len() as f64);
            let mut gl: Vec<S> = probs.iter().map(|&p| p * scale).collect();
            for (r, &t) in targets.iter().enumerate() {
                gl[r * n + t] -= scale;
            }
            accumulate(nodes, grads, *logits, gl)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_gradient() {
        let tape = Tape::<f64>::new();
        let x = tape.param(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum(sq).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(x).data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn unused_parameter_gets_exact_zero() {
        let tape = Tape::<f64>::new();
        let x = tape.param(Tensor::vector(vec![1.0, 2.0]));
        let unused = tape.param(Tensor::vector(vec![5.0]));
        let loss = tape.sum(x).unwrap();
        let g = tape.backward(loss).unwrap();
        assert!(g.get(unused).is_none());
        assert_eq!(g.wrt(unused).data(), &[0.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let tape = Tape::<f64>::new();
        let x = tape.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::Shape(_))));
    }

    #[test]
    fn shared_input_accumulates() {
        // y = x + x + x  => dy/dx = 3
        let tape = Tape::<f64>::new();
        let x = tape.param(Tensor::vector(vec![0.5]));
        let a = tape.add(x, x).unwrap();
        let b = tape.add(a, x).unwrap();
        let g = tape.backward(b).unwrap();
        assert_eq!(g.wrt(x).data(), &[3.0]);
    }

    #[test]
    fn uniform_logits_give_log_n() {
        let tape = Tape::<f64>::new();
        let l = tape.param(Tensor::zeros([3, 8]));
        let ce = tape.cross_entropy(l, vec![0, 0, 0]).unwrap();
        assert!((tape.value(ce).item() - 8f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn detach_blocks_gradient() {
        let tape = Tape::<f64>::new();
        let x = tape.param(Tensor::vector(vec![2.0]));
        let d = tape.detach(x);
        let y = tape.mul(x, d).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(x).data(), &[2.0]);
    }
}
