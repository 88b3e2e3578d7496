//! Single-layer GRU over a whole sequence, with a fused backward pass.
//!
//! Gate convention:
//!
//! ```text
//! z_t  = sigmoid(W_z x_t + U_z h_{t-1} + b_z)
//! r_t  = sigmoid(W_r x_t + U_r h_{t-1} + b_r)
//! h~_t = tanh(W_h x_t + U_h (r_t * h_{t-1}) + b_h)
//! h_t  = (1 - z_t) * h_{t-1} + z_t * h~_t
//! ```
//!
//! Weights are stored stacked in `[z; r; h]` order: `w_ih` is `[3H, D_in]`,
//! `w_hh` is `[3H, H]` and `bias` is `[3H]`.

use rayon::prelude::*;

use super::conv::{axpy, dot};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GruParams<S> {
    pub w_ih: Tensor<S>,
    pub w_hh: Tensor<S>,
    pub bias: Tensor<S>,
}

impl<S: Real> GruParams<S> {
    pub fn zeros(d_in: usize, d_h: usize) -> Self {
        Self {
            w_ih: Tensor::zeros([3 * d_h, d_in]),
            w_hh: Tensor::zeros([3 * d_h, d_h]),
            bias: Tensor::zeros([3 * d_h]),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.w_ih.shape()[1], self.w_hh.shape()[1])
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct GruGeom {
    pub batch: usize,
    pub steps: usize,
    pub d_in: usize,
    pub d_h: usize,
}

impl GruGeom {
    pub fn new(x: &[usize], w_ih: &[usize], w_hh: &[usize], bias: &[usize], h0: &[usize]) -> Result<Self> {
        let (batch, steps, d_in) = match *x {
            [t, d] => (1, t, d),
            [b, t, d] => (b, t, d),
            _ => return Err(Error::shape(format!("gru input must be [T, D] or [B, T, D], got {x:?}"))),
        };
        let [h3, wi] = *w_ih else {
            return Err(Error::shape(format!("gru w_ih must be 2-D, got {w_ih:?}")));
        };
        if h3 % 3 != 0 || wi != d_in {
            return Err(Error::shape(format!("gru w_ih {w_ih:?} incompatible with input dim {d_in}")));
        }
        let d_h = h3 / 3;
        if w_hh != [3 * d_h, d_h] {
            return Err(Error::shape(format!("gru w_hh must be [{}, {d_h}], got {w_hh:?}", 3 * d_h)));
        }
        if bias != [3 * d_h] {
            return Err(Error::shape(format!("gru bias must be [{}], got {bias:?}", 3 * d_h)));
        }
        if h0 != [d_h] {
            return Err(Error::shape(format!("gru h0 must be [{d_h}], got {h0:?}")));
        }
        Ok(Self { batch, steps, d_in, d_h })
    }
}

#[inline]
fn sigmoid<S: Real>(v: S) -> S {
    S::one() / (S::one() + (-v).exp())
}

/// Runs the recurrence for every item. Returns `(states [B*T*H], gates
/// [B*T*3H])`; gates hold `z`, `r` and the candidate state per step.
pub(crate) fn gru_forward<S: Real>(
    g: &GruGeom,
    x: &[S],
    w_ih: &[S],
    w_hh: &[S],
    bias: &[S],
    h0: &[S],
) -> (Vec<S>, Vec<S>) {
    let h = g.d_h;
    let mut states = vec![S::zero(); g.batch * g.steps * h];
    let mut gates = vec![S::zero(); g.batch * g.steps * 3 * h];
    states
        .par_chunks_mut(g.steps * h)
        .zip(gates.par_chunks_mut(g.steps * 3 * h))
        .zip(x.par_chunks(g.steps * g.d_in))
        .for_each(|((st, ga), xi)| {
            let mut prev = h0.to_vec();
            let mut ax = vec![S::zero(); 3 * h];
            let mut rh = vec![S::zero(); h];
            for t in 0..g.steps {
                let xt = &xi[t * g.d_in..(t + 1) * g.d_in];
                for (o, a) in ax.iter_mut().enumerate() {
                    *a = bias[o] + dot(&w_ih[o * g.d_in..(o + 1) * g.d_in], xt);
                }
                let gt = &mut ga[t * 3 * h..(t + 1) * 3 * h];
                for u in 0..h {
                    let zr = ax[u] + dot(&w_hh[u * h..(u + 1) * h], &prev);
                    let rr = ax[h + u] + dot(&w_hh[(h + u) * h..(h + u + 1) * h], &prev);
                    gt[u] = sigmoid(zr);
                    gt[h + u] = sigmoid(rr);
                }
                for u in 0..h {
                    rh[u] = gt[h + u] * prev[u];
                }
                for u in 0..h {
                    let c = ax[2 * h + u] + dot(&w_hh[(2 * h + u) * h..(2 * h + u + 1) * h], &rh);
                    gt[2 * h + u] = c.tanh();
                }
                let out = &mut st[t * h..(t + 1) * h];
                for u in 0..h {
                    let z = gt[u];
                    out[u] = (S::one() - z) * prev[u] + z * gt[2 * h + u];
                }
                prev.copy_from_slice(out);
            }
        });
    (states, gates)
}

pub(crate) struct GruGrads<S> {
    pub input: Option<Vec<S>>,
    pub w_ih: Vec<S>,
    pub w_hh: Vec<S>,
    pub bias: Vec<S>,
    pub h0: Vec<S>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn gru_backward<S: Real>(
    g: &GruGeom,
    x: &[S],
    w_ih: &[S],
    w_hh: &[S],
    h0: &[S],
    states: &[S],
    gates: &[S],
    gout: &[S],
    need_input: bool,
) -> GruGrads<S> {
    let h = g.d_h;
    let din = g.d_in;
    let partials: Vec<GruGrads<S>> = (0..g.batch)
        .into_par_iter()
        .map(|bi| {
            let xi = &x[bi * g.steps * din..(bi + 1) * g.steps * din];
            let st = &states[bi * g.steps * h..(bi + 1) * g.steps * h];
            let ga = &gates[bi * g.steps * 3 * h..(bi + 1) * g.steps * 3 * h];
            let go = &gout[bi * g.steps * h..(bi + 1) * g.steps * h];
            let mut gw_ih = vec![S::zero(); 3 * h * din];
            let mut gw_hh = vec![S::zero(); 3 * h * h];
            let mut gb = vec![S::zero(); 3 * h];
            let mut gx = need_input.then(|| vec![S::zero(); g.steps * din]);
            let mut dh = vec![S::zero(); h];
            let mut dpre = vec![S::zero(); 3 * h];
            let mut rh = vec![S::zero(); h];
            let mut d_rh = vec![S::zero(); h];
            let mut dprev = vec![S::zero(); h];
            for t in (0..g.steps).rev() {
                let prev = if t == 0 { h0 } else { &st[(t - 1) * h..t * h] };
                let gt = &ga[t * 3 * h..(t + 1) * 3 * h];
                for u in 0..h {
                    dh[u] += go[t * h + u];
                }
                for u in 0..h {
                    let z = gt[u];
                    let c = gt[2 * h + u];
                    let dz = dh[u] * (c - prev[u]);
                    let dc = dh[u] * z;
                    dprev[u] = dh[u] * (S::one() - z);
                    dpre[u] = dz * z * (S::one() - z);
                    dpre[2 * h + u] = dc * (S::one() - c * c);
                    rh[u] = gt[h + u] * prev[u];
                }
                // candidate path through U_h (r * h_{t-1})
                d_rh.iter_mut().for_each(|v| *v = S::zero());
                for u in 0..h {
                    let da = dpre[2 * h + u];
                    let row = (2 * h + u) * h;
                    axpy(da, &w_hh[row..row + h], &mut d_rh);
                    axpy(da, &rh, &mut gw_hh[row..row + h]);
                }
                for u in 0..h {
                    let r = gt[h + u];
                    let dr = d_rh[u] * prev[u];
                    dprev[u] += d_rh[u] * r;
                    dpre[h + u] = dr * r * (S::one() - r);
                }
                // z and r recurrent paths
                for o in 0..2 * h {
                    let da = dpre[o];
                    axpy(da, &w_hh[o * h..(o + 1) * h], &mut dprev);
                    axpy(da, prev, &mut gw_hh[o * h..(o + 1) * h]);
                }
                let xt = &xi[t * din..(t + 1) * din];
                for o in 0..3 * h {
                    let da = dpre[o];
                    gb[o] += da;
                    axpy(da, xt, &mut gw_ih[o * din..(o + 1) * din]);
                    if let Some(gx) = gx.as_mut() {
                        axpy(da, &w_ih[o * din..(o + 1) * din], &mut gx[t * din..(t + 1) * din]);
                    }
                }
                dh.copy_from_slice(&dprev);
            }
            GruGrads { input: gx, w_ih: gw_ih, w_hh: gw_hh, bias: gb, h0: dh }
        })
        .collect();

    let mut total = GruGrads {
        input: need_input.then(|| Vec::with_capacity(g.batch * g.steps * din)),
        w_ih: vec![S::zero(); 3 * h * din],
        w_hh: vec![S::zero(); 3 * h * h],
        bias: vec![S::zero(); 3 * h],
        h0: vec![S::zero(); h],
    };
    for p in partials {
        add_into(&mut total.w_ih, &p.w_ih);
        add_into(&mut total.w_hh, &p.w_hh);
        add_into(&mut total.bias, &p.bias);
        add_into(&mut total.h0, &p.h0);
        if let (Some(all), Some(gx)) = (total.input.as_mut(), p.input) {
            all.extend_from_slice(&gx);
        }
    }
    total
}

fn add_into<S: Real>(acc: &mut [S], v: &[S]) {
    acc.iter_mut().zip(v).for_each(|(a, &b)| *a += b);
}

/// Returns `[h_1 .. h_T]` for a `[T, D_in]` (or batched `[B, T, D_in]`) input.
pub fn gru_sequence<S: Real>(inputs: &Tensor<S>, params: &GruParams<S>, h0: &Tensor<S>) -> Result<Tensor<S>> {
    let geom = GruGeom::new(
        inputs.shape(),
        params.w_ih.shape(),
        params.w_hh.shape(),
        params.bias.shape(),
        h0.shape(),
    )?;
    let (states, _) = gru_forward(
        &geom,
        inputs.data(),
        params.w_ih.data(),
        params.w_hh.data(),
        params.bias.data(),
        h0.data(),
    );
    let mut shape = inputs.shape().to_vec();
    *shape.last_mut().unwrap() = geom.d_h;
    let out = Tensor::new(shape, states)?;
    out.ensure_finite("gru_sequence")?;
    Ok(out)
}
