//! Strided 1-D convolution with causal ("left only") zero padding.
//!
//! Every layer maps a length `L` sequence to exactly `ceil(L / stride)`
//! frames. The padding needed for that is placed entirely on the left so the
//! last tap of output frame `t` never reaches past input sample
//! `(t + 1) * stride - 1`.

use rayon::prelude::*;

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Left padding that makes a `kernel`-tap, `stride`-step convolution produce
/// `ceil(len / stride)` outputs.
pub fn causal_pad(len: usize, kernel: usize, stride: usize) -> usize {
    let out = len.div_ceil(stride);
    ((out - 1) * stride + kernel).saturating_sub(len)
}

pub fn conv_out_len(len: usize, stride: usize) -> usize {
    len.div_ceil(stride)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub len_in: usize,
    pub len_out: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn new(input: &[usize], weight: &[usize], bias: &[usize], stride: usize) -> Result<(usize, Self)> {
        if stride == 0 {
            return Err(Error::shape("conv1d stride must be >= 1"));
        }
        let (batch, c_in, len_in) = match *input {
            [c, l] => (1, c, l),
            [b, c, l] => (b, c, l),
            _ => return Err(Error::shape(format!("conv1d input must be [C, L] or [B, C, L], got {input:?}"))),
        };
        let [c_out, w_in, kernel] = *weight else {
            return Err(Error::shape(format!("conv1d weight must be [C_out, C_in, k], got {weight:?}")));
        };
        if w_in != c_in {
            return Err(Error::shape(format!(
                "conv1d weight expects {w_in} input channels, input has {c_in}"
            )));
        }
        if bias != [c_out] {
            return Err(Error::shape(format!("conv1d bias must be [{c_out}], got {bias:?}")));
        }
        Ok((
            batch,
            Self {
                c_in,
                c_out,
                kernel,
                stride,
                len_in,
                len_out: conv_out_len(len_in, stride),
                pad: causal_pad(len_in, kernel, stride),
            },
        ))
    }

    fn in_size(&self) -> usize {
        self.c_in * self.len_in
    }

    fn out_size(&self) -> usize {
        self.c_out * self.len_out
    }

    fn patch_len(&self) -> usize {
        self.c_in * self.kernel
    }

    /// Gathers the receptive field of output frame `t` as `[c_in * kernel]`.
    #[inline]
    fn gather<S: Real>(&self, x: &[S], t: usize, patch: &mut [S]) {
        let base = (t * self.stride) as isize - self.pad as isize;
        for i in 0..self.c_in {
            let row = &x[i * self.len_in..(i + 1) * self.len_in];
            let dst = &mut patch[i * self.kernel..(i + 1) * self.kernel];
            if base >= 0 {
                let b = base as usize;
                dst.copy_from_slice(&row[b..b + self.kernel]);
            } else {
                for (j, d) in dst.iter_mut().enumerate() {
                    let idx = base + j as isize;
                    *d = if idx >= 0 { row[idx as usize] } else { S::zero() };
                }
            }
        }
    }

    #[inline]
    fn scatter<S: Real>(&self, gx: &mut [S], t: usize, gpatch: &[S]) {
        let base = (t * self.stride) as isize - self.pad as isize;
        for i in 0..self.c_in {
            let row = &mut gx[i * self.len_in..(i + 1) * self.len_in];
            let src = &gpatch[i * self.kernel..(i + 1) * self.kernel];
            for (j, &g) in src.iter().enumerate() {
                let idx = base + j as isize;
                if idx >= 0 {
                    row[idx as usize] += g;
                }
            }
        }
    }

    fn forward_item<S: Real>(&self, x: &[S], w: &[S], b: &[S], out: &mut [S]) {
        let pl = self.patch_len();
        let mut patch = vec![S::zero(); pl];
        for t in 0..self.len_out {
            self.gather(x, t, &mut patch);
            for o in 0..self.c_out {
                out[o * self.len_out + t] = b[o] + dot(&w[o * pl..(o + 1) * pl], &patch);
            }
        }
    }

    /// Accumulates weight and bias gradients into `gw`/`gb` and, when
    /// `gx` is given, the input gradient.
    fn backward_item<S: Real>(
        &self,
        x: &[S],
        w: &[S],
        gout: &[S],
        gx: Option<&mut [S]>,
        gw: &mut [S],
        gb: &mut [S],
    ) {
        let pl = self.patch_len();
        let mut patch = vec![S::zero(); pl];
        let mut gpatch = vec![S::zero(); pl];
        let mut gx = gx;
        for t in 0..self.len_out {
            self.gather(x, t, &mut patch);
            gpatch.iter_mut().for_each(|v| *v = S::zero());
            for o in 0..self.c_out {
                let g = gout[o * self.len_out + t];
                if g == S::zero() {
                    continue;
                }
                gb[o] += g;
                axpy(g, &patch, &mut gw[o * pl..(o + 1) * pl]);
                if gx.is_some() {
                    axpy(g, &w[o * pl..(o + 1) * pl], &mut gpatch);
                }
            }
            if let Some(gx) = gx.as_deref_mut() {
                self.scatter(gx, t, &gpatch);
            }
        }
    }
}

#[inline]
pub(crate) fn dot<S: Real>(a: &[S], b: &[S]) -> S {
    let mut acc = [S::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub(crate) fn axpy<S: Real>(alpha: S, x: &[S], y: &mut [S]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

/// `out[c][t] = bias[c] + sum_{i,j} weight[c][i][j] * padded[i][t*stride + j]`.
///
/// Accepts `[C_in, L]` or batched `[B, C_in, L]` input.
pub fn conv1d<S: Real>(input: &Tensor<S>, weight: &Tensor<S>, bias: &Tensor<S>, stride: usize) -> Result<Tensor<S>> {
    let (batch, geom) = ConvGeom::new(input.shape(), weight.shape(), bias.shape(), stride)?;
    let out = conv_forward(&geom, batch, input.data(), weight.data(), bias.data());
    let shape = if input.ndim() == 2 {
        vec![geom.c_out, geom.len_out]
    } else {
        vec![batch, geom.c_out, geom.len_out]
    };
    let out = Tensor::new(shape, out)?;
    out.ensure_finite("conv1d")?;
    Ok(out)
}

pub(crate) fn conv_forward<S: Real>(geom: &ConvGeom, batch: usize, x: &[S], w: &[S], b: &[S]) -> Vec<S> {
    let mut out = vec![S::zero(); batch * geom.out_size()];
    out.par_chunks_mut(geom.out_size())
        .zip(x.par_chunks(geom.in_size()))
        .for_each(|(o, xi)| geom.forward_item(xi, w, b, o));
    out
}

pub(crate) struct ConvGrads<S> {
    pub input: Option<Vec<S>>,
    pub weight: Vec<S>,
    pub bias: Vec<S>,
}

pub(crate) fn conv_backward<S: Real>(
    geom: &ConvGeom,
    batch: usize,
    x: &[S],
    w: &[S],
    gout: &[S],
    need_input: bool,
) -> ConvGrads<S> {
    let wlen = geom.c_out * geom.patch_len();
    let partials: Vec<(Option<Vec<S>>, Vec<S>, Vec<S>)> = (0..batch)
        .into_par_iter()
        .map(|bi| {
            let xi = &x[bi * geom.in_size()..(bi + 1) * geom.in_size()];
            let gi = &gout[bi * geom.out_size()..(bi + 1) * geom.out_size()];
            let mut gw = vec![S::zero(); wlen];
            let mut gb = vec![S::zero(); geom.c_out];
            let mut gx = need_input.then(|| vec![S::zero(); geom.in_size()]);
            geom.backward_item(xi, w, gi, gx.as_deref_mut(), &mut gw, &mut gb);
            (gx, gw, gb)
        })
        .collect();

    // Reduce in batch order so the result does not depend on thread count.
    let mut weight = vec![S::zero(); wlen];
    let mut bias = vec![S::zero(); geom.c_out];
    let mut input = need_input.then(|| Vec::with_capacity(batch * geom.in_size()));
    for (gx, gw, gb) in partials {
        weight.iter_mut().zip(&gw).for_each(|(a, &b)| *a += b);
        bias.iter_mut().zip(&gb).for_each(|(a, &b)| *a += b);
        if let (Some(all), Some(gx)) = (input.as_mut(), gx) {
            all.extend_from_slice(&gx);
        }
    }
    ConvGrads { input, weight, bias }
}
