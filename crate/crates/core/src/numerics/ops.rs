//! Plain (untaped) shape and elementwise operations.

use super::conv::dot;
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

pub fn relu<S: Real>(x: &Tensor<S>) -> Tensor<S> {
    let data = x.data().iter().map(|&v| if v > S::zero() { v } else { S::zero() }).collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

/// `y = x W^T (+ b)` over the last dimension of `x`.
pub fn affine<S: Real>(x: &Tensor<S>, w: &Tensor<S>, b: Option<&Tensor<S>>) -> Result<Tensor<S>> {
    let (d_out, d_in) = affine_dims(x.shape(), w.shape(), b.map(|b| b.shape()))?;
    let out = affine_raw(x.data(), w.data(), b.map(|b| b.data()), d_in, d_out);
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = d_out;
    Tensor::new(shape, out)
}

pub(crate) fn affine_dims(x: &[usize], w: &[usize], b: Option<&[usize]>) -> Result<(usize, usize)> {
    let [d_out, d_in] = *w else {
        return Err(Error::shape(format!("affine weight must be 2-D, got {w:?}")));
    };
    if x.last() != Some(&d_in) {
        return Err(Error::shape(format!("affine input {x:?} does not end in {d_in}")));
    }
    if let Some(b) = b {
        if b != [d_out] {
            return Err(Error::shape(format!("affine bias must be [{d_out}], got {b:?}")));
        }
    }
    Ok((d_out, d_in))
}

pub(crate) fn affine_raw<S: Real>(x: &[S], w: &[S], b: Option<&[S]>, d_in: usize, d_out: usize) -> Vec<S> {
    let rows = x.len() / d_in;
    let mut out = vec![S::zero(); rows * d_out];
    for (xr, yr) in x.chunks_exact(d_in).zip(out.chunks_exact_mut(d_out)) {
        for (o, y) in yr.iter_mut().enumerate() {
            *y = dot(&w[o * d_in..(o + 1) * d_in], xr) + b.map_or(S::zero(), |b| b[o]);
        }
    }
    out
}

pub fn concat_last<S: Real>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    let (da, db) = (a.last_dim(), b.last_dim());
    if a.shape()[..a.ndim() - 1] != b.shape()[..b.ndim() - 1] {
        return Err(Error::shape(format!("concat of {:?} and {:?}", a.shape(), b.shape())));
    }
    let mut out = Vec::with_capacity(a.numel() + b.numel());
    for (ra, rb) in a.data().chunks_exact(da).zip(b.data().chunks_exact(db)) {
        out.extend_from_slice(ra);
        out.extend_from_slice(rb);
    }
    let mut shape = a.shape().to_vec();
    *shape.last_mut().unwrap() = da + db;
    Tensor::new(shape, out)
}

/// Repeats every row of a `[.., T, D]` tensor `factor` times along `T`.
pub fn repeat_rows<S: Real>(x: &Tensor<S>, factor: usize) -> Result<Tensor<S>> {
    if factor == 0 || x.ndim() < 2 {
        return Err(Error::shape("repeat_rows needs factor >= 1 and a matrix"));
    }
    let d = x.last_dim();
    let mut out = Vec::with_capacity(x.numel() * factor);
    for r in x.data().chunks_exact(d) {
        for _ in 0..factor {
            out.extend_from_slice(r);
        }
    }
    let mut shape = x.shape().to_vec();
    let n = shape.len();
    shape[n - 2] *= factor;
    Tensor::new(shape, out)
}

/// Swaps the two innermost dimensions.
pub fn transpose<S: Real>(x: &Tensor<S>) -> Result<Tensor<S>> {
    if x.ndim() < 2 {
        return Err(Error::shape("transpose needs at least 2 dimensions"));
    }
    let n = x.ndim();
    let (r, c) = (x.shape()[n - 2], x.shape()[n - 1]);
    let mut out = vec![S::zero(); x.numel()];
    for (src, dst) in x.data().chunks_exact(r * c).zip(out.chunks_exact_mut(r * c)) {
        transpose_block(src, dst, r, c);
    }
    let mut shape = x.shape().to_vec();
    shape.swap(n - 2, n - 1);
    Tensor::new(shape, out)
}

pub(crate) fn transpose_block<S: Copy>(src: &[S], dst: &mut [S], r: usize, c: usize) {
    for i in 0..r {
        for j in 0..c {
            dst[j * r + i] = src[i * c + j];
        }
    }
}

pub fn reduce_mean<S: Real>(x: &Tensor<S>) -> S {
    x.sum() / S::of(x.numel() as f64)
}

/// Overflow-safe `log(sum(exp(v)))`.
pub fn log_sum_exp<S: Real>(v: &[S]) -> S {
    let m = v.iter().copied().fold(S::neg_infinity(), S::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<S>().ln()
}

/// Row-wise log-sum-exp over the last dimension.
pub fn log_sum_exp_rows<S: Real>(x: &Tensor<S>) -> Tensor<S> {
    let d = x.last_dim();
    let data: Vec<S> = x.data().chunks_exact(d).map(log_sum_exp).collect();
    let shape = if x.ndim() == 1 { vec![1] } else { x.shape()[..x.ndim() - 1].to_vec() };
    Tensor::new(shape, data).expect("row count")
}
