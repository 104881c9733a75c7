//! Slice kernels, activations and the losses used by every network.

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

/// Lower clamp applied to the target probability inside [`cross_entropy`].
pub const PROBABILITY_FLOOR: f64 = 1e-12;

#[inline]
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [S::zero(); 8];
    let chunks_a = a.chunks_exact(8);
    let chunks_b = b.chunks_exact(8);
    let tail: S = chunks_a
        .remainder()
        .iter()
        .zip(chunks_b.remainder())
        .map(|(&x, &y)| x * y)
        .sum();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for k in 0..8 {
            acc[k] += ca[k] * cb[k];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy<S: Scalar>(alpha: S, x: &[S], y: &mut [S]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out += W x` for a row-major `W` of `out.len()` rows.
#[inline]
pub fn matvec_acc<S: Scalar>(w: &[S], x: &[S], out: &mut [S]) {
    let cols = x.len();
    debug_assert_eq!(w.len(), cols * out.len());
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols.max(1))) {
        *o += dot(row, x);
    }
}

/// `out += Wᵀ dy` for a row-major `W` of `dy.len()` rows.
#[inline]
pub fn matvec_t_acc<S: Scalar>(w: &[S], dy: &[S], out: &mut [S]) {
    let cols = out.len();
    if cols == 0 {
        return;
    }
    debug_assert_eq!(w.len(), cols * dy.len());
    for (&d, row) in dy.iter().zip(w.chunks_exact(cols)) {
        if d != S::zero() {
            axpy(d, row, out);
        }
    }
}

/// `gw += dy ⊗ x`
#[inline]
pub fn outer_acc<S: Scalar>(gw: &mut [S], dy: &[S], x: &[S]) {
    let cols = x.len();
    if cols == 0 {
        return;
    }
    debug_assert_eq!(gw.len(), cols * dy.len());
    for (&d, row) in dy.iter().zip(gw.chunks_exact_mut(cols)) {
        if d != S::zero() {
            axpy(d, x, row);
        }
    }
}

#[inline]
pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

pub fn tanh_in_place<S: Scalar>(values: &mut [S]) {
    values.iter_mut().for_each(|v| *v = v.tanh());
}

/// Backpropagates through `y = tanh(z)` given the activations `y`.
pub fn tanh_backward<S: Scalar>(y: &[S], dy: &[S]) -> Vec<S> {
    y.iter()
        .zip(dy)
        .map(|(&y, &d)| d * (S::one() - y * y))
        .collect()
}

/// Max-shifted softmax.
pub fn softmax<S: Scalar>(logits: &[S]) -> Result<Vec<S>> {
    if logits.is_empty() {
        return Err(Error::invalid("softmax of an empty vector"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax logits".into()));
    }
    let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let mut out: Vec<S> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: S = out.iter().copied().sum();
    out.iter_mut().for_each(|p| *p /= total);
    Ok(out)
}

/// Categorical target: exactly one active position out of `classes`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OneHotTarget {
    index: usize,
    classes: usize,
}

impl OneHotTarget {
    pub fn new(index: usize, classes: usize) -> Result<Self> {
        if index >= classes {
            return Err(Error::invalid(format!(
                "target index {index} outside {classes} classes"
            )));
        }
        Ok(Self { index, classes })
    }

    pub fn index(self) -> usize {
        self.index
    }

    pub fn classes(self) -> usize {
        self.classes
    }

    pub fn to_vec<S: Scalar>(self) -> Vec<S> {
        let mut v = vec![S::zero(); self.classes];
        v[self.index] = S::one();
        v
    }
}

/// `-ln(p[t])` with `p[t]` clamped below at [`PROBABILITY_FLOOR`].
pub fn cross_entropy<S: Scalar>(probs: &[S], target: OneHotTarget) -> Result<S> {
    if probs.len() != target.classes {
        return Err(Error::invalid(format!(
            "{} probabilities for a {}-class target",
            probs.len(),
            target.classes
        )));
    }
    let p = probs[target.index].max(S::lit(PROBABILITY_FLOOR));
    Ok(-p.ln())
}

/// Gradient of `cross_entropy(softmax(z), t)` with respect to the logits `z`.
pub fn softmax_cross_entropy_grad<S: Scalar>(probs: &[S], target: OneHotTarget) -> Vec<S> {
    let mut g = probs.to_vec();
    g[target.index] -= S::one();
    g
}

/// Sum over axes and timesteps of squared differences.
pub fn reconstruction_loss<S: Scalar>(original: &Tensor<S>, reconstruction: &Tensor<S>) -> Result<S> {
    original.check_same_shape(reconstruction)?;
    Ok(squared_error(original.values(), reconstruction.values()))
}

pub(crate) fn squared_error<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Gradient of [`reconstruction_loss`] with respect to the reconstruction.
pub fn reconstruction_loss_grad<S: Scalar>(original: &[S], reconstruction: &[S]) -> Vec<S> {
    original
        .iter()
        .zip(reconstruction)
        .map(|(&x, &y)| S::lit(2.0) * (y - x))
        .collect()
}

/// Mean absolute error, reported alongside the squared training loss.
pub fn mean_absolute_error<S: Scalar>(original: &Tensor<S>, reconstruction: &Tensor<S>) -> Result<S> {
    original.check_same_shape(reconstruction)?;
    let total: S = original
        .values()
        .iter()
        .zip(reconstruction.values())
        .map(|(&x, &y)| (x - y).abs())
        .sum();
    Ok(total / S::lit(original.len() as f64))
}
