use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::dense::lookup;
use crate::nn::ops::{axpy, dot};
use crate::nn::params::{Gradients, ParamId, ParameterSet};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

/// Valid (unpadded), stride-1 cross-correlation.
///
/// `kernels` is `[out_channels, in_channels, k]`, `input` is `[in_channels, len]`;
/// the result is `[out_channels, len - k + 1]`.
pub fn conv1d_forward<S: Scalar>(
    kernels: &Tensor<S>,
    bias: Option<&Tensor<S>>,
    input: &Tensor<S>,
) -> Result<Tensor<S>> {
    let &[out_ch, in_ch, k] = kernels.shape() else {
        return Err(Error::invalid(format!(
            "kernel bank must be [out, in, k], got {:?}",
            kernels.shape()
        )));
    };
    let &[channels, len] = input.shape() else {
        return Err(Error::invalid(format!(
            "conv input must be [channels, len], got {:?}",
            input.shape()
        )));
    };
    if channels != in_ch {
        return Err(Error::ShapeMismatch {
            expected: vec![in_ch, len],
            found: input.shape().to_vec(),
        });
    }
    if k > len {
        return Err(Error::invalid(format!(
            "kernel length {k} exceeds input length {len}"
        )));
    }
    let zeros;
    let bias = match bias {
        Some(b) if b.shape() == [out_ch] => b.values(),
        Some(b) => {
            return Err(Error::ShapeMismatch {
                expected: vec![out_ch],
                found: b.shape().to_vec(),
            })
        }
        None => {
            zeros = vec![S::zero(); out_ch];
            &zeros
        }
    };
    let out = correlate(kernels.values(), bias, input.values(), in_ch, out_ch, k, len);
    Tensor::new(vec![out_ch, len - k + 1], out)
}

fn correlate<S: Scalar>(
    kernels: &[S],
    bias: &[S],
    input: &[S],
    in_ch: usize,
    out_ch: usize,
    k: usize,
    len: usize,
) -> Vec<S> {
    let out_len = len - k + 1;
    let mut out = vec![S::zero(); out_ch * out_len];
    for o in 0..out_ch {
        let row = &mut out[o * out_len..(o + 1) * out_len];
        row.iter_mut().for_each(|v| *v = bias[o]);
        for c in 0..in_ch {
            let kernel = &kernels[(o * in_ch + c) * k..(o * in_ch + c + 1) * k];
            let signal = &input[c * len..(c + 1) * len];
            for (t, v) in row.iter_mut().enumerate() {
                *v += dot(kernel, &signal[t..t + k]);
            }
        }
    }
    out
}

/// 1-D convolution layer over a channel-major `[channels, len]` sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl Conv1d {
    pub fn new<S: Scalar, R: Rng + ?Sized>(
        params: &mut ParameterSet<S>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        let weight = params.add_xavier(
            format!("{name}.weight"),
            &[out_channels, in_channels, kernel],
            in_channels * kernel,
            out_channels * kernel,
            rng,
        );
        let bias = params.add(format!("{name}.bias"), Tensor::zeros(&[out_channels]));
        Self {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
        }
    }

    pub(crate) fn bind<S: Scalar>(params: &ParameterSet<S>, name: &str) -> Result<Self> {
        let weight = lookup(params, &format!("{name}.weight"))?;
        let bias = lookup(params, &format!("{name}.bias"))?;
        let &[out_channels, in_channels, kernel] = params.value(weight).shape() else {
            return Err(Error::Decode(format!("`{name}.weight` is not a kernel bank")));
        };
        if params.value(bias).shape() != [out_channels] {
            return Err(Error::Decode(format!("`{name}.bias` does not match its weight")));
        }
        Ok(Self {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
        })
    }

    pub fn output_len(&self, len: usize) -> usize {
        len + 1 - self.kernel
    }

    pub fn forward<S: Scalar>(&self, params: &ParameterSet<S>, x: &[S], len: usize) -> Vec<S> {
        debug_assert_eq!(x.len(), self.in_channels * len);
        correlate(
            params.value(self.weight).values(),
            params.value(self.bias).values(),
            x,
            self.in_channels,
            self.out_channels,
            self.kernel,
            len,
        )
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward<S: Scalar>(
        &self,
        params: &ParameterSet<S>,
        x: &[S],
        len: usize,
        dy: &[S],
        grads: &mut Gradients<S>,
    ) -> Vec<S> {
        let k = self.kernel;
        let out_len = self.output_len(len);
        let w = params.value(self.weight).values();
        let mut dx = vec![S::zero(); self.in_channels * len];
        {
            let gb = grads.get_mut(self.bias).values_mut();
            for o in 0..self.out_channels {
                gb[o] += dy[o * out_len..(o + 1) * out_len].iter().copied().sum();
            }
        }
        let gw = grads.get_mut(self.weight).values_mut();
        for o in 0..self.out_channels {
            let dy_row = &dy[o * out_len..(o + 1) * out_len];
            for c in 0..self.in_channels {
                let base = (o * self.in_channels + c) * k;
                let signal = &x[c * len..(c + 1) * len];
                let dsignal = &mut dx[c * len..(c + 1) * len];
                for (t, &d) in dy_row.iter().enumerate() {
                    axpy(d, &signal[t..t + k], &mut gw[base..base + k]);
                    axpy(d, &w[base..base + k], &mut dsignal[t..t + k]);
                }
            }
        }
        dx
    }
}
