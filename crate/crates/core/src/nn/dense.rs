use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::ops::{matvec_acc, matvec_t_acc, outer_acc};
use crate::nn::params::{Gradients, ParamId, ParameterSet};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

/// `weights · input + bias` for a `[out, in]` weight matrix.
pub fn dense_forward<S: Scalar>(weights: &Tensor<S>, bias: &Tensor<S>, input: &[S]) -> Result<Vec<S>> {
    let &[rows, cols] = weights.shape() else {
        return Err(Error::invalid(format!(
            "dense weights must be a matrix, got shape {:?}",
            weights.shape()
        )));
    };
    if cols != input.len() {
        return Err(Error::ShapeMismatch {
            expected: vec![cols],
            found: vec![input.len()],
        });
    }
    if bias.shape() != [rows] {
        return Err(Error::ShapeMismatch {
            expected: vec![rows],
            found: bias.shape().to_vec(),
        });
    }
    let mut out = bias.values().to_vec();
    matvec_acc(weights.values(), input, &mut out);
    Ok(out)
}

/// Fully connected layer whose parameters live in a [`ParameterSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn new<S: Scalar, R: Rng + ?Sized>(
        params: &mut ParameterSet<S>,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Self {
        let weight = params.add_xavier(
            format!("{name}.weight"),
            &[outputs, inputs],
            inputs,
            outputs,
            rng,
        );
        let bias = params.add(format!("{name}.bias"), Tensor::zeros(&[outputs]));
        Self {
            weight,
            bias,
            inputs,
            outputs,
        }
    }

    /// Rebinds a layer to parameters already present in `params`.
    pub(crate) fn bind<S: Scalar>(params: &ParameterSet<S>, name: &str) -> Result<Self> {
        let weight = lookup(params, &format!("{name}.weight"))?;
        let bias = lookup(params, &format!("{name}.bias"))?;
        let &[outputs, inputs] = params.value(weight).shape() else {
            return Err(Error::Decode(format!("`{name}.weight` is not a matrix")));
        };
        if params.value(bias).shape() != [outputs] {
            return Err(Error::Decode(format!("`{name}.bias` does not match its weight")));
        }
        Ok(Self {
            weight,
            bias,
            inputs,
            outputs,
        })
    }

    pub fn forward<S: Scalar>(&self, params: &ParameterSet<S>, x: &[S]) -> Vec<S> {
        debug_assert_eq!(x.len(), self.inputs);
        let mut out = params.value(self.bias).values().to_vec();
        matvec_acc(params.value(self.weight).values(), x, &mut out);
        out
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward<S: Scalar>(
        &self,
        params: &ParameterSet<S>,
        x: &[S],
        dy: &[S],
        grads: &mut Gradients<S>,
    ) -> Vec<S> {
        outer_acc(grads.get_mut(self.weight).values_mut(), dy, x);
        grads
            .get_mut(self.bias)
            .values_mut()
            .iter_mut()
            .zip(dy)
            .for_each(|(b, &d)| *b += d);
        let mut dx = vec![S::zero(); self.inputs];
        matvec_t_acc(params.value(self.weight).values(), dy, &mut dx);
        dx
    }
}

pub(crate) fn lookup<S: Scalar>(params: &ParameterSet<S>, name: &str) -> Result<ParamId> {
    params
        .id(name)
        .ok_or_else(|| Error::Decode(format!("missing parameter `{name}`")))
}
