//! LSTM cell and sequence layer.
//!
//! Gate rows are stacked `[input, forget, candidate, output]`, each `hidden`
//! rows tall:
//!
//! ```text
//! i = σ(z_i)   f = σ(z_f)   g = tanh(z_g)   o = σ(z_o)
//! c_t = f ⊙ c_{t-1} + i ⊙ g
//! h_t = o ⊙ tanh(c_t)
//! ```

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::dense::lookup;
use crate::nn::ops::{matvec_acc, matvec_t_acc, outer_acc, sigmoid};
use crate::nn::params::{Gradients, ParamId, ParameterSet};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

/// Initial forget-gate bias.
pub const FORGET_BIAS_INIT: f64 = 1.0;

/// Single LSTM step on explicit tensors: `w_input` is `[4H, I]`, `w_hidden` is
/// `[4H, H]` and `bias` is `[4H]`. Returns `(h_t, c_t)`.
pub fn lstm_step<S: Scalar>(
    w_input: &Tensor<S>,
    w_hidden: &Tensor<S>,
    bias: &Tensor<S>,
    x: &[S],
    h_prev: &[S],
    c_prev: &[S],
) -> Result<(Vec<S>, Vec<S>)> {
    let hidden = h_prev.len();
    let expect = |t: &Tensor<S>, shape: &[usize]| -> Result<()> {
        if t.shape() != shape {
            return Err(Error::ShapeMismatch {
                expected: shape.to_vec(),
                found: t.shape().to_vec(),
            });
        }
        Ok(())
    };
    expect(w_input, &[4 * hidden, x.len()])?;
    expect(w_hidden, &[4 * hidden, hidden])?;
    expect(bias, &[4 * hidden])?;
    if c_prev.len() != hidden {
        return Err(Error::ShapeMismatch {
            expected: vec![hidden],
            found: vec![c_prev.len()],
        });
    }
    let mut gates = vec![S::zero(); 4 * hidden];
    let mut c = vec![S::zero(); hidden];
    let mut h = vec![S::zero(); hidden];
    cell(
        w_input.values(),
        w_hidden.values(),
        bias.values(),
        x,
        h_prev,
        c_prev,
        &mut gates,
        &mut c,
        &mut h,
    );
    Ok((h, c))
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn cell<S: Scalar>(
    w_input: &[S],
    w_hidden: &[S],
    bias: &[S],
    x: &[S],
    h_prev: &[S],
    c_prev: &[S],
    gates: &mut [S],
    c: &mut [S],
    h: &mut [S],
) {
    let hidden = h_prev.len();
    gates.copy_from_slice(bias);
    matvec_acc(w_input, x, gates);
    matvec_acc(w_hidden, h_prev, gates);
    let (ifg, o) = gates.split_at_mut(3 * hidden);
    let (if_, g) = ifg.split_at_mut(2 * hidden);
    if_.iter_mut().for_each(|z| *z = sigmoid(*z));
    g.iter_mut().for_each(|z| *z = z.tanh());
    o.iter_mut().for_each(|z| *z = sigmoid(*z));
    let (i, f) = if_.split_at(hidden);
    for k in 0..hidden {
        c[k] = f[k] * c_prev[k] + i[k] * g[k];
        h[k] = o[k] * c[k].tanh();
    }
}

/// Activations recorded by [`LstmLayer::forward`] for backpropagation.
#[derive(Clone, Debug)]
pub struct LstmTrace<S> {
    /// `hs[0]` is the initial state, `hs[t + 1]` the output at step `t`.
    pub hs: Vec<Vec<S>>,
    pub cs: Vec<Vec<S>>,
    /// Activated gates per step, laid out like the gate rows.
    pub gates: Vec<Vec<S>>,
}

impl<S: Scalar> LstmTrace<S> {
    pub fn outputs(&self) -> &[Vec<S>] {
        &self.hs[1..]
    }

    pub fn last_hidden(&self) -> &[S] {
        self.hs.last().expect("trace holds the initial state")
    }
}

/// Gradients flowing out of [`LstmLayer::backward`].
#[derive(Clone, Debug)]
pub struct LstmInputGrads<S> {
    pub dxs: Vec<Vec<S>>,
    pub dh0: Vec<S>,
    pub dc0: Vec<S>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayer {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub hidden: usize,
}

impl LstmLayer {
    /// Uniform Glorot initialization per gate block; forget-gate bias starts at 1.
    pub fn new<S: Scalar, R: Rng + ?Sized>(
        params: &mut ParameterSet<S>,
        name: &str,
        inputs: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let w_input =
            params.add_xavier(format!("{name}.w_input"), &[4 * hidden, inputs], inputs, hidden, rng);
        let w_hidden =
            params.add_xavier(format!("{name}.w_hidden"), &[4 * hidden, hidden], hidden, hidden, rng);
        let mut b = vec![S::zero(); 4 * hidden];
        b[hidden..2 * hidden].iter_mut().for_each(|v| *v = S::lit(FORGET_BIAS_INIT));
        let bias = params.add(
            format!("{name}.bias"),
            Tensor::vector(b).expect("positive hidden width"),
        );
        Self {
            w_input,
            w_hidden,
            bias,
            inputs,
            hidden,
        }
    }

    pub(crate) fn bind<S: Scalar>(params: &ParameterSet<S>, name: &str) -> Result<Self> {
        let w_input = lookup(params, &format!("{name}.w_input"))?;
        let w_hidden = lookup(params, &format!("{name}.w_hidden"))?;
        let bias = lookup(params, &format!("{name}.bias"))?;
        let &[rows, inputs] = params.value(w_input).shape() else {
            return Err(Error::Decode(format!("`{name}.w_input` is not a matrix")));
        };
        if rows % 4 != 0 {
            return Err(Error::Decode(format!("`{name}` gate rows not divisible by 4")));
        }
        let hidden = rows / 4;
        if params.value(w_hidden).shape() != [rows, hidden] || params.value(bias).shape() != [rows] {
            return Err(Error::Decode(format!("`{name}` parameter shapes disagree")));
        }
        Ok(Self {
            w_input,
            w_hidden,
            bias,
            inputs,
            hidden,
        })
    }

    /// Runs the layer over `xs`. Missing initial states default to zero.
    pub fn forward<S: Scalar>(
        &self,
        params: &ParameterSet<S>,
        xs: &[Vec<S>],
        h0: Option<&[S]>,
        c0: Option<&[S]>,
    ) -> LstmTrace<S> {
        let hidden = self.hidden;
        let w_input = params.value(self.w_input).values();
        let w_hidden = params.value(self.w_hidden).values();
        let bias = params.value(self.bias).values();
        let mut hs = Vec::with_capacity(xs.len() + 1);
        let mut cs = Vec::with_capacity(xs.len() + 1);
        let mut gates = Vec::with_capacity(xs.len());
        hs.push(h0.map_or_else(|| vec![S::zero(); hidden], <[S]>::to_vec));
        cs.push(c0.map_or_else(|| vec![S::zero(); hidden], <[S]>::to_vec));
        for x in xs {
            debug_assert_eq!(x.len(), self.inputs);
            let mut g = vec![S::zero(); 4 * hidden];
            let mut c = vec![S::zero(); hidden];
            let mut h = vec![S::zero(); hidden];
            cell(
                w_input,
                w_hidden,
                bias,
                x,
                hs.last().unwrap(),
                cs.last().unwrap(),
                &mut g,
                &mut c,
                &mut h,
            );
            gates.push(g);
            cs.push(c);
            hs.push(h);
        }
        LstmTrace { hs, cs, gates }
    }

    /// Backpropagation through time. `dhs[t]` is the loss gradient with
    /// respect to the output at step `t`.
    pub fn backward<S: Scalar>(
        &self,
        params: &ParameterSet<S>,
        xs: &[Vec<S>],
        trace: &LstmTrace<S>,
        dhs: &[Vec<S>],
        grads: &mut Gradients<S>,
    ) -> LstmInputGrads<S> {
        let hidden = self.hidden;
        let steps = xs.len();
        debug_assert_eq!(dhs.len(), steps);
        let w_input = params.value(self.w_input).values();
        let w_hidden = params.value(self.w_hidden).values();

        let mut dxs = vec![Vec::new(); steps];
        let mut dh_next = vec![S::zero(); hidden];
        let mut dc_next = vec![S::zero(); hidden];
        let mut dz = vec![S::zero(); 4 * hidden];
        let one = S::one();

        for t in (0..steps).rev() {
            let gates = &trace.gates[t];
            let c = &trace.cs[t + 1];
            let c_prev = &trace.cs[t];
            let (i, rest) = gates.split_at(hidden);
            let (f, rest) = rest.split_at(hidden);
            let (g, o) = rest.split_at(hidden);
            let mut dc_prev = vec![S::zero(); hidden];
            for k in 0..hidden {
                let dh = dhs[t][k] + dh_next[k];
                let tc = c[k].tanh();
                let dc = dc_next[k] + dh * o[k] * (one - tc * tc);
                dz[k] = dc * g[k] * i[k] * (one - i[k]);
                dz[hidden + k] = dc * c_prev[k] * f[k] * (one - f[k]);
                dz[2 * hidden + k] = dc * i[k] * (one - g[k] * g[k]);
                dz[3 * hidden + k] = dh * tc * o[k] * (one - o[k]);
                dc_prev[k] = dc * f[k];
            }
            outer_acc(grads.get_mut(self.w_input).values_mut(), &dz, &xs[t]);
            outer_acc(grads.get_mut(self.w_hidden).values_mut(), &dz, &trace.hs[t]);
            grads
                .get_mut(self.bias)
                .values_mut()
                .iter_mut()
                .zip(&dz)
                .for_each(|(b, &d)| *b += d);
            let mut dx = vec![S::zero(); self.inputs];
            matvec_t_acc(w_input, &dz, &mut dx);
            dxs[t] = dx;
            let mut dh_prev = vec![S::zero(); hidden];
            matvec_t_acc(w_hidden, &dz, &mut dh_prev);
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
        LstmInputGrads {
            dxs,
            dh0: dh_next,
            dc0: dc_next,
        }
    }
}
