use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

/// Index of a parameter inside its [`ParameterSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<S> {
    pub name: String,
    pub value: Tensor<S>,
    /// Adam first moment.
    pub m: Tensor<S>,
    /// Adam second moment.
    pub v: Tensor<S>,
}

/// Named, insertion-ordered parameters plus their Adam state.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet<S> {
    params: Vec<Parameter<S>>,
    by_name: BTreeMap<String, usize>,
    step: u64,
}

impl<S: Scalar> Default for ParameterSet<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ParameterSet<S> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            by_name: BTreeMap::new(),
            step: 0,
        }
    }

    /// Registers a parameter with zeroed Adam state.
    ///
    /// # Panics
    /// If `name` is already registered.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<S>) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name `{name}`"
        );
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id.0);
        let m = Tensor::zeros(value.shape());
        let v = Tensor::zeros(value.shape());
        self.params.push(Parameter { name, value, m, v });
        id
    }

    /// Registers a parameter drawn uniformly from `[-s, s]`, `s = sqrt(6 / (fan_in + fan_out))`.
    pub fn add_xavier<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> ParamId {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let count: usize = shape.iter().product();
        let values = (0..count)
            .map(|_| S::lit(rng.random_range(-limit..=limit)))
            .collect();
        let tensor = Tensor::new(shape.to_vec(), values).expect("shape and count agree");
        self.add(name, tensor)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn value(&self, id: ParamId) -> &Tensor<S> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.params[id.0].value
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.id(name).map(|id| self.value(id))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        let id = self.id(name)?;
        Some(self.value_mut(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<S>> {
        self.params.iter()
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<S>> {
        self.params.iter_mut()
    }

    /// Moves row `i` of the parameter (and of its Adam moments) to row `perm[i]`.
    pub(crate) fn permute_rows(&mut self, id: ParamId, perm: &[usize]) {
        let p = &mut self.params[id.0];
        let rows = p.value.shape()[0];
        debug_assert_eq!(rows, perm.len());
        let cols = p.value.len() / rows;
        for t in [&mut p.value, &mut p.m, &mut p.v] {
            let old = t.values().to_vec();
            let new = t.values_mut();
            for (i, &dest) in perm.iter().enumerate() {
                new[dest * cols..(dest + 1) * cols].copy_from_slice(&old[i * cols..(i + 1) * cols]);
            }
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_gradients(&self) -> Gradients<S> {
        Gradients {
            grads: self.params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
        }
    }

    /// Bitwise equality of every value, ignoring optimizer state.
    pub fn values_bit_equal(&self, other: &Self) -> bool {
        self.params.len() == other.params.len()
            && self.params.iter().zip(&other.params).all(|(a, b)| {
                a.name == b.name
                    && a.value.shape() == b.value.shape()
                    && a.value
                        .values()
                        .iter()
                        .zip(b.value.values())
                        .all(|(x, y)| x.to_f64_lossless().to_bits() == y.to_f64_lossless().to_bits())
            })
    }
}

/// Gradients aligned index-for-index with a [`ParameterSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<S> {
    grads: Vec<Tensor<S>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, id: ParamId) -> &Tensor<S> {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.grads[id.0]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor<S>> {
        self.grads.iter()
    }

    pub fn zero(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(S::zero()));
    }

    pub fn scale(&mut self, k: S) {
        for g in &mut self.grads {
            g.values_mut().iter_mut().for_each(|v| *v *= k);
        }
    }

    pub fn accumulate(&mut self, other: &Self) -> Result<()> {
        if self.grads.len() != other.grads.len() {
            return Err(Error::invalid("gradient sets of different length"));
        }
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.check_same_shape(b)?;
            a.values_mut()
                .iter_mut()
                .zip(b.values())
                .for_each(|(x, &y)| *x += y);
        }
        Ok(())
    }

    pub fn global_norm(&self) -> S {
        self.grads
            .iter()
            .flat_map(|g| g.values())
            .map(|&v| v * v)
            .sum::<S>()
            .sqrt()
    }

    /// Rescales so that the global norm is at most `max_norm`. Returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: S) -> S {
        let norm = self.global_norm();
        if norm > max_norm && norm > S::zero() {
            self.scale(max_norm / norm);
        }
        norm
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(Tensor::is_finite)
    }
}
