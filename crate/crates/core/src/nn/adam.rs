use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::params::{Gradients, ParameterSet};
use crate::scalar::Scalar;

/// Adam hyperparameters. Defaults: lr 0.03, β1 0.9, β2 0.95, ε 1e-8.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.03,
            beta1: 0.9,
            beta2: 0.95,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(self, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid Adam configuration {self:?}")))
        }
    }
}

/// One bias-corrected Adam update of every parameter in `params`.
pub fn adam_step<S: Scalar>(
    params: &mut ParameterSet<S>,
    grads: &Gradients<S>,
    config: &AdamConfig,
) -> Result<()> {
    config.validate()?;
    if grads.len() != params.len() {
        return Err(Error::invalid(format!(
            "{} gradients for {} parameters",
            grads.len(),
            params.len()
        )));
    }
    for (p, g) in params.iter().zip(grads.iter()) {
        p.value.check_same_shape(g)?;
    }

    let step = params.step() + 1;
    let b1 = S::lit(config.beta1);
    let b2 = S::lit(config.beta2);
    let one = S::one();
    let correction1 = one - S::lit(config.beta1.powf(step as f64));
    let correction2 = one - S::lit(config.beta2.powf(step as f64));
    let lr = S::lit(config.learning_rate);
    let eps = S::lit(config.epsilon);

    for (p, g) in params.iter_mut().zip(grads.iter()) {
        let values = p.value.values_mut();
        let m = p.m.values_mut();
        let v = p.v.values_mut();
        for i in 0..values.len() {
            let gi = g.values()[i];
            m[i] = b1 * m[i] + (one - b1) * gi;
            v[i] = b2 * v[i] + (one - b2) * gi * gi;
            let m_hat = m[i] / correction1;
            let v_hat = v[i] / correction2;
            values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        if !p.value.is_finite() {
            return Err(Error::NonFinite(format!("parameter `{}` after Adam step", p.name)));
        }
    }
    params.set_step(step);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::Tensor;

    fn scalar_set(value: f64) -> ParameterSet<f64> {
        let mut set = ParameterSet::new();
        set.add("p", Tensor::vector(vec![value]).unwrap());
        set
    }

    fn grads_of(set: &ParameterSet<f64>, g: f64) -> Gradients<f64> {
        let mut grads = set.zero_gradients();
        grads.get_mut(set.id("p").unwrap()).values_mut()[0] = g;
        grads
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut set = scalar_set(1.0);
        let grads = grads_of(&set, 1.0);
        adam_step(&mut set, &grads, &AdamConfig::default()).unwrap();
        assert!((set.get("p").unwrap().values()[0] - 0.97).abs() < 1e-9);
        assert_eq!(set.step(), 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut set = scalar_set(0.5);
        let grads = grads_of(&set, 0.0);
        adam_step(&mut set, &grads, &AdamConfig::default()).unwrap();
        assert_eq!(set.get("p").unwrap().values()[0], 0.5);
    }

    #[test]
    fn negated_gradient_negates_update() {
        let cfg = AdamConfig::default();
        let mut a = scalar_set(0.0);
        let mut b = scalar_set(0.0);
        for g in [0.3, -1.2, 2.5] {
            let ga = grads_of(&a, g);
            let gb = grads_of(&b, -g);
            adam_step(&mut a, &ga, &cfg).unwrap();
            adam_step(&mut b, &gb, &cfg).unwrap();
            assert_eq!(a.get("p").unwrap().values()[0], -b.get("p").unwrap().values()[0]);
        }
    }

    #[test]
    fn constant_gradient_update_bounded_by_learning_rate() {
        let cfg = AdamConfig::default();
        let mut set = scalar_set(0.0);
        let mut prev = 0.0;
        for _ in 0..50 {
            let grads = grads_of(&set, 3.7);
            adam_step(&mut set, &grads, &cfg).unwrap();
            let now = set.get("p").unwrap().values()[0];
            assert!((now - prev).abs() <= cfg.learning_rate * (1.0 + 1e-9));
            prev = now;
        }
    }

    #[test]
    fn rejects_mismatched_gradients_and_bad_config() {
        let mut set = scalar_set(1.0);
        let mut other = ParameterSet::<f64>::new();
        other.add("q", Tensor::vector(vec![0.0, 0.0]).unwrap());
        let wrong = other.zero_gradients();
        assert!(adam_step(&mut set, &wrong, &AdamConfig::default()).is_err());
        let grads = grads_of(&set, 1.0);
        let bad = AdamConfig {
            beta2: 1.0,
            ..AdamConfig::default()
        };
        assert!(adam_step(&mut set, &grads, &bad).is_err());
        assert_eq!(set.step(), 0);
    }
}
