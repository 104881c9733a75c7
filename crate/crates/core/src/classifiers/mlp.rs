use serde::{Deserialize, Serialize};

use crate::classifiers::{check_classes, loss_head, permute_output_rows, Classifier, FeatureKind, DEFAULT_CLASSES};
use crate::error::{Error, Result};
use crate::nn::ops::{tanh_backward, tanh_in_place};
use crate::nn::{Dense, Gradients, OneHotTarget, ParameterSet};
use crate::scalar::Scalar;
use crate::seed::rng_from;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input: FeatureKind,
    /// Widths of the tanh hidden layers; two for the three-layer network.
    pub hidden: Vec<usize>,
    pub classes: usize,
}

impl MlpConfig {
    pub fn new(input: FeatureKind, hidden: Vec<usize>) -> Self {
        Self {
            input,
            hidden,
            classes: DEFAULT_CLASSES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_classes(self.classes)?;
        if self.input.width() == 0 || self.hidden.contains(&0) {
            return Err(Error::invalid(format!("MLP widths must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Feed-forward network: dense layers with tanh between them, softmax output.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpClassifier<S> {
    config: MlpConfig,
    params: ParameterSet<S>,
    layers: Vec<Dense>,
    trained: bool,
}

impl<S: Scalar> MlpClassifier<S> {
    pub fn new(config: MlpConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from(seed);
        let mut params = ParameterSet::new();
        let mut widths = vec![config.input.width()];
        widths.extend(&config.hidden);
        widths.push(config.classes);
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::new(&mut params, &format!("dense{i}"), w[0], w[1], &mut rng))
            .collect();
        Ok(Self {
            config,
            params,
            layers,
            trained: false,
        })
    }

    /// Rebuilds a model around existing parameters, e.g. from a checkpoint.
    pub fn from_parts(config: MlpConfig, params: ParameterSet<S>, trained: bool) -> Result<Self> {
        config.validate()?;
        let layers: Vec<Dense> = (0..=config.hidden.len())
            .map(|i| Dense::bind(&params, &format!("dense{i}")))
            .collect::<Result<_>>()?;
        let mut expected = vec![config.input.width()];
        expected.extend(&config.hidden);
        expected.push(config.classes);
        let consistent = layers
            .iter()
            .zip(expected.windows(2))
            .all(|(l, w)| l.inputs == w[0] && l.outputs == w[1]);
        if !consistent || params.len() != 2 * layers.len() {
            return Err(Error::Decode("MLP parameters disagree with configuration".into()));
        }
        Ok(Self {
            config,
            params,
            layers,
            trained,
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn output_layer(&self) -> &Dense {
        self.layers.last().expect("at least one layer")
    }

    /// Reorders the output categories: output `perm[i]` takes over output `i`.
    pub fn permute_outputs(&mut self, perm: &[usize]) -> Result<()> {
        let out = self.output_layer().clone();
        permute_output_rows(&mut self.params, out.weight, out.bias, perm)
    }

    fn backward_trace(&self, acts: &[Vec<S>], dlogits: &[S], grads: &mut Gradients<S>) {
        let mut dy = dlogits.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let dx = layer.backward(&self.params, &acts[i], &dy, grads);
            if i > 0 {
                dy = tanh_backward(&acts[i], &dx);
            }
        }
    }

    /// Activations entering each layer, followed by the logits.
    fn forward_trace(&self, x: &[S]) -> Vec<Vec<S>> {
        let mut acts = vec![x.to_vec()];
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(&self.params, acts.last().unwrap());
            if i < last {
                tanh_in_place(&mut y);
            }
            acts.push(y);
        }
        acts
    }
}

impl<S: Scalar> Classifier<S> for MlpClassifier<S> {
    fn feature_kind(&self) -> FeatureKind {
        self.config.input
    }

    fn classes(&self) -> usize {
        self.config.classes
    }

    fn params(&self) -> &ParameterSet<S> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParameterSet<S> {
        &mut self.params
    }

    fn logits(&self, features: &[S]) -> Result<Vec<S>> {
        self.config.input.check(features)?;
        Ok(self.forward_trace(features).pop().expect("logits"))
    }

    fn backward_logits(&self, features: &[S], dlogits: &[S], grads: &mut Gradients<S>) -> Result<()> {
        self.config.input.check(features)?;
        let acts = self.forward_trace(features);
        self.backward_trace(&acts, dlogits, grads);
        Ok(())
    }

    fn accumulate_gradients(&self, features: &[S], label: usize, grads: &mut Gradients<S>) -> Result<(S, usize)> {
        self.config.input.check(features)?;
        let acts = self.forward_trace(features);
        let target = OneHotTarget::new(label, self.config.classes)?;
        let (loss, dlogits, predicted) = loss_head(acts.last().expect("logits"), target)?;
        self.backward_trace(&acts, &dlogits, grads);
        Ok((loss, predicted))
    }

    fn is_trained(&self) -> bool {
        self.trained
    }

    fn mark_trained(&mut self) {
        self.trained = true;
    }
}
