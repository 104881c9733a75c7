//! Base event classifiers and the shared cross-entropy training loop.

mod convlstm;
mod mlp;
mod train;

use serde::{Deserialize, Serialize};

pub use convlstm::{ConvLstmClassifier, ConvLstmConfig};
pub use mlp::{MlpClassifier, MlpConfig};
pub use train::{train_classifier, EpochRecord, TrainConfig, TrainingCurve};

use crate::error::{Error, Result};
use crate::nn::ops::{cross_entropy, softmax, softmax_cross_entropy_grad};
use crate::nn::{Gradients, OneHotTarget, ParameterSet};
use crate::scalar::Scalar;
use crate::signal::{EventCategory, SignalWindow, AXES, CATEGORY_COUNT};

/// What a model consumes: a flattened `3 × steps` window or an encoder latent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Window { steps: usize },
    Latent { width: usize },
}

impl FeatureKind {
    pub fn width(self) -> usize {
        match self {
            FeatureKind::Window { steps } => AXES * steps,
            FeatureKind::Latent { width } => width,
        }
    }

    pub(crate) fn check(self, features: &[impl Copy]) -> Result<()> {
        if features.len() != self.width() {
            return Err(Error::ShapeMismatch {
                expected: vec![self.width()],
                found: vec![features.len()],
            });
        }
        Ok(())
    }
}

/// Axis-major window values converted to the model scalar.
pub fn window_features<S: Scalar>(window: &SignalWindow) -> Vec<S> {
    window.values.iter().map(|&v| S::lit(v)).collect()
}

/// Probability vector over the event categories.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoryDistribution<S> {
    probs: Vec<S>,
}

impl<S: Scalar> CategoryDistribution<S> {
    /// Accepts nonnegative entries summing to one within 1e-9.
    pub fn new(probs: Vec<S>) -> Result<Self> {
        let total: f64 = probs.iter().map(|p| p.to_f64_lossless()).sum();
        if probs.is_empty() || probs.iter().any(|p| !(*p >= S::zero())) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "not a probability distribution (sum {total})"
            )));
        }
        Ok(Self { probs })
    }

    pub fn from_logits(logits: &[S]) -> Result<Self> {
        Ok(Self {
            probs: softmax(logits)?,
        })
    }

    pub fn uniform(classes: usize) -> Self {
        Self {
            probs: vec![S::one() / S::lit(classes as f64); classes],
        }
    }

    pub fn probs(&self) -> &[S] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<S> {
        self.probs
    }

    /// Index of the largest probability; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn predicted(&self) -> Option<EventCategory> {
        EventCategory::from_index(self.argmax())
    }
}

/// A softmax classifier with hand-written backpropagation.
pub trait Classifier<S: Scalar> {
    fn feature_kind(&self) -> FeatureKind;

    fn classes(&self) -> usize;

    fn params(&self) -> &ParameterSet<S>;

    fn params_mut(&mut self) -> &mut ParameterSet<S>;

    /// Unnormalized scores; `features` must match [`Self::feature_kind`].
    fn logits(&self, features: &[S]) -> Result<Vec<S>>;

    /// Recomputes the forward pass and accumulates `∂L/∂θ` for the upstream
    /// gradient `dlogits`.
    fn backward_logits(&self, features: &[S], dlogits: &[S], grads: &mut Gradients<S>) -> Result<()>;

    fn is_trained(&self) -> bool;

    fn mark_trained(&mut self);

    fn classify(&self, features: &[S]) -> Result<CategoryDistribution<S>> {
        CategoryDistribution::from_logits(&self.logits(features)?)
    }

    /// Cross-entropy of one example and its predicted class; accumulates the
    /// loss gradient into `grads`.
    fn accumulate_gradients(&self, features: &[S], label: usize, grads: &mut Gradients<S>) -> Result<(S, usize)> {
        let target = OneHotTarget::new(label, self.classes())?;
        let logits = self.logits(features)?;
        let (loss, dlogits, predicted) = loss_head(&logits, target)?;
        self.backward_logits(features, &dlogits, grads)?;
        Ok((loss, predicted))
    }
}

/// Softmax cross-entropy of `logits`: loss, logit gradient and argmax.
pub(crate) fn loss_head<S: Scalar>(logits: &[S], target: OneHotTarget) -> Result<(S, Vec<S>, usize)> {
    let dist = CategoryDistribution::from_logits(logits)?;
    let loss = cross_entropy(dist.probs(), target)?;
    Ok((loss, softmax_cross_entropy_grad(dist.probs(), target), dist.argmax()))
}

pub(crate) fn check_classes(classes: usize) -> Result<()> {
    if classes < 2 {
        return Err(Error::invalid(format!("need at least two classes, got {classes}")));
    }
    Ok(())
}

pub(crate) const DEFAULT_CLASSES: usize = CATEGORY_COUNT;

/// Permutes the rows of an output layer (and their optimizer state) so output
/// `perm[i]` of the result equals output `i` of the input.
pub(crate) fn permute_output_rows<S: Scalar>(
    params: &mut ParameterSet<S>,
    weight: crate::nn::ParamId,
    bias: crate::nn::ParamId,
    perm: &[usize],
) -> Result<()> {
    let rows = params.value(bias).len();
    let mut seen = vec![false; rows];
    if perm.len() != rows || perm.iter().any(|&p| p >= rows || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::invalid(format!("{perm:?} is not a permutation of {rows} outputs")));
    }
    for id in [weight, bias] {
        params.permute_rows(id, perm);
    }
    Ok(())
}
