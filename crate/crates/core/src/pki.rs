//! Prior-knowledge input modulation: a small tanh network that sees the
//! features together with a frozen base classifier's prediction and outputs a
//! corrected category distribution.

use serde::{Deserialize, Serialize};

use crate::classifiers::{train_classifier, CategoryDistribution, Classifier, FeatureKind, MlpClassifier, MlpConfig, TrainConfig, TrainingCurve};
use crate::error::{Error, Result};
use crate::nn::{OneHotTarget, ParameterSet};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PkiConfig {
    pub hidden: Vec<usize>,
    /// Start from a network whose output ranks categories exactly as the
    /// prior does, so training learns a correction to the base classifier.
    pub prior_init: bool,
}

impl Default for PkiConfig {
    fn default() -> Self {
        Self {
            hidden: vec![16, 8],
            prior_init: false,
        }
    }
}

/// Gain of the output path in a prior-initialized network; a one-hot prior
/// then maps to roughly 0.97 on its category.
const PRIOR_OUTPUT_GAIN: f64 = 8.0;

impl PkiConfig {
    pub fn paper() -> Self {
        Self {
            hidden: vec![64, 32],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.len() != 2 || self.hidden.contains(&0) {
            return Err(Error::invalid(format!("PKI needs two positive hidden widths, got {:?}", self.hidden)));
        }
        Ok(())
    }
}

/// Routes prior component `c` through hidden unit `c` of both layers with
/// unit gain and makes it the only input of output `c`. Each logit is then an
/// increasing function of its own prior probability; the remaining units keep
/// their random weights but start disconnected from the output.
fn init_from_prior<S: Scalar>(params: &mut ParameterSet<S>, features: usize, classes: usize) -> Result<()> {
    let diagonal = |params: &mut ParameterSet<S>, layer: usize, offset: usize, gain: f64, whole: bool| {
        let w = params.get_mut(&format!("dense{layer}.weight")).expect("MLP layer");
        let cols = w.shape()[1];
        let rows = if whole { w.shape()[0] } else { classes };
        for r in 0..rows {
            for c in 0..cols {
                w.values_mut()[r * cols + c] = S::zero();
            }
            if r < classes {
                w.values_mut()[r * cols + offset + r] = S::lit(gain);
            }
        }
        let b = params.get_mut(&format!("dense{layer}.bias")).expect("MLP layer");
        for v in &mut b.values_mut()[..rows] {
            *v = S::zero();
        }
    };
    let widths: Vec<usize> = (0..2)
        .map(|l| params.get(&format!("dense{l}.weight")).map(|w| w.shape()[0]).unwrap_or(0))
        .collect();
    if widths.iter().any(|&w| w < classes) {
        return Err(Error::invalid(format!(
            "prior initialization needs hidden widths of at least {classes}, got {widths:?}"
        )));
    }
    diagonal(params, 0, features, 1.0, false);
    diagonal(params, 1, 0, 1.0, false);
    diagonal(params, 2, 0, PRIOR_OUTPUT_GAIN, true);
    Ok(())
}

/// Input is `features ++ P_c`, in that order.
#[derive(Clone, Debug, PartialEq)]
pub struct PkiNetwork<S> {
    features: FeatureKind,
    base_hash: String,
    mlp: MlpClassifier<S>,
}

impl<S: Scalar> PkiNetwork<S> {
    pub fn new(features: FeatureKind, classes: usize, config: &PkiConfig, base_hash: impl Into<String>, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut mlp_config = MlpConfig::new(FeatureKind::Latent { width: features.width() + classes }, config.hidden.clone());
        mlp_config.classes = classes;
        let mut mlp = MlpClassifier::new(mlp_config, seed)?;
        if config.prior_init {
            init_from_prior(mlp.params_mut(), features.width(), classes)?;
        }
        Ok(Self {
            features,
            base_hash: base_hash.into(),
            mlp,
        })
    }

    pub fn from_parts(features: FeatureKind, base_hash: String, mlp: MlpClassifier<S>) -> Result<Self> {
        if mlp.config().input.width() != features.width() + mlp.classes() || mlp.config().hidden.len() != 2 {
            return Err(Error::Decode("PKI network does not match its feature width".into()));
        }
        Ok(Self { features, base_hash, mlp })
    }

    pub fn feature_kind(&self) -> FeatureKind {
        self.features
    }

    pub fn classes(&self) -> usize {
        self.mlp.classes()
    }

    /// Hash of the base-classifier checkpoint this network was trained against.
    pub fn base_hash(&self) -> &str {
        &self.base_hash
    }

    pub fn mlp(&self) -> &MlpClassifier<S> {
        &self.mlp
    }

    pub fn params(&self) -> &ParameterSet<S> {
        self.mlp.params()
    }

    pub fn is_trained(&self) -> bool {
        self.mlp.is_trained()
    }

    pub fn input(&self, features: &[S], prior: &CategoryDistribution<S>) -> Result<Vec<S>> {
        self.features.check(features)?;
        if prior.probs().len() != self.classes() {
            return Err(Error::invalid(format!(
                "prior has {} categories, PKI expects {}",
                prior.probs().len(),
                self.classes()
            )));
        }
        let mut x = Vec::with_capacity(features.len() + self.classes());
        x.extend_from_slice(features);
        x.extend_from_slice(prior.probs());
        Ok(x)
    }
}

/// Iteration count and per-example residuals `onehot(label) − P_PKI`.
#[derive(Clone, Debug, PartialEq)]
pub struct PkiTrainingState<S> {
    pub iterations: usize,
    pub best_epoch: usize,
    pub errors: Vec<Vec<S>>,
}

impl<S: Scalar> PkiTrainingState<S> {
    pub fn mean_error_norm(&self) -> f64 {
        let total: f64 = self
            .errors
            .iter()
            .map(|e| e.iter().map(|v| v.to_f64_lossless().powi(2)).sum::<f64>().sqrt())
            .sum();
        total / self.errors.len().max(1) as f64
    }
}

pub fn pki_error<S: Scalar>(label: usize, output: &CategoryDistribution<S>) -> Result<Vec<S>> {
    let target = OneHotTarget::new(label, output.probs().len())?;
    Ok(target
        .to_vec::<S>()
        .iter()
        .zip(output.probs())
        .map(|(&t, &p)| t - p)
        .collect())
}

/// Trains a PKI network on `(x, classify(base, x))` against the labels. The
/// base classifier is only read; `groups` is passed to the holdout split.
pub fn pki_train<S: Scalar, C: Classifier<S> + ?Sized>(
    base: &C,
    base_hash: &str,
    features: &[Vec<S>],
    labels: &[usize],
    groups: Option<&[usize]>,
    config: &PkiConfig,
    train: &TrainConfig,
) -> Result<(PkiNetwork<S>, TrainingCurve, PkiTrainingState<S>)> {
    if !base.is_trained() {
        return Err(Error::invalid("PKI needs a trained base classifier"));
    }
    if features.is_empty() {
        return Err(Error::invalid("cannot train PKI on an empty dataset"));
    }
    let mut net = PkiNetwork::new(base.feature_kind(), base.classes(), config, base_hash, train.seed)?;
    let inputs = features
        .iter()
        .map(|x| {
            base.feature_kind().check(x).map_err(|e| Error::invalid(format!("base classifier width mismatch: {e}")))?;
            net.input(x, &base.classify(x)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let curve = train_classifier(&mut net.mlp, &inputs, labels, groups, train)?;
    let errors = inputs
        .iter()
        .zip(labels)
        .map(|(x, &l)| pki_error(l, &net.mlp.classify(x)?))
        .collect::<Result<_>>()?;
    let state = PkiTrainingState {
        iterations: curve.epochs.len() - 1,
        best_epoch: curve.best_epoch,
        errors,
    };
    Ok((net, curve, state))
}

/// `P_PKI = PKI(x, P_c)`.
pub fn pki_infer<S: Scalar>(net: &PkiNetwork<S>, features: &[S], prior: &CategoryDistribution<S>) -> Result<CategoryDistribution<S>> {
    net.mlp.classify(&net.input(features, prior)?)
}

/// Runs the base classifier and then the PKI network on one example.
pub fn pki_classify<S: Scalar, C: Classifier<S> + ?Sized>(net: &PkiNetwork<S>, base: &C, features: &[S]) -> Result<CategoryDistribution<S>> {
    pki_infer(net, features, &base.classify(features)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_prediction_has_zero_error() {
        let d = CategoryDistribution::new(vec![0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(pki_error(2, &d).unwrap(), vec![0.0; 5]);
        let e = pki_error(0, &d).unwrap();
        assert_eq!(e, vec![1.0, 0.0, -1.0, 0.0, 0.0]);
    }

    #[test]
    fn input_concatenates_features_then_prior() {
        let net = PkiNetwork::<f64>::new(FeatureKind::Latent { width: 3 }, 5, &PkiConfig::default(), "h", 0).unwrap();
        let prior = CategoryDistribution::new(vec![0.1, 0.2, 0.3, 0.2, 0.2]).unwrap();
        let x = net.input(&[7.0, 8.0, 9.0], &prior).unwrap();
        assert_eq!(x, vec![7.0, 8.0, 9.0, 0.1, 0.2, 0.3, 0.2, 0.2]);
        assert_eq!(net.mlp().config().input.width(), 8);
        assert!(net.input(&[1.0], &prior).is_err());
        assert!(pki_infer(&net, &[1.0, 2.0], &prior).is_err());
        let out = pki_infer(&net, &[1.0, 2.0, 3.0], &prior).unwrap();
        assert!((out.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(out, pki_infer(&net, &[1.0, 2.0, 3.0], &prior).unwrap());
    }

    #[test]
    fn prior_initialization_preserves_the_ranking() {
        let primed = PkiConfig {
            prior_init: true,
            ..PkiConfig::default()
        };
        let net = PkiNetwork::<f64>::new(FeatureKind::Latent { width: 4 }, 5, &primed, "h", 3).unwrap();
        let prior = CategoryDistribution::new(vec![0.1, 0.05, 0.5, 0.3, 0.05]).unwrap();
        for x in [[0.0; 4], [3.0, -2.0, 1.0, 9.0]] {
            let out = pki_infer(&net, &x, &prior).unwrap();
            let rank = |p: &[f64]| {
                let mut idx: Vec<usize> = (0..5).collect();
                idx.sort_by(|&a, &b| p[b].partial_cmp(&p[a]).unwrap());
                idx
            };
            assert_eq!(rank(out.probs())[..3], rank(prior.probs())[..3]);
            assert_eq!(out.argmax(), 2);
        }
        let narrow = PkiConfig {
            hidden: vec![4, 8],
            ..primed
        };
        assert!(PkiNetwork::<f64>::new(FeatureKind::Latent { width: 4 }, 5, &narrow, "h", 0).is_err());
        let narrow = PkiConfig {
            prior_init: false,
            ..narrow
        };
        assert!(PkiNetwork::<f64>::new(FeatureKind::Latent { width: 4 }, 5, &narrow, "h", 0).is_ok());
    }

    #[test]
    fn untrained_base_is_rejected() {
        let base = MlpClassifier::<f64>::new(MlpConfig::new(FeatureKind::Latent { width: 2 }, vec![4]), 0).unwrap();
        let err = pki_train(&base, "h", &[vec![0.0, 1.0]], &[0], None, &PkiConfig::default(), &TrainConfig::default());
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }
}
