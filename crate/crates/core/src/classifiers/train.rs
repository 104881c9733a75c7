use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::classifiers::Classifier;
use crate::error::{Error, Result};
use crate::nn::{adam_step, AdamConfig};
use crate::scalar::Scalar;
use crate::seed::derived_rng;

/// Mini-batch Adam with early stopping on a held-out slice of the training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without an improvement of at least `min_delta` before stopping.
    pub patience: usize,
    pub min_delta: f64,
    /// Share of the examples held out for the stopping rule. Sets with fewer
    /// than `min_holdout_examples` monitor the training loss instead.
    pub holdout_fraction: f64,
    pub min_holdout_examples: usize,
    /// Optional global gradient-norm clip.
    pub clip_norm: Option<f64>,
    pub seed: u64,
    /// Seeds the holdout split when set, so that several models can share one.
    pub holdout_seed: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 32,
            max_epochs: 500,
            patience: 10,
            min_delta: 1e-4,
            holdout_fraction: 0.1,
            min_holdout_examples: 100,
            clip_norm: None,
            seed: 0,
            holdout_seed: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::invalid("batch size and epoch cap must be positive"));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::invalid(format!(
                "holdout fraction {} outside [0, 1)",
                self.holdout_fraction
            )));
        }
        Ok(())
    }

    /// Splits example indices into (fit, holdout). Examples sharing a group id
    /// (e.g. copies of one source window) land on the same side.
    pub(crate) fn holdout_split(&self, groups: &[usize]) -> (Vec<usize>, Vec<usize>) {
        let n = groups.len();
        let mut ids: Vec<usize> = groups.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let held = (self.holdout_fraction * ids.len() as f64).round() as usize;
        if n < self.min_holdout_examples || held == 0 || held >= ids.len() {
            return ((0..n).collect(), Vec::new());
        }
        ids.shuffle(&mut derived_rng(self.holdout_seed.unwrap_or(self.seed), "holdout"));
        let held_ids: BTreeSet<usize> = ids.split_off(ids.len() - held).into_iter().collect();
        (0..n).partition(|i| !held_ids.contains(&groups[*i]))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss over the fitted examples; epoch 0 is the untrained model.
    pub loss: f64,
    pub accuracy: f64,
    pub holdout_loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl TrainingCurve {
    pub fn initial_loss(&self) -> Option<f64> {
        self.epochs.first().map(|e| e.loss)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }

    /// `epoch,loss,accuracy` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,accuracy\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{},{:.6},{:.6}", e.epoch, e.loss, e.accuracy);
        }
        out
    }
}

fn evaluate<S: Scalar, C: Classifier<S> + ?Sized>(
    model: &C,
    features: &[Vec<S>],
    labels: &[usize],
    indices: &[usize],
) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for &i in indices {
        let dist = model.classify(&features[i])?;
        let target = crate::nn::OneHotTarget::new(labels[i], model.classes())?;
        loss += crate::nn::cross_entropy(dist.probs(), target)?.to_f64_lossless();
        correct += usize::from(dist.argmax() == labels[i]);
    }
    let n = indices.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Minimizes mean categorical cross-entropy. The parameters of the best
/// monitored epoch are restored before returning. `groups` ties examples that
/// must share a side of the holdout split; `None` treats all as independent.
pub fn train_classifier<S: Scalar, C: Classifier<S> + ?Sized>(
    model: &mut C,
    features: &[Vec<S>],
    labels: &[usize],
    groups: Option<&[usize]>,
    config: &TrainConfig,
) -> Result<TrainingCurve> {
    config.validate()?;
    if features.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    if features.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} feature vectors for {} labels",
            features.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= model.classes()) {
        return Err(Error::invalid(format!("label {bad} outside {} classes", model.classes())));
    }
    for f in features {
        model.feature_kind().check(f)?;
    }

    let identity: Vec<usize>;
    let groups = match groups {
        Some(g) if g.len() != features.len() => {
            return Err(Error::invalid(format!("{} group ids for {} examples", g.len(), features.len())));
        }
        Some(g) => g,
        None => {
            identity = (0..features.len()).collect();
            &identity
        }
    };
    let (fit, holdout) = config.holdout_split(groups);
    let mut rng = derived_rng(config.seed, "order");
    let monitor = |m: &C, train_loss: f64| -> Result<(f64, Option<f64>)> {
        if holdout.is_empty() {
            Ok((train_loss, None))
        } else {
            let (l, _) = evaluate(m, features, labels, &holdout)?;
            Ok((l, Some(l)))
        }
    };

    let (loss0, acc0) = evaluate(model, features, labels, &fit)?;
    let (mut best, holdout0) = monitor(model, loss0)?;
    let mut curve = TrainingCurve {
        epochs: vec![EpochRecord {
            epoch: 0,
            loss: loss0,
            accuracy: acc0,
            holdout_loss: holdout0,
        }],
        best_epoch: 0,
    };
    let mut best_params = model.params().clone();
    let mut stale = 0;
    let mut order = fit.clone();
    let mut grads = model.params().zero_gradients();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(config.batch_size) {
            grads.zero();
            for &i in batch {
                let (loss, predicted) = model.accumulate_gradients(&features[i], labels[i], &mut grads)?;
                correct += usize::from(predicted == labels[i]);
                total += loss.to_f64_lossless();
            }
            grads.scale(S::lit(1.0 / batch.len() as f64));
            if !grads.is_finite() {
                return Err(Error::Divergence(format!("non-finite gradient in epoch {epoch}")));
            }
            if let Some(c) = config.clip_norm {
                grads.clip_global_norm(S::lit(c));
            }
            adam_step(model.params_mut(), &grads, &config.adam)?;
        }
        let loss = total / fit.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("loss {loss} in epoch {epoch}")));
        }
        let (monitored, holdout_loss) = monitor(model, loss)?;
        curve.epochs.push(EpochRecord {
            epoch,
            loss,
            accuracy: correct as f64 / fit.len() as f64,
            holdout_loss,
        });
        if monitored < best - config.min_delta {
            best = monitored;
            best_params = model.params().clone();
            curve.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    *model.params_mut() = best_params;
    model.mark_trained();
    Ok(curve)
}
