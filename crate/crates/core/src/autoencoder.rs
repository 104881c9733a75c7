//! Denoising recurrent auto-encoder.
//!
//! The encoder is a stack of LSTM layers of decreasing width; the final hidden
//! state of the last layer after all timesteps is the latent vector. The
//! decoder mirrors the widths: the latent becomes the initial hidden state of
//! its first layer, every timestep receives a zero input, and a linear
//! projection maps the top layer's output to the three axes.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::lstm::LstmTrace;
use crate::nn::ops::{reconstruction_loss_grad, squared_error};
use crate::nn::{adam_step, AdamConfig, Dense, Gradients, LstmLayer, ParameterSet};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, derived_rng, rng_from};
use crate::signal::{SignalWindow, WindowOrigin, WindowedDataset, AXES};

/// Encoder output with the window (and noise draw) it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentVector<S> {
    pub values: Vec<S>,
    pub origin: Option<WindowOrigin>,
    pub noise_seed: Option<u64>,
}

fn check_widths(widths: &[usize]) -> Result<()> {
    if widths.is_empty() || widths.contains(&0) {
        return Err(Error::invalid(format!("LSTM widths must be positive: {widths:?}")));
    }
    if widths.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid(format!("encoder widths must strictly decrease: {widths:?}")));
    }
    Ok(())
}

fn check_features<S>(features: &[S], steps: usize) -> Result<()> {
    if features.len() != AXES * steps {
        return Err(Error::ShapeMismatch {
            expected: vec![AXES, steps],
            found: vec![features.len()],
        });
    }
    Ok(())
}

/// Axis-major `3 × steps` values to one 3-vector per timestep.
fn to_sequence<S: Scalar>(features: &[S], steps: usize) -> Vec<Vec<S>> {
    (0..steps)
        .map(|t| (0..AXES).map(|a| features[a * steps + t]).collect())
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderStack<S> {
    steps: usize,
    params: ParameterSet<S>,
    layers: Vec<LstmLayer>,
}

struct EncoderTrace<S> {
    inputs: Vec<Vec<Vec<S>>>,
    traces: Vec<LstmTrace<S>>,
}

impl<S: Scalar> EncoderStack<S> {
    pub fn new(widths: &[usize], steps: usize, seed: u64) -> Result<Self> {
        check_widths(widths)?;
        if steps == 0 {
            return Err(Error::invalid("window must have at least one step"));
        }
        let mut rng = rng_from(seed);
        let mut params = ParameterSet::new();
        let mut inputs = AXES;
        let layers = widths
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let l = LstmLayer::new(&mut params, &format!("enc{i}"), inputs, w, &mut rng);
                inputs = w;
                l
            })
            .collect();
        Ok(Self { steps, params, layers })
    }

    pub fn from_parts(widths: &[usize], steps: usize, params: ParameterSet<S>) -> Result<Self> {
        check_widths(widths)?;
        let layers: Vec<LstmLayer> = (0..widths.len())
            .map(|i| LstmLayer::bind(&params, &format!("enc{i}")))
            .collect::<Result<_>>()?;
        let mut inputs = AXES;
        for (l, &w) in layers.iter().zip(widths) {
            if l.inputs != inputs || l.hidden != w {
                return Err(Error::Decode("encoder parameters disagree with widths".into()));
            }
            inputs = w;
        }
        if params.len() != 3 * layers.len() {
            return Err(Error::Decode("unexpected encoder parameters".into()));
        }
        Ok(Self { steps, params, layers })
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.hidden).collect()
    }

    pub fn latent_width(&self) -> usize {
        self.layers.last().expect("non-empty stack").hidden
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn params(&self) -> &ParameterSet<S> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet<S> {
        &mut self.params
    }

    pub fn encode(&self, features: &[S]) -> Result<Vec<S>> {
        check_features(features, self.steps)?;
        Ok(self.forward(features).traces.last().unwrap().last_hidden().to_vec())
    }

    pub fn encode_window(&self, window: &SignalWindow) -> Result<LatentVector<S>> {
        if window.width != self.steps {
            return Err(Error::invalid(format!(
                "window width {} but encoder expects {}",
                window.width, self.steps
            )));
        }
        let features: Vec<S> = window.values.iter().map(|&v| S::lit(v)).collect();
        Ok(LatentVector {
            values: self.encode(&features)?,
            origin: Some(window.origin.clone()),
            noise_seed: None,
        })
    }

    fn forward(&self, features: &[S]) -> EncoderTrace<S> {
        let mut xs = to_sequence(features, self.steps);
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut traces: Vec<LstmTrace<S>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let trace = layer.forward(&self.params, &xs, None, None);
            let next = trace.outputs().to_vec();
            inputs.push(xs);
            traces.push(trace);
            xs = next;
        }
        EncoderTrace { inputs, traces }
    }

    fn backward(&self, trace: &EncoderTrace<S>, dlatent: &[S], grads: &mut Gradients<S>) {
        let steps = self.steps;
        let mut dhs = vec![vec![S::zero(); dlatent.len()]; steps];
        dhs[steps - 1] = dlatent.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            dhs = layer
                .backward(&self.params, &trace.inputs[i], &trace.traces[i], &dhs, grads)
                .dxs;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderStack<S> {
    steps: usize,
    params: ParameterSet<S>,
    layers: Vec<LstmLayer>,
    projection: Dense,
}

struct DecoderTrace<S> {
    inputs: Vec<Vec<Vec<S>>>,
    traces: Vec<LstmTrace<S>>,
    output: Vec<S>,
}

impl<S: Scalar> DecoderStack<S> {
    /// `widths` increase; the first equals the latent width.
    pub fn new(widths: &[usize], steps: usize, seed: u64) -> Result<Self> {
        let mut reversed = widths.to_vec();
        reversed.reverse();
        check_widths(&reversed)?;
        let mut rng = rng_from(seed);
        let mut params = ParameterSet::new();
        let mut inputs = AXES;
        let layers: Vec<LstmLayer> = widths
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let l = LstmLayer::new(&mut params, &format!("dec{i}"), inputs, w, &mut rng);
                inputs = w;
                l
            })
            .collect();
        let projection = Dense::new(&mut params, "projection", inputs, AXES, &mut rng);
        Ok(Self {
            steps,
            params,
            layers,
            projection,
        })
    }

    /// Decoder mirroring `encoder`.
    pub fn mirror(encoder: &EncoderStack<S>, seed: u64) -> Result<Self> {
        let mut widths = encoder.widths();
        widths.reverse();
        Self::new(&widths, encoder.steps(), seed)
    }

    pub fn from_parts(widths: &[usize], steps: usize, params: ParameterSet<S>) -> Result<Self> {
        let mut reversed = widths.to_vec();
        reversed.reverse();
        check_widths(&reversed)?;
        let layers: Vec<LstmLayer> = (0..widths.len())
            .map(|i| LstmLayer::bind(&params, &format!("dec{i}")))
            .collect::<Result<_>>()?;
        let projection = Dense::bind(&params, "projection")?;
        let mut inputs = AXES;
        for (l, &w) in layers.iter().zip(widths) {
            if l.inputs != inputs || l.hidden != w {
                return Err(Error::Decode("decoder parameters disagree with widths".into()));
            }
            inputs = w;
        }
        if projection.inputs != inputs || projection.outputs != AXES || params.len() != 3 * layers.len() + 2 {
            return Err(Error::Decode("unexpected decoder parameters".into()));
        }
        Ok(Self {
            steps,
            params,
            layers,
            projection,
        })
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.hidden).collect()
    }

    pub fn latent_width(&self) -> usize {
        self.layers[0].hidden
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn params(&self) -> &ParameterSet<S> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet<S> {
        &mut self.params
    }

    pub fn projection(&self) -> &Dense {
        &self.projection
    }

    /// Reconstructed `3 × steps` values, axis-major.
    pub fn decode(&self, latent: &[S]) -> Result<Vec<S>> {
        if latent.len() != self.latent_width() {
            return Err(Error::ShapeMismatch {
                expected: vec![self.latent_width()],
                found: vec![latent.len()],
            });
        }
        Ok(self.forward(latent).output)
    }

    fn forward(&self, latent: &[S]) -> DecoderTrace<S> {
        let steps = self.steps;
        let mut xs = vec![vec![S::zero(); AXES]; steps];
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut traces: Vec<LstmTrace<S>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let h0 = (i == 0).then_some(latent);
            let trace = layer.forward(&self.params, &xs, h0, None);
            let next = trace.outputs().to_vec();
            inputs.push(xs);
            traces.push(trace);
            xs = next;
        }
        let mut output = vec![S::zero(); AXES * steps];
        for (t, h) in xs.iter().enumerate() {
            let y = self.projection.forward(&self.params, h);
            for a in 0..AXES {
                output[a * steps + t] = y[a];
            }
        }
        DecoderTrace { inputs, traces, output }
    }

    /// Returns the gradient with respect to the latent.
    fn backward(&self, trace: &DecoderTrace<S>, doutput: &[S], grads: &mut Gradients<S>) -> Vec<S> {
        let steps = self.steps;
        let top = trace.traces.last().unwrap();
        let mut dhs: Vec<Vec<S>> = (0..steps)
            .map(|t| {
                let dy: Vec<S> = (0..AXES).map(|a| doutput[a * steps + t]).collect();
                self.projection.backward(&self.params, &top.outputs()[t], &dy, grads)
            })
            .collect();
        let mut dh0 = Vec::new();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let back = layer.backward(&self.params, &trace.inputs[i], &trace.traces[i], &dhs, grads);
            dhs = back.dxs;
            dh0 = back.dh0;
        }
        dh0
    }
}

/// A trained or training encoder/decoder pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder<S> {
    pub encoder: EncoderStack<S>,
    pub decoder: DecoderStack<S>,
}

impl<S: Scalar> Autoencoder<S> {
    pub fn new(encoder_widths: &[usize], steps: usize, seed: u64) -> Result<Self> {
        let encoder = EncoderStack::new(encoder_widths, steps, derive_seed(seed, "encoder"))?;
        let decoder = DecoderStack::mirror(&encoder, derive_seed(seed, "decoder"))?;
        Ok(Self { encoder, decoder })
    }

    pub fn pair(encoder: EncoderStack<S>, decoder: DecoderStack<S>) -> Result<Self> {
        if encoder.latent_width() != decoder.latent_width() || encoder.steps() != decoder.steps() {
            return Err(Error::invalid("encoder and decoder do not match"));
        }
        Ok(Self { encoder, decoder })
    }

    pub fn steps(&self) -> usize {
        self.encoder.steps()
    }

    pub fn reconstruct(&self, features: &[S]) -> Result<Vec<S>> {
        self.decoder.decode(&self.encoder.encode(features)?)
    }

    /// Squared reconstruction loss of `target` from `input`, with gradients.
    pub fn loss_and_gradients(
        &self,
        input: &[S],
        target: &[S],
        encoder_grads: &mut Gradients<S>,
        decoder_grads: &mut Gradients<S>,
    ) -> Result<S> {
        check_features(input, self.steps())?;
        check_features(target, self.steps())?;
        let enc = self.encoder.forward(input);
        let latent = enc.traces.last().unwrap().last_hidden();
        let dec = self.decoder.forward(latent);
        let loss = squared_error(target, &dec.output);
        let dout = reconstruction_loss_grad(target, &dec.output);
        let dlatent = self.decoder.backward(&dec, &dout, decoder_grads);
        self.encoder.backward(&enc, &dlatent, encoder_grads);
        Ok(loss)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AeTrainConfig {
    pub encoder_widths: Vec<usize>,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    /// Noisy copies of every clean window per epoch.
    pub copies: usize,
    /// Noise standard deviation as a multiple of each axis' spread in the training set.
    pub noise_scale: f64,
    /// Explicit per-axis noise; overrides `noise_scale`.
    pub noise_sigma: Option<[f64; AXES]>,
    pub holdout_fraction: f64,
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for AeTrainConfig {
    fn default() -> Self {
        Self {
            encoder_widths: vec![64, 32, 16],
            adam: AdamConfig::default().with_learning_rate(0.003),
            batch_size: 32,
            max_epochs: 500,
            patience: 10,
            min_delta: 1e-4,
            copies: 10,
            noise_scale: 0.1,
            noise_sigma: None,
            holdout_fraction: 0.1,
            clip_norm: Some(5.0),
            seed: 0,
        }
    }
}

impl AeTrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        check_widths(&self.encoder_widths)?;
        if self.batch_size == 0 || self.max_epochs == 0 || self.copies == 0 {
            return Err(Error::invalid("batch size, epoch cap and copies must be positive"));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) || !(self.noise_scale >= 0.0) {
            return Err(Error::invalid("invalid holdout fraction or noise scale"));
        }
        Ok(())
    }

    pub fn sigma_for(&self, train: &WindowedDataset) -> [f64; AXES] {
        self.noise_sigma.unwrap_or_else(|| {
            let std = train.axis_std();
            std.map(|s| self.noise_scale * s)
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AeEpoch {
    pub epoch: usize,
    /// Mean per-window loss over the noisy training corpus.
    pub train_loss: f64,
    pub holdout_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AeTrainingReport {
    pub epochs: Vec<AeEpoch>,
    pub best_epoch: usize,
    pub noise_sigma: [f64; AXES],
    pub holdout_windows: usize,
}

impl AeTrainingReport {
    pub fn initial_holdout_loss(&self) -> f64 {
        self.epochs[0].holdout_loss
    }

    pub fn best_holdout_loss(&self) -> f64 {
        self.epochs[self.best_epoch].holdout_loss
    }
}

fn noisy_features<S: Scalar, R: Rng + ?Sized>(clean: &[S], sigma: &[f64; AXES], steps: usize, rng: &mut R) -> Vec<S> {
    let mut out = clean.to_vec();
    for a in 0..AXES {
        if sigma[a] > 0.0 {
            let normal = Normal::new(0.0, sigma[a]).expect("validated sigma");
            for v in &mut out[a * steps..(a + 1) * steps] {
                *v += S::lit(normal.sample(rng));
            }
        }
    }
    out
}

fn mean_loss<S: Scalar>(ae: &Autoencoder<S>, pairs: &[(Vec<S>, usize)], clean: &[Vec<S>]) -> Result<f64> {
    let mut total = 0.0;
    for (noisy, idx) in pairs {
        let rec = ae.reconstruct(noisy)?;
        total += squared_error(&clean[*idx], &rec).to_f64_lossless();
    }
    Ok(total / pairs.len().max(1) as f64)
}

/// Trains a denoising auto-encoder on clean windows: every epoch draws
/// `copies` fresh noisy versions of each window and minimizes the squared
/// error of their reconstructions against the clean originals. Stops after
/// `patience` epochs without held-out improvement and restores the best epoch.
pub fn train_autoencoder<S: Scalar>(
    train: &WindowedDataset,
    config: &AeTrainConfig,
) -> Result<(Autoencoder<S>, AeTrainingReport)> {
    config.validate()?;
    let steps = train
        .width()
        .ok_or_else(|| Error::invalid("cannot train an auto-encoder on an empty dataset"))?;
    let sigma = config.sigma_for(train);
    let clean: Vec<Vec<S>> = train
        .windows
        .iter()
        .map(|w| w.values.iter().map(|&v| S::lit(v)).collect())
        .collect();

    let n = clean.len();
    let mut order: Vec<usize> = (0..n).collect();
    let held = (config.holdout_fraction * n as f64).round() as usize;
    let (fit, holdout) = if held == 0 || held >= n {
        (order.clone(), order.clone())
    } else {
        order.shuffle(&mut derived_rng(config.seed, "holdout"));
        let h = order.split_off(n - held);
        (order, h)
    };
    let mut holdout_rng = derived_rng(config.seed, "holdout-noise");
    let holdout_pairs: Vec<(Vec<S>, usize)> = holdout
        .iter()
        .map(|&i| (noisy_features(&clean[i], &sigma, steps, &mut holdout_rng), i))
        .collect();

    let mut ae = Autoencoder::new(&config.encoder_widths, steps, config.seed)?;
    let initial = mean_loss(&ae, &holdout_pairs, &clean)?;
    let mut report = AeTrainingReport {
        epochs: vec![AeEpoch {
            epoch: 0,
            train_loss: f64::NAN,
            holdout_loss: initial,
        }],
        best_epoch: 0,
        noise_sigma: sigma,
        holdout_windows: holdout.len(),
    };
    let mut best = initial;
    let mut best_ae = ae.clone();
    let mut stale = 0;
    let mut rng = derived_rng(config.seed, "train");
    let mut genc = ae.encoder.params().zero_gradients();
    let mut gdec = ae.decoder.params().zero_gradients();

    for epoch in 1..=config.max_epochs {
        let mut corpus: Vec<(Vec<S>, usize)> = Vec::with_capacity(fit.len() * config.copies);
        for &i in &fit {
            for _ in 0..config.copies {
                corpus.push((noisy_features(&clean[i], &sigma, steps, &mut rng), i));
            }
        }
        corpus.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in corpus.chunks(config.batch_size) {
            genc.zero();
            gdec.zero();
            for (noisy, i) in batch {
                total += ae
                    .loss_and_gradients(noisy, &clean[*i], &mut genc, &mut gdec)?
                    .to_f64_lossless();
            }
            let k = S::lit(1.0 / batch.len() as f64);
            genc.scale(k);
            gdec.scale(k);
            if !(genc.is_finite() && gdec.is_finite()) {
                return Err(Error::Divergence(format!("non-finite auto-encoder gradient in epoch {epoch}")));
            }
            if let Some(c) = config.clip_norm {
                let norm = (genc.global_norm().powi(2) + gdec.global_norm().powi(2)).sqrt();
                let c = S::lit(c);
                if norm > c {
                    genc.scale(c / norm);
                    gdec.scale(c / norm);
                }
            }
            adam_step(ae.encoder.params_mut(), &genc, &config.adam)?;
            adam_step(ae.decoder.params_mut(), &gdec, &config.adam)?;
        }
        let train_loss = total / corpus.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::Divergence(format!("auto-encoder loss {train_loss} in epoch {epoch}")));
        }
        let holdout_loss = mean_loss(&ae, &holdout_pairs, &clean)?;
        report.epochs.push(AeEpoch {
            epoch,
            train_loss,
            holdout_loss,
        });
        if holdout_loss < best - config.min_delta {
            best = holdout_loss;
            best_ae = ae.clone();
            report.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    Ok((best_ae, report))
}

/// Synthetic corpus: decoded windows and the latents they were decoded from.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedCorpus<S> {
    pub windows: WindowedDataset,
    pub latents: Vec<LatentVector<S>>,
}

/// For each source window, `copies` noisy versions are encoded and decoded;
/// outputs keep the source label and are tagged synthetic.
pub fn augment_dataset<S: Scalar>(
    train: &WindowedDataset,
    ae: &Autoencoder<S>,
    sigma: &[f64; AXES],
    copies: usize,
    seed: u64,
) -> Result<AugmentedCorpus<S>> {
    if copies == 0 {
        return Err(Error::invalid("augmentation needs at least one copy"));
    }
    let steps = ae.steps();
    let mut windows = Vec::with_capacity(train.len() * copies);
    let mut latents = Vec::with_capacity(train.len() * copies);
    for (i, w) in train.windows.iter().enumerate() {
        if w.width != steps {
            return Err(Error::invalid(format!(
                "window width {} but auto-encoder expects {steps}",
                w.width
            )));
        }
        let clean: Vec<S> = w.values.iter().map(|&v| S::lit(v)).collect();
        for k in 0..copies {
            let noise_seed = derive_seed(seed, &format!("augment-{i}-{k}"));
            let noisy = noisy_features(&clean, sigma, steps, &mut rng_from(noise_seed));
            let latent = ae.encoder.encode(&noisy)?;
            let decoded = ae.decoder.decode(&latent)?;
            let origin = WindowOrigin {
                synthetic: true,
                ..w.origin.clone()
            };
            windows.push(SignalWindow::new(
                decoded.iter().map(|v| v.to_f64_lossless()).collect(),
                steps,
                w.label,
                origin.clone(),
            )?);
            latents.push(LatentVector {
                values: latent,
                origin: Some(origin),
                noise_seed: Some(noise_seed),
            });
        }
    }
    Ok(AugmentedCorpus {
        windows: WindowedDataset::new(windows, seed)?,
        latents,
    })
}
