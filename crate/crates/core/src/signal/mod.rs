//! Session recordings, sliding-window segmentation, noise injection and
//! train/test splitting.

mod category;
pub mod io;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use category::{EventCategory, CATEGORY_COUNT};

use crate::error::{Error, Result};
use crate::seed::rng_from;

/// Accelerometer axes in storage order.
pub const AXES: usize = 3;
pub const LATERAL: usize = 0;
pub const VERTICAL: usize = 1;
pub const LONGITUDINAL: usize = 2;

pub const SAMPLE_RATE_HZ: u32 = 25;

/// One labeled 3-axis capture; samples are `[lateral, vertical, longitudinal]` in m/s².
#[derive(Clone, Debug, PartialEq)]
pub struct SessionRecording {
    pub session_id: String,
    pub label: EventCategory,
    pub sample_rate_hz: u32,
    pub samples: Vec<[f64; AXES]>,
}

impl SessionRecording {
    pub fn duration_ms(&self) -> f64 {
        self.samples.len() as f64 * 1000.0 / f64::from(self.sample_rate_hz)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WindowOrigin {
    pub session_id: String,
    pub start: usize,
    pub synthetic: bool,
}

/// Fixed-length slice stored axis-major: `values[axis * width + step]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalWindow {
    pub values: Vec<f64>,
    pub width: usize,
    pub label: EventCategory,
    pub origin: WindowOrigin,
}

impl SignalWindow {
    pub fn new(values: Vec<f64>, width: usize, label: EventCategory, origin: WindowOrigin) -> Result<Self> {
        if width == 0 || values.len() != AXES * width {
            return Err(Error::invalid(format!(
                "window of width {width} needs {} values, got {}",
                AXES * width,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("window {:?}", origin)));
        }
        Ok(Self {
            values,
            width,
            label,
            origin,
        })
    }

    pub fn axis(&self, axis: usize) -> &[f64] {
        &self.values[axis * self.width..(axis + 1) * self.width]
    }

    pub fn at(&self, axis: usize, step: usize) -> f64 {
        self.values[axis * self.width + step]
    }
}

/// Window length and overlap; sample counts derive from the 25 Hz rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowSpec {
    pub window_ms: f64,
    pub overlap: f64,
    pub sample_rate_hz: u32,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            window_ms: 600.0,
            overlap: 0.5,
            sample_rate_hz: SAMPLE_RATE_HZ,
        }
    }
}

impl WindowSpec {
    pub fn window_samples(&self) -> usize {
        (self.window_ms * f64::from(self.sample_rate_hz) / 1000.0).round() as usize
    }

    /// `floor(W · (1 − overlap))`: 7 for the default 15-sample window.
    pub fn hop_samples(&self) -> usize {
        (self.window_samples() as f64 * (1.0 - self.overlap) + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::invalid(format!("overlap {} outside [0, 1)", self.overlap)));
        }
        if self.window_samples() == 0 || self.hop_samples() == 0 {
            return Err(Error::invalid(format!(
                "window {} ms with overlap {} yields an empty window or hop",
                self.window_ms, self.overlap
            )));
        }
        Ok(())
    }
}

/// Start indices of every window: `floor((n − w) / h) + 1` of them.
pub fn window_starts(samples: usize, width: usize, hop: usize) -> Vec<usize> {
    if width == 0 || hop == 0 || samples < width {
        return Vec::new();
    }
    (0..=(samples - width) / hop).map(|k| k * hop).collect()
}

pub fn slice_session(session: &SessionRecording, spec: &WindowSpec) -> Result<Vec<SignalWindow>> {
    spec.validate()?;
    if session.sample_rate_hz != spec.sample_rate_hz {
        return Err(Error::invalid(format!(
            "session `{}` recorded at {} Hz, expected {} Hz",
            session.session_id, session.sample_rate_hz, spec.sample_rate_hz
        )));
    }
    let width = spec.window_samples();
    let hop = spec.hop_samples();
    if session.samples.len() < width {
        return Err(Error::SessionTooShort {
            session_id: session.session_id.clone(),
            samples: session.samples.len(),
            window: width,
        });
    }
    window_starts(session.samples.len(), width, hop)
        .into_iter()
        .map(|start| {
            let mut values = vec![0.0; AXES * width];
            for (step, sample) in session.samples[start..start + width].iter().enumerate() {
                for axis in 0..AXES {
                    values[axis * width + step] = sample[axis];
                }
            }
            SignalWindow::new(
                values,
                width,
                session.label,
                WindowOrigin {
                    session_id: session.session_id.clone(),
                    start,
                    synthetic: false,
                },
            )
        })
        .collect()
}

/// Adds independent zero-mean Gaussian noise with a per-axis standard deviation.
pub fn inject_noise_with<R: Rng + ?Sized>(
    window: &SignalWindow,
    sigma: &[f64; AXES],
    rng: &mut R,
) -> Result<SignalWindow> {
    if sigma.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return Err(Error::invalid(format!("noise sigma must be finite and >= 0, got {sigma:?}")));
    }
    let mut out = window.clone();
    for axis in 0..AXES {
        if sigma[axis] == 0.0 {
            continue;
        }
        let normal = Normal::new(0.0, sigma[axis]).expect("validated sigma");
        for v in &mut out.values[axis * window.width..(axis + 1) * window.width] {
            *v += normal.sample(rng);
        }
    }
    Ok(out)
}

pub fn inject_noise(window: &SignalWindow, sigma: f64, seed: u64) -> Result<SignalWindow> {
    inject_noise_with(window, &[sigma; AXES], &mut rng_from(seed))
}

/// `copies` independently noised versions of `window`.
pub fn duplicate_with_noise(
    window: &SignalWindow,
    copies: usize,
    sigma: f64,
    seed: u64,
) -> Result<Vec<SignalWindow>> {
    duplicate_with_noise_axes(window, copies, &[sigma; AXES], &mut rng_from(seed))
}

pub fn duplicate_with_noise_axes<R: Rng + ?Sized>(
    window: &SignalWindow,
    copies: usize,
    sigma: &[f64; AXES],
    rng: &mut R,
) -> Result<Vec<SignalWindow>> {
    if copies == 0 {
        return Err(Error::invalid("duplicate_with_noise needs at least one copy"));
    }
    (0..copies).map(|_| inject_noise_with(window, sigma, rng)).collect()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WindowedDataset {
    pub windows: Vec<SignalWindow>,
    /// Seed the dataset (or its split) was derived with.
    pub seed: u64,
}

impl WindowedDataset {
    pub fn new(windows: Vec<SignalWindow>, seed: u64) -> Result<Self> {
        if let Some(first) = windows.first() {
            if let Some(bad) = windows.iter().find(|w| w.width != first.width) {
                return Err(Error::invalid(format!(
                    "mixed window widths {} and {}",
                    first.width, bad.width
                )));
            }
        }
        Ok(Self { windows, seed })
    }

    /// Slices every session; sessions shorter than one window are an error.
    pub fn from_sessions(sessions: &[SessionRecording], spec: &WindowSpec, seed: u64) -> Result<Self> {
        let mut windows = Vec::new();
        for s in sessions {
            windows.extend(slice_session(s, spec)?);
        }
        Self::new(windows, seed)
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn width(&self) -> Option<usize> {
        self.windows.first().map(|w| w.width)
    }

    pub fn counts(&self) -> [usize; CATEGORY_COUNT] {
        let mut counts = [0; CATEGORY_COUNT];
        for w in &self.windows {
            counts[w.label.index()] += 1;
        }
        counts
    }

    pub fn labels(&self) -> Vec<EventCategory> {
        self.windows.iter().map(|w| w.label).collect()
    }

    /// SHA-256 over labels, origins and value bits, in order.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for w in &self.windows {
            h.update(w.label.as_str().as_bytes());
            h.update(w.origin.session_id.as_bytes());
            h.update((w.origin.start as u64).to_le_bytes());
            h.update([u8::from(w.origin.synthetic)]);
            for v in &w.values {
                h.update(v.to_le_bytes());
            }
        }
        hex(&h.finalize())
    }

    /// Per-axis population standard deviation over all windows.
    pub fn axis_std(&self) -> [f64; AXES] {
        Normalizer::fit(self).std
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Windows are shuffled individually.
    #[default]
    Window,
    /// Whole sessions go to one side, so no session contributes to both.
    Session,
}

/// Shuffled train/test partition. In window mode `|train| = floor(fraction · n)`;
/// both sides keep the dataset's original order.
pub fn split_train_test(
    dataset: &WindowedDataset,
    train_fraction: f64,
    seed: u64,
    mode: SplitMode,
) -> Result<(WindowedDataset, WindowedDataset)> {
    if dataset.is_empty() {
        return Err(Error::invalid("cannot split an empty dataset"));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let n = dataset.len();
    let target = (train_fraction * n as f64 + 1e-9).floor() as usize;
    let mut rng = rng_from(seed);
    let train_idx: BTreeSet<usize> = match mode {
        SplitMode::Window => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            order.into_iter().take(target).collect()
        }
        SplitMode::Session => {
            let mut sessions: Vec<&str> = dataset
                .windows
                .iter()
                .map(|w| w.origin.session_id.as_str())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            sessions.shuffle(&mut rng);
            let mut chosen = BTreeSet::new();
            let mut taken = 0;
            for s in sessions {
                if taken >= target {
                    break;
                }
                let count = dataset.windows.iter().filter(|w| w.origin.session_id == s).count();
                chosen.insert(s);
                taken += count;
            }
            (0..n)
                .filter(|&i| chosen.contains(dataset.windows[i].origin.session_id.as_str()))
                .collect()
        }
    };
    let mut train = Vec::with_capacity(train_idx.len());
    let mut test = Vec::with_capacity(n - train_idx.len());
    for (i, w) in dataset.windows.iter().enumerate() {
        if train_idx.contains(&i) {
            train.push(w.clone());
        } else {
            test.push(w.clone());
        }
    }
    Ok((
        WindowedDataset::new(train, seed)?,
        WindowedDataset::new(test, seed)?,
    ))
}

/// Per-axis z-score transform fitted on training windows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: [f64; AXES],
    pub std: [f64; AXES],
}

impl Normalizer {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; AXES],
            std: [1.0; AXES],
        }
    }

    /// Axes with zero spread keep a unit scale.
    pub fn fit(dataset: &WindowedDataset) -> Self {
        let mut mean = [0.0; AXES];
        let mut std = [1.0; AXES];
        for axis in 0..AXES {
            let values: Vec<f64> = dataset
                .windows
                .iter()
                .flat_map(|w| w.axis(axis).iter().copied())
                .collect();
            if values.is_empty() {
                continue;
            }
            let n = values.len() as f64;
            let m = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean[axis] = m;
            if var > 0.0 {
                std[axis] = var.sqrt();
            }
        }
        Self { mean, std }
    }

    pub fn apply(&self, window: &SignalWindow) -> SignalWindow {
        let mut out = window.clone();
        for axis in 0..AXES {
            for v in &mut out.values[axis * window.width..(axis + 1) * window.width] {
                *v = (*v - self.mean[axis]) / self.std[axis];
            }
        }
        out
    }

    pub fn invert(&self, window: &SignalWindow) -> SignalWindow {
        let mut out = window.clone();
        for axis in 0..AXES {
            for v in &mut out.values[axis * window.width..(axis + 1) * window.width] {
                *v = *v * self.std[axis] + self.mean[axis];
            }
        }
        out
    }

    pub fn apply_dataset(&self, dataset: &WindowedDataset) -> WindowedDataset {
        WindowedDataset {
            windows: dataset.windows.iter().map(|w| self.apply(w)).collect(),
            seed: dataset.seed,
        }
    }
}
