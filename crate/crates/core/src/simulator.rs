//! Synthetic labeled accelerometer sessions.
//!
//! Each session is a smoothed Gaussian baseline on all three axes. Event
//! categories add a half-sine pulse on their dominant axis: longitudinal for
//! AA (+) and HB (−), lateral for HL (+) and HR (−). RD carries baseline only.
//! Pulses are capped at the session length, and the default templates make
//! them span the whole session, as if each recording were cropped to its event.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derived_rng;
use crate::signal::{
    EventCategory, SessionRecording, WindowSpec, AXES, LATERAL, LONGITUDINAL, SAMPLE_RATE_HZ,
};

/// Noise floor of the default templates, m/s².
pub const DEFAULT_NOISE_FLOOR: f64 = 0.15;

/// Smallest default peak amplitude. A difficulty `r` sets the noise floor to
/// `REFERENCE_AMPLITUDE / r`, so every pulse peaks at no less than `r` noise floors.
pub const REFERENCE_AMPLITUDE: f64 = 2.0;

/// Length of the moving average applied to the white baseline noise.
pub const BASELINE_SMOOTHING: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventTemplate {
    /// `None` for baseline-only sessions.
    pub dominant_axis: Option<usize>,
    /// +1 or −1.
    pub polarity: f64,
    pub amplitude: (f64, f64),
    pub pulse_ms: (f64, f64),
    /// Offset of the pulse centre from the session centre.
    pub onset_jitter_ms: (f64, f64),
    /// Standard deviation of the white noise feeding the baseline.
    pub noise_floor: f64,
}

impl EventTemplate {
    pub fn default_for(category: EventCategory) -> Self {
        let (dominant_axis, polarity, amplitude) = match category {
            EventCategory::AA => (Some(LONGITUDINAL), 1.0, (2.5, 4.0)),
            EventCategory::HB => (Some(LONGITUDINAL), -1.0, (2.5, 4.0)),
            EventCategory::HL => (Some(LATERAL), 1.0, (2.0, 3.5)),
            EventCategory::HR => (Some(LATERAL), -1.0, (2.0, 3.5)),
            EventCategory::RD => (None, 1.0, (2.0, 3.5)),
        };
        Self {
            dominant_axis,
            polarity,
            amplitude,
            pulse_ms: (2600.0, 3600.0),
            onset_jitter_ms: (0.0, 0.0),
            noise_floor: DEFAULT_NOISE_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.amplitude;
        let (plo, phi) = self.pulse_ms;
        let (jlo, jhi) = self.onset_jitter_ms;
        let ok = lo > 0.0
            && hi >= lo
            && plo > 0.0
            && phi >= plo
            && jhi >= jlo
            && self.noise_floor >= 0.0
            && self.noise_floor.is_finite()
            && self.polarity.abs() == 1.0
            && self.dominant_axis.is_none_or(|a| a < AXES);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid event template {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulatorConfig {
    pub counts: BTreeMap<EventCategory, usize>,
    pub duration_ms: (f64, f64),
    pub sample_rate_hz: u32,
    pub seed: u64,
    /// Pulse-amplitude-to-noise ratio; `None` keeps the template noise floors.
    pub difficulty: Option<f64>,
    pub templates: BTreeMap<EventCategory, EventTemplate>,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        Self {
            counts: BTreeMap::from([
                (EventCategory::HB, 13),
                (EventCategory::AA, 12),
                (EventCategory::HL, 16),
                (EventCategory::HR, 15),
                (EventCategory::RD, 14),
            ]),
            duration_ms: (2000.0, 3600.0),
            sample_rate_hz: SAMPLE_RATE_HZ,
            seed: 0,
            difficulty: None,
            templates: BTreeMap::new(),
        }
    }
}

impl SimulatorConfig {
    pub fn with_difficulty(mut self, difficulty: f64) -> Self {
        self.difficulty = Some(difficulty);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn count(&self, category: EventCategory) -> usize {
        self.counts.get(&category).copied().unwrap_or(0)
    }

    /// Explicit overrides win over the difficulty setting.
    pub fn template(&self, category: EventCategory) -> EventTemplate {
        if let Some(t) = self.templates.get(&category) {
            return t.clone();
        }
        let mut t = EventTemplate::default_for(category);
        if let Some(r) = self.difficulty {
            t.noise_floor = REFERENCE_AMPLITUDE / r;
        }
        t
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.duration_ms;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::invalid(format!("invalid duration range {:?}", self.duration_ms)));
        }
        if self.sample_rate_hz == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(r) = self.difficulty {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::invalid(format!("difficulty must be positive, got {r}")));
            }
        }
        for c in EventCategory::ALL {
            self.template(c).validate()?;
        }
        Ok(())
    }
}

/// Generates one session of `duration_ms`. The draw sequence does not depend
/// on the category, so HL and HR (or AA and HB) sessions built from the same
/// generator state differ only in the sign of the dominant axis.
pub fn generate_session<R: Rng + ?Sized>(
    category: EventCategory,
    duration_ms: f64,
    session_id: impl Into<String>,
    template: &EventTemplate,
    sample_rate_hz: u32,
    rng: &mut R,
) -> Result<SessionRecording> {
    template.validate()?;
    let min_samples = WindowSpec {
        sample_rate_hz,
        ..WindowSpec::default()
    }
    .window_samples();
    let n = (duration_ms * f64::from(sample_rate_hz) / 1000.0).round() as usize;
    if n < min_samples {
        return Err(Error::invalid(format!(
            "{duration_ms} ms yields {n} samples, fewer than one {min_samples}-sample window"
        )));
    }
    let period_ms = 1000.0 / f64::from(sample_rate_hz);
    let session_ms = n as f64 * period_ms;

    let amplitude = uniform(rng, template.amplitude);
    let pulse_ms = uniform(rng, template.pulse_ms).min(session_ms);
    let jitter = uniform(rng, template.onset_jitter_ms);
    let onset = (0.5 * (session_ms - pulse_ms) + jitter).clamp(0.0, session_ms - pulse_ms);

    let mut samples = vec![[0.0; AXES]; n];
    for axis in 0..AXES {
        let baseline = smoothed_noise(rng, n, template.noise_floor);
        for (k, s) in samples.iter_mut().enumerate() {
            s[axis] = baseline[k];
        }
    }
    if let Some(axis) = template.dominant_axis {
        for (k, s) in samples.iter_mut().enumerate() {
            let t = k as f64 * period_ms - onset;
            let pulse = if (0.0..=pulse_ms).contains(&t) {
                amplitude * (std::f64::consts::PI * t / pulse_ms).sin()
            } else {
                0.0
            };
            s[axis] = template.polarity * (pulse + s[axis]);
        }
    }
    Ok(SessionRecording {
        session_id: session_id.into(),
        label: category,
        sample_rate_hz,
        samples,
    })
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// White Gaussian noise of std `sigma` through a `BASELINE_SMOOTHING`-tap moving average.
fn smoothed_noise<R: Rng + ?Sized>(rng: &mut R, n: usize, sigma: f64) -> Vec<f64> {
    let taps = BASELINE_SMOOTHING;
    let normal = Normal::new(0.0, sigma).expect("validated noise floor");
    let white: Vec<f64> = (0..n + taps - 1).map(|_| normal.sample(rng)).collect();
    white
        .windows(taps)
        .map(|w| w.iter().sum::<f64>() / taps as f64)
        .collect()
}

/// Every session of the configured counts, categories in canonical order.
/// Session `k` of category `c` is seeded from `(seed, "c-k")`.
pub fn generate_dataset(config: &SimulatorConfig) -> Result<Vec<SessionRecording>> {
    config.validate()?;
    let mut sessions = Vec::new();
    for category in EventCategory::ALL {
        let template = config.template(category);
        for k in 0..config.count(category) {
            let id = format!("{category}-{k:03}");
            let mut rng = derived_rng(config.seed, &id);
            let duration = uniform(&mut rng, config.duration_ms);
            sessions.push(generate_session(
                category,
                duration,
                id,
                &template,
                config.sample_rate_hz,
                &mut rng,
            )?);
        }
    }
    Ok(sessions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use crate::signal::{window_starts, VERTICAL};

    #[test]
    fn sample_count_from_duration() {
        let t = EventTemplate::default_for(EventCategory::AA);
        let s = generate_session(EventCategory::AA, 2000.0, "a", &t, 25, &mut rng_from(1)).unwrap();
        assert_eq!(s.samples.len(), 50);
        assert!(generate_session(EventCategory::AA, 500.0, "a", &t, 25, &mut rng_from(1)).is_err());
    }

    #[test]
    fn lane_changes_differ_only_in_lateral_sign() {
        let hl = EventTemplate::default_for(EventCategory::HL);
        let hr = EventTemplate::default_for(EventCategory::HR);
        let a = generate_session(EventCategory::HL, 3000.0, "x", &hl, 25, &mut rng_from(8)).unwrap();
        let b = generate_session(EventCategory::HR, 3000.0, "x", &hr, 25, &mut rng_from(8)).unwrap();
        for (sa, sb) in a.samples.iter().zip(&b.samples) {
            assert_eq!(sa[LATERAL], -sb[LATERAL]);
            assert_eq!(sa[VERTICAL], sb[VERTICAL]);
            assert_eq!(sa[LONGITUDINAL], sb[LONGITUDINAL]);
        }
    }

    #[test]
    fn pulses_have_the_right_sign_and_size() {
        for c in [EventCategory::AA, EventCategory::HB, EventCategory::HL, EventCategory::HR] {
            let t = EventTemplate::default_for(c);
            let axis = t.dominant_axis.unwrap();
            let s = generate_session(c, 3000.0, "p", &t, 25, &mut rng_from(2)).unwrap();
            let extreme = s
                .samples
                .iter()
                .map(|v| v[axis] * t.polarity)
                .fold(f64::MIN, f64::max);
            assert!(extreme > 3.0 * t.noise_floor, "{c}: {extreme}");
        }
    }

    #[test]
    fn regular_driving_stays_inside_three_noise_floors() {
        let t = EventTemplate::default_for(EventCategory::RD);
        let mut rng = rng_from(77);
        let inside = (0..1000)
            .filter(|_| {
                let s = generate_session(EventCategory::RD, 3600.0, "rd", &t, 25, &mut rng).unwrap();
                s.samples
                    .iter()
                    .all(|v| v[LONGITUDINAL].abs() < 3.0 * t.noise_floor)
            })
            .count();
        assert!(inside as f64 / 1000.0 >= 0.99, "{inside}/1000");
    }

    #[test]
    fn default_dataset_shape() {
        let cfg = SimulatorConfig::default();
        let sessions = generate_dataset(&cfg).unwrap();
        assert_eq!(sessions.len(), 70);
        for (c, n) in [
            (EventCategory::HB, 13),
            (EventCategory::AA, 12),
            (EventCategory::HL, 16),
            (EventCategory::HR, 15),
            (EventCategory::RD, 14),
        ] {
            assert_eq!(sessions.iter().filter(|s| s.label == c).count(), n);
        }
        for s in &sessions {
            let ms = s.duration_ms();
            assert!((2000.0..=3600.0).contains(&ms), "{ms}");
        }
        let windows: usize = sessions
            .iter()
            .map(|s| window_starts(s.samples.len(), 15, 7).len())
            .sum();
        assert!((windows as f64 - 572.0).abs() <= 57.2, "{windows}");
        assert_eq!(sessions, generate_dataset(&cfg).unwrap());
    }

    #[test]
    fn zero_counts_give_nothing() {
        let cfg = SimulatorConfig {
            counts: BTreeMap::new(),
            ..SimulatorConfig::default()
        };
        assert!(generate_dataset(&cfg).unwrap().is_empty());
    }

    #[test]
    fn difficulty_sets_noise_floor() {
        let cfg = SimulatorConfig::default().with_difficulty(10.0);
        assert_eq!(cfg.template(EventCategory::RD).noise_floor, 0.2);
        assert!(SimulatorConfig::default().with_difficulty(0.0).validate().is_err());
    }
}
