//! Ablation harness: the four model variants with and without PKI, trained
//! over several seeds and scored on one shared test set.

mod report;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use report::{emit_report, parse_csv_report, render_report, CellReport, CsvRow, Interval, MetricsReport, ReportFormat};

use crate::autoencoder::{AugmentedCorpus, augment_dataset, train_autoencoder, AeTrainConfig, Autoencoder};
use crate::checkpoint::{checkpoint_hash, encode_checkpoint, Model};
use crate::classifiers::{
    train_classifier, window_features, Classifier, ConvLstmClassifier, ConvLstmConfig, FeatureKind, MlpClassifier, MlpConfig,
    TrainConfig,
};
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, ConfusionMatrix, RunMetrics};
use crate::pki::{pki_infer, pki_train, PkiConfig};
use crate::seed::derive_seed;
use crate::signal::{hex, split_train_test, Normalizer, SplitMode, WindowSpec, WindowedDataset, CATEGORY_COUNT};
use crate::simulator::{generate_dataset, SimulatorConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Mlp,
    #[serde(rename = "convlstm")]
    ConvLstm,
    AeMlp,
    #[serde(rename = "ae_convlstm")]
    AeConvLstm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaseKind {
    Mlp,
    ConvLstm,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Mlp, Variant::ConvLstm, Variant::AeMlp, Variant::AeConvLstm];

    pub fn new(base: BaseKind, use_ae: bool) -> Self {
        match (base, use_ae) {
            (BaseKind::Mlp, false) => Variant::Mlp,
            (BaseKind::ConvLstm, false) => Variant::ConvLstm,
            (BaseKind::Mlp, true) => Variant::AeMlp,
            (BaseKind::ConvLstm, true) => Variant::AeConvLstm,
        }
    }

    pub fn uses_ae(self) -> bool {
        matches!(self, Variant::AeMlp | Variant::AeConvLstm)
    }

    pub fn base(self) -> BaseKind {
        match self {
            Variant::Mlp | Variant::AeMlp => BaseKind::Mlp,
            Variant::ConvLstm | Variant::AeConvLstm => BaseKind::ConvLstm,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Mlp => "mlp",
            Variant::ConvLstm => "convlstm",
            Variant::AeMlp => "ae_mlp",
            Variant::AeConvLstm => "ae_convlstm",
        }
    }

    /// Table label.
    pub fn display_name(self) -> &'static str {
        match self {
            Variant::Mlp => "MLP",
            Variant::ConvLstm => "ConvLSTM",
            Variant::AeMlp => "AE+MLP",
            Variant::AeConvLstm => "AE+ConvLSTM",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s || v.display_name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown model variant `{s}`")))
    }
}

/// What the classifier of an AE variant consumes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierInput {
    /// Encoder latents of original and synthetic windows.
    #[default]
    Latent,
    /// The original and synthetic windows themselves.
    Window,
    NoisyLatent,
}

/// Training examples given to the PKI network.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PkiCorpus {
    /// Everything the base classifier was trained on.
    Same,
    /// Only the original windows, without synthetic copies. The base is
    /// over-confident on the decoded copies, which never occur at test time.
    #[default]
    Original,
}

/// Layer widths of every network in the pipeline.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub mlp_hidden: Vec<usize>,
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    pub lstm_widths: Vec<usize>,
    pub pki_hidden: Vec<usize>,
    pub encoder_widths: Vec<usize>,
}

impl Architecture {
    pub fn desk() -> Self {
        Self {
            mlp_hidden: vec![32, 16],
            conv_channels: vec![16, 8],
            kernel: 5,
            lstm_widths: vec![32, 16],
            pki_hidden: vec![16, 8],
            encoder_widths: vec![64, 32, 16],
        }
    }

    pub fn paper() -> Self {
        Self {
            mlp_hidden: vec![128, 64],
            conv_channels: vec![32, 16],
            kernel: 5,
            lstm_widths: vec![64, 32],
            pki_hidden: vec![64, 32],
            encoder_widths: vec![1000, 650, 300],
        }
    }

    pub fn mlp(&self, input: FeatureKind) -> MlpConfig {
        MlpConfig::new(input, self.mlp_hidden.clone())
    }

    pub fn convlstm(&self, input: FeatureKind) -> ConvLstmConfig {
        ConvLstmConfig::new(input, self.conv_channels.clone(), self.kernel, self.lstm_widths.clone())
    }

    pub fn pki(&self) -> PkiConfig {
        PkiConfig {
            hidden: self.pki_hidden.clone(),
            ..PkiConfig::default()
        }
    }
}

impl Default for Architecture {
    fn default() -> Self {
        Self::desk()
    }
}

/// Auto-encoder epoch cap used by the default experiment; the reconstruction
/// holdout loss has flattened well before it on the simulated corpus.
pub const DESK_AE_EPOCHS: usize = 8;

/// Augmentation noise of the default experiment, as a multiple of the axis
/// spread. Puts the injected noise on the order of the baseline noise already
/// in the simulated windows; a tenth of the spread barely perturbs them.
pub const DESK_AE_NOISE_SCALE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub variant: Variant,
    pub pki: bool,
    /// Simulator pulse-amplitude-to-noise ratio.
    pub difficulty: f64,
    /// One training run per seed.
    pub seeds: Vec<u64>,
    /// Seeds the simulated sessions and the train/test split.
    pub data_seed: u64,
    pub window: WindowSpec,
    pub train_fraction: f64,
    pub split_mode: SplitMode,
    /// Draw a new split for every run instead of sharing one test set.
    pub resplit: bool,
    /// Per-axis z-scoring fitted on the training windows.
    pub normalize: bool,
    /// Synthetic windows generated per training window.
    pub augmentation: usize,
    pub classifier_input: ClassifierInput,
    pub pki_corpus: PkiCorpus,
    /// Start PKI training from a network that reproduces the base ranking.
    pub pki_prior_init: bool,
    pub architecture: Architecture,
    /// Classifier and PKI training; its seed is replaced per run.
    pub training: TrainConfig,
    /// Auto-encoder training; its widths and seed are replaced per run.
    pub autoencoder: AeTrainConfig,
    /// Where the CLI writes artifacts; not part of the config hash.
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            variant: Variant::ConvLstm,
            pki: false,
            difficulty: 3.0,
            seeds: (0..10).collect(),
            data_seed: 0,
            window: WindowSpec::default(),
            train_fraction: 0.7,
            split_mode: SplitMode::Window,
            resplit: false,
            normalize: true,
            augmentation: 10,
            classifier_input: ClassifierInput::Latent,
            pki_corpus: PkiCorpus::Original,
            pki_prior_init: false,
            architecture: Architecture::desk(),
            training: TrainConfig::default(),
            autoencoder: AeTrainConfig {
                max_epochs: DESK_AE_EPOCHS,
                noise_scale: DESK_AE_NOISE_SCALE,
                ..AeTrainConfig::default()
            },
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::invalid("an experiment needs at least one seed"));
        }
        if !(self.difficulty > 0.0 && self.difficulty.is_finite()) {
            return Err(Error::invalid(format!("difficulty must be positive, got {}", self.difficulty)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid(format!("train fraction {} outside (0, 1)", self.train_fraction)));
        }
        if self.augmentation == 0 {
            return Err(Error::invalid("augmentation factor must be at least 1"));
        }
        self.window.validate()?;
        self.training.validate()?;
        self.autoencoder.validate()?;
        self.pki_network().validate()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring `output_dir`.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex(&Sha256::digest(json))
    }

    pub fn pki_network(&self) -> PkiConfig {
        PkiConfig {
            prior_init: self.pki_prior_init,
            ..self.architecture.pki()
        }
    }

    pub fn simulator(&self) -> SimulatorConfig {
        let mut sim = SimulatorConfig::default()
            .with_difficulty(self.difficulty)
            .with_seed(self.data_seed);
        sim.sample_rate_hz = self.window.sample_rate_hz;
        sim
    }

    pub fn split_seed(&self, run_seed: u64) -> u64 {
        if self.resplit {
            derive_seed(self.data_seed, &format!("split-{run_seed}"))
        } else {
            derive_seed(self.data_seed, "split")
        }
    }

    pub fn ae_config(&self, run_seed: u64) -> AeTrainConfig {
        AeTrainConfig {
            encoder_widths: self.architecture.encoder_widths.clone(),
            seed: derive_seed(run_seed, "autoencoder"),
            ..self.autoencoder.clone()
        }
    }

    /// The base classifier and its PKI network share one holdout split, so the
    /// PKI stopping rule only sees examples the base was not fitted on.
    pub fn classifier_config(&self, run_seed: u64, variant: Variant) -> TrainConfig {
        TrainConfig {
            seed: derive_seed(run_seed, &format!("{variant}/classifier")),
            holdout_seed: Some(derive_seed(run_seed, &format!("{variant}/holdout"))),
            ..self.training.clone()
        }
    }

    pub fn pki_config(&self, run_seed: u64, variant: Variant) -> TrainConfig {
        TrainConfig {
            seed: derive_seed(run_seed, &format!("{variant}/pki")),
            holdout_seed: Some(derive_seed(run_seed, &format!("{variant}/holdout"))),
            ..self.training.clone()
        }
    }
}

/// Windowed, split and (optionally) normalized data for one run.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedData {
    pub train: WindowedDataset,
    pub test: WindowedDataset,
    pub normalizer: Normalizer,
    /// Hash of the raw test windows.
    pub test_hash: String,
}

pub fn prepare_data(config: &ExperimentConfig, run_seed: u64) -> Result<PreparedData> {
    let sessions = generate_dataset(&config.simulator())?;
    let all = WindowedDataset::from_sessions(&sessions, &config.window, config.data_seed)?;
    split_prepared(&all, config, config.split_seed(run_seed))
}

pub fn split_prepared(all: &WindowedDataset, config: &ExperimentConfig, split_seed: u64) -> Result<PreparedData> {
    let (train, test) = split_train_test(all, config.train_fraction, split_seed, config.split_mode)?;
    let normalizer = if config.normalize {
        Normalizer::fit(&train)
    } else {
        Normalizer::identity()
    };
    Ok(PreparedData {
        test_hash: test.content_hash(),
        train: normalizer.apply_dataset(&train),
        test: normalizer.apply_dataset(&test),
        normalizer,
    })
}

/// A trained MLP or ConvLSTM.
#[derive(Clone, Debug, PartialEq)]
pub enum BaseClassifier {
    Mlp(MlpClassifier<f64>),
    ConvLstm(ConvLstmClassifier<f64>),
}

impl BaseClassifier {
    pub fn new(kind: BaseKind, input: FeatureKind, architecture: &Architecture, seed: u64) -> Result<Self> {
        Ok(match kind {
            BaseKind::Mlp => Self::Mlp(MlpClassifier::new(architecture.mlp(input), seed)?),
            BaseKind::ConvLstm => Self::ConvLstm(ConvLstmClassifier::new(architecture.convlstm(input), seed)?),
        })
    }

    pub fn as_dyn(&self) -> &dyn Classifier<f64> {
        match self {
            Self::Mlp(m) => m,
            Self::ConvLstm(m) => m,
        }
    }

    pub fn as_dyn_mut(&mut self) -> &mut dyn Classifier<f64> {
        match self {
            Self::Mlp(m) => m,
            Self::ConvLstm(m) => m,
        }
    }

    pub fn into_model(self) -> Model<f64> {
        match self {
            Self::Mlp(m) => Model::Mlp(m),
            Self::ConvLstm(m) => Model::ConvLstm(m),
        }
    }

    pub fn to_model(&self) -> Model<f64> {
        self.clone().into_model()
    }

    pub fn from_model(model: Model<f64>) -> Result<Self> {
        match model {
            Model::Mlp(m) => Ok(Self::Mlp(m)),
            Model::ConvLstm(m) => Ok(Self::ConvLstm(m)),
            other => Err(Error::invalid(format!("{:?} checkpoint is not a classifier", other.kind()))),
        }
    }

    pub fn checkpoint_hash(&self) -> Result<String> {
        Ok(checkpoint_hash(&encode_checkpoint(&self.to_model())?))
    }
}

/// Classifier inputs for one variant.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    pub kind: FeatureKind,
    pub train: Vec<Vec<f64>>,
    pub train_labels: Vec<usize>,
    /// Source-window index of every training example.
    pub train_groups: Vec<usize>,
    /// The first `originals` training examples are the original windows.
    pub originals: usize,
    pub test: Vec<Vec<f64>>,
    pub test_labels: Vec<usize>,
}

fn labels(ds: &WindowedDataset) -> Vec<usize> {
    ds.windows.iter().map(|w| w.label.index()).collect()
}

fn raw(ds: &WindowedDataset) -> Vec<Vec<f64>> {
    ds.windows.iter().map(window_features).collect()
}

fn encoded(ae: &Autoencoder<f64>, ds: &WindowedDataset) -> Result<Vec<Vec<f64>>> {
    ds.windows.iter().map(|w| ae.encoder.encode(&w.values)).collect()
}

/// Window features for plain variants. AE variants train on the original
/// windows plus their synthetic copies and, in latent mode, see everything
/// through the encoder.
pub fn build_features(
    data: &PreparedData,
    augmented: Option<(&Autoencoder<f64>, &AugmentedCorpus<f64>)>,
    input: ClassifierInput,
) -> Result<FeatureSet> {
    let steps = data
        .train
        .width()
        .ok_or_else(|| Error::invalid("empty training set"))?;
    let Some((ae, corpus)) = augmented else {
        return Ok(FeatureSet {
            kind: FeatureKind::Window { steps },
            train: raw(&data.train),
            train_labels: labels(&data.train),
            train_groups: (0..data.train.len()).collect(),
            originals: data.train.len(),
            test: raw(&data.test),
            test_labels: labels(&data.test),
        });
    };
    let synthetic = &corpus.windows;
    let mut train_labels = labels(&data.train);
    train_labels.extend(labels(synthetic));
    let copies = synthetic.len() / data.train.len();
    let train_groups = (0..data.train.len()).chain((0..synthetic.len()).map(|j| j / copies)).collect();
    let (kind, mut train, test) = match input {
        ClassifierInput::Window => (FeatureKind::Window { steps }, raw(&data.train), raw(&data.test)),
        ClassifierInput::Latent | ClassifierInput::NoisyLatent => (
            FeatureKind::Latent {
                width: ae.encoder.latent_width(),
            },
            encoded(ae, &data.train)?,
            encoded(ae, &data.test)?,
        ),
    };
    train.extend(match input {
        ClassifierInput::Window => raw(synthetic),
        ClassifierInput::Latent => encoded(ae, synthetic)?,
        ClassifierInput::NoisyLatent => corpus.latents.iter().map(|l| l.values.clone()).collect(),
    });
    Ok(FeatureSet {
        kind,
        train,
        train_labels,
        train_groups,
        originals: data.train.len(),
        test,
        test_labels: labels(&data.test),
    })
}

fn score(truth: &[usize], predicted: &[usize]) -> Result<(RunMetrics, ConfusionMatrix)> {
    let cm = ConfusionMatrix::from_predictions(CATEGORY_COUNT, truth, predicted)?;
    Ok((compute_metrics(&cm)?, cm))
}

/// Outcome of one (variant, PKI, seed) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellRun {
    pub variant: Variant,
    pub pki: bool,
    pub seed: u64,
    pub metrics: RunMetrics,
    pub confusion: ConfusionMatrix,
}

/// Trains the requested cells for one seed. The auto-encoder and each base
/// classifier are trained once and shared by the cells that need them.
pub fn run_seed(config: &ExperimentConfig, data: &PreparedData, seed: u64, cells: &[(Variant, bool)]) -> Result<Vec<CellRun>> {
    let ae_corpus = if cells.iter().any(|(v, _)| v.uses_ae()) {
        let ae_cfg = config.ae_config(seed);
        let (ae, _) = train_autoencoder::<f64>(&data.train, &ae_cfg)?;
        let sigma = ae_cfg.sigma_for(&data.train);
        let synthetic = augment_dataset(&data.train, &ae, &sigma, config.augmentation, derive_seed(seed, "augment"))?;
        Some((ae, synthetic))
    } else {
        None
    };

    let mut out = Vec::new();
    for variant in Variant::ALL {
        let wanted: Vec<bool> = cells.iter().filter(|(v, _)| *v == variant).map(|&(_, p)| p).collect();
        if wanted.is_empty() {
            continue;
        }
        let augmented = if variant.uses_ae() {
            ae_corpus.as_ref().map(|(ae, s)| (ae, s))
        } else {
            None
        };
        let features = build_features(data, augmented, config.classifier_input)?;
        let mut base = BaseClassifier::new(
            variant.base(),
            features.kind,
            &config.architecture,
            derive_seed(seed, &format!("{variant}/init")),
        )?;
        train_classifier(
            base.as_dyn_mut(),
            &features.train,
            &features.train_labels,
            Some(&features.train_groups),
            &config.classifier_config(seed, variant),
        )?;
        let priors = features
            .test
            .iter()
            .map(|x| base.as_dyn().classify(x))
            .collect::<Result<Vec<_>>>()?;
        for pki in wanted {
            let predicted: Vec<usize> = if pki {
                let n = match config.pki_corpus {
                    PkiCorpus::Same => features.train.len(),
                    PkiCorpus::Original => features.originals,
                };
                let (net, _, _) = pki_train(
                    base.as_dyn(),
                    &base.checkpoint_hash()?,
                    &features.train[..n],
                    &features.train_labels[..n],
                    Some(&features.train_groups[..n]),
                    &config.pki_network(),
                    &config.pki_config(seed, variant),
                )?;
                features
                    .test
                    .iter()
                    .zip(&priors)
                    .map(|(x, p)| pki_infer(&net, x, p).map(|d| d.argmax()))
                    .collect::<Result<_>>()?
            } else {
                priors.iter().map(|p| p.argmax()).collect()
            };
            let (metrics, confusion) = score(&features.test_labels, &predicted)?;
            out.push(CellRun {
                variant,
                pki,
                seed,
                metrics,
                confusion,
            });
        }
    }
    Ok(out)
}

/// Runs `cells` for every configured seed and aggregates them in fixed order:
/// PKI off before on, then variant order.
pub fn run_grid(config: &ExperimentConfig, cells: &[(Variant, bool)]) -> Result<MetricsReport> {
    config.validate()?;
    let mut cells = cells.to_vec();
    cells.sort_by_key(|&(v, p)| (p, v));
    cells.dedup();
    let sessions = generate_dataset(&config.simulator())?;
    let all = WindowedDataset::from_sessions(&sessions, &config.window, config.data_seed)?;
    let mut runs = Vec::new();
    let mut test_hashes = Vec::new();
    let mut shared: Option<PreparedData> = None;
    for &seed in &config.seeds {
        let data = match (&shared, config.resplit) {
            (Some(d), false) => d.clone(),
            _ => split_prepared(&all, config, config.split_seed(seed))?,
        };
        test_hashes.push(data.test_hash.clone());
        runs.extend(run_seed(config, &data, seed, &cells)?);
        if !config.resplit {
            shared = Some(data);
        }
    }
    test_hashes.dedup();
    MetricsReport::aggregate(config, &cells, &runs, test_hashes)
}

/// The configured variant and PKI setting.
pub fn run_experiment(config: &ExperimentConfig) -> Result<MetricsReport> {
    run_grid(config, &[(config.variant, config.pki)])
}

/// All four variants with PKI off and on.
pub fn run_ablation(config: &ExperimentConfig) -> Result<MetricsReport> {
    let cells: Vec<(Variant, bool)> = [false, true]
        .into_iter()
        .flat_map(|p| Variant::ALL.into_iter().map(move |v| (v, p)))
        .collect();
    run_grid(config, &cells)
}
