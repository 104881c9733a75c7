//! `dec`: simulate sessions, train the auto-encoder and classifiers, and run
//! the ablation grid.
//!
//! Every step reads and writes one run directory:
//!
//! ```text
//! config.json            effective experiment configuration
//! sessions/              simulated session files and manifest.txt
//! train.txt, test.txt    raw windows of the fixed split
//! normalizer.json        per-axis scaling fitted on train.txt
//! encoder.ckpt, decoder.ckpt, synthetic.txt, latents.json
//! <variant>.ckpt, <variant>_pki.ckpt, <variant>[_pki]_eval.json
//! report.{json,csv,md}
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dec_core::autoencoder::{augment_dataset, train_autoencoder, AugmentedCorpus, Autoencoder, LatentVector};
use dec_core::checkpoint::{load_checkpoint, load_pki_for, save_checkpoint, Model};
use dec_core::classifiers::train_classifier;
use dec_core::experiment::{
    build_features, emit_report, render_report, run_ablation, BaseClassifier, BaseKind, ExperimentConfig,
    FeatureSet, MetricsReport, PkiCorpus, PreparedData, ReportFormat, Variant,
};
use dec_core::metrics::{compute_metrics, ConfusionMatrix};
use dec_core::pki::{pki_infer, pki_train};
use dec_core::seed::derive_seed;
use dec_core::signal::io::{read_windows, write_sessions, write_windows};
use dec_core::signal::{split_train_test, Normalizer, WindowedDataset, CATEGORY_COUNT};
use dec_core::simulator::generate_dataset;

#[derive(Parser)]
#[command(name = "dec", version, about = "Driving-event characterization pipeline")]
struct Cli {
    /// JSON experiment configuration; defaults to <dir>/config.json when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate sessions, slice and split them.
    GenerateData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        difficulty: Option<f64>,
    },
    /// Train the denoising auto-encoder on train.txt.
    TrainAe(RunArgs),
    /// Write the synthetic corpus decoded from noisy training windows.
    Augment(RunArgs),
    /// Train a base classifier and optionally its PKI network.
    Train(ModelArgs),
    /// Score trained checkpoints on test.txt.
    Evaluate(ModelArgs),
    /// Run all eight grid cells over several seeds.
    Ablation {
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        difficulty: Option<f64>,
        /// Directory for report.{json,csv,md}.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a saved JSON report.
    Report {
        #[arg(long, value_enum)]
        format: Format,
        /// Report written by `ablation`.
        #[arg(long, default_value = "report.json")]
        input: PathBuf,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value = ".")]
    dir: PathBuf,
    /// Run seed; defaults to the first configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ModelArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum)]
    model: ModelChoice,
    #[arg(long)]
    use_ae: bool,
    #[arg(long)]
    pki: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelChoice {
    Mlp,
    Convlstm,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Md,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
            Format::Md => ReportFormat::Md,
        }
    }
}

impl ModelArgs {
    fn variant(&self) -> Variant {
        let base = match self.model {
            ModelChoice::Mlp => BaseKind::Mlp,
            ModelChoice::Convlstm => BaseKind::ConvLstm,
        };
        Variant::new(base, self.use_ae)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_config(explicit: Option<&Path>, dir: Option<&Path>) -> Result<ExperimentConfig> {
    let stored = dir.map(|d| d.join("config.json")).filter(|p| p.exists());
    let config = match explicit.map(Path::to_path_buf).or(stored) {
        Some(path) => read_json(&path)?,
        None => ExperimentConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

fn run_seed(config: &ExperimentConfig, args: &RunArgs) -> u64 {
    args.seed.unwrap_or(config.seeds[0])
}

fn load_data(dir: &Path) -> Result<PreparedData> {
    let train = read_windows(&dir.join("train.txt"))?;
    let test = read_windows(&dir.join("test.txt"))?;
    let normalizer: Normalizer = read_json(&dir.join("normalizer.json"))?;
    Ok(PreparedData {
        test_hash: test.content_hash(),
        train: normalizer.apply_dataset(&train),
        test: normalizer.apply_dataset(&test),
        normalizer,
    })
}

fn load_autoencoder(dir: &Path) -> Result<Autoencoder<f64>> {
    let (Model::Encoder(encoder), _) = load_checkpoint(&dir.join("encoder.ckpt"))? else {
        bail!("encoder.ckpt does not hold an encoder");
    };
    let (Model::Decoder(decoder), _) = load_checkpoint(&dir.join("decoder.ckpt"))? else {
        bail!("decoder.ckpt does not hold a decoder");
    };
    Ok(Autoencoder::pair(encoder, decoder)?)
}

fn load_corpus(dir: &Path) -> Result<AugmentedCorpus<f64>> {
    let windows = read_windows(&dir.join("synthetic.txt"))?;
    let latents: Vec<Vec<f64>> = read_json(&dir.join("latents.json"))?;
    if latents.len() != windows.len() {
        bail!("latents.json and synthetic.txt disagree in length");
    }
    let latents = latents
        .into_iter()
        .zip(&windows.windows)
        .map(|(values, w)| LatentVector {
            values,
            origin: Some(w.origin.clone()),
            noise_seed: None,
        })
        .collect();
    Ok(AugmentedCorpus { windows, latents })
}

fn generate_data(config: &mut ExperimentConfig, out: &Path, seed: Option<u64>, difficulty: Option<f64>) -> Result<()> {
    if let Some(s) = seed {
        config.data_seed = s;
    }
    if let Some(r) = difficulty {
        config.difficulty = r;
    }
    config.validate()?;
    let sessions = generate_dataset(&config.simulator())?;
    write_sessions(&sessions, &out.join("sessions"))?;
    let all = WindowedDataset::from_sessions(&sessions, &config.window, config.data_seed)?;
    let (train, test) = split_train_test(&all, config.train_fraction, config.split_seed(config.seeds[0]), config.split_mode)?;
    let normalizer = if config.normalize {
        Normalizer::fit(&train)
    } else {
        Normalizer::identity()
    };
    let rate = config.window.sample_rate_hz;
    write_windows(&train, rate, &out.join("train.txt"))?;
    write_windows(&test, rate, &out.join("test.txt"))?;
    write_json(&normalizer, &out.join("normalizer.json"))?;
    write_json(config, &out.join("config.json"))?;
    println!(
        "{} sessions, {} train / {} test windows in {}",
        sessions.len(),
        train.len(),
        test.len(),
        out.display()
    );
    Ok(())
}

fn train_ae(config: &ExperimentConfig, args: &RunArgs) -> Result<()> {
    let data = load_data(&args.dir)?;
    let (ae, report) = train_autoencoder::<f64>(&data.train, &config.ae_config(run_seed(config, args)))?;
    save_checkpoint(&Model::Encoder(ae.encoder), &args.dir.join("encoder.ckpt"))?;
    save_checkpoint(&Model::Decoder(ae.decoder), &args.dir.join("decoder.ckpt"))?;
    write_json(&report, &args.dir.join("ae_training.json"))?;
    println!(
        "auto-encoder: holdout loss {:.4} -> {:.4} (best epoch {})",
        report.initial_holdout_loss(),
        report.best_holdout_loss(),
        report.best_epoch
    );
    Ok(())
}

fn augment(config: &ExperimentConfig, args: &RunArgs) -> Result<()> {
    let data = load_data(&args.dir)?;
    let ae = load_autoencoder(&args.dir)?;
    let seed = run_seed(config, args);
    let sigma = config.ae_config(seed).sigma_for(&data.train);
    let corpus = augment_dataset(&data.train, &ae, &sigma, config.augmentation, derive_seed(seed, "augment"))?;
    write_windows(&corpus.windows, config.window.sample_rate_hz, &args.dir.join("synthetic.txt"))?;
    let latents: Vec<&Vec<f64>> = corpus.latents.iter().map(|l| &l.values).collect();
    write_json(&latents, &args.dir.join("latents.json"))?;
    println!("{} synthetic windows", corpus.windows.len());
    Ok(())
}

fn features(args: &ModelArgs, config: &ExperimentConfig) -> Result<FeatureSet> {
    let data = load_data(&args.run.dir)?;
    if args.use_ae {
        let ae = load_autoencoder(&args.run.dir)?;
        if !args.run.dir.join("synthetic.txt").exists() {
            bail!("synthetic.txt missing; run `augment` first");
        }
        let corpus = load_corpus(&args.run.dir)?;
        Ok(build_features(&data, Some((&ae, &corpus)), config.classifier_input)?)
    } else {
        Ok(build_features(&data, None, config.classifier_input)?)
    }
}

fn base_path(dir: &Path, variant: Variant) -> PathBuf {
    dir.join(format!("{variant}.ckpt"))
}

fn pki_path(dir: &Path, variant: Variant) -> PathBuf {
    dir.join(format!("{variant}_pki.ckpt"))
}

fn train(config: &ExperimentConfig, args: &ModelArgs) -> Result<()> {
    let variant = args.variant();
    let seed = run_seed(config, &args.run);
    let fs = features(args, config)?;
    let mut base = BaseClassifier::new(
        variant.base(),
        fs.kind,
        &config.architecture,
        derive_seed(seed, &format!("{variant}/init")),
    )?;
    let curve = train_classifier(
        base.as_dyn_mut(),
        &fs.train,
        &fs.train_labels,
        Some(&fs.train_groups),
        &config.classifier_config(seed, variant),
    )?;
    fs::write(args.run.dir.join(format!("{variant}_curve.csv")), curve.to_csv())?;
    let hash = save_checkpoint(&base.to_model(), &base_path(&args.run.dir, variant))?;
    println!(
        "{}: {} epochs, best {}, training loss {:.4}",
        variant.display_name(),
        curve.epochs.len() - 1,
        curve.best_epoch,
        curve.final_loss().unwrap_or(f64::NAN)
    );
    if args.pki {
        let n = match config.pki_corpus {
            PkiCorpus::Same => fs.train.len(),
            PkiCorpus::Original => fs.originals,
        };
        let (net, curve, state) = pki_train(
            base.as_dyn(),
            &hash,
            &fs.train[..n],
            &fs.train_labels[..n],
            Some(&fs.train_groups[..n]),
            &config.pki_network(),
            &config.pki_config(seed, variant),
        )?;
        save_checkpoint(&Model::Pki(net), &pki_path(&args.run.dir, variant))?;
        println!(
            "PKI: {} iterations, best {}, mean |e_PKI| {:.4}",
            state.iterations,
            curve.best_epoch,
            state.mean_error_norm()
        );
    }
    Ok(())
}

fn evaluate(config: &ExperimentConfig, args: &ModelArgs) -> Result<()> {
    let variant = args.variant();
    let fs = features(args, config)?;
    let base_file = base_path(&args.run.dir, variant);
    let (base, pki) = if args.pki {
        let (net, base) = load_pki_for::<f64>(&pki_path(&args.run.dir, variant), &base_file)?;
        (BaseClassifier::from_model(base)?, Some(net))
    } else {
        (BaseClassifier::from_model(load_checkpoint(&base_file)?.0)?, None)
    };
    let mut cm = ConfusionMatrix::new(CATEGORY_COUNT);
    for (x, &label) in fs.test.iter().zip(&fs.test_labels) {
        let prior = base.as_dyn().classify(x)?;
        let dist = match &pki {
            Some(net) => pki_infer(net, x, &prior)?,
            None => prior,
        };
        cm.record(label, dist.argmax())?;
    }
    let metrics = compute_metrics(&cm)?;
    let suffix = if args.pki { "_pki" } else { "" };
    let summary = serde_json::json!({
        "variant": variant.as_str(),
        "pki": args.pki,
        "metrics": metrics,
        "confusion": cm.rows(),
    });
    write_json(&summary, &args.run.dir.join(format!("{variant}{suffix}_eval.json")))?;
    println!(
        "{} PKI {}: accuracy {:.4} precision {:.4} recall {:.4} F1 {:.4}",
        variant.display_name(),
        if args.pki { "on" } else { "off" },
        metrics.accuracy,
        metrics.precision,
        metrics.recall,
        metrics.f1
    );
    Ok(())
}

fn ablation(config: &mut ExperimentConfig, seeds: Option<u64>, difficulty: Option<f64>, out: Option<PathBuf>) -> Result<()> {
    if let Some(n) = seeds {
        config.seeds = (0..n).collect();
    }
    if let Some(r) = difficulty {
        config.difficulty = r;
    }
    let out = out.or_else(|| config.output_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let report = run_ablation(config)?;
    for format in [ReportFormat::Json, ReportFormat::Csv, ReportFormat::Md] {
        emit_report(&report, format, &out.join(format!("report.{}", format.extension())))?;
    }
    print!("{}", render_report(&report, ReportFormat::Md)?);
    Ok(())
}

fn report(format: Format, input: &Path, out: Option<&Path>) -> Result<()> {
    let report: MetricsReport = read_json(input)?;
    let text = render_report(&report, format.into())?;
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let explicit = cli.config.as_deref();
    match cli.command {
        Command::GenerateData { out, seed, difficulty } => {
            let mut config = load_config(explicit, None)?;
            generate_data(&mut config, &out, seed, difficulty)
        }
        Command::TrainAe(args) => train_ae(&load_config(explicit, Some(&args.dir))?, &args),
        Command::Augment(args) => augment(&load_config(explicit, Some(&args.dir))?, &args),
        Command::Train(args) => train(&load_config(explicit, Some(&args.run.dir))?, &args),
        Command::Evaluate(args) => evaluate(&load_config(explicit, Some(&args.run.dir))?, &args),
        Command::Ablation { seeds, difficulty, out } => {
            let mut config = load_config(explicit, None)?;
            ablation(&mut config, seeds, difficulty, out)
        }
        Command::Report { format, input, out } => report(format, &input, out.as_deref()),
    }
}

/// The error chain joined with `: `, skipping causes their parent already quotes.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.ends_with(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}
