//! Acceptance run: one line per criterion, non-zero exit if any fails.
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test -p dec-core --test acceptance -- 2 8 9`.

mod common;

use std::time::{Duration, Instant};

use common::*;
use dec_core::classifiers::{train_classifier, Classifier, ConvLstmClassifier, FeatureKind};
use dec_core::experiment::{prepare_data, render_report, run_ablation, Architecture, ExperimentConfig, ReportFormat, Variant};
use dec_core::metrics::{compute_metrics, confidence_interval, ConfusionMatrix};
use dec_core::nn::{adam_step, AdamConfig, ParameterSet, Tensor};
use dec_core::signal::{
    inject_noise_with, split_train_test, EventCategory, SignalWindow, SplitMode, WindowOrigin, WindowSpec,
    WindowedDataset,
};
use dec_core::simulator::{generate_dataset, SimulatorConfig};
use dec_core::autoencoder::train_autoencoder;
use dec_core::checkpoint::{check_pairing, decode_checkpoint, encode_checkpoint, checkpoint_hash, Model};
use dec_core::seed::rng_from;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let checks: [(&str, f64); 5] = [
        ("dense", worst_over(dense_instance)),
        ("conv1d", worst_over(conv1d_instance)),
        ("lstm cell", worst_over(|s| lstm_instance(s, 1))),
        ("softmax+ce", worst_over(softmax_ce_instance)),
        ("squared error", worst_over(reconstruction_instance)),
    ];
    let elapsed = start.elapsed();
    let pass = checks.iter().all(|&(_, e)| e < TOLERANCE) && elapsed < Duration::from_secs(60);
    let parts: Vec<String> = checks.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    outcome(pass, format!("worst relative error {} over {INSTANCES} instances each; {elapsed:.1?}", parts.join(", ")))
}

/// Scalar Adam written out longhand.
fn adam_by_hand(grads: &[f64]) -> Vec<f64> {
    let (lr, b1, b2, eps) = (0.03, 0.9, 0.95, 1e-8);
    let (mut x, mut m, mut v) = (1.0f64, 0.0, 0.0);
    let mut out = Vec::new();
    for (t, &g) in grads.iter().enumerate() {
        let t = t as i32 + 1;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let m_hat = m / (1.0 - b1.powi(t));
        let v_hat = v / (1.0 - b2.powi(t));
        x -= lr * m_hat / (v_hat.sqrt() + eps);
        out.push(x);
    }
    out
}

fn adam() -> Outcome {
    let grads = [1.0, 0.5, -0.25, 2.0, 0.0, -1.5, 0.75, 1.0];
    let expected = adam_by_hand(&grads);
    let mut params = ParameterSet::<f64>::new();
    let id = params.add("x", Tensor::vector(vec![1.0]).unwrap());
    let mut g = params.zero_gradients();
    let mut worst: f64 = 0.0;
    for (&gi, &want) in grads.iter().zip(&expected) {
        g.get_mut(id).values_mut()[0] = gi;
        adam_step(&mut params, &g, &AdamConfig::default()).unwrap();
        worst = worst.max((params.value(id).values()[0] - want).abs());
    }
    let mut first = ParameterSet::<f64>::new();
    let id = first.add("x", Tensor::vector(vec![1.0]).unwrap());
    let mut g = first.zero_gradients();
    g.get_mut(id).values_mut()[0] = 1.0;
    adam_step(&mut first, &g, &AdamConfig::default()).unwrap();
    let step1 = first.value(id).values()[0];
    let pass = (step1 - 0.97).abs() < 1e-9 && worst < 1e-9;
    outcome(pass, format!("first step 1.0 -> {step1:.12}; {}-step sequence max deviation {worst:.1e}", grads.len()))
}

fn windowing() -> Outcome {
    let sim = SimulatorConfig::default();
    let sessions = generate_dataset(&sim).unwrap();
    let durations_ok = sessions.iter().all(|s| (2000.0..=3600.0).contains(&s.duration_ms()) && s.sample_rate_hz == 25);
    let spec = WindowSpec::default();
    let dims_ok = spec.window_samples() == 15 && spec.hop_samples() == 7;
    let total = WindowedDataset::from_sessions(&sessions, &spec, 0).unwrap().len();
    let count_ok = (total as f64 - 572.0).abs() <= 57.2;
    let windows = (0..572)
        .map(|i| {
            let origin = WindowOrigin {
                session_id: format!("s{}", i / 8),
                start: i,
                synthetic: false,
            };
            SignalWindow::new(vec![0.0; 45], 15, EventCategory::ALL[i % 5], origin).unwrap()
        })
        .collect();
    let (train, test) =
        split_train_test(&WindowedDataset::new(windows, 0).unwrap(), 0.7, 0, SplitMode::Window).unwrap();
    let split_ok = (train.len(), test.len()) == (400, 172);
    outcome(
        durations_ok && dims_ok && count_ok && split_ok,
        format!(
            "{} sessions -> {total} windows (572 ± 57), W={} H={}, 572 windows split {}/{}",
            sessions.len(),
            spec.window_samples(),
            spec.hop_samples(),
            train.len(),
            test.len()
        ),
    )
}

/// Mean squared error per window of noisy and of decoded test windows
/// against their clean originals.
fn denoising() -> Outcome {
    const DIFFICULTY: f64 = 20.0;
    let start = Instant::now();
    let mut noisy_total = 0.0;
    let mut decoded_total = 0.0;
    let seeds = [0u64, 1, 2];
    for &seed in &seeds {
        let config = ExperimentConfig {
            difficulty: DIFFICULTY,
            data_seed: seed,
            normalize: false,
            ..Default::default()
        };
        let data = prepare_data(&config, seed).unwrap();
        let (ae, report) = train_autoencoder::<f64>(&data.train, &config.ae_config(seed)).unwrap();
        let mut rng = rng_from(seed ^ 0x5eed);
        let (mut noisy, mut decoded) = (0.0, 0.0);
        for w in &data.test.windows {
            let corrupted = inject_noise_with(w, &report.noise_sigma, &mut rng).unwrap();
            let rec = ae.reconstruct(&corrupted.values).unwrap();
            noisy += corrupted.values.iter().zip(&w.values).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            decoded += rec.iter().zip(&w.values).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        noisy_total += noisy / data.test.len() as f64;
        decoded_total += decoded / data.test.len() as f64;
    }
    let n = seeds.len() as f64;
    let (noisy, decoded) = (noisy_total / n, decoded_total / n);
    let elapsed = start.elapsed();
    outcome(
        decoded < noisy && elapsed < Duration::from_secs(300),
        format!(
            "difficulty {DIFFICULTY}, {} seeds: held-out error decoded {decoded:.4} vs noisy {noisy:.4}; {elapsed:.1?}",
            seeds.len()
        ),
    )
}

fn classifier_sanity() -> Outcome {
    let start = Instant::now();
    let config = ExperimentConfig {
        difficulty: 10.0,
        ..Default::default()
    };
    let data = prepare_data(&config, 0).unwrap();
    let (x, y) = window_set(&data.train);
    let (tx, ty) = window_set(&data.test);
    let arch = Architecture::desk();
    let input = FeatureKind::Window { steps: 15 };
    let mut model = ConvLstmClassifier::<f64>::new(arch.convlstm(input), 0).unwrap();
    let curve = train_classifier(&mut model, &x, &y, None, &config.classifier_config(0, Variant::ConvLstm)).unwrap();
    let correct = tx.iter().zip(&ty).filter(|(f, &l)| model.classify(f).unwrap().argmax() == l).count();
    let accuracy = correct as f64 / tx.len() as f64;
    let elapsed = start.elapsed();

    // Loss of fresh models on the first 32 training windows, averaged over initializations.
    let inits = 20;
    let first_batch = (0..inits)
        .map(|s| {
            let m = ConvLstmClassifier::<f64>::new(arch.convlstm(input), s).unwrap();
            x[..32]
                .iter()
                .zip(&y[..32])
                .map(|(f, &l)| -m.classify(f).unwrap().probs()[l].ln())
                .sum::<f64>()
                / 32.0
        })
        .sum::<f64>()
        / inits as f64;
    let init_ok = (first_batch - 5f64.ln()).abs() < 0.15;
    outcome(
        accuracy >= 0.9 && elapsed < Duration::from_secs(600) && init_ok,
        format!(
            "difficulty 10: test accuracy {accuracy:.3} after {} epochs in {elapsed:.1?}; \
             fresh-init first-batch loss {first_batch:.3} (mean of {inits} inits; this model {:.3})",
            curve.epochs.len() - 1,
            curve.initial_loss().unwrap()
        ),
    )
}

fn trends() -> Outcome {
    let start = Instant::now();
    let config = ExperimentConfig::default();
    let report = run_ablation(&config).unwrap();
    let acc = |v: Variant, pki: bool| report.cell(v, pki).unwrap().accuracy.mean;
    let mut failed = Vec::new();
    let mut parts = Vec::new();
    for (ae, plain) in [(Variant::AeMlp, Variant::Mlp), (Variant::AeConvLstm, Variant::ConvLstm)] {
        let d = acc(ae, false) - acc(plain, false);
        parts.push(format!("{}-{} {d:+.4}", ae.display_name(), plain.display_name()));
        if d < 0.0 {
            failed.push(ae.display_name().to_string());
        }
    }
    for v in Variant::ALL {
        let d = acc(v, true) - acc(v, false);
        parts.push(format!("PKI {} {d:+.4}", v.display_name()));
        if d < 0.0 {
            failed.push(format!("PKI {}", v.display_name()));
        }
    }
    let elapsed = start.elapsed();
    let verdict = if failed.is_empty() {
        String::new()
    } else {
        format!("; violated: {}", failed.join(", "))
    };
    outcome(
        failed.is_empty() && elapsed < Duration::from_secs(1800),
        format!(
            "{} seeds at difficulty {}: {}{verdict}; {elapsed:.1?}",
            config.seeds.len(),
            config.difficulty,
            parts.join(", ")
        ),
    )
}

fn determinism() -> Outcome {
    let config = small_config();
    let a = run_ablation(&config).unwrap();
    let b = run_ablation(&config).unwrap();
    let formats = [ReportFormat::Csv, ReportFormat::Json, ReportFormat::Md];
    let same = formats
        .iter()
        .all(|&f| render_report(&a, f).unwrap().into_bytes() == render_report(&b, f).unwrap().into_bytes());
    outcome(same, format!("two ablation runs over seeds {:?}: csv, json and md reports byte-identical", config.seeds))
}

fn metrics_oracle() -> Outcome {
    let mut rng = rng_from(2024);
    let mut exact = 0;
    for _ in 0..100 {
        let classes: usize = rng.random_range(2..=6);
        let n = rng.random_range(1..400);
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        let pred: Vec<usize> = truth
            .iter()
            .map(|&t| if rng.random_bool(0.6) { t } else { rng.random_range(0..classes) })
            .collect();
        let m = compute_metrics(&ConfusionMatrix::from_predictions(classes, &truth, &pred).unwrap()).unwrap();
        let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let (mut p, mut r) = (0.0, 0.0);
        for c in 0..classes {
            let tp = (0..n).filter(|&i| truth[i] == c && pred[i] == c).count();
            p += frac(tp, pred.iter().filter(|&&q| q == c).count());
            r += frac(tp, truth.iter().filter(|&&t| t == c).count());
        }
        p /= classes as f64;
        r /= classes as f64;
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        let acc = frac((0..n).filter(|&i| truth[i] == pred[i]).count(), n);
        exact += usize::from((m.accuracy, m.precision, m.recall, m.f1) == (acc, p, r, f1));
    }
    // t(9, 0.975) from high-precision root finding.
    let t9 = 2.2621571627982055;
    let values: Vec<f64> = (0..10).map(|_| rng.random_range(0.6..0.95)).collect();
    let mean = values.iter().sum::<f64>() / 10.0;
    let sd = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 9.0).sqrt();
    let (m, hw) = confidence_interval(&values).unwrap();
    let ci_err = (m - mean).abs().max((hw - t9 * sd / 10f64.sqrt()).abs());
    outcome(
        exact == 100 && ci_err < 1e-12,
        format!("{exact}/100 random matrices match the recount exactly; CI deviation {ci_err:.1e}"),
    )
}

fn checkpoints() -> Outcome {
    let models = checkpoint_models();
    let mut round_trips = 0;
    for model in &models {
        let bytes = encode_checkpoint(model).unwrap();
        let back = decode_checkpoint::<f64>(&bytes).unwrap();
        round_trips += usize::from(&back == model && bit_identical(back.params(), model.params()));
    }
    let base_hash = checkpoint_hash(&encode_checkpoint(&models[0]).unwrap());
    let other_hash = checkpoint_hash(&encode_checkpoint(&models[1]).unwrap());
    let Model::Pki(pki) = &models[4] else { unreachable!() };
    let pairing = check_pairing(pki, &base_hash).is_ok() && check_pairing(pki, &other_hash).is_err();
    outcome(
        round_trips == 5 && pairing,
        format!("{round_trips}/5 kinds round-trip bit-identically; pairing enforced: {pairing}"),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "gradient correctness", gradients),
        (2, "Adam unit check", adam),
        (3, "windowing arithmetic", windowing),
        (4, "denoising property", denoising),
        (5, "classifier sanity", classifier_sanity),
        (6, "trend reproduction", trends),
        (7, "determinism", determinism),
        (8, "metrics oracle", metrics_oracle),
        (9, "checkpoint round-trip", checkpoints),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for (n, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let result = run();
        failures += usize::from(!result.pass);
        println!(
            "criterion {n} {}: {name}: {}",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail
        );
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
