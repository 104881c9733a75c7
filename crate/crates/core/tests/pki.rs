mod common;

use common::{simulated, window_set};
use dec_core::classifiers::{train_classifier, Classifier, FeatureKind, MlpClassifier, TrainConfig};
use dec_core::experiment::Architecture;
use dec_core::pki::{pki_classify, pki_infer, pki_train, PkiConfig};

fn perfect_base(x: &[Vec<f64>], y: &[usize]) -> MlpClassifier<f64> {
    let mut base = MlpClassifier::new(Architecture::desk().mlp(FeatureKind::Window { steps: 15 }), 3).unwrap();
    let config = TrainConfig {
        max_epochs: 200,
        patience: 200,
        holdout_fraction: 0.0,
        ..TrainConfig::default()
    };
    train_classifier(&mut base, x, y, None, &config).unwrap();
    base
}

#[test]
fn perfect_base_yields_agreeing_pki_and_stays_frozen() {
    let data = simulated(20.0, 1);
    let (x, y) = window_set(&data.train);
    let (x, y) = (&x[..150], &y[..150]);
    let base = perfect_base(x, y);
    let wrong = x.iter().zip(y).filter(|(f, &l)| base.classify(f).unwrap().argmax() != l).count();
    assert_eq!(wrong, 0, "base classifier is not perfect on its training set");

    let before = base.params().clone();
    let (net, curve, state) =
        pki_train(&base, "base", x, y, None, &PkiConfig::default(), &TrainConfig::default()).unwrap();
    assert!(base.params().values_bit_equal(&before));
    assert_eq!(state.iterations + 1, curve.epochs.len());
    assert_eq!(state.errors.len(), x.len());
    assert!(state.errors.iter().all(|e| e.len() == 5));

    let disagree = x
        .iter()
        .zip(y)
        .filter(|(f, &l)| pki_classify(&net, &base, f).unwrap().argmax() != l)
        .count();
    assert!((disagree as f64) < 0.02 * x.len() as f64, "{disagree} disagreements");

    for f in &x[..10] {
        let prior = base.classify(f).unwrap();
        let a = pki_infer(&net, f, &prior).unwrap();
        assert!((a.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(a, pki_infer(&net, f, &prior).unwrap());
        assert_eq!(net.input(f, &prior).unwrap().len(), 45 + 5);
    }
    assert!(pki_infer(&net, &x[0][..44], &base.classify(&x[0]).unwrap()).is_err());
}

#[test]
fn mismatched_features_are_rejected() {
    let data = simulated(20.0, 1);
    let (x, y) = window_set(&data.train);
    let base = perfect_base(&x[..20], &y[..20]);
    let short: Vec<Vec<f64>> = x[..20].iter().map(|f| f[..30].to_vec()).collect();
    assert!(pki_train(&base, "h", &short, &y[..20], None, &PkiConfig::default(), &TrainConfig::default()).is_err());
}
