use dec_core::metrics::{compute_metrics, confidence_interval, t_quantile_975, ConfusionMatrix};
use dec_core::seed::rng_from;
use rand::Rng;

/// 97.5% Student t quantiles from 40-digit root finding on the regularized
/// incomplete beta function.
const T_975: [(usize, f64); 15] = [
    (1, 12.706204736174705),
    (2, 4.302_652_729_749_464),
    (3, 3.1824463052837096),
    (4, 2.7764451051977944),
    (5, 2.5705818356363155),
    (6, 2.44691185114497),
    (7, 2.3646242515927853),
    (8, 2.3060041352041667),
    (9, 2.2621571627982055),
    (10, 2.228_138_851_986_275),
    (14, 2.144_786_687_917_804),
    (19, 2.0930240544083098),
    (29, 2.0452296421327043),
    (49, 2.0095752371292397),
    (99, 1.9842169515864175),
];

/// Macro scores recounted straight from the (truth, predicted) pairs.
fn brute_force(classes: usize, pairs: &[(usize, usize)]) -> (f64, f64, f64, f64) {
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let mut p = 0.0;
    let mut r = 0.0;
    for c in 0..classes {
        let tp = pairs.iter().filter(|&&(t, q)| t == c && q == c).count();
        let predicted = pairs.iter().filter(|&&(_, q)| q == c).count();
        let actual = pairs.iter().filter(|&&(t, _)| t == c).count();
        p += frac(tp, predicted);
        r += frac(tp, actual);
    }
    p /= classes as f64;
    r /= classes as f64;
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    let correct = pairs.iter().filter(|(t, q)| t == q).count();
    (frac(correct, pairs.len()), p, r, f1)
}

#[test]
fn metrics_match_brute_force_recount() {
    let mut rng = rng_from(77);
    for _ in 0..100 {
        let classes: usize = rng.random_range(2..=6);
        let n = rng.random_range(1..300);
        // Skewed predictions so that some categories are never predicted.
        let pairs: Vec<(usize, usize)> = (0..n)
            .map(|_| {
                let t = rng.random_range(0..classes);
                let q = if rng.random_bool(0.5) { t } else { rng.random_range(0..classes.div_ceil(2)) };
                (t, q)
            })
            .collect();
        let (truth, pred): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let m = compute_metrics(&ConfusionMatrix::from_predictions(classes, &truth, &pred).unwrap()).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), brute_force(classes, &pairs));
    }
}

#[test]
fn two_by_two_by_hand() {
    let m = compute_metrics(&ConfusionMatrix::from_rows(&[vec![8, 2], vec![3, 7]]).unwrap()).unwrap();
    let p = (8.0 / 11.0 + 7.0 / 9.0) / 2.0;
    let r = (0.8 + 0.7) / 2.0;
    assert!((m.accuracy - 0.75).abs() < 1e-15);
    assert!((m.precision - p).abs() < 1e-15);
    assert!((m.recall - r).abs() < 1e-15);
    assert!((m.f1 - 2.0 * p * r / (p + r)).abs() < 1e-15);
}

#[test]
fn interval_matches_direct_t_formula() {
    let mut rng = rng_from(5);
    for &(dof, t) in &T_975 {
        assert!((t_quantile_975(dof) - t).abs() < 1e-12, "dof {dof}");
        let values: Vec<f64> = (0..=dof).map(|_| rng.random_range(0.5..1.0)).collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        let direct = t * (ss / (n - 1.0) / n).sqrt();
        let (m, hw) = confidence_interval(&values).unwrap();
        assert!((m - mean).abs() < 1e-12);
        assert!((hw - direct).abs() < 1e-12, "dof {dof}: {hw} vs {direct}");
    }
    assert!(confidence_interval(&[0.5]).is_err());
}

#[test]
fn uniform_guessing_scores_one_fifth() {
    let mut rng = rng_from(8);
    let truth: Vec<usize> = (0..2000).map(|_| rng.random_range(0..5)).collect();
    let pred: Vec<usize> = (0..2000).map(|_| rng.random_range(0..5)).collect();
    let m = compute_metrics(&ConfusionMatrix::from_predictions(5, &truth, &pred).unwrap()).unwrap();
    assert!((m.accuracy - 0.2).abs() < 0.05, "{}", m.accuracy);
    assert!((m.f1 - 0.2).abs() < 0.05, "{}", m.f1);
}

#[test]
fn counts_sum_to_test_size() {
    let m = ConfusionMatrix::from_predictions(5, &[0, 1, 2, 3, 4, 4], &[0, 0, 2, 1, 4, 3]).unwrap();
    assert_eq!(m.total(), 6);
    assert_eq!(m.trace(), 3);
    assert!(ConfusionMatrix::from_predictions(5, &[0, 5], &[0, 0]).is_err());
}
