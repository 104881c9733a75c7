//! Finite-difference oracles shared by the gradient and acceptance suites.
#![allow(dead_code)]

use dec_core::autoencoder::Autoencoder;
use dec_core::nn::ops::{
    cross_entropy, reconstruction_loss, reconstruction_loss_grad, softmax, softmax_cross_entropy_grad,
};
use dec_core::nn::{Conv1d, Dense, Gradients, LstmLayer, OneHotTarget, ParameterSet, Tensor};
use dec_core::seed::rng_from;
use rand::Rng;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
pub const INSTANCES: u64 = 20;

/// Relative error. The denominator is floored at 1e-5: below that the central
/// difference itself carries roundoff of order 1e-11, so tiny gradients are
/// compared to an absolute 1e-9 instead.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5)
}

pub fn central<F: FnMut(f64) -> f64>(x: f64, mut f: F) -> f64 {
    (f(x + STEP) - f(x - STEP)) / (2.0 * STEP)
}

/// Worst relative error over every parameter entry.
pub fn check_params(
    params: &ParameterSet<f64>,
    analytic: &Gradients<f64>,
    loss: impl Fn(&ParameterSet<f64>) -> f64,
) -> f64 {
    let names: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
    let mut worst: f64 = 0.0;
    let mut probe = params.clone();
    for name in names {
        let id = probe.id(&name).unwrap();
        for k in 0..probe.value(id).len() {
            let x = probe.value(id).values()[k];
            let numeric = central(x, |v| {
                probe.value_mut(id).values_mut()[k] = v;
                loss(&probe)
            });
            probe.value_mut(id).values_mut()[k] = x;
            worst = worst.max(rel_err(analytic.get(id).values()[k], numeric));
        }
    }
    worst
}

/// Worst relative error over the entries of an input vector.
pub fn check_input(x: &[f64], analytic: &[f64], loss: impl Fn(&[f64]) -> f64) -> f64 {
    assert_eq!(x.len(), analytic.len());
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    for k in 0..x.len() {
        let numeric = central(x[k], |v| {
            probe[k] = v;
            loss(&probe)
        });
        probe[k] = x[k];
        worst = worst.max(rel_err(analytic[k], numeric));
    }
    worst
}

pub fn uniform_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Loss `r · dense(x)` for a random projection `r`.
pub fn dense_instance(seed: u64) -> f64 {
    let mut rng = rng_from(seed);
    let (i, o) = (rng.random_range(1..=8), rng.random_range(1..=8));
    let mut params = ParameterSet::new();
    let layer = Dense::new(&mut params, "d", i, o, &mut rng);
    let bias = params.id("d.bias").unwrap();
    params.value_mut(bias).values_mut().copy_from_slice(&uniform_vec(&mut rng, o));
    let x = uniform_vec(&mut rng, i);
    let r = uniform_vec(&mut rng, o);
    let mut grads = params.zero_gradients();
    let dx = layer.backward(&params, &x, &r, &mut grads);
    let p_err = check_params(&params, &grads, |p| dot(&r, &layer.forward(p, &x)));
    let x_err = check_input(&x, &dx, |x| dot(&r, &layer.forward(&params, x)));
    p_err.max(x_err)
}

pub fn conv1d_instance(seed: u64) -> f64 {
    let mut rng = rng_from(seed);
    let cin = rng.random_range(1..=4);
    let cout = rng.random_range(1..=4);
    let len = rng.random_range(1..=8);
    let kernel = rng.random_range(1..=len);
    let mut params = ParameterSet::new();
    let layer = Conv1d::new(&mut params, "c", cin, cout, kernel, &mut rng);
    let bias = params.id("c.bias").unwrap();
    params.value_mut(bias).values_mut().copy_from_slice(&uniform_vec(&mut rng, cout));
    let x = uniform_vec(&mut rng, cin * len);
    let r = uniform_vec(&mut rng, cout * layer.output_len(len));
    let mut grads = params.zero_gradients();
    let dx = layer.backward(&params, &x, len, &r, &mut grads);
    let p_err = check_params(&params, &grads, |p| dot(&r, &layer.forward(p, &x, len)));
    let x_err = check_input(&x, &dx, |x| dot(&r, &layer.forward(&params, x, len)));
    p_err.max(x_err)
}

/// BPTT through a short sequence with random initial states; `steps == 1`
/// reduces to a single cell.
pub fn lstm_instance(seed: u64, steps: usize) -> f64 {
    let mut rng = rng_from(seed);
    let inputs = rng.random_range(1..=8);
    let hidden = rng.random_range(1..=8);
    let mut params = ParameterSet::new();
    let layer = LstmLayer::new(&mut params, "l", inputs, hidden, &mut rng);
    let xs: Vec<Vec<f64>> = (0..steps).map(|_| uniform_vec(&mut rng, inputs)).collect();
    let h0 = uniform_vec(&mut rng, hidden);
    let c0 = uniform_vec(&mut rng, hidden);
    let rs: Vec<Vec<f64>> = (0..steps).map(|_| uniform_vec(&mut rng, hidden)).collect();
    let loss = |p: &ParameterSet<f64>, xs: &[Vec<f64>], h0: &[f64], c0: &[f64]| {
        let t = layer.forward(p, xs, Some(h0), Some(c0));
        rs.iter().zip(&t.hs[1..]).map(|(r, h)| dot(r, h)).sum::<f64>()
    };
    let trace = layer.forward(&params, &xs, Some(&h0), Some(&c0));
    let mut grads = params.zero_gradients();
    let g = layer.backward(&params, &xs, &trace, &rs, &mut grads);
    let mut worst = check_params(&params, &grads, |p| loss(p, &xs, &h0, &c0));
    for t in 0..steps {
        worst = worst.max(check_input(&xs[t], &g.dxs[t], |x| {
            let mut xs = xs.clone();
            xs[t] = x.to_vec();
            loss(&params, &xs, &h0, &c0)
        }));
    }
    worst = worst.max(check_input(&h0, &g.dh0, |h| loss(&params, &xs, h, &c0)));
    worst.max(check_input(&c0, &g.dc0, |c| loss(&params, &xs, &h0, c)))
}

pub fn softmax_ce_instance(seed: u64) -> f64 {
    let mut rng = rng_from(seed);
    let classes = rng.random_range(2..=8);
    let target = OneHotTarget::new(rng.random_range(0..classes), classes).unwrap();
    let z: Vec<f64> = (0..classes).map(|_| rng.random_range(-3.0..3.0)).collect();
    let analytic = softmax_cross_entropy_grad(&softmax(&z).unwrap(), target);
    check_input(&z, &analytic, |z| cross_entropy(&softmax(z).unwrap(), target).unwrap())
}

pub fn reconstruction_instance(seed: u64) -> f64 {
    let mut rng = rng_from(seed);
    let n = rng.random_range(1..=8);
    let x = uniform_vec(&mut rng, 3 * n);
    let y = uniform_vec(&mut rng, 3 * n);
    let tensor = |v: &[f64]| Tensor::matrix(3, n, v.to_vec()).unwrap();
    let analytic = reconstruction_loss_grad(&x, &y);
    check_input(&y, &analytic, |y| reconstruction_loss(&tensor(&x), &tensor(y)).unwrap())
}

/// Encoder, latent and decoder end to end: two LSTM layers of width 4, five steps.
pub fn autoencoder_instance(seed: u64) -> f64 {
    let mut rng = rng_from(seed);
    let steps = 5;
    let ae = Autoencoder::<f64>::new(&[4, 3], steps, seed).unwrap();
    let input = uniform_vec(&mut rng, 3 * steps);
    let target = uniform_vec(&mut rng, 3 * steps);
    let sq = |ae: &Autoencoder<f64>| -> f64 {
        let out = ae.reconstruct(&input).unwrap();
        out.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum()
    };
    let mut ge = ae.encoder.params().zero_gradients();
    let mut gd = ae.decoder.params().zero_gradients();
    let loss = ae.loss_and_gradients(&input, &target, &mut ge, &mut gd).unwrap();
    assert!((loss - sq(&ae)).abs() < 1e-12);
    let enc = check_params(ae.encoder.params(), &ge, |p| {
        let mut probe = ae.clone();
        *probe.encoder.params_mut() = p.clone();
        sq(&probe)
    });
    let dec = check_params(ae.decoder.params(), &gd, |p| {
        let mut probe = ae.clone();
        *probe.decoder.params_mut() = p.clone();
        sq(&probe)
    });
    enc.max(dec)
}

/// Worst error over the standard number of instances.
pub fn worst_over(instance: impl Fn(u64) -> f64) -> f64 {
    (0..INSTANCES).map(|s| instance(1000 + s)).fold(0.0, f64::max)
}

/// Normalized simulator windows split the default way.
pub fn simulated(difficulty: f64, data_seed: u64) -> dec_core::experiment::PreparedData {
    let config = dec_core::experiment::ExperimentConfig {
        difficulty,
        data_seed,
        ..Default::default()
    };
    dec_core::experiment::prepare_data(&config, 0).unwrap()
}

pub fn window_set(data: &dec_core::signal::WindowedDataset) -> (Vec<Vec<f64>>, Vec<usize>) {
    let x = data.windows.iter().map(dec_core::classifiers::window_features).collect();
    let y = data.windows.iter().map(|w| w.label.index()).collect();
    (x, y)
}

/// One model of every checkpoint kind, each with non-trivial Adam state.
pub fn checkpoint_models() -> Vec<dec_core::checkpoint::Model<f64>> {
    use dec_core::checkpoint::Model;
    use dec_core::classifiers::{
        train_classifier, ConvLstmClassifier, FeatureKind, MlpClassifier, TrainConfig,
    };
    use dec_core::experiment::Architecture;
    use dec_core::nn::adam_step;
    use dec_core::pki::{pki_train, PkiConfig};

    fn jitter(params: &mut ParameterSet<f64>, seed: u64) {
        let mut rng = rng_from(seed);
        let mut g = params.zero_gradients();
        for k in 0..params.len() {
            let id = params.id(&params.iter().nth(k).unwrap().name).unwrap();
            g.get_mut(id).values_mut().iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        }
        for _ in 0..2 {
            adam_step(params, &g, &Default::default()).unwrap();
        }
    }

    let data = simulated(10.0, 0);
    let (x, y) = window_set(&data.train);
    let (x, y) = (&x[..40], &y[..40]);
    let input = FeatureKind::Window { steps: 15 };
    let arch = Architecture::desk();
    let config = TrainConfig {
        max_epochs: 2,
        ..TrainConfig::default()
    };
    let mut mlp = MlpClassifier::new(arch.mlp(input), 1).unwrap();
    train_classifier(&mut mlp, x, y, None, &config).unwrap();
    let mut conv = ConvLstmClassifier::new(arch.convlstm(input), 2).unwrap();
    train_classifier(&mut conv, x, y, None, &config).unwrap();
    let mut ae = Autoencoder::<f64>::new(&[6, 4], 15, 3).unwrap();
    jitter(ae.encoder.params_mut(), 4);
    jitter(ae.decoder.params_mut(), 5);
    let base_hash = dec_core::checkpoint::checkpoint_hash(
        &dec_core::checkpoint::encode_checkpoint(&Model::Mlp(mlp.clone())).unwrap(),
    );
    let (pki, _, _) = pki_train(&mlp, &base_hash, x, y, None, &PkiConfig::default(), &config).unwrap();
    vec![
        Model::Mlp(mlp),
        Model::ConvLstm(conv),
        Model::Encoder(ae.encoder),
        Model::Decoder(ae.decoder),
        Model::Pki(pki),
    ]
}

/// Values, moments, names, shapes and step all equal bit for bit.
pub fn bit_identical(a: &ParameterSet<f64>, b: &ParameterSet<f64>) -> bool {
    let bits = |t: &Tensor<f64>| t.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    a.step() == b.step()
        && a.len() == b.len()
        && a.iter().zip(b.iter()).all(|(p, q)| {
            p.name == q.name
                && p.value.shape() == q.value.shape()
                && bits(&p.value) == bits(&q.value)
                && bits(&p.m) == bits(&q.m)
                && bits(&p.v) == bits(&q.v)
        })
}

/// A two-seed grid small enough to run in seconds.
pub fn small_config() -> dec_core::experiment::ExperimentConfig {
    let mut c = dec_core::experiment::ExperimentConfig {
        seeds: vec![0, 1],
        difficulty: 10.0,
        augmentation: 2,
        ..Default::default()
    };
    c.architecture.encoder_widths = vec![8, 4];
    c.training.max_epochs = 2;
    c.autoencoder.max_epochs = 1;
    c.autoencoder.copies = 2;
    c
}
