//! End-to-end training behavior on the synthetic mixture: accuracy against
//! the analytic Bayes oracle, the precision anchor of evidential training,
//! and confidence-head quality against the constant predictor.

use evidential::data::{self, MixtureConfig};
use evidential::head::{compute_targets, train_head_phase1, HeadSpec, TargetKind};
use evidential::measures::argmax;
use evidential::net::{train, Network, NetworkSpec, Objective, Optimizer, TrainConfig};

/// Benchmark geometry used by the reproduction pipeline.
const SIGMA: f64 = 0.8;
const LAMBDA: f64 = 0.05;

fn bayes_accuracy(test: &data::Dataset, sigma: f64) -> f64 {
    let labels = test.labels().unwrap();
    let correct = test
        .features
        .iter()
        .zip(labels)
        .filter(|(x, &y)| {
            let p = data::mixture_posterior(x, sigma);
            argmax(&p) == y
        })
        .count();
    correct as f64 / test.len() as f64
}

fn trained_model(seed: u64) -> (Network, data::Dataset, data::Dataset) {
    let cfg = MixtureConfig { n_train: 1000, n_test: 1000, sigma: SIGMA, seed };
    let (train_set, test_set) = data::gen_mixture(&cfg).unwrap();
    let spec = NetworkSpec { input_dim: 2, hidden_dims: vec![], output_dim: 3, seed };
    let tc = TrainConfig {
        objective: Objective::Evidential,
        lambda: LAMBDA,
        optimizer: Optimizer::adam(0.02),
        epochs: 200,
        batch_size: 128,
        seed,
        ..TrainConfig::default()
    };
    let (net, history) = train(Network::init(&spec).unwrap(), &train_set, None, &tc).unwrap();
    assert_eq!(history.len(), 200);
    assert!(history.iter().all(|l| l.is_finite()));
    (net, train_set, test_set)
}

#[test]
fn evidential_run_tracks_bayes_accuracy() {
    let (net, _, test_set) = trained_model(3);
    let bayes = bayes_accuracy(&test_set, SIGMA);
    let labels = test_set.labels().unwrap();
    let correct = test_set
        .features
        .iter()
        .zip(labels)
        .filter(|(x, &y)| argmax(&net.forward(x).unwrap().0) == y)
        .count();
    let acc = correct as f64 / test_set.len() as f64;
    // the linear model cannot beat the oracle and should sit near it
    assert!(acc <= bayes + 0.02, "accuracy {acc} above Bayes rate {bayes}");
    assert!(acc >= bayes - 0.15, "accuracy {acc} too far below Bayes rate {bayes}");
}

#[test]
fn evidential_training_anchors_precision() {
    let (net, train_set, _) = trained_model(4);
    let anchor = 3.0 + 1.0 / LAMBDA;
    let mean_a0: f64 = train_set
        .features
        .iter()
        .map(|x| {
            let (logits, _) = net.forward(x).unwrap();
            logits.iter().map(|f| f.exp()).sum::<f64>()
        })
        .sum::<f64>()
        / train_set.len() as f64;
    assert!(
        mean_a0 >= 0.5 * anchor && mean_a0 <= 2.0 * anchor,
        "mean precision {mean_a0} outside [{}, {}]",
        0.5 * anchor,
        2.0 * anchor
    );
}

#[test]
fn head_beats_the_constant_predictor() {
    // softmax classifier plus a TCP head; validation MSE must fall below
    // the variance of the targets (what the best constant achieves)
    let cfg = MixtureConfig { n_train: 1000, n_test: 1000, sigma: SIGMA, seed: 9 };
    let (train_set, val_set) = data::gen_mixture(&cfg).unwrap();
    let spec = NetworkSpec { input_dim: 2, hidden_dims: vec![16], output_dim: 3, seed: 9 };
    let tc = TrainConfig {
        objective: Objective::SoftmaxCe,
        optimizer: Optimizer::adam(0.02),
        epochs: 200,
        batch_size: 128,
        seed: 9,
        ..TrainConfig::default()
    };
    let (net, _) = train(Network::init(&spec).unwrap(), &train_set, None, &tc).unwrap();

    let head_spec = HeadSpec { hidden: vec![64], seed: 10, ..HeadSpec::default() };
    let head = train_head_phase1(&net, &train_set, &head_spec, 100, 1e-3).unwrap();

    let targets = compute_targets(&net, &val_set, TargetKind::Tcp, LAMBDA).unwrap();
    let mean_t: f64 = targets.iter().sum::<f64>() / targets.len() as f64;
    let var_t: f64 =
        targets.iter().map(|t| (t - mean_t).powi(2)).sum::<f64>() / targets.len() as f64;
    let mse: f64 = val_set
        .features
        .iter()
        .zip(&targets)
        .map(|(x, &t)| {
            let c = head.confidence_score(&net, x).unwrap();
            (c - t) * (c - t)
        })
        .sum::<f64>()
        / targets.len() as f64;
    assert!(mse < var_t, "validation MSE {mse} not below target variance {var_t}");
}
