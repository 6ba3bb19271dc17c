//! Directional sanity of the orientation registry: on the benchmark run,
//! every measure's registered confidence ranks correct predictions at
//! least as high as misclassifications (mis-task AUROC >= 1/2). Ranks
//! rather than raw means keep the check meaningful for unbounded scores
//! like the negated Mahalanobis distance, whose heavy left tail skews the
//! mean without flipping the ranking.

use evidential::data::{gen_mixture, MixtureConfig};
use evidential::dirichlet::DirichletParams;
use evidential::head::{train_head_phase1, HeadSpec, TargetKind};
use evidential::measures::{self, Measure};
use evidential::net::{train, Network, NetworkSpec, Objective, Optimizer, TrainConfig};
use evidential_cli::repro::protocol;
use evidential_cli::score::{correctness, score_dataset, ScoreContext};

#[test]
fn registered_orientations_are_directionally_sane() {
    let seed = protocol::SEED_BASE;
    let mix = MixtureConfig {
        n_train: protocol::N_TRAIN,
        n_test: protocol::N_TEST,
        sigma: protocol::SIGMA,
        seed,
    };
    let (train_set, test_set) = gen_mixture(&mix).unwrap();
    let spec = NetworkSpec { input_dim: 2, hidden_dims: vec![], output_dim: 3, seed };
    let cfg = TrainConfig {
        objective: Objective::Evidential,
        lambda: protocol::LAMBDA,
        optimizer: Optimizer::adam(protocol::LEARNING_RATE),
        epochs: protocol::EPOCHS,
        batch_size: protocol::BATCH_SIZE,
        seed,
        ..TrainConfig::default()
    };
    let (net, _) = train(Network::init(&spec).unwrap(), &train_set, None, &cfg).unwrap();
    let correct = correctness(&net, &test_set).unwrap();
    assert!(correct.iter().any(|&c| c) && correct.iter().any(|&c| !c));

    let mut ctx = ScoreContext::new(&net, protocol::LAMBDA).unwrap();
    ctx.fit_mahalanobis(&train_set).unwrap();
    let confid_head = train_head_phase1(
        &net,
        &train_set,
        &HeadSpec { hidden: vec![32], target: TargetKind::Tcp, seed, ..HeadSpec::default() },
        60,
        1e-3,
    )
    .unwrap();
    let klos_head = train_head_phase1(
        &net,
        &train_set,
        &HeadSpec {
            hidden: vec![32],
            target: TargetKind::KlosStarSigmoid,
            seed,
            ..HeadSpec::default()
        },
        60,
        1e-3,
    )
    .unwrap();

    let direction_auroc = |scores: &[f64], measure: Measure| -> f64 {
        let conf: Vec<f64> = scores.iter().map(|&s| measure.as_confidence(s)).collect();
        let set = evidential::metrics::ScoredSet::new(conf, correct.clone()).unwrap();
        evidential::metrics::auroc(&set).unwrap()
    };

    for measure in Measure::ALL {
        let scores = match measure {
            Measure::Confidnet => {
                ctx.head = Some(&confid_head);
                let s = score_dataset(&ctx, measure, &test_set).unwrap();
                ctx.head = None;
                s
            }
            Measure::Klosnet => {
                ctx.head = Some(&klos_head);
                let s = score_dataset(&ctx, measure, &test_set).unwrap();
                ctx.head = None;
                s
            }
            Measure::VariationRatio => {
                // ensemble of small perturbed members: vote spread rises
                // near the boundary, where the errors live
                let members: Vec<Network> = (0..5)
                    .map(|m| {
                        let mspec = NetworkSpec {
                            input_dim: 2,
                            hidden_dims: vec![],
                            output_dim: 3,
                            seed: seed + m,
                        };
                        let mcfg = TrainConfig { seed: seed + m, ..cfg.clone() };
                        train(Network::init(&mspec).unwrap(), &train_set, None, &mcfg).unwrap().0
                    })
                    .collect();
                test_set
                    .features
                    .iter()
                    .map(|x| {
                        let probs: Vec<_> = members
                            .iter()
                            .map(|n| measures::softmax_prob(&n.forward(x).unwrap().0))
                            .collect();
                        measures::variation_ratio(&probs).unwrap()
                    })
                    .collect()
            }
            _ => score_dataset(&ctx, measure, &test_set).unwrap(),
        };
        let auroc = direction_auroc(&scores, measure);
        assert!(
            auroc >= 0.5,
            "{}: mis-task AUROC {auroc:.3} below chance, orientation flag is wrong",
            measure.name()
        );
    }

    // alpha scaling moves KLoS but not the expectation-derived scores
    let d = DirichletParams::new(vec![4.0, 2.0, 1.0]).unwrap();
    let scaled = DirichletParams::new(vec![16.0, 8.0, 4.0]).unwrap();
    assert!(
        (measures::klos(&d, ctx.tau).unwrap() - measures::klos(&scaled, ctx.tau).unwrap()).abs()
            > 1e-6
    );
}
