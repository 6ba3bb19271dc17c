//! Monte-Carlo oracles for the Dirichlet closed forms.
//!
//! Sampling uses rand_distr; the oracle's normalization constants use a
//! test-local Lanczos log-gamma, so no part of the library's evaluation
//! path is reused on the oracle side.

use evidential::dirichlet::{self, DirichletParams};
use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Dirichlet, Distribution};

mod oracle {
    /// Lanczos (g = 7, n = 9) log-gamma, independent of the library's
    /// shifted Stirling evaluation.
    pub fn ln_gamma(x: f64) -> f64 {
        const COEF: [f64; 9] = [
            0.999_999_999_999_809_93,
            676.520_368_121_885_1,
            -1_259.139_216_722_402_8,
            771.323_428_777_653_13,
            -176.615_029_162_140_59,
            12.507_343_278_686_905,
            -0.138_571_095_265_720_12,
            9.984_369_578_019_571_6e-6,
            1.505_632_735_149_311_6e-7,
        ];
        if x < 0.5 {
            let pi = std::f64::consts::PI;
            return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
        }
        let x = x - 1.0;
        let mut a = COEF[0];
        let t = x + 7.5;
        for (i, &c) in COEF.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
    }

    pub fn ln_beta(alpha: &[f64]) -> f64 {
        let a0: f64 = alpha.iter().sum();
        alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>() - ln_gamma(a0)
    }

    pub fn entropy(p: &[f64]) -> f64 {
        -p.iter().map(|&v| if v > 0.0 { v * v.ln() } else { 0.0 }).sum::<f64>()
    }
}

struct McEstimate {
    mean: f64,
    se: f64,
}

fn mc_mean(values: impl Iterator<Item = f64>, n: usize) -> McEstimate {
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    let mut count = 0usize;
    for v in values.take(n) {
        sum += v;
        sumsq += v * v;
        count += 1;
    }
    let mean = sum / count as f64;
    let var = (sumsq / count as f64 - mean * mean).max(0.0);
    McEstimate { mean, se: (var / count as f64).sqrt() }
}

fn assert_within_3se(label: &str, closed: f64, est: &McEstimate) {
    let slack = 3.0 * est.se + 1e-9;
    assert!(
        (closed - est.mean).abs() <= slack,
        "{label}: closed {closed} vs MC {} (3se = {})",
        est.mean,
        slack
    );
}

fn random_alpha(rng: &mut StdRng, k: usize) -> Vec<f64> {
    use rand::Rng;
    (0..k).map(|_| (rng.gen_range(-1.0..3.0) as f64).exp()).collect()
}

fn sample_simplex(rng: &mut StdRng, alpha: &[f64]) -> Vec<f64> {
    let dist = Dirichlet::new(alpha).unwrap();
    dist.sample(rng)
}

const DRAWS: usize = 300_000;

#[test]
fn kl_divergence_matches_monte_carlo() {
    let mut rng = StdRng::seed_from_u64(501);
    for trial in 0..16 {
        let k = [2, 3, 5][trial % 3];
        let p = random_alpha(&mut rng, k);
        let q = random_alpha(&mut rng, k);
        let dp = DirichletParams::new(p.clone()).unwrap();
        let dq = DirichletParams::new(q.clone()).unwrap();
        let closed = dirichlet::kl_dirichlet(&dp, &dq).unwrap();
        let constant = oracle::ln_beta(&q) - oracle::ln_beta(&p);
        let est = mc_mean(
            std::iter::repeat_with(|| {
                let pi = sample_simplex(&mut rng, &p);
                constant
                    + pi.iter()
                        .zip(p.iter().zip(&q))
                        .map(|(&x, (&pk, &qk))| (pk - qk) * x.max(1e-300).ln())
                        .sum::<f64>()
            }),
            DRAWS,
        );
        assert_within_3se("kl_dirichlet", closed, &est);
        assert!(closed >= -1e-12);
    }
    // a fixed reference case: p = (3,2,1) against the uniform
    let p = vec![3.0, 2.0, 1.0];
    let dp = DirichletParams::new(p.clone()).unwrap();
    let uniform = DirichletParams::new(vec![1.0; 3]).unwrap();
    let closed = dirichlet::kl_dirichlet(&dp, &uniform).unwrap();
    let constant = oracle::ln_beta(&[1.0, 1.0, 1.0]) - oracle::ln_beta(&p);
    let est = mc_mean(
        std::iter::repeat_with(|| {
            let pi = sample_simplex(&mut rng, &p);
            constant
                + pi.iter()
                    .zip(&p)
                    .map(|(&x, &pk)| (pk - 1.0) * x.max(1e-300).ln())
                    .sum::<f64>()
        }),
        1_000_000,
    );
    assert_within_3se("kl_dirichlet(3,2,1 || 1,1,1)", closed, &est);
}

#[test]
fn kl_to_uniform_matches_monte_carlo() {
    let mut rng = StdRng::seed_from_u64(502);
    for trial in 0..10 {
        let k = [2, 3, 5][trial % 3];
        let alpha = random_alpha(&mut rng, k);
        let d = DirichletParams::new(alpha.clone()).unwrap();
        let closed = dirichlet::kl_to_uniform(&d);
        let ones = vec![1.0; k];
        let constant = oracle::ln_beta(&ones) - oracle::ln_beta(&alpha);
        let est = mc_mean(
            std::iter::repeat_with(|| {
                let pi = sample_simplex(&mut rng, &alpha);
                constant
                    + pi.iter()
                        .zip(&alpha)
                        .map(|(&x, &a)| (a - 1.0) * x.max(1e-300).ln())
                        .sum::<f64>()
            }),
            DRAWS,
        );
        assert_within_3se("kl_to_uniform", closed, &est);
    }
    // α = (5,5,5) named case
    let alpha = vec![5.0, 5.0, 5.0];
    let d = DirichletParams::new(alpha.clone()).unwrap();
    let constant = oracle::ln_beta(&[1.0; 3]) - oracle::ln_beta(&alpha);
    let est = mc_mean(
        std::iter::repeat_with(|| {
            let pi = sample_simplex(&mut rng, &alpha);
            constant
                + pi.iter().zip(&alpha).map(|(&x, &a)| (a - 1.0) * x.ln()).sum::<f64>()
        }),
        DRAWS,
    );
    assert_within_3se("kl_to_uniform(5,5,5)", dirichlet::kl_to_uniform(&d), &est);
}

#[test]
fn expected_entropy_and_mutual_information_match_monte_carlo() {
    let mut rng = StdRng::seed_from_u64(503);
    for trial in 0..10 {
        let k = [2, 3, 5][trial % 3];
        let alpha = random_alpha(&mut rng, k);
        let d = DirichletParams::new(alpha.clone()).unwrap();
        let est = mc_mean(
            std::iter::repeat_with(|| oracle::entropy(&sample_simplex(&mut rng, &alpha))),
            DRAWS,
        );
        assert_within_3se("expected_entropy", dirichlet::expected_categorical_entropy(&d), &est);
        // MI shares the random part: H(E[pi]) is exact algebra
        let a0: f64 = alpha.iter().sum();
        let mean_probs: Vec<f64> = alpha.iter().map(|&a| a / a0).collect();
        let mi_mc = McEstimate { mean: oracle::entropy(&mean_probs) - est.mean, se: est.se };
        assert_within_3se("mutual_information", dirichlet::mutual_information(&d), &mi_mc);
    }
    // α = (10,10,10) named case
    let alpha = vec![10.0; 3];
    let d = DirichletParams::new(alpha.clone()).unwrap();
    let est = mc_mean(
        std::iter::repeat_with(|| oracle::entropy(&sample_simplex(&mut rng, &alpha))),
        DRAWS,
    );
    assert_within_3se("expected_entropy(10,10,10)", dirichlet::expected_categorical_entropy(&d), &est);
}

#[test]
fn differential_entropy_matches_monte_carlo() {
    let mut rng = StdRng::seed_from_u64(504);
    for trial in 0..10 {
        let k = [2, 3, 5][trial % 3];
        let alpha = random_alpha(&mut rng, k);
        let d = DirichletParams::new(alpha.clone()).unwrap();
        let ln_b = oracle::ln_beta(&alpha);
        let est = mc_mean(
            std::iter::repeat_with(|| {
                let pi = sample_simplex(&mut rng, &alpha);
                ln_b
                    - pi.iter()
                        .zip(&alpha)
                        .map(|(&x, &a)| (a - 1.0) * x.max(1e-300).ln())
                        .sum::<f64>()
            }),
            DRAWS,
        );
        assert_within_3se("differential_entropy", dirichlet::differential_entropy(&d), &est);
    }
    // α = (2,2,2) named case
    let alpha = vec![2.0; 3];
    let d = DirichletParams::new(alpha.clone()).unwrap();
    let ln_b = oracle::ln_beta(&alpha);
    let est = mc_mean(
        std::iter::repeat_with(|| {
            let pi = sample_simplex(&mut rng, &alpha);
            ln_b - pi.iter().zip(&alpha).map(|(&x, &a)| (a - 1.0) * x.ln()).sum::<f64>()
        }),
        DRAWS,
    );
    assert_within_3se("differential_entropy(2,2,2)", dirichlet::differential_entropy(&d), &est);
}

#[test]
fn epkl_matches_pairwise_monte_carlo() {
    let mut rng = StdRng::seed_from_u64(505);
    for trial in 0..10 {
        let k = [2, 3, 5][trial % 3];
        let alpha = random_alpha(&mut rng, k);
        let d = DirichletParams::new(alpha.clone()).unwrap();
        let est = mc_mean(
            std::iter::repeat_with(|| {
                let a = sample_simplex(&mut rng, &alpha);
                let b = sample_simplex(&mut rng, &alpha);
                a.iter()
                    .zip(&b)
                    .map(|(&x, &y)| x * (x.max(1e-300).ln() - y.max(1e-300).ln()))
                    .sum::<f64>()
            }),
            DRAWS,
        );
        assert_within_3se("epkl", dirichlet::epkl(&d), &est);
    }
    // α = (3,2,1): closed form is exactly 1/3
    let d = DirichletParams::new(vec![3.0, 2.0, 1.0]).unwrap();
    assert!((dirichlet::epkl(&d) - 1.0 / 3.0).abs() < 1e-15);
}
