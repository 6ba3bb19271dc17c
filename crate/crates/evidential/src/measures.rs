//! Confidence-rate functions over model outputs: first-order scores,
//! KLoS-family divergence scores, and post-hoc baselines, plus the
//! orientation registry that maps every raw score onto a common
//! "higher = more confident" axis.

use crate::dirichlet::{self, DirichletParams};
use crate::error::{Error, Result};
use crate::net::Network;

/// Point on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    probs: Vec<f64>,
}

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::Dimension(format!(
                "ProbVector needs length >= 2, got {}",
                probs.len()
            )));
        }
        for (k, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::Domain(format!("probs[{k}] = {p} is not a probability")));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("probabilities sum to {sum}, expected 1")));
        }
        Ok(ProbVector { probs })
    }

    pub(crate) fn new_unchecked(probs: Vec<f64>) -> Self {
        ProbVector { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Maximum class probability.
pub fn mcp(p: &ProbVector) -> f64 {
    p.probs()[argmax(p.probs())]
}

/// Shannon entropy of the prediction, with 0 ln 0 = 0.
pub fn predictive_entropy(p: &ProbVector) -> f64 {
    -p.probs()
        .iter()
        .map(|&v| if v > 0.0 { v * v.ln() } else { 0.0 })
        .sum::<f64>()
}

fn check_label(len: usize, y: usize) -> Result<()> {
    if y >= len {
        return Err(Error::Dimension(format!("label {y} out of range for K = {len}")));
    }
    Ok(())
}

/// True class probability p_y.
pub fn tcp(p: &ProbVector, y: usize) -> Result<f64> {
    check_label(p.len(), y)?;
    Ok(p.probs()[y])
}

/// Normalized TCP: p_y / max_k p_k; equals 1 exactly on correct predictions.
pub fn ntcp(p: &ProbVector, y: usize) -> Result<f64> {
    check_label(p.len(), y)?;
    Ok(p.probs()[y] / mcp(p))
}

fn check_tau(tau: f64) -> Result<()> {
    if !tau.is_finite() || tau <= 1.0 {
        return Err(Error::Config(format!("prototype concentration tau must be > 1, got {tau}")));
    }
    Ok(())
}

fn kl_to_prototype(alpha: &[f64], class: usize, tau: f64) -> f64 {
    let mut gamma = vec![1.0; alpha.len()];
    gamma[class] = tau;
    dirichlet::kl_dirichlet_slices(alpha, &gamma)
}

/// KLoS: KL from Dir(α) to the prototype peaked (τ) on the *predicted*
/// class. Lower = more confident.
pub fn klos(d: &DirichletParams, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(kl_to_prototype(d.alpha(), argmax(d.alpha()), tau))
}

/// KLoS*: same divergence, prototype peaked on the *true* class.
pub fn klos_star(d: &DirichletParams, y: usize, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    check_label(d.num_classes(), y)?;
    Ok(kl_to_prototype(d.alpha(), y, tau))
}

/// Additive constant linking KLoS to the uniform-prior KL:
/// KLoS = −(τ−1)(ψ(α_ŷ) − ψ(α₀)) + KL(Dir(α)‖Dir(1)) + klos_constant(K, τ).
pub fn klos_constant(k: usize, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    use crate::special::log_gamma_unchecked as lg;
    Ok(lg(tau) - lg(k as f64 - 1.0 + tau) + lg(k as f64))
}

/// Class-conditional Gaussians with a tied covariance matrix, fitted on
/// features; scores are max-over-classes negated Mahalanobis distances.
#[derive(Debug, Clone)]
pub struct MahalanobisModel {
    means: Vec<Vec<f64>>,
    cov: Vec<f64>,
    inv: Vec<f64>,
    dim: usize,
}

/// Cholesky factorization of a symmetric positive-definite matrix
/// (row-major, in place lower factor). Errors if a pivot is not positive.
fn cholesky(a: &mut [f64], n: usize) -> Result<()> {
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::Numeric(format!(
                        "covariance not positive definite (pivot {s} at {i})"
                    )));
                }
                a[i * n + i] = s.sqrt();
            } else {
                a[i * n + j] = s / a[j * n + j];
            }
        }
        for j in (i + 1)..n {
            a[i * n + j] = 0.0;
        }
    }
    Ok(())
}

/// Inverse from the Cholesky factor, solving L Lᵀ X = I column by column.
fn spd_inverse(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut l = a.to_vec();
    cholesky(&mut l, n)?;
    let mut inv = vec![0.0; n * n];
    for col in 0..n {
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for k in 0..i {
                s -= l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[k * n + i] * inv[k * n + col];
            }
            inv[i * n + col] = s / l[i * n + i];
        }
    }
    Ok(inv)
}

impl MahalanobisModel {
    /// Empirical class means and pooled covariance (normalized by N) plus
    /// `ridge` on the diagonal.
    pub fn fit(features: &[Vec<f64>], labels: &[usize], ridge: f64) -> Result<Self> {
        if features.len() != labels.len() || features.is_empty() {
            return Err(Error::Dimension("features/labels length mismatch or empty".into()));
        }
        let dim = features[0].len();
        let k = labels.iter().max().unwrap() + 1;
        let mut counts = vec![0usize; k];
        let mut means = vec![vec![0.0; dim]; k];
        for (f, &y) in features.iter().zip(labels) {
            if f.len() != dim {
                return Err(Error::Dimension("ragged feature rows".into()));
            }
            counts[y] += 1;
            for (m, &v) in means[y].iter_mut().zip(f) {
                *m += v;
            }
        }
        for (c, &n) in counts.iter().enumerate() {
            if n < 2 {
                return Err(Error::Protocol(format!("class {c} has {n} samples, need >= 2")));
            }
            for m in means[c].iter_mut() {
                *m /= n as f64;
            }
        }
        let mut cov = vec![0.0; dim * dim];
        for (f, &y) in features.iter().zip(labels) {
            for i in 0..dim {
                let di = f[i] - means[y][i];
                for j in 0..dim {
                    cov[i * dim + j] += di * (f[j] - means[y][j]);
                }
            }
        }
        let n_total = features.len() as f64;
        for v in cov.iter_mut() {
            *v /= n_total;
        }
        for i in 0..dim {
            cov[i * dim + i] += ridge;
        }
        let inv = spd_inverse(&cov, dim)?;
        Ok(MahalanobisModel { means, cov, inv, dim })
    }

    /// Default ridge 1e-6 · trace(Σ̂)/d, floored so a zero-variance fit
    /// still inverts.
    pub fn default_ridge(features: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
        let dim = features.first().map(|f| f.len()).unwrap_or(0);
        if dim == 0 {
            return Err(Error::Dimension("empty features".into()));
        }
        let k = labels.iter().max().map(|m| m + 1).unwrap_or(0);
        let mut counts = vec![0usize; k];
        let mut means = vec![vec![0.0; dim]; k];
        for (f, &y) in features.iter().zip(labels) {
            counts[y] += 1;
            for (m, &v) in means[y].iter_mut().zip(f) {
                *m += v;
            }
        }
        for (c, &n) in counts.iter().enumerate() {
            for m in means[c].iter_mut() {
                *m /= (n.max(1)) as f64;
            }
        }
        let mut trace = 0.0;
        for (f, &y) in features.iter().zip(labels) {
            for i in 0..dim {
                let d = f[i] - means[y][i];
                trace += d * d;
            }
        }
        trace /= features.len() as f64;
        Ok((1e-6 * trace / dim as f64).max(1e-12))
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn covariance(&self) -> &[f64] {
        &self.cov
    }

    /// M(x) = max_k −(f − μ̂_k)ᵀ Σ̂⁻¹ (f − μ̂_k). Higher = more confident.
    pub fn score(&self, f: &[f64]) -> Result<f64> {
        if f.len() != self.dim {
            return Err(Error::Dimension(format!(
                "feature dim {} does not match model dim {}",
                f.len(),
                self.dim
            )));
        }
        let mut best = f64::NEG_INFINITY;
        let mut diff = vec![0.0; self.dim];
        for mu in &self.means {
            for i in 0..self.dim {
                diff[i] = f[i] - mu[i];
            }
            let mut quad = 0.0;
            for i in 0..self.dim {
                for j in 0..self.dim {
                    quad += diff[i] * self.inv[i * self.dim + j] * diff[j];
                }
            }
            best = best.max(-quad);
        }
        Ok(best)
    }
}

/// Softmax over logits as a validated simplex point.
pub fn softmax_prob(logits: &[f64]) -> ProbVector {
    ProbVector::new_unchecked(softmax(logits))
}

/// Softmax over logits.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&f| (f - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Temperature-scaled MCP: max softmax(logits / T).
pub fn odin_score(logits: &[f64], t: f64) -> Result<f64> {
    if !t.is_finite() || t <= 0.0 {
        return Err(Error::Config(format!("temperature must be > 0, got {t}")));
    }
    let scaled: Vec<f64> = logits.iter().map(|&f| f / t).collect();
    let p = softmax(&scaled);
    Ok(p[argmax(&p)])
}

fn nll_at_temperature(logits_set: &[Vec<f64>], labels: &[usize], t: f64) -> f64 {
    let mut total = 0.0;
    for (logits, &y) in logits_set.iter().zip(labels) {
        let scaled: Vec<f64> = logits.iter().map(|&f| f / t).collect();
        let p = softmax(&scaled);
        total -= p[y].max(1e-300).ln();
    }
    total / logits_set.len() as f64
}

/// Grid search for the temperature minimizing validation NLL.
pub fn fit_temperature(logits_set: &[Vec<f64>], labels: &[usize], grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Config("temperature grid is empty".into()));
    }
    if logits_set.len() != labels.len() || logits_set.is_empty() {
        return Err(Error::Dimension("logits/labels length mismatch or empty".into()));
    }
    for &t in grid {
        if !t.is_finite() || t <= 0.0 {
            return Err(Error::Config(format!("grid temperature {t} must be > 0")));
        }
    }
    let mut best = grid[0];
    let mut best_nll = f64::INFINITY;
    for &t in grid {
        let nll = nll_at_temperature(logits_set, labels, t);
        if nll < best_nll {
            best_nll = nll;
            best = t;
        }
    }
    Ok(best)
}

/// Inverse adversarial step: x̃ = x + ε · sign(∇_x score).
///
/// `score` maps logits to a scalar and its gradient w.r.t. the logits;
/// the input gradient is obtained by backpropagation. ε = 0 returns x.
pub fn inverse_fgsm(
    net: &Network,
    x: &[f64],
    epsilon: f64,
    score: &dyn Fn(&[f64]) -> (f64, Vec<f64>),
) -> Result<Vec<f64>> {
    if epsilon == 0.0 {
        return Ok(x.to_vec());
    }
    let grad = net.input_gradient(x, score)?;
    Ok(x.iter()
        .zip(&grad)
        .map(|(&xi, &g)| xi + epsilon * sign(g))
        .collect())
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Element-wise mean of ensemble members' concentration parameters.
pub fn ensemble_average(alphas: &[DirichletParams]) -> Result<DirichletParams> {
    let first = alphas
        .first()
        .ok_or_else(|| Error::Dimension("empty ensemble".into()))?;
    let k = first.num_classes();
    let mut mean = vec![0.0; k];
    for d in alphas {
        if d.num_classes() != k {
            return Err(Error::Dimension("ensemble members disagree on K".into()));
        }
        for (m, &a) in mean.iter_mut().zip(d.alpha()) {
            *m += a;
        }
    }
    for m in mean.iter_mut() {
        *m /= alphas.len() as f64;
    }
    DirichletParams::new(mean)
}

/// 1 − frequency of the most predicted class across members.
pub fn variation_ratio(member_probs: &[ProbVector]) -> Result<f64> {
    let first = member_probs
        .first()
        .ok_or_else(|| Error::Dimension("empty ensemble".into()))?;
    let k = first.len();
    let mut counts = vec![0usize; k];
    for p in member_probs {
        if p.len() != k {
            return Err(Error::Dimension("ensemble members disagree on K".into()));
        }
        counts[argmax(p.probs())] += 1;
    }
    let top = *counts.iter().max().unwrap();
    Ok(1.0 - top as f64 / member_probs.len() as f64)
}

/// Stable measure identifiers with their confidence orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Mcp,
    Entropy,
    Tcp,
    Ntcp,
    Klos,
    KlosStar,
    MutualInformation,
    DifferentialEntropy,
    Epkl,
    Dissonance,
    Precision,
    Mahalanobis,
    Odin,
    VariationRatio,
    Confidnet,
    Klosnet,
}

impl Measure {
    pub const ALL: [Measure; 16] = [
        Measure::Mcp,
        Measure::Entropy,
        Measure::Tcp,
        Measure::Ntcp,
        Measure::Klos,
        Measure::KlosStar,
        Measure::MutualInformation,
        Measure::DifferentialEntropy,
        Measure::Epkl,
        Measure::Dissonance,
        Measure::Precision,
        Measure::Mahalanobis,
        Measure::Odin,
        Measure::VariationRatio,
        Measure::Confidnet,
        Measure::Klosnet,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Measure::Mcp => "mcp",
            Measure::Entropy => "entropy",
            Measure::Tcp => "tcp",
            Measure::Ntcp => "ntcp",
            Measure::Klos => "klos",
            Measure::KlosStar => "klos_star",
            Measure::MutualInformation => "mutual_information",
            Measure::DifferentialEntropy => "differential_entropy",
            Measure::Epkl => "epkl",
            Measure::Dissonance => "dissonance",
            Measure::Precision => "precision",
            Measure::Mahalanobis => "mahalanobis",
            Measure::Odin => "odin",
            Measure::VariationRatio => "variation_ratio",
            Measure::Confidnet => "confidnet",
            Measure::Klosnet => "klosnet",
        }
    }

    pub fn from_name(name: &str) -> Result<Measure> {
        Measure::ALL
            .iter()
            .copied()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown measure `{name}`")))
    }

    /// Whether larger raw values mean more confidence. Divergence- and
    /// dispersion-type scores (and the raw KLoSNet head output, which
    /// regresses a squashed divergence) orient the other way.
    pub fn higher_is_confident(&self) -> bool {
        match self {
            Measure::Mcp
            | Measure::Tcp
            | Measure::Ntcp
            | Measure::Precision
            | Measure::Mahalanobis
            | Measure::Odin
            | Measure::Confidnet => true,
            Measure::Entropy
            | Measure::Klos
            | Measure::KlosStar
            | Measure::MutualInformation
            | Measure::DifferentialEntropy
            | Measure::Epkl
            | Measure::Dissonance
            | Measure::VariationRatio
            | Measure::Klosnet => false,
        }
    }

    /// Map a raw score onto the common "higher = more confident" axis.
    pub fn as_confidence(&self, raw: f64) -> f64 {
        if self.higher_is_confident() {
            raw
        } else {
            -raw
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn dir(alpha: &[f64]) -> DirichletParams {
        DirichletParams::new(alpha.to_vec()).unwrap()
    }

    fn pv(p: &[f64]) -> ProbVector {
        ProbVector::new(p.to_vec()).unwrap()
    }

    fn random_simplex(rng: &mut SplitMix64, k: usize) -> Vec<f64> {
        // exponential spacings normalize to a uniform simplex point
        let raw: Vec<f64> = (0..k).map(|_| -rng.next_f64_open().ln()).collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|r| r / sum).collect()
    }

    #[test]
    fn prob_vector_validation() {
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![1.1, -0.1]).is_err());
        assert!(ProbVector::new(vec![1.0]).is_err());
        assert!(ProbVector::new(vec![0.5, 0.5]).is_ok());
    }

    #[test]
    fn mcp_and_entropy_examples() {
        assert!((mcp(&pv(&[1.0 / 3.0; 3])) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(mcp(&pv(&[0.0, 1.0, 0.0])), 1.0);
        assert_eq!(mcp(&pv(&[0.5, 0.3, 0.2])), 0.5);
        assert_eq!(predictive_entropy(&pv(&[0.0, 1.0, 0.0])), 0.0);
        assert!((predictive_entropy(&pv(&[1.0 / 3.0; 3])) - 3f64.ln()).abs() < 1e-12);
        // entropy is symmetric in the class probabilities
        let a = predictive_entropy(&pv(&[0.65, 0.35]));
        let b = predictive_entropy(&pv(&[0.35, 0.65]));
        assert_eq!(a, b);
    }

    #[test]
    fn tcp_propositions_on_random_points() {
        let mut rng = SplitMix64::new(17);
        for _ in 0..20_000 {
            let k = 2 + rng.next_below(5);
            let p = pv(&random_simplex(&mut rng, k));
            let y = rng.next_below(k);
            let t = tcp(&p, y).unwrap();
            let pred = argmax(p.probs());
            if t > 0.5 {
                assert_eq!(pred, y);
            }
            if t < 1.0 / k as f64 {
                assert_ne!(pred, y);
            }
        }
    }

    #[test]
    fn ntcp_examples() {
        let p = pv(&[0.5, 0.25, 0.25]);
        assert_eq!(ntcp(&p, 0).unwrap(), 1.0);
        assert_eq!(ntcp(&p, 1).unwrap(), 0.5);
        let mut rng = SplitMix64::new(23);
        for _ in 0..1000 {
            let p = pv(&random_simplex(&mut rng, 4));
            let y = rng.next_below(4);
            let n = ntcp(&p, y).unwrap();
            assert_eq!(n == 1.0, argmax(p.probs()) == y);
        }
        assert!(tcp(&p, 9).is_err());
    }

    #[test]
    fn klos_zero_at_prototype() {
        let tau = 21.0;
        let mut gamma = vec![1.0, 1.0, 1.0];
        gamma[1] = tau;
        let d = dir(&gamma);
        assert!(klos(&d, tau).unwrap().abs() < 1e-10);
        assert!(klos_star(&d, 1, tau).unwrap().abs() < 1e-10);
        assert!(klos(&d, 1.0).is_err());
        assert!(klos(&d, 0.5).is_err());
    }

    #[test]
    fn klos_star_equals_klos_on_predicted_class() {
        let d = dir(&[5.0, 2.0, 1.0]);
        let tau = 21.0;
        assert_eq!(klos(&d, tau).unwrap(), klos_star(&d, 0, tau).unwrap());
    }

    #[test]
    fn klos_decomposition_identity() {
        use crate::special::digamma_unchecked as dg;
        let mut rng = SplitMix64::new(31);
        for _ in 0..2000 {
            let k = 2 + rng.next_below(4);
            let alpha: Vec<f64> = (0..k).map(|_| (3.0 * (rng.next_f64() - 0.3)).exp()).collect();
            let d = dir(&alpha);
            let tau = 1.5 + rng.next_f64() * 30.0;
            let yhat = argmax(d.alpha());
            let direct = klos(&d, tau).unwrap();
            let a0 = d.precision();
            let via = -(tau - 1.0) * (dg(d.alpha()[yhat]) - dg(a0))
                + dirichlet::kl_to_uniform(&d)
                + klos_constant(k, tau).unwrap();
            let denom = direct.abs().max(1e-12);
            assert!(
                ((direct - via) / denom).abs() < 1e-9,
                "decomposition off: {direct} vs {via}"
            );
        }
    }

    #[test]
    fn klos_separates_equal_expectation_different_precision() {
        // identical expected probabilities, different total evidence
        let lo = dir(&[2.0, 1.5, 1.5]);
        let hi = dir(&[40.0, 30.0, 30.0]);
        let p_lo = dirichlet::expected_probs(&lo);
        let p_hi = dirichlet::expected_probs(&hi);
        for (a, b) in p_lo.probs().iter().zip(p_hi.probs()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(mcp(&p_lo), mcp(&p_hi));
        assert_eq!(predictive_entropy(&p_lo), predictive_entropy(&p_hi));
        let tau = 21.0;
        assert!((klos(&lo, tau).unwrap() - klos(&hi, tau).unwrap()).abs() > 1e-3);
    }

    #[test]
    fn first_order_scores_invariant_to_alpha_scaling() {
        let d = dir(&[4.0, 2.0, 1.0]);
        let scaled = dir(&[40.0, 20.0, 10.0]);
        let (p, ps) = (dirichlet::expected_probs(&d), dirichlet::expected_probs(&scaled));
        assert!((mcp(&p) - mcp(&ps)).abs() < 1e-12);
        assert!((predictive_entropy(&p) - predictive_entropy(&ps)).abs() < 1e-12);
        assert!((klos(&d, 21.0).unwrap() - klos(&scaled, 21.0).unwrap()).abs() > 1e-3);
    }

    #[test]
    fn mahalanobis_degenerate_two_class() {
        let features = vec![
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![-1.0, 0.0],
        ];
        let labels = vec![0, 0, 1, 1];
        let m = MahalanobisModel::fit(&features, &labels, 1e-6).unwrap();
        assert_eq!(m.means()[0], vec![1.0, 0.0]);
        assert_eq!(m.means()[1], vec![-1.0, 0.0]);
        // score at a class mean is the maximum, zero
        assert!(m.score(&[1.0, 0.0]).unwrap().abs() < 1e-9);
        assert!(m.score(&[5.0, 5.0]).unwrap() < -1.0);
    }

    #[test]
    fn mahalanobis_identity_covariance_reduces_to_euclidean() {
        // spherical data with variance ~1 after pooling
        let mut rng = SplitMix64::new(77);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..400 {
            let y = i % 2;
            let c = if y == 0 { 3.0 } else { -3.0 };
            features.push(vec![c + rng.next_gaussian(), rng.next_gaussian()]);
            labels.push(y);
        }
        let m = MahalanobisModel::fit(&features, &labels, 1e-9).unwrap();
        let x = vec![0.7, -0.4];
        let got = m.score(&x).unwrap();
        let inv = spd_inverse(m.covariance(), 2).unwrap();
        let mut expected = f64::NEG_INFINITY;
        for mu in m.means() {
            let d = [x[0] - mu[0], x[1] - mu[1]];
            let quad = d[0] * d[0] * inv[0] + 2.0 * d[0] * d[1] * inv[1] + d[1] * d[1] * inv[3];
            expected = expected.max(-quad);
        }
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn mahalanobis_unit_covariance_is_negated_euclidean() {
        // four deviations (+-sqrt2, 0), (0, +-sqrt2) per class pool to
        // exactly the identity covariance
        let s = 2f64.sqrt();
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (k, mu) in [[5.0, 0.0], [-5.0, 0.0]].iter().enumerate() {
            for d in [[s, 0.0], [-s, 0.0], [0.0, s], [0.0, -s]] {
                features.push(vec![mu[0] + d[0], mu[1] + d[1]]);
                labels.push(k);
            }
        }
        let m = MahalanobisModel::fit(&features, &labels, 0.0).unwrap();
        assert!((m.covariance()[0] - 1.0).abs() < 1e-12);
        assert!((m.covariance()[3] - 1.0).abs() < 1e-12);
        assert!(m.covariance()[1].abs() < 1e-12);
        for x in [[1.5f64, -0.3], [7.0, 2.0], [-4.0, 1.0]] {
            let expected = -[[5.0f64, 0.0], [-5.0, 0.0]]
                .iter()
                .map(|mu| (x[0] - mu[0]).powi(2) + (x[1] - mu[1]).powi(2))
                .fold(f64::INFINITY, f64::min);
            assert!((m.score(&x).unwrap() - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn pooled_covariance_matches_bruteforce() {
        let mut rng = SplitMix64::new(123);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..300 {
            let y = rng.next_below(3);
            features.push(vec![
                y as f64 + rng.next_gaussian(),
                2.0 * rng.next_gaussian(),
                rng.next_gaussian() - 1.0,
            ]);
            labels.push(y);
        }
        let m = MahalanobisModel::fit(&features, &labels, 0.0).unwrap();
        // naive per-class means then pooled outer products
        let dim = 3;
        let mut means = vec![vec![0.0; dim]; 3];
        let mut counts = [0usize; 3];
        for (f, &y) in features.iter().zip(&labels) {
            counts[y] += 1;
            for i in 0..dim {
                means[y][i] += f[i];
            }
        }
        for y in 0..3 {
            for i in 0..dim {
                means[y][i] /= counts[y] as f64;
            }
        }
        let mut cov = vec![0.0; dim * dim];
        for (f, &y) in features.iter().zip(&labels) {
            for i in 0..dim {
                for j in 0..dim {
                    cov[i * dim + j] += (f[i] - means[y][i]) * (f[j] - means[y][j]);
                }
            }
        }
        for v in cov.iter_mut() {
            *v /= features.len() as f64;
        }
        for (a, b) in m.covariance().iter().zip(&cov) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn odin_examples() {
        let logits = vec![2.0, 0.5, -1.0];
        let t1 = odin_score(&logits, 1.0).unwrap();
        assert!((t1 - mcp(&pv(&softmax(&logits)))).abs() < 1e-15);
        let hot = odin_score(&logits, 1e9).unwrap();
        assert!((hot - 1.0 / 3.0).abs() < 1e-6);
        // argmax invariance under temperature
        for t in [0.1, 1.0, 7.0, 100.0] {
            let scaled: Vec<f64> = logits.iter().map(|&f| f / t).collect();
            assert_eq!(argmax(&softmax(&scaled)), 0);
        }
        assert!(odin_score(&logits, 0.0).is_err());
    }

    #[test]
    fn temperature_fit_examples() {
        // logits built from true posteriors are NLL-optimal at T = 1
        let mut rng = SplitMix64::new(55);
        let mut logits_set = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..4000 {
            let p = random_simplex(&mut rng, 3);
            let u = rng.next_f64();
            let mut acc = 0.0;
            let mut y = 2;
            for (k, &pk) in p.iter().enumerate() {
                acc += pk;
                if u < acc {
                    y = k;
                    break;
                }
            }
            logits_set.push(p.iter().map(|&v| v.max(1e-12).ln()).collect::<Vec<_>>());
            labels.push(y);
        }
        let grid: Vec<f64> = (1..=40).map(|i| i as f64 * 0.1).collect();
        let t = fit_temperature(&logits_set, &labels, &grid).unwrap();
        assert!((t - 1.0).abs() < 0.11, "fitted T = {t}");
        // doubling all logits doubles the optimal temperature
        let doubled: Vec<Vec<f64>> =
            logits_set.iter().map(|l| l.iter().map(|&v| 2.0 * v).collect()).collect();
        let t2 = fit_temperature(&doubled, &labels, &grid).unwrap();
        assert!((t2 - 2.0).abs() < 0.11, "fitted T = {t2}");
        assert!(fit_temperature(&logits_set, &labels, &[]).is_err());
    }

    #[test]
    fn ensemble_average_examples() {
        let a = dir(&[2.0, 1.0, 1.0]);
        let b = dir(&[1.0, 2.0, 1.0]);
        let m = ensemble_average(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(m.alpha(), &[1.5, 1.5, 1.0]);
        let same = ensemble_average(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(same.alpha(), a.alpha());
        let swapped = ensemble_average(&[b, a]).unwrap();
        assert_eq!(swapped.alpha(), m.alpha());
    }

    #[test]
    fn variation_ratio_examples() {
        let agree = vec![pv(&[0.9, 0.1, 0.0]); 4];
        assert_eq!(variation_ratio(&agree).unwrap(), 0.0);
        let spread = vec![pv(&[0.8, 0.1, 0.1]), pv(&[0.1, 0.8, 0.1]), pv(&[0.1, 0.1, 0.8])];
        assert!((variation_ratio(&spread).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let four = vec![
            pv(&[0.8, 0.1, 0.1]),
            pv(&[0.8, 0.1, 0.1]),
            pv(&[0.1, 0.8, 0.1]),
            pv(&[0.1, 0.1, 0.8]),
        ];
        assert_eq!(variation_ratio(&four).unwrap(), 0.5);
    }

    #[test]
    fn measure_registry_round_trip() {
        for m in Measure::ALL {
            assert_eq!(Measure::from_name(m.name()).unwrap(), m);
        }
        assert!(Measure::from_name("bogus").is_err());
        assert_eq!(Measure::Klos.as_confidence(3.0), -3.0);
        assert_eq!(Measure::Mcp.as_confidence(0.9), 0.9);
    }
}
