//! Closed-form quantities on Dirichlet distributions and their
//! subjective-logic (opinion) view.

use crate::error::{Error, Result};
use crate::measures::ProbVector;
use crate::special::{digamma_unchecked, log_gamma_unchecked};

/// Concentration parameters of a Dirichlet distribution (one per class).
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletParams {
    alpha: Vec<f64>,
}

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::Dimension(format!(
                "DirichletParams needs K >= 2 classes, got {}",
                alpha.len()
            )));
        }
        for (k, &a) in alpha.iter().enumerate() {
            if !a.is_finite() || a <= 0.0 {
                return Err(Error::Domain(format!("alpha[{k}] must be finite and > 0, got {a}")));
            }
        }
        Ok(DirichletParams { alpha })
    }

    /// Concentrations from logits: alpha_k = exp(f_k).
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        DirichletParams::new(logits.iter().map(|f| f.exp()).collect())
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn num_classes(&self) -> usize {
        self.alpha.len()
    }

    /// Precision α₀ = Σ α_k.
    pub fn precision(&self) -> f64 {
        self.alpha.iter().sum()
    }
}

/// Subjective-logic opinion (belief masses, vacuity, base rate).
///
/// The base rate is carried for completeness but not used by any measure
/// here; callers that have no prior default it to uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct Opinion {
    pub belief: Vec<f64>,
    pub vacuity: f64,
    pub base_rate: Vec<f64>,
}

/// E[π_k] = α_k / α₀.
pub fn expected_probs(d: &DirichletParams) -> ProbVector {
    let a0 = d.precision();
    ProbVector::new_unchecked(d.alpha().iter().map(|a| a / a0).collect())
}

pub(crate) fn kl_dirichlet_slices(p: &[f64], q: &[f64]) -> f64 {
    let p0: f64 = p.iter().sum();
    let q0: f64 = q.iter().sum();
    let dg_p0 = digamma_unchecked(p0);
    let mut acc = log_gamma_unchecked(p0) - log_gamma_unchecked(q0);
    for (&pk, &qk) in p.iter().zip(q) {
        acc += log_gamma_unchecked(qk) - log_gamma_unchecked(pk)
            + (pk - qk) * (digamma_unchecked(pk) - dg_p0);
    }
    acc
}

/// KL(Dir(p) ‖ Dir(q)). Non-negative up to ~1e-12 rounding; not clamped.
pub fn kl_dirichlet(p: &DirichletParams, q: &DirichletParams) -> Result<f64> {
    if p.num_classes() != q.num_classes() {
        return Err(Error::Dimension(format!(
            "kl_dirichlet: K mismatch ({} vs {})",
            p.num_classes(),
            q.num_classes()
        )));
    }
    Ok(kl_dirichlet_slices(p.alpha(), q.alpha()))
}

pub(crate) fn kl_to_uniform_slice(alpha: &[f64]) -> f64 {
    let k = alpha.len() as f64;
    let a0: f64 = alpha.iter().sum();
    let dg_a0 = digamma_unchecked(a0);
    let mut acc = log_gamma_unchecked(a0) - log_gamma_unchecked(k);
    for &a in alpha {
        acc += (a - 1.0) * (digamma_unchecked(a) - dg_a0) - log_gamma_unchecked(a);
    }
    acc
}

/// KL(Dir(α) ‖ Dir(1, …, 1)).
pub fn kl_to_uniform(d: &DirichletParams) -> f64 {
    kl_to_uniform_slice(d.alpha())
}

pub(crate) fn expected_entropy_slice(alpha: &[f64]) -> f64 {
    let a0: f64 = alpha.iter().sum();
    let dg_a0p1 = digamma_unchecked(a0 + 1.0);
    -alpha
        .iter()
        .map(|&a| a / a0 * (digamma_unchecked(a + 1.0) - dg_a0p1))
        .sum::<f64>()
}

/// E_{π~Dir(α)}[H(π)] = −Σ (α_k/α₀)(ψ(α_k+1) − ψ(α₀+1)).
pub fn expected_categorical_entropy(d: &DirichletParams) -> f64 {
    expected_entropy_slice(d.alpha())
}

pub(crate) fn mutual_information_slice(alpha: &[f64]) -> f64 {
    let a0: f64 = alpha.iter().sum();
    let pred_entropy = -alpha
        .iter()
        .map(|&a| {
            let p = a / a0;
            if p > 0.0 { p * p.ln() } else { 0.0 }
        })
        .sum::<f64>();
    pred_entropy - expected_entropy_slice(alpha)
}

/// Epistemic part of the predictive entropy: H(E[π]) − E[H(π)].
pub fn mutual_information(d: &DirichletParams) -> f64 {
    mutual_information_slice(d.alpha())
}

pub(crate) fn differential_entropy_slice(alpha: &[f64]) -> f64 {
    let k = alpha.len() as f64;
    let a0: f64 = alpha.iter().sum();
    let dg_a0 = digamma_unchecked(a0);
    let ln_beta: f64 =
        alpha.iter().map(|&a| log_gamma_unchecked(a)).sum::<f64>() - log_gamma_unchecked(a0);
    ln_beta + (a0 - k) * dg_a0
        - alpha
            .iter()
            .map(|&a| (a - 1.0) * digamma_unchecked(a))
            .sum::<f64>()
}

/// Differential entropy of Dir(α).
pub fn differential_entropy(d: &DirichletParams) -> f64 {
    differential_entropy_slice(d.alpha())
}

/// Expected pairwise KL divergence between categorical draws: (K−1)/α₀.
pub fn epkl(d: &DirichletParams) -> f64 {
    (d.num_classes() as f64 - 1.0) / d.precision()
}

/// Opinion with evidence e_k = α_k − 1, so S = α₀, b_k = e_k/S, u = K/S.
///
/// Rejects any α_k < 1 (negative evidence has no subjective-logic reading).
pub fn to_opinion(d: &DirichletParams, base_rate: Option<ProbVector>) -> Result<Opinion> {
    let k = d.num_classes();
    for (i, &a) in d.alpha().iter().enumerate() {
        if a < 1.0 {
            return Err(Error::Domain(format!(
                "to_opinion: alpha[{i}] = {a} < 1 gives negative evidence"
            )));
        }
    }
    let base_rate = match base_rate {
        Some(a) => {
            if a.len() != k {
                return Err(Error::Dimension(format!(
                    "base rate length {} does not match K = {k}",
                    a.len()
                )));
            }
            a.into_vec()
        }
        None => vec![1.0 / k as f64; k],
    };
    let s = d.precision();
    Ok(Opinion {
        belief: d.alpha().iter().map(|a| (a - 1.0) / s).collect(),
        vacuity: k as f64 / s,
        base_rate,
    })
}

/// Relative mass balance; zero when either belief mass vanishes.
fn balance(bj: f64, bk: f64) -> f64 {
    if bj.min(bk) == 0.0 {
        0.0
    } else {
        1.0 - (bj - bk).abs() / (bj + bk)
    }
}

/// Dissonance of an opinion: conflicting-evidence mass in [0, 1].
pub fn dissonance(o: &Opinion) -> f64 {
    let b = &o.belief;
    let mut total = 0.0;
    for k in 0..b.len() {
        let denom: f64 = (0..b.len()).filter(|&j| j != k).map(|j| b[j]).sum();
        if denom == 0.0 {
            continue;
        }
        let num: f64 = (0..b.len())
            .filter(|&j| j != k)
            .map(|j| b[j] * balance(b[j], b[k]))
            .sum();
        total += b[k] * num / denom;
    }
    total
}
