//! Measure scoring over datasets: turns a trained model (plus optional
//! fitted context such as a Mahalanobis model or a confidence head) into
//! per-sample raw scores for each requested measure.

use evidential::data::Dataset;
use evidential::dirichlet::{self, DirichletParams};
use evidential::head::ConfidenceHead;
use evidential::measures::{self, MahalanobisModel, Measure};
use evidential::metrics::MeasureScores;
use evidential::net::Network;
use evidential::{Error, Result};

/// Everything needed to score measures consistently across datasets.
pub struct ScoreContext<'a> {
    pub net: &'a Network,
    /// Prototype concentration for KLoS-family scores, τ = 1 + 1/λ.
    pub tau: f64,
    pub mahalanobis: Option<MahalanobisModel>,
    pub odin_temperature: f64,
    pub head: Option<&'a ConfidenceHead>,
}

impl<'a> ScoreContext<'a> {
    pub fn new(net: &'a Network, lambda: f64) -> Result<Self> {
        if lambda <= 0.0 {
            return Err(Error::Config(format!("lambda must be > 0, got {lambda}")));
        }
        Ok(ScoreContext {
            net,
            tau: 1.0 + 1.0 / lambda,
            mahalanobis: None,
            odin_temperature: 1000.0,
            head: None,
        })
    }

    /// Fit the tied-covariance Gaussians on the training set's penultimate
    /// features (the raw input for a linear model).
    pub fn fit_mahalanobis(&mut self, train: &Dataset) -> Result<()> {
        let labels = train.labels()?;
        let mut feats = Vec::with_capacity(train.len());
        for x in &train.features {
            feats.push(self.net.forward(x)?.1);
        }
        let ridge = MahalanobisModel::default_ridge(&feats, labels)?;
        self.mahalanobis = Some(MahalanobisModel::fit(&feats, labels, ridge)?);
        Ok(())
    }
}

/// Evidence floor for the opinion view: concentrations below one carry no
/// evidence mass.
fn dissonance_of_alpha(alpha: &[f64]) -> Result<f64> {
    let clamped: Vec<f64> = alpha.iter().map(|&a| a.max(1.0)).collect();
    let d = DirichletParams::new(clamped)?;
    Ok(dirichlet::dissonance(&dirichlet::to_opinion(&d, None)?))
}

/// Whether a measure needs ground-truth labels (restricting it to the
/// in-distribution set and the mis task).
pub fn needs_labels(measure: Measure) -> bool {
    matches!(measure, Measure::Tcp | Measure::Ntcp | Measure::KlosStar)
}

fn score_sample(
    ctx: &ScoreContext,
    measure: Measure,
    x: &[f64],
    label: Option<usize>,
) -> Result<f64> {
    let (logits, penultimate) = ctx.net.forward(x)?;
    let alpha = DirichletParams::from_logits(&logits)?;
    let probs = measures::softmax_prob(&logits);
    let value = match measure {
        Measure::Mcp => measures::mcp(&probs),
        Measure::Entropy => measures::predictive_entropy(&probs),
        Measure::Tcp => measures::tcp(&probs, require_label(measure, label)?)?,
        Measure::Ntcp => measures::ntcp(&probs, require_label(measure, label)?)?,
        Measure::Klos => measures::klos(&alpha, ctx.tau)?,
        Measure::KlosStar => {
            measures::klos_star(&alpha, require_label(measure, label)?, ctx.tau)?
        }
        Measure::MutualInformation => dirichlet::mutual_information(&alpha),
        Measure::DifferentialEntropy => dirichlet::differential_entropy(&alpha),
        Measure::Epkl => dirichlet::epkl(&alpha),
        Measure::Dissonance => dissonance_of_alpha(alpha.alpha())?,
        Measure::Precision => alpha.precision(),
        Measure::Mahalanobis => ctx
            .mahalanobis
            .as_ref()
            .ok_or_else(|| Error::Config("mahalanobis requested without a fitted model".into()))?
            .score(&penultimate)?,
        Measure::Odin => measures::odin_score(&logits, ctx.odin_temperature)?,
        Measure::Confidnet | Measure::Klosnet => {
            let head = ctx.head.ok_or_else(|| {
                Error::Config(format!("{} requested without --head", measure.name()))
            })?;
            head.confidence_score(ctx.net, x)?
        }
        Measure::VariationRatio => {
            return Err(Error::Config(
                "variation_ratio needs an ensemble; use --ensemble".into(),
            ))
        }
    };
    Ok(value)
}

fn require_label(measure: Measure, label: Option<usize>) -> Result<usize> {
    label.ok_or_else(|| {
        Error::Config(format!("measure {} needs ground-truth labels", measure.name()))
    })
}

/// Raw scores of one measure over a dataset; labeled measures read the
/// dataset labels.
pub fn score_dataset(ctx: &ScoreContext, measure: Measure, data: &Dataset) -> Result<Vec<f64>> {
    let labels = data.labels.as_deref();
    let mut out = Vec::with_capacity(data.len());
    for (i, x) in data.features.iter().enumerate() {
        out.push(score_sample(ctx, measure, x, labels.map(|l| l[i]))?);
    }
    Ok(out)
}

/// Scores for every requested measure on the ID test set and the OOD set.
/// Label-dependent measures get an empty OOD side, which confines them to
/// the mis task downstream.
pub fn score_measures(
    ctx: &ScoreContext,
    measures_list: &[Measure],
    test: &Dataset,
    ood: Option<&Dataset>,
) -> Result<Vec<MeasureScores>> {
    let mut out = Vec::with_capacity(measures_list.len());
    for &m in measures_list {
        let id_scores = score_dataset(ctx, m, test)?;
        let ood_scores = match ood {
            Some(o) if !needs_labels(m) => score_dataset(ctx, m, o)?,
            _ => Vec::new(),
        };
        out.push(MeasureScores { measure: m, id_scores, ood_scores });
    }
    Ok(out)
}

/// Correctness flags of the classifier on a labeled dataset.
pub fn correctness(net: &Network, data: &Dataset) -> Result<Vec<bool>> {
    let labels = data.labels()?;
    let mut out = Vec::with_capacity(data.len());
    for (x, &y) in data.features.iter().zip(labels) {
        let (logits, _) = net.forward(x)?;
        out.push(measures::argmax(&logits) == y);
    }
    Ok(out)
}

/// Ensemble scoring from averaged concentration parameters; also provides
/// variation_ratio from the members' predicted classes.
pub fn score_measures_ensemble(
    nets: &[Network],
    lambda: f64,
    measures_list: &[Measure],
    test: &Dataset,
    ood: Option<&Dataset>,
) -> Result<Vec<MeasureScores>> {
    if nets.is_empty() {
        return Err(Error::Config("ensemble mode needs at least one model".into()));
    }
    let tau = 1.0 + 1.0 / lambda;
    let score_set = |data: &Dataset| -> Result<Vec<Vec<f64>>> {
        // per-sample averaged alpha plus member argmax votes
        let mut per_measure: Vec<Vec<f64>> = vec![Vec::with_capacity(data.len()); measures_list.len()];
        for x in &data.features {
            let mut members = Vec::with_capacity(nets.len());
            let mut votes = Vec::with_capacity(nets.len());
            for net in nets {
                let (logits, _) = net.forward(x)?;
                let d = DirichletParams::from_logits(&logits)?;
                votes.push(measures::softmax_prob(&logits));
                members.push(d);
            }
            let avg = measures::ensemble_average(&members)?;
            let probs = dirichlet::expected_probs(&avg);
            for (slot, &m) in per_measure.iter_mut().zip(measures_list) {
                let v = match m {
                    Measure::Mcp => measures::mcp(&probs),
                    Measure::Entropy => measures::predictive_entropy(&probs),
                    Measure::Klos => measures::klos(&avg, tau)?,
                    Measure::MutualInformation => dirichlet::mutual_information(&avg),
                    Measure::DifferentialEntropy => dirichlet::differential_entropy(&avg),
                    Measure::Epkl => dirichlet::epkl(&avg),
                    Measure::Dissonance => dissonance_of_alpha(avg.alpha())?,
                    Measure::Precision => avg.precision(),
                    Measure::VariationRatio => measures::variation_ratio(&votes)?,
                    other => {
                        return Err(Error::Config(format!(
                            "measure {} is not available in ensemble mode",
                            other.name()
                        )))
                    }
                };
                slot.push(v);
            }
        }
        Ok(per_measure)
    };
    let id = score_set(test)?;
    let ood_scores = match ood {
        Some(o) => score_set(o)?,
        None => vec![Vec::new(); measures_list.len()],
    };
    Ok(measures_list
        .iter()
        .zip(id.into_iter().zip(ood_scores))
        .map(|(&measure, (id_scores, ood_scores))| MeasureScores { measure, id_scores, ood_scores })
        .collect())
}

/// Ensemble prediction correctness from averaged concentrations.
pub fn correctness_ensemble(nets: &[Network], data: &Dataset) -> Result<Vec<bool>> {
    let labels = data.labels()?;
    let mut out = Vec::with_capacity(data.len());
    for (x, &y) in data.features.iter().zip(labels) {
        let mut members = Vec::with_capacity(nets.len());
        for net in nets {
            let (logits, _) = net.forward(x)?;
            members.push(DirichletParams::from_logits(&logits)?);
        }
        let avg = measures::ensemble_average(&members)?;
        out.push(measures::argmax(avg.alpha()) == y);
    }
    Ok(out)
}
