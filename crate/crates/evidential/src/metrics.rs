//! Detection and selective-classification evaluation, including the joint
//! misclassification + OOD protocol.

use crate::error::{Error, Result};
use crate::measures::{Measure, ProbVector};
use crate::rng::SplitMix64;
use std::io::Write;

/// Confidence scores with binary ground truth (true = positive).
#[derive(Debug, Clone)]
pub struct ScoredSet {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() || scores.is_empty() {
            return Err(Error::Dimension("scores/labels length mismatch or empty".into()));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::Domain("scores must not be NaN".into()));
        }
        Ok(ScoredSet { scores, labels })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<bool>) {
        (self.scores, self.labels)
    }

    fn counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l).count();
        (pos, self.len() - pos)
    }

    fn require_both_classes(&self) -> Result<(usize, usize)> {
        let (pos, neg) = self.counts();
        if pos == 0 || neg == 0 {
            return Err(Error::Protocol(format!(
                "rank metrics need both classes, got {pos} positives / {neg} negatives"
            )));
        }
        Ok((pos, neg))
    }
}

/// Confidences with 0/1 abstention costs (1 = loss when accepted).
#[derive(Debug, Clone)]
pub struct SelectiveSet {
    confidences: Vec<f64>,
    costs: Vec<f64>,
}

impl SelectiveSet {
    pub fn new(confidences: Vec<f64>, costs: Vec<f64>) -> Result<Self> {
        if confidences.len() != costs.len() || confidences.is_empty() {
            return Err(Error::Dimension("confidences/costs length mismatch or empty".into()));
        }
        if costs.iter().any(|&c| c != 0.0 && c != 1.0) {
            return Err(Error::Config("costs must be 0 or 1".into()));
        }
        if confidences.iter().any(|c| c.is_nan()) {
            return Err(Error::Domain("confidences must not be NaN".into()));
        }
        Ok(SelectiveSet { confidences, costs })
    }

    pub fn len(&self) -> usize {
        self.confidences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.confidences.is_empty()
    }
}

/// Mann-Whitney AUROC with ties counted one half.
pub fn auroc(s: &ScoredSet) -> Result<f64> {
    let (pos, neg) = s.require_both_classes()?;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s.scores[a].partial_cmp(&s.scores[b]).unwrap());
    // average ranks over tie groups
    let mut ranks = vec![0.0; s.len()];
    let mut i = 0;
    while i < s.len() {
        let mut j = i;
        while j + 1 < s.len() && s.scores[order[j + 1]] == s.scores[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0; // ranks are 1-based
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    let rank_sum: f64 = ranks
        .iter()
        .zip(&s.labels)
        .filter(|(_, &l)| l)
        .map(|(r, _)| r)
        .sum();
    Ok((rank_sum - (pos * (pos + 1)) as f64 / 2.0) / (pos as f64 * neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PositiveClass {
    Success,
    Error,
}

/// Average precision. For `Error` the misclassifications become the
/// positive class and scores are negated.
pub fn aupr(s: &ScoredSet, positive: PositiveClass) -> Result<f64> {
    s.require_both_classes()?;
    let (scores, labels): (Vec<f64>, Vec<bool>) = match positive {
        PositiveClass::Success => (s.scores.clone(), s.labels.clone()),
        PositiveClass::Error => (
            s.scores.iter().map(|&v| -v).collect(),
            s.labels.iter().map(|&l| !l).collect(),
        ),
    };
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // descending, ties stable by original index
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let total_pos = labels.iter().filter(|&&l| l).count() as f64;
    let mut tp = 0.0;
    let mut seen = 0.0;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for &idx in &order {
        seen += 1.0;
        if labels[idx] {
            tp += 1.0;
        }
        let recall = tp / total_pos;
        let precision = tp / seen;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// FPR at the largest threshold with TPR >= target (step convention, no
/// interpolation).
pub fn fpr_at_tpr(s: &ScoredSet, tpr_target: f64) -> Result<f64> {
    let (pos, neg) = s.require_both_classes()?;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s.scores[b].partial_cmp(&s.scores[a]).unwrap());
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < s.len() {
        // consume a whole tie group: predictions flip for score >= threshold
        let mut j = i;
        while j + 1 < s.len() && s.scores[order[j + 1]] == s.scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            if s.labels[idx] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        if tp as f64 / pos as f64 >= tpr_target {
            return Ok(fp as f64 / neg as f64);
        }
        i = j + 1;
    }
    Ok(1.0)
}

/// Expected calibration error over `bins` equal-width bins on [0, 1].
pub fn ece(confidences: &[f64], correct: &[bool], bins: usize) -> Result<f64> {
    if confidences.len() != correct.len() || confidences.is_empty() {
        return Err(Error::Dimension("confidences/correct length mismatch or empty".into()));
    }
    if bins == 0 {
        return Err(Error::Config("need at least one bin".into()));
    }
    let mut count = vec![0usize; bins];
    let mut acc = vec![0.0; bins];
    let mut conf = vec![0.0; bins];
    for (&c, &ok) in confidences.iter().zip(correct) {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::Domain(format!("confidence {c} outside [0, 1]")));
        }
        let b = ((c * bins as f64) as usize).min(bins - 1);
        count[b] += 1;
        acc[b] += if ok { 1.0 } else { 0.0 };
        conf[b] += c;
    }
    let n = confidences.len() as f64;
    let mut total = 0.0;
    for b in 0..bins {
        if count[b] == 0 {
            continue;
        }
        let m = count[b] as f64;
        total += m / n * (acc[b] / m - conf[b] / m).abs();
    }
    Ok(total)
}

/// Brier score with the 1/K factor.
pub fn brier(probs: &[ProbVector], labels: &[usize]) -> Result<f64> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(Error::Dimension("probs/labels length mismatch or empty".into()));
    }
    let mut total = 0.0;
    for (p, &y) in probs.iter().zip(labels) {
        if y >= p.len() {
            return Err(Error::Dimension(format!("label {y} out of range")));
        }
        let k = p.len() as f64;
        let inner: f64 = p
            .probs()
            .iter()
            .enumerate()
            .map(|(j, &pj)| {
                let target = if j == y { 1.0 } else { 0.0 };
                (pj - target).powi(2)
            })
            .sum();
        total += inner / k;
    }
    Ok(total / probs.len() as f64)
}

/// Floor applied to p_y inside the log; zero probabilities are clamped
/// rather than propagated as infinities.
pub const NLL_FLOOR: f64 = 1e-12;

/// Mean negative log-likelihood of the true labels.
pub fn nll(probs: &[ProbVector], labels: &[usize]) -> Result<f64> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(Error::Dimension("probs/labels length mismatch or empty".into()));
    }
    let mut total = 0.0;
    for (p, &y) in probs.iter().zip(labels) {
        if y >= p.len() {
            return Err(Error::Dimension(format!("label {y} out of range")));
        }
        total -= p.probs()[y].max(NLL_FLOOR).ln();
    }
    Ok(total / probs.len() as f64)
}

fn confidence_order(sel: &SelectiveSet) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sel.len()).collect();
    // descending confidence, ties keep insertion order
    order.sort_by(|&a, &b| {
        sel.confidences[b]
            .partial_cmp(&sel.confidences[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    order
}

/// Risk-coverage curve: coverage i/N against mean cost of the i most
/// confident samples.
pub fn risk_coverage(sel: &SelectiveSet) -> Vec<(f64, f64)> {
    let order = confidence_order(sel);
    let n = sel.len() as f64;
    let mut cum = 0.0;
    order
        .iter()
        .enumerate()
        .map(|(i, &idx)| {
            cum += sel.costs[idx];
            ((i + 1) as f64 / n, cum / (i + 1) as f64)
        })
        .collect()
}

/// Area under the risk-coverage curve (mean of prefix risks).
pub fn aurc(sel: &SelectiveSet) -> f64 {
    let curve = risk_coverage(sel);
    curve.iter().map(|(_, r)| r).sum::<f64>() / curve.len() as f64
}

fn aurc_of_costs_in_order(costs: &[f64]) -> f64 {
    let mut cum = 0.0;
    let mut total = 0.0;
    for (i, &c) in costs.iter().enumerate() {
        cum += c;
        total += cum / (i + 1) as f64;
    }
    total / costs.len() as f64
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct EAurc {
    /// AURC minus the exactly computed optimal-ordering AURC.
    pub exact: f64,
    /// AURC minus the closed approximation R̂ + (1−R̂) ln(1−R̂).
    pub approx: f64,
}

/// Excess AURC over the best achievable ordering (all zero-cost samples
/// first), together with the closed-form approximation.
pub fn e_aurc(sel: &SelectiveSet) -> EAurc {
    let a = aurc(sel);
    let mut sorted_costs = sel.costs.clone();
    sorted_costs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let optimal = aurc_of_costs_in_order(&sorted_costs);
    let risk = sel.costs.iter().sum::<f64>() / sel.len() as f64;
    let closed = if risk < 1.0 { risk + (1.0 - risk) * (1.0 - risk).ln() } else { risk };
    EAurc { exact: a - optimal, approx: a - closed }
}

/// Joint-detection set: positives are correct in-distribution predictions;
/// negatives are round(κ·|OOD|) draws with replacement from the
/// misclassified scores plus every OOD score.
pub fn build_joint_set(
    id_scores: &[f64],
    id_correct: &[bool],
    ood_scores: &[f64],
    kappa: f64,
    seed: u64,
) -> Result<ScoredSet> {
    if id_scores.len() != id_correct.len() {
        return Err(Error::Dimension("id scores/flags length mismatch".into()));
    }
    if kappa < 0.0 {
        return Err(Error::Config(format!("kappa must be >= 0, got {kappa}")));
    }
    let mis: Vec<f64> = id_scores
        .iter()
        .zip(id_correct)
        .filter(|(_, &ok)| !ok)
        .map(|(&s, _)| s)
        .collect();
    if mis.is_empty() || ood_scores.is_empty() {
        return Err(Error::Protocol(
            "joint detection needs at least one misclassification and one OOD sample".into(),
        ));
    }
    let mut scores: Vec<f64> = Vec::new();
    let mut labels: Vec<bool> = Vec::new();
    for (&s, &ok) in id_scores.iter().zip(id_correct) {
        if ok {
            scores.push(s);
            labels.push(true);
        }
    }
    let n_oversample = (kappa * ood_scores.len() as f64).round() as usize;
    let mut rng = SplitMix64::new_stream(seed, 0x0705);
    for _ in 0..n_oversample {
        scores.push(mis[rng.next_below(mis.len())]);
        labels.push(false);
    }
    for &s in ood_scores {
        scores.push(s);
        labels.push(false);
    }
    ScoredSet::new(scores, labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Mis,
    Ood,
    Joint,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Mis => "mis",
            Task::Ood => "ood",
            Task::Joint => "joint",
        }
    }

    pub fn from_name(s: &str) -> Result<Task> {
        match s {
            "mis" => Ok(Task::Mis),
            "ood" => Ok(Task::Ood),
            "joint" => Ok(Task::Joint),
            other => Err(Error::Config(format!("unknown task `{other}`"))),
        }
    }
}

/// Raw scores of one measure on the in-distribution test set and the OOD
/// set (orientation is resolved via the measure registry).
#[derive(Debug, Clone)]
pub struct MeasureScores {
    pub measure: Measure,
    pub id_scores: Vec<f64>,
    /// Empty when the measure is undefined on unlabeled data.
    pub ood_scores: Vec<f64>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ReportRow {
    pub measure: Measure,
    pub task: Task,
    pub auroc: f64,
    pub aupr_error: f64,
    pub aupr_success: f64,
    pub fpr95: f64,
    pub aurc: f64,
    pub e_aurc: f64,
}

/// Classifier-level calibration summary carried alongside the ranking
/// rows (JSON only; the CSV schema is fixed).
#[derive(Debug, Clone, serde::Serialize)]
pub struct CalibrationSummary {
    pub ece: f64,
    pub brier: f64,
    pub nll: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub calibration: Option<CalibrationSummary>,
}

pub const REPORT_CSV_HEADER: &str = "measure,task,auroc,aupr_error,aupr_success,fpr95,aurc,e_aurc";

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                r.measure.name(),
                r.task.name(),
                r.auroc,
                r.aupr_error,
                r.aupr_success,
                r.fpr95,
                r.aurc,
                r.e_aurc
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

fn scored_set_for_task(
    task: Task,
    conf_id: &[f64],
    id_correct: &[bool],
    conf_ood: &[f64],
    kappa: f64,
    seed: u64,
) -> Result<ScoredSet> {
    match task {
        Task::Mis => ScoredSet::new(conf_id.to_vec(), id_correct.to_vec()),
        Task::Ood => {
            if conf_ood.is_empty() {
                return Err(Error::Protocol("ood task needs OOD scores".into()));
            }
            // correct predictions are the positives, as in the joint task
            let mut scores: Vec<f64> = Vec::new();
            for (&s, &ok) in conf_id.iter().zip(id_correct) {
                if ok {
                    scores.push(s);
                }
            }
            let mut labels = vec![true; scores.len()];
            scores.extend_from_slice(conf_ood);
            labels.extend(std::iter::repeat(false).take(conf_ood.len()));
            ScoredSet::new(scores, labels)
        }
        Task::Joint => build_joint_set(conf_id, id_correct, conf_ood, kappa, seed),
    }
}

fn selective_set_from(set: &ScoredSet) -> SelectiveSet {
    let costs = set.labels.iter().map(|&l| if l { 0.0 } else { 1.0 }).collect();
    SelectiveSet { confidences: set.scores.clone(), costs }
}

/// Full detection report: one row per (measure, task), raw scores
/// reoriented so higher means more confident before ranking.
pub fn detection_report(
    scored: &[MeasureScores],
    id_correct: &[bool],
    tasks: &[Task],
    kappa: f64,
    seed: u64,
) -> Result<EvalReport> {
    let mut rows = Vec::new();
    for ms in scored {
        let conf_id: Vec<f64> = ms.id_scores.iter().map(|&v| ms.measure.as_confidence(v)).collect();
        let conf_ood: Vec<f64> =
            ms.ood_scores.iter().map(|&v| ms.measure.as_confidence(v)).collect();
        if conf_id.len() != id_correct.len() {
            return Err(Error::Dimension(format!(
                "measure {} has {} id scores for {} flags",
                ms.measure.name(),
                conf_id.len(),
                id_correct.len()
            )));
        }
        for &task in tasks {
            if task != Task::Mis && conf_ood.is_empty() {
                continue;
            }
            let set = scored_set_for_task(task, &conf_id, id_correct, &conf_ood, kappa, seed)?;
            let sel = selective_set_from(&set);
            rows.push(ReportRow {
                measure: ms.measure,
                task,
                auroc: auroc(&set)?,
                aupr_error: aupr(&set, PositiveClass::Error)?,
                aupr_success: aupr(&set, PositiveClass::Success)?,
                fpr95: fpr_at_tpr(&set, 0.95)?,
                aurc: aurc(&sel),
                e_aurc: e_aurc(&sel).exact,
            });
        }
    }
    Ok(EvalReport { rows, calibration: None })
}
