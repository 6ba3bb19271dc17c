//! `eval`: score measures for each seed's model, emit per-seed report
//! CSV/JSON files, an aggregate with mean and standard deviation per
//! (measure, task), and optional risk-coverage curves.

use crate::config::{parse_seed_list, write_manifest, KvConfig};
use crate::score::{
    correctness, correctness_ensemble, score_measures, score_measures_ensemble, ScoreContext,
};
use crate::train_cmd::model_path;
use clap::Args;
use evidential::data::{load_csv, Dataset};
use evidential::head::ConfidenceHead;
use evidential::measures::Measure;
use evidential::metrics::{
    build_joint_set, risk_coverage, MeasureScores, ReportRow, SelectiveSet, Task,
};
use evidential::net::Network;
use evidential::{Error, Result};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Args, Clone)]
pub struct EvalArgs {
    /// Directory holding model_seed<k>.txt files.
    #[arg(long)]
    pub model_dir: String,
    #[arg(long, default_value = "1,2,3,4,5")]
    pub seeds: String,
    /// Labeled training CSV (fits the Mahalanobis model when requested).
    #[arg(long)]
    pub train: Option<String>,
    /// Labeled test CSV.
    #[arg(long)]
    pub test: String,
    /// Unlabeled OOD CSV.
    #[arg(long)]
    pub ood: Option<String>,
    /// Comma-separated measure names.
    #[arg(long, default_value = "mcp,entropy,mutual_information,differential_entropy,mahalanobis,klos")]
    pub measures: String,
    /// Comma-separated tasks among mis,ood,joint.
    #[arg(long, default_value = "mis,ood,joint")]
    pub tasks: String,
    /// Emit per-measure risk-coverage curves (joint costs with OOD at 1).
    #[arg(long, default_value_t = false)]
    pub selective: bool,
    /// Confidence-head file pattern with `{seed}` placeholder, or a single
    /// file; needed for confidnet/klosnet.
    #[arg(long)]
    pub head: Option<String>,
    /// KL weight λ of the evaluated models; sets τ = 1 + 1/λ.
    #[arg(long, default_value_t = 5e-2)]
    pub lambda: f64,
    /// ODIN temperature.
    #[arg(long, default_value_t = 1000.0)]
    pub odin_t: f64,
    /// Oversampling factor for the joint task.
    #[arg(long, default_value_t = 1.0)]
    pub kappa: f64,
    /// Score an ensemble from averaged concentration parameters instead
    /// of per-seed models.
    #[arg(long, default_value_t = false)]
    pub ensemble: bool,
}

pub fn parse_measures(s: &str) -> Result<Vec<Measure>> {
    s.split(',')
        .map(|tok| Measure::from_name(tok.trim()))
        .collect()
}

pub fn parse_tasks(s: &str) -> Result<Vec<Task>> {
    s.split(',').map(|tok| Task::from_name(tok.trim())).collect()
}

fn head_path_for_seed(pattern: &str, seed: u64) -> String {
    pattern.replace("{seed}", &seed.to_string())
}

/// Aggregate rows keyed by (measure, task): mean and population std per
/// metric column.
pub fn aggregate_rows(per_seed: &[Vec<ReportRow>]) -> Vec<AggregateRow> {
    let mut acc: BTreeMap<(String, String), Vec<&ReportRow>> = BTreeMap::new();
    for rows in per_seed {
        for row in rows {
            acc.entry((row.measure.name().into(), row.task.name().into()))
                .or_default()
                .push(row);
        }
    }
    let mean_std = |xs: &[f64]| {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    };
    let mut out = Vec::new();
    for ((measure, task), rows) in acc {
        let col = |f: fn(&ReportRow) -> f64| {
            let xs: Vec<f64> = rows.iter().map(|r| f(r)).collect();
            mean_std(&xs)
        };
        out.push(AggregateRow {
            measure,
            task,
            auroc: col(|r| r.auroc),
            aupr_error: col(|r| r.aupr_error),
            aupr_success: col(|r| r.aupr_success),
            fpr95: col(|r| r.fpr95),
            aurc: col(|r| r.aurc),
            e_aurc: col(|r| r.e_aurc),
        });
    }
    out
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct AggregateRow {
    pub measure: String,
    pub task: String,
    pub auroc: (f64, f64),
    pub aupr_error: (f64, f64),
    pub aupr_success: (f64, f64),
    pub fpr95: (f64, f64),
    pub aurc: (f64, f64),
    pub e_aurc: (f64, f64),
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from(
        "measure,task,auroc_mean,auroc_std,aupr_error_mean,aupr_error_std,aupr_success_mean,aupr_success_std,fpr95_mean,fpr95_std,aurc_mean,aurc_std,e_aurc_mean,e_aurc_std\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            r.measure,
            r.task,
            r.auroc.0,
            r.auroc.1,
            r.aupr_error.0,
            r.aupr_error.1,
            r.aupr_success.0,
            r.aupr_success.1,
            r.fpr95.0,
            r.fpr95.1,
            r.aurc.0,
            r.aurc.1,
            r.e_aurc.0,
            r.e_aurc.1
        ));
    }
    out
}

/// Fixed-width view of the aggregate AUROC table, printed to stdout.
pub fn aggregate_text(rows: &[AggregateRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<22} {:<6} {:>16} {:>16}\n", "measure", "task", "auroc", "aupr_error"));
    for r in rows {
        out.push_str(&format!(
            "{:<22} {:<6} {:>7.3} ± {:<6.3} {:>7.3} ± {:<6.3}\n",
            r.measure, r.task, r.auroc.0, r.auroc.1, r.aupr_error.0, r.aupr_error.1
        ));
    }
    out
}

fn write_risk_coverage_curves(
    out_dir: &Path,
    suffix: &str,
    scored: &[MeasureScores],
    id_correct: &[bool],
    kappa: f64,
    seed: u64,
) -> Result<()> {
    for ms in scored {
        if ms.ood_scores.is_empty() {
            continue;
        }
        let conf_id: Vec<f64> = ms.id_scores.iter().map(|&v| ms.measure.as_confidence(v)).collect();
        let conf_ood: Vec<f64> =
            ms.ood_scores.iter().map(|&v| ms.measure.as_confidence(v)).collect();
        let joint = build_joint_set(&conf_id, id_correct, &conf_ood, kappa, seed)?;
        let (scores, labels) = joint.into_parts();
        let costs: Vec<f64> = labels.iter().map(|&l| if l { 0.0 } else { 1.0 }).collect();
        let sel = SelectiveSet::new(scores, costs)?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(
            out_dir.join(format!("rc_{}_{}.csv", ms.measure.name(), suffix)),
        )?);
        writeln!(f, "coverage,risk")?;
        for (c, r) in risk_coverage(&sel) {
            writeln!(f, "{c:.6},{r:.6}")?;
        }
    }
    Ok(())
}

pub fn run(args: &EvalArgs, out_dir: &Path) -> Result<()> {
    let seeds = parse_seed_list(&args.seeds)?;
    let measures = parse_measures(&args.measures)?;
    let tasks = parse_tasks(&args.tasks)?;
    let test = load_csv(&args.test)?;
    let ood = args.ood.as_ref().map(load_csv).transpose()?;
    let train = args.train.as_ref().map(load_csv).transpose()?;
    if measures.contains(&Measure::Mahalanobis) && train.is_none() {
        return Err(Error::Config("mahalanobis needs --train to fit on".into()));
    }
    if (tasks.contains(&Task::Ood) || tasks.contains(&Task::Joint)) && ood.is_none() {
        return Err(Error::Config("ood/joint tasks need --ood".into()));
    }
    std::fs::create_dir_all(out_dir)?;

    let mut kv = KvConfig::default();
    kv.set("model_dir", args.model_dir.clone());
    kv.set("seeds", args.seeds.clone());
    kv.set("test", args.test.clone());
    if let Some(t) = &args.train {
        kv.set("train", t.clone());
    }
    if let Some(o) = &args.ood {
        kv.set("ood", o.clone());
    }
    kv.set("measures", args.measures.clone());
    kv.set("tasks", args.tasks.clone());
    kv.set("lambda", format!("{}", args.lambda));
    kv.set("odin_t", format!("{}", args.odin_t));
    kv.set("kappa", format!("{}", args.kappa));
    kv.set("ensemble", args.ensemble.to_string());
    write_manifest(out_dir, "eval", &kv)?;

    let model_dir = Path::new(&args.model_dir);
    let mut per_seed_rows: Vec<Vec<ReportRow>> = Vec::new();

    if args.ensemble {
        let nets: Result<Vec<Network>> =
            seeds.iter().map(|&s| Network::load(model_path(model_dir, s))).collect();
        let nets = nets?;
        let scored =
            score_measures_ensemble(&nets, args.lambda, &measures, &test, ood.as_ref())?;
        let id_correct = correctness_ensemble(&nets, &test)?;
        let report =
            evidential::metrics::detection_report(&scored, &id_correct, &tasks, args.kappa, seeds[0])?;
        std::fs::write(out_dir.join("report_ensemble.csv"), report.to_csv())?;
        std::fs::write(out_dir.join("report_ensemble.json"), report.to_json())?;
        if args.selective {
            write_risk_coverage_curves(out_dir, "ensemble", &scored, &id_correct, args.kappa, seeds[0])?;
        }
        per_seed_rows.push(report.rows);
    } else {
        for &seed in &seeds {
            let net = Network::load(model_path(model_dir, seed))?;
            let mut ctx = ScoreContext::new(&net, args.lambda)?;
            ctx.odin_temperature = args.odin_t;
            if measures.contains(&Measure::Mahalanobis) {
                ctx.fit_mahalanobis(train.as_ref().unwrap())?;
            }
            let head = match &args.head {
                Some(pattern) => Some(ConfidenceHead::load(head_path_for_seed(pattern, seed))?),
                None => None,
            };
            validate_head_measures(&measures, head.as_ref())?;
            ctx.head = head.as_ref();
            let scored = score_measures(&ctx, &measures, &test, ood.as_ref())?;
            let id_correct = correctness(&net, &test)?;
            let mut report =
                evidential::metrics::detection_report(&scored, &id_correct, &tasks, args.kappa, seed)?;
            report.calibration = Some(calibration_summary(&net, &test)?);
            std::fs::write(out_dir.join(format!("report_seed{seed}.csv")), report.to_csv())?;
            std::fs::write(out_dir.join(format!("report_seed{seed}.json")), report.to_json())?;
            if args.selective {
                write_risk_coverage_curves(
                    out_dir,
                    &format!("seed{seed}"),
                    &scored,
                    &id_correct,
                    args.kappa,
                    seed,
                )?;
            }
            per_seed_rows.push(report.rows);
        }
    }

    let agg = aggregate_rows(&per_seed_rows);
    std::fs::write(out_dir.join("aggregate.csv"), aggregate_csv(&agg))?;
    std::fs::write(
        out_dir.join("aggregate.json"),
        serde_json::to_string_pretty(&agg).expect("aggregate serialization cannot fail"),
    )?;
    print!("{}", aggregate_text(&agg));
    Ok(())
}

fn validate_head_measures(measures: &[Measure], head: Option<&ConfidenceHead>) -> Result<()> {
    use evidential::head::TargetKind;
    for &m in measures {
        match m {
            Measure::Confidnet => {
                let h = head.ok_or_else(|| Error::Config("confidnet needs --head".into()))?;
                if h.spec.target == TargetKind::KlosStarSigmoid {
                    return Err(Error::Config(
                        "confidnet measure expects a tcp/ntcp-target head".into(),
                    ));
                }
            }
            Measure::Klosnet => {
                let h = head.ok_or_else(|| Error::Config("klosnet needs --head".into()))?;
                if h.spec.target != TargetKind::KlosStarSigmoid {
                    return Err(Error::Config(
                        "klosnet measure expects a klos_star_sigmoid-target head".into(),
                    ));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

fn calibration_summary(
    net: &Network,
    test: &Dataset,
) -> Result<evidential::metrics::CalibrationSummary> {
    use evidential::measures::{mcp, softmax_prob};
    let labels = test.labels()?;
    let mut probs = Vec::with_capacity(test.len());
    let mut conf = Vec::with_capacity(test.len());
    let mut correct = Vec::with_capacity(test.len());
    for (x, &y) in test.features.iter().zip(labels) {
        let (logits, _) = net.forward(x)?;
        let p = softmax_prob(&logits);
        conf.push(mcp(&p));
        correct.push(evidential::measures::argmax(p.probs()) == y);
        probs.push(p);
    }
    Ok(evidential::metrics::CalibrationSummary {
        ece: evidential::metrics::ece(&conf, &correct, 15)?,
        brier: evidential::metrics::brier(&probs, labels)?,
        nll: evidential::metrics::nll(&probs, labels)?,
    })
}
