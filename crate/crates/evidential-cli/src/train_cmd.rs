//! `train`: fit one classifier per seed, writing model files and training
//! histories. Existing outputs are skipped unless --force.

use crate::config::{parse_seed_list, parse_usize_list, write_manifest, KvConfig};
use clap::Args;
use evidential::data::load_csv;
use evidential::net::{train, Network, NetworkSpec, Objective, Optimizer, TrainConfig};
use evidential::{Error, Result};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Args, Clone)]
pub struct TrainArgs {
    /// Labeled training CSV.
    #[arg(long)]
    pub data: String,
    /// Unlabeled OOD CSV (reverse-kl objective only).
    #[arg(long)]
    pub ood: Option<String>,
    /// softmax-ce | evidential | reverse-kl
    #[arg(long, default_value = "evidential")]
    pub objective: String,
    /// Comma-separated hidden layer widths (empty = logistic regression).
    #[arg(long, default_value = "")]
    pub hidden: String,
    #[arg(long, default_value_t = 5e-2)]
    pub lambda: f64,
    #[arg(long, default_value_t = 100.0)]
    pub beta_in: f64,
    /// adam | sgd
    #[arg(long, default_value = "adam")]
    pub optimizer: String,
    #[arg(long, default_value_t = 0.02)]
    pub lr: f64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    /// 0 = full batch.
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    /// Comma-separated training seeds; one model per seed.
    #[arg(long, default_value = "1,2,3,4,5")]
    pub seeds: String,
    /// Overwrite existing model files.
    #[arg(long, default_value_t = false)]
    pub force: bool,
}

pub fn model_path(out_dir: &Path, seed: u64) -> std::path::PathBuf {
    out_dir.join(format!("model_seed{seed}.txt"))
}

pub fn run(args: &TrainArgs, out_dir: &Path) -> Result<()> {
    let data = load_csv(&args.data)?;
    let labels = data.labels()?;
    let num_classes = labels.iter().max().map(|m| m + 1).unwrap_or(0);
    if num_classes < 2 {
        return Err(Error::Config(format!("need K >= 2 classes, found {num_classes}")));
    }
    let ood = args.ood.as_ref().map(load_csv).transpose()?;
    let objective = Objective::from_name(&args.objective)?;
    let hidden = parse_usize_list(&args.hidden)?;
    let optimizer = match args.optimizer.as_str() {
        "adam" => Optimizer::adam(args.lr),
        "sgd" => Optimizer::sgd(args.lr),
        other => return Err(Error::Config(format!("unknown optimizer `{other}`"))),
    };
    let seeds = parse_seed_list(&args.seeds)?;
    std::fs::create_dir_all(out_dir)?;

    let mut kv = KvConfig::default();
    kv.set("data", args.data.clone());
    if let Some(o) = &args.ood {
        kv.set("ood", o.clone());
    }
    kv.set("objective", objective.name().to_string());
    kv.set("hidden", args.hidden.clone());
    kv.set("lambda", format!("{}", args.lambda));
    kv.set("beta_in", format!("{}", args.beta_in));
    kv.set("optimizer", args.optimizer.clone());
    kv.set("lr", format!("{}", args.lr));
    kv.set("epochs", args.epochs.to_string());
    kv.set("batch_size", args.batch_size.to_string());
    kv.set("seeds", args.seeds.clone());
    write_manifest(out_dir, "train", &kv)?;

    for &seed in &seeds {
        let path = model_path(out_dir, seed);
        if path.exists() && !args.force {
            println!("seed {seed}: {} exists, skipping (use --force)", path.display());
            continue;
        }
        let spec = NetworkSpec {
            input_dim: data.dim(),
            hidden_dims: hidden.clone(),
            output_dim: num_classes,
            seed,
        };
        let cfg = TrainConfig {
            objective,
            lambda: args.lambda,
            beta_in: args.beta_in,
            optimizer,
            epochs: args.epochs,
            batch_size: args.batch_size,
            seed,
        };
        let (net, history) = train(Network::init(&spec)?, &data, ood.as_ref(), &cfg)?;
        net.save(&path)?;
        let mut hist = std::io::BufWriter::new(std::fs::File::create(
            out_dir.join(format!("history_seed{seed}.csv")),
        )?);
        writeln!(hist, "epoch,mean_loss")?;
        for (e, loss) in history.iter().enumerate() {
            writeln!(hist, "{},{:.6}", e + 1, loss)?;
        }
        println!("seed {seed}: wrote {}", path.display());
    }
    Ok(())
}
