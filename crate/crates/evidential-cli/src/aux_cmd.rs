//! `train-aux`: fit a confidence head (ConfidNet / KLoSNet) on top of a
//! trained, frozen classifier.

use crate::config::{parse_usize_list, write_manifest, KvConfig};
use clap::Args;
use evidential::data::load_csv;
use evidential::head::{
    finetune_phase2, train_head_phase1, train_head_phase1_selected, HeadLoss, HeadSpec,
    TargetKind,
};
use evidential::net::Network;
use evidential::{Error, Result};
use std::path::Path;

#[derive(Debug, Args, Clone)]
pub struct TrainAuxArgs {
    /// Trained classifier model file.
    #[arg(long)]
    pub model: String,
    /// Labeled dataset used to fit the head (the classifier's training
    /// set, or a held-out split).
    #[arg(long)]
    pub data: String,
    /// Labeled validation CSV; enables phase-2 fine-tuning with
    /// checkpoint selection.
    #[arg(long)]
    pub val: Option<String>,
    /// tcp | ntcp | klos_star_sigmoid
    #[arg(long, default_value = "tcp")]
    pub target: String,
    /// mse | bce | focal (focal{g} for an explicit exponent)
    #[arg(long, default_value = "mse")]
    pub loss: String,
    /// Comma-separated head widths.
    #[arg(long, default_value = "128,128,128")]
    pub hidden: String,
    /// KL weight of the classifier's evidential objective (sets τ).
    #[arg(long, default_value_t = 5e-2)]
    pub lambda: f64,
    /// desk (200/50 epochs, lr 1e-3/1e-5) | full (100/30, 1e-4/1e-6)
    #[arg(long, default_value = "desk")]
    pub preset: String,
    /// Override phase-1 epochs.
    #[arg(long)]
    pub epochs1: Option<usize>,
    /// Override phase-2 epochs.
    #[arg(long)]
    pub epochs2: Option<usize>,
    #[arg(long)]
    pub lr1: Option<f64>,
    #[arg(long)]
    pub lr2: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file name inside the out dir.
    #[arg(long, default_value = "head.txt")]
    pub out: String,
}

struct Preset {
    epochs1: usize,
    epochs2: usize,
    lr1: f64,
    lr2: f64,
}

fn preset(name: &str) -> Result<Preset> {
    match name {
        "desk" => Ok(Preset { epochs1: 200, epochs2: 50, lr1: 1e-3, lr2: 1e-5 }),
        "full" => Ok(Preset { epochs1: 100, epochs2: 30, lr1: 1e-4, lr2: 1e-6 }),
        other => Err(Error::Config(format!("unknown preset `{other}`"))),
    }
}

pub fn run(args: &TrainAuxArgs, out_dir: &Path) -> Result<()> {
    let net = Network::load(&args.model)?;
    let digest_before = net.params_digest();
    let data = load_csv(&args.data)?;
    let p = preset(&args.preset)?;
    let epochs1 = args.epochs1.unwrap_or(p.epochs1);
    let epochs2 = args.epochs2.unwrap_or(p.epochs2);
    let lr1 = args.lr1.unwrap_or(p.lr1);
    let lr2 = args.lr2.unwrap_or(p.lr2);
    let spec = HeadSpec {
        hidden: parse_usize_list(&args.hidden)?,
        target: TargetKind::from_name(&args.target)?,
        loss: HeadLoss::from_name(&args.loss)?,
        lambda: args.lambda,
        seed: args.seed,
    };
    std::fs::create_dir_all(out_dir)?;

    let mut kv = KvConfig::default();
    kv.set("model", args.model.clone());
    kv.set("data", args.data.clone());
    if let Some(v) = &args.val {
        kv.set("val", v.clone());
    }
    kv.set("target", args.target.clone());
    kv.set("loss", args.loss.clone());
    kv.set("hidden", args.hidden.clone());
    kv.set("lambda", format!("{}", args.lambda));
    kv.set("epochs1", epochs1.to_string());
    kv.set("epochs2", epochs2.to_string());
    kv.set("lr1", format!("{lr1}"));
    kv.set("lr2", format!("{lr2}"));
    kv.set("seed", args.seed.to_string());
    write_manifest(out_dir, "train-aux", &kv)?;

    // with a validation set both phases select their best checkpoint on it
    let head = match &args.val {
        Some(val_path) => {
            let val = load_csv(val_path)?;
            let head = train_head_phase1_selected(&net, &data, &val, &spec, epochs1, lr1)?;
            finetune_phase2(&head, &net, &data, &val, epochs2, lr2)?
        }
        None => train_head_phase1(&net, &data, &spec, epochs1, lr1)?,
    };
    // the classifier file and the in-memory parameters are untouched
    assert_eq!(net.params_digest(), digest_before);
    let out = out_dir.join(&args.out);
    head.save(&out)?;
    println!("wrote {}", out.display());
    Ok(())
}
