//! Learned confidence heads: small sigmoid-output regressors attached to a
//! classifier's penultimate features (TCP regression) or to squashed
//! KLoS* values, with the two-phase training scheme (frozen encoder, then
//! an untied fine-tuned copy). The classifier itself is never modified.

use crate::data::Dataset;
use crate::dirichlet::DirichletParams;
use crate::error::{Error, Result};
use crate::measures::{self, ProbVector};
use crate::metrics::{aupr, PositiveClass, ScoredSet};
use crate::net::{init_layers, Gradients, Network, OptimizerState, Optimizer};
use crate::rng::SplitMix64;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Tcp,
    Ntcp,
    /// σ(KLoS*) with τ = 1 + 1/λ; low values mean high confidence.
    KlosStarSigmoid,
}

impl TargetKind {
    pub fn name(&self) -> &'static str {
        match self {
            TargetKind::Tcp => "tcp",
            TargetKind::Ntcp => "ntcp",
            TargetKind::KlosStarSigmoid => "klos_star_sigmoid",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "tcp" => Ok(TargetKind::Tcp),
            "ntcp" => Ok(TargetKind::Ntcp),
            "klos_star_sigmoid" => Ok(TargetKind::KlosStarSigmoid),
            other => Err(Error::Config(format!("unknown head target `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeadLoss {
    Mse,
    Bce,
    Focal { gamma: f64 },
}

impl HeadLoss {
    pub fn name(&self) -> String {
        match self {
            HeadLoss::Mse => "mse".into(),
            HeadLoss::Bce => "bce".into(),
            HeadLoss::Focal { gamma } => format!("focal{{{gamma}}}"),
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        if s == "mse" {
            return Ok(HeadLoss::Mse);
        }
        if s == "bce" {
            return Ok(HeadLoss::Bce);
        }
        if let Some(rest) = s.strip_prefix("focal{").and_then(|r| r.strip_suffix('}')) {
            let gamma = rest
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad focal gamma `{rest}`: {e}")))?;
            return Ok(HeadLoss::Focal { gamma });
        }
        if s == "focal" {
            return Ok(HeadLoss::Focal { gamma: 2.0 });
        }
        Err(Error::Config(format!("unknown head loss `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadSpec {
    /// Hidden layer widths of the regressor.
    pub hidden: Vec<usize>,
    pub target: TargetKind,
    pub loss: HeadLoss,
    /// KL weight of the classifier's evidential objective; sets the
    /// prototype concentration τ = 1 + 1/λ for the KLoS* target.
    pub lambda: f64,
    pub seed: u64,
}

impl Default for HeadSpec {
    fn default() -> Self {
        // desk-scale default; the full-scale preset is five layers of 400
        HeadSpec {
            hidden: vec![128, 128, 128],
            target: TargetKind::Tcp,
            loss: HeadLoss::Mse,
            lambda: 5e-2,
            seed: 0,
        }
    }
}

impl HeadSpec {
    /// Full-scale preset: five fully-connected layers of 400.
    pub fn full_scale(target: TargetKind, lambda: f64, seed: u64) -> Self {
        HeadSpec { hidden: vec![400; 5], target, loss: HeadLoss::Mse, lambda, seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    FrozenEncoder,
    FineTuned,
}

/// Confidence regressor. In phase 1 the stack maps penultimate features to
/// a single pre-sigmoid output; in phase 2 it also owns an untied copy of
/// the classifier's encoder and maps raw inputs instead.
#[derive(Debug, Clone)]
pub struct ConfidenceHead {
    stack: Network,
    pub spec: HeadSpec,
    pub phase: Phase,
    owns_encoder: bool,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Loss and d(loss)/dz at a pre-sigmoid output z for a soft target in
/// [0, 1]. BCE and focal use the cross-entropy-with-soft-labels form.
fn head_loss_grad(loss: HeadLoss, z: f64, t: f64) -> (f64, f64) {
    let u = sigmoid(z);
    match loss {
        HeadLoss::Mse => {
            let diff = u - t;
            (diff * diff, 2.0 * diff * u * (1.0 - u))
        }
        HeadLoss::Bce => {
            let uc = u.clamp(1e-12, 1.0 - 1e-12);
            let l = -(t * uc.ln() + (1.0 - t) * (1.0 - uc).ln());
            (l, u - t)
        }
        HeadLoss::Focal { gamma } => {
            let uc = u.clamp(1e-12, 1.0 - 1e-12);
            let l = -(t * (1.0 - uc).powf(gamma) * uc.ln()
                + (1.0 - t) * uc.powf(gamma) * (1.0 - uc).ln());
            let g = -t
                * (-gamma * (1.0 - uc).powf(gamma) * uc * uc.ln()
                    + (1.0 - uc).powf(gamma + 1.0))
                - (1.0 - t)
                    * (gamma * uc.powf(gamma) * (1.0 - uc) * (1.0 - uc).ln()
                        - uc.powf(gamma + 1.0));
            (l, g)
        }
    }
}

/// Per-sample regression targets in [0, 1], deterministic given the
/// classifier.
pub fn compute_targets(
    net: &Network,
    data: &Dataset,
    kind: TargetKind,
    lambda: f64,
) -> Result<Vec<f64>> {
    let labels = data.labels()?;
    let mut out = Vec::with_capacity(data.len());
    for (x, &y) in data.features.iter().zip(labels) {
        let (logits, _) = net.forward(x)?;
        let t = match kind {
            TargetKind::Tcp => {
                let p = ProbVector::new_unchecked(measures::softmax(&logits));
                measures::tcp(&p, y)?
            }
            TargetKind::Ntcp => {
                let p = ProbVector::new_unchecked(measures::softmax(&logits));
                measures::ntcp(&p, y)?
            }
            TargetKind::KlosStarSigmoid => {
                if lambda <= 0.0 {
                    return Err(Error::Config(format!(
                        "klos_star_sigmoid target needs lambda > 0, got {lambda}"
                    )));
                }
                let d = DirichletParams::from_logits(&logits)?;
                sigmoid(measures::klos_star(&d, y, 1.0 + 1.0 / lambda)?)
            }
        };
        out.push(t);
    }
    Ok(out)
}

const HEAD_BATCH: usize = 128;

fn train_stack(
    mut stack: Network,
    inputs: &[Vec<f64>],
    targets: &[f64],
    loss: HeadLoss,
    epochs: usize,
    lr: f64,
    seed: u64,
    mut on_epoch_end: impl FnMut(&Network),
) -> Result<Network> {
    let mut rng = SplitMix64::new_stream(seed, 0xC04F);
    let mut state = OptimizerState::new(&stack);
    let opt = Optimizer::adam(lr);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    for epoch in 0..epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(HEAD_BATCH) {
            let mut grads = Gradients::zeros_like(&stack);
            let inv = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            for &i in chunk {
                let cache = stack.forward_cached(&inputs[i])?;
                let z = cache.logits()[0];
                let (l, gz) = head_loss_grad(loss, z, targets[i]);
                batch_loss += l * inv;
                let g = stack.backward(&cache, &[gz]);
                grads.add_scaled(&g, inv);
            }
            if !batch_loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite head loss at epoch {epoch}"
                )));
            }
            state.step(&mut stack, &grads, &opt);
        }
        on_epoch_end(&stack);
    }
    Ok(stack)
}

/// Phase 1: train the head on the classifier's frozen penultimate
/// features. The classifier is untouched by construction.
pub fn train_head_phase1(
    net: &Network,
    data: &Dataset,
    spec: &HeadSpec,
    epochs: usize,
    lr: f64,
) -> Result<ConfidenceHead> {
    if lr <= 0.0 {
        return Err(Error::Config(format!("learning rate must be > 0, got {lr}")));
    }
    let targets = compute_targets(net, data, spec.target, spec.lambda)?;
    let mut features = Vec::with_capacity(data.len());
    for x in &data.features {
        features.push(net.forward(x)?.1);
    }
    let mut dims = vec![net.penultimate_dim()];
    dims.extend_from_slice(&spec.hidden);
    dims.push(1);
    let mut rng = SplitMix64::new_stream(spec.seed, 0x4EAD);
    let stack = Network::from_layers(init_layers(&dims, &mut rng), dims);
    let stack = train_stack(stack, &features, &targets, spec.loss, epochs, lr, spec.seed, |_| {})?;
    Ok(ConfidenceHead {
        stack,
        spec: spec.clone(),
        phase: Phase::FrozenEncoder,
        owns_encoder: false,
    })
}

const SELECTION_EVERY: usize = 5;

/// Phase 1 with early-stopping flavor: checkpoints are taken every few
/// epochs and the one with the best validation AUPR-error wins, guarding
/// the head against overfitting its per-sample targets.
pub fn train_head_phase1_selected(
    net: &Network,
    data: &Dataset,
    val: &Dataset,
    spec: &HeadSpec,
    epochs: usize,
    lr: f64,
) -> Result<ConfidenceHead> {
    if lr <= 0.0 {
        return Err(Error::Config(format!("learning rate must be > 0, got {lr}")));
    }
    let targets = compute_targets(net, data, spec.target, spec.lambda)?;
    let mut features = Vec::with_capacity(data.len());
    for x in &data.features {
        features.push(net.forward(x)?.1);
    }
    let val_labels = val.labels()?;
    let mut val_feats = Vec::with_capacity(val.len());
    let mut val_correct = Vec::with_capacity(val.len());
    for (x, &y) in val.features.iter().zip(val_labels) {
        let (logits, penultimate) = net.forward(x)?;
        val_feats.push(penultimate);
        val_correct.push(measures::argmax(&logits) == y);
    }
    let selectable = val_correct.iter().any(|&c| c) && val_correct.iter().any(|&c| !c);
    let mut dims = vec![net.penultimate_dim()];
    dims.extend_from_slice(&spec.hidden);
    dims.push(1);
    let mut rng = SplitMix64::new_stream(spec.seed, 0x4EAD);
    let stack = Network::from_layers(init_layers(&dims, &mut rng), dims);

    let eval_aupr = |stack: &Network| -> Result<f64> {
        let mut conf = Vec::with_capacity(val_feats.len());
        for f in &val_feats {
            let z = stack.forward(f)?.0[0];
            conf.push(oriented_confidence(spec.target, sigmoid(z)));
        }
        aupr(&ScoredSet::new(conf, val_correct.clone())?, PositiveClass::Error)
    };

    let mut epoch = 0usize;
    let mut checkpoints: Vec<Network> = Vec::new();
    let final_stack = train_stack(
        stack,
        &features,
        &targets,
        spec.loss,
        epochs,
        lr,
        spec.seed,
        |s| {
            epoch += 1;
            if epoch % SELECTION_EVERY == 0 || epoch == epochs {
                checkpoints.push(s.clone());
            }
        },
    )?;
    let mut best_stack = final_stack;
    if selectable {
        let mut best_score = f64::NEG_INFINITY;
        for cand in checkpoints {
            let score = eval_aupr(&cand)?;
            if score > best_score {
                best_score = score;
                best_stack = cand;
            }
        }
    }
    Ok(ConfidenceHead {
        stack: best_stack,
        spec: spec.clone(),
        phase: Phase::FrozenEncoder,
        owns_encoder: false,
    })
}

/// Phase 2: clone the classifier's encoder, optimize it jointly with the
/// head, and return the checkpoint with the best validation AUPR-error
/// (the phase-1 state is among the candidates).
pub fn finetune_phase2(
    head: &ConfidenceHead,
    net: &Network,
    train: &Dataset,
    val: &Dataset,
    epochs: usize,
    lr_small: f64,
) -> Result<ConfidenceHead> {
    if head.owns_encoder {
        return Err(Error::Config("head is already fine-tuned".into()));
    }
    if lr_small < 0.0 {
        return Err(Error::Config(format!("learning rate must be >= 0, got {lr_small}")));
    }
    let targets = compute_targets(net, train, head.spec.target, head.spec.lambda)?;
    // untied encoder copy followed by the phase-1 head layers
    let n_encoder_layers = net.layers.len() - 1;
    let mut layers = net.layers[..n_encoder_layers].to_vec();
    layers.extend(head.stack.layers.iter().cloned());
    let mut dims = net.dims()[..net.dims().len() - 1].to_vec();
    dims.extend_from_slice(&head.stack.dims()[1..]);
    let stack = Network::from_layers(layers, dims);

    let val_labels = val.labels()?;
    let mut val_correct = Vec::with_capacity(val.len());
    for (x, &y) in val.features.iter().zip(val_labels) {
        let (logits, _) = net.forward(x)?;
        val_correct.push(measures::argmax(&logits) == y);
    }
    // selection is undefined when validation has a single class; in that
    // case the final trained state wins by default
    let selectable = val_correct.iter().any(|&c| c) && val_correct.iter().any(|&c| !c);
    let eval_aupr = |stack: &Network| -> Result<f64> {
        let mut conf = Vec::with_capacity(val.len());
        for x in &val.features {
            let z = stack.forward(x)?.0[0];
            conf.push(oriented_confidence(head.spec.target, sigmoid(z)));
        }
        aupr(&ScoredSet::new(conf, val_correct.clone())?, PositiveClass::Error)
    };

    let mut best_stack = stack.clone();
    let mut best_score = if selectable { eval_aupr(&stack)? } else { f64::NEG_INFINITY };
    if lr_small == 0.0 {
        // nothing to optimize; phase-1 parameters carry over unchanged
        return Ok(ConfidenceHead {
            stack,
            spec: head.spec.clone(),
            phase: Phase::FineTuned,
            owns_encoder: true,
        });
    }
    let mut checkpoints: Vec<Network> = Vec::new();
    let final_stack = train_stack(
        stack,
        &train.features,
        &targets,
        head.spec.loss,
        epochs,
        lr_small,
        head.spec.seed.wrapping_add(1),
        |s| checkpoints.push(s.clone()),
    )?;
    if selectable {
        for cand in checkpoints {
            let score = eval_aupr(&cand)?;
            if score > best_score {
                best_score = score;
                best_stack = cand;
            }
        }
    } else {
        best_stack = final_stack;
    }
    Ok(ConfidenceHead {
        stack: best_stack,
        spec: head.spec.clone(),
        phase: Phase::FineTuned,
        owns_encoder: true,
    })
}

fn oriented_confidence(target: TargetKind, output: f64) -> f64 {
    match target {
        TargetKind::Tcp | TargetKind::Ntcp => output,
        // the head regresses a squashed divergence: low output means
        // confident, so report the complement
        TargetKind::KlosStarSigmoid => 1.0 - output,
    }
}

impl ConfidenceHead {
    /// Raw sigmoid output in [0, 1].
    pub fn confidence_score(&self, net: &Network, x: &[f64]) -> Result<f64> {
        let z = if self.owns_encoder {
            self.stack.forward(x)?.0[0]
        } else {
            let (_, penultimate) = net.forward(x)?;
            self.stack.forward(&penultimate)?.0[0]
        };
        Ok(sigmoid(z))
    }

    /// Output mapped so that higher always means more confident.
    pub fn registered_confidence(&self, net: &Network, x: &[f64]) -> Result<f64> {
        Ok(oriented_confidence(self.spec.target, self.confidence_score(net, x)?))
    }

    pub fn params_digest(&self) -> u64 {
        self.stack.params_digest()
    }

    /// One descriptor line, then the stack in the network text format.
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let tmp = path.as_ref().with_extension("stack.tmp");
        self.stack.save(&tmp)?;
        let stack_text = std::fs::read_to_string(&tmp)?;
        std::fs::remove_file(&tmp)?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            f,
            "head: target={} loss={} lambda={:.16e} phase={} owns_encoder={}",
            self.spec.target.name(),
            self.spec.loss.name(),
            self.spec.lambda,
            match self.phase {
                Phase::FrozenEncoder => 1,
                Phase::FineTuned => 2,
            },
            self.owns_encoder,
        )?;
        f.write_all(stack_text.as_bytes())?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<ConfidenceHead> {
        let f = BufReader::new(std::fs::File::open(&path)?);
        let mut lines = f.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 1, msg: "empty head file".into() })??;
        let rest = header
            .strip_prefix("head:")
            .ok_or_else(|| Error::Parse { line: 1, msg: "missing `head:` descriptor".into() })?;
        let mut target = None;
        let mut loss = None;
        let mut lambda = 5e-2;
        let mut phase = Phase::FrozenEncoder;
        let mut owns_encoder = false;
        for tok in rest.split_whitespace() {
            let (key, value) = tok
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: 1, msg: format!("bad descriptor `{tok}`") })?;
            match key {
                "target" => target = Some(TargetKind::from_name(value)?),
                "loss" => loss = Some(HeadLoss::from_name(value)?),
                "lambda" => {
                    lambda = value.parse::<f64>().map_err(|e| Error::Parse {
                        line: 1,
                        msg: format!("lambda `{value}`: {e}"),
                    })?
                }
                "phase" => {
                    phase = match value {
                        "1" => Phase::FrozenEncoder,
                        "2" => Phase::FineTuned,
                        other => {
                            return Err(Error::Parse {
                                line: 1,
                                msg: format!("bad phase `{other}`"),
                            })
                        }
                    }
                }
                "owns_encoder" => owns_encoder = value == "true",
                other => {
                    return Err(Error::Parse { line: 1, msg: format!("unknown key `{other}`") })
                }
            }
        }
        let target =
            target.ok_or_else(|| Error::Parse { line: 1, msg: "missing target".into() })?;
        let loss = loss.ok_or_else(|| Error::Parse { line: 1, msg: "missing loss".into() })?;
        // stash the remaining lines and reuse the network loader
        let tmp = path.as_ref().with_extension("stack.tmp");
        {
            let mut w = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
            for line in lines {
                writeln!(w, "{}", line?)?;
            }
        }
        let stack = Network::load(&tmp)?;
        std::fs::remove_file(&tmp)?;
        let hidden = stack.dims()[1..stack.dims().len() - 1].to_vec();
        Ok(ConfidenceHead {
            stack,
            spec: HeadSpec { hidden, target, loss, lambda, seed: 0 },
            phase,
            owns_encoder,
        })
    }
}
