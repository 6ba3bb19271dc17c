//! Small feed-forward classifier with hand-derived gradients.
//!
//! Layers are dense with rectifier activations between them and raw logits
//! at the output. Gradients for every objective are computed analytically
//! and checked against central finite differences in the test suite.

use crate::dirichlet::kl_to_uniform_slice;
use crate::error::{Error, Result};
use crate::measures::softmax;
use crate::rng::SplitMix64;
use crate::special::{digamma_unchecked as digamma, trigamma_unchecked as trigamma};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Architecture description. `hidden_dims` may be empty, giving a single
/// linear layer (logistic regression). Activation is the rectifier.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub seed: u64,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim < 2 || self.hidden_dims.contains(&0) {
            return Err(Error::Config(format!(
                "invalid network dims: input {}, hidden {:?}, output {}",
                self.input_dim, self.hidden_dims, self.output_dim
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layer {
    /// Row-major `out x in`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Layer {
    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.b[o];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            out.push(acc);
        }
    }
}

/// Trained parameters. The encoder boundary sits before the final layer:
/// `forward` exposes the penultimate activation (the raw input for a pure
/// linear model).
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub(crate) layers: Vec<Layer>,
    dims: Vec<usize>,
}

/// Per-layer parameter gradients plus the gradient w.r.t. the input.
#[derive(Debug, Clone)]
pub(crate) struct Gradients {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub input: Vec<f64>,
}

impl Gradients {
    pub(crate) fn zeros_like(net: &Network) -> Self {
        Gradients {
            w: net.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            b: net.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
            input: vec![0.0; net.dims[0]],
        }
    }

    pub(crate) fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, o) in self.w.iter_mut().zip(&other.w) {
            for (x, y) in a.iter_mut().zip(o) {
                *x += scale * y;
            }
        }
        for (a, o) in self.b.iter_mut().zip(&other.b) {
            for (x, y) in a.iter_mut().zip(o) {
                *x += scale * y;
            }
        }
    }
}

/// Cached per-layer activations from a forward pass (index 0 is the input,
/// last is the logits).
pub(crate) struct ForwardCache {
    pub acts: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub(crate) fn logits(&self) -> &[f64] {
        self.acts.last().unwrap()
    }

    pub(crate) fn penultimate(&self) -> &[f64] {
        &self.acts[self.acts.len() - 2]
    }
}

pub(crate) fn init_layers(dims: &[usize], rng: &mut SplitMix64) -> Vec<Layer> {
    let mut layers = Vec::new();
    for win in dims.windows(2) {
        let (fan_in, fan_out) = (win[0], win[1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = (0..fan_in * fan_out)
            .map(|_| (2.0 * rng.next_f64() - 1.0) * limit)
            .collect();
        layers.push(Layer { w, b: vec![0.0; fan_out], in_dim: fan_in, out_dim: fan_out });
    }
    layers
}

impl Network {
    /// Deterministic initialization: uniform in ±sqrt(6/(fan_in+fan_out)),
    /// zero biases.
    pub fn init(spec: &NetworkSpec) -> Result<Network> {
        spec.validate()?;
        let mut dims = vec![spec.input_dim];
        dims.extend_from_slice(&spec.hidden_dims);
        dims.push(spec.output_dim);
        let mut rng = SplitMix64::new_stream(spec.seed, 0x1217);
        Ok(Network { layers: init_layers(&dims, &mut rng), dims })
    }

    pub(crate) fn from_layers(layers: Vec<Layer>, dims: Vec<usize>) -> Network {
        Network { layers, dims }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn penultimate_dim(&self) -> usize {
        self.dims[self.dims.len() - 2]
    }

    pub(crate) fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache> {
        if x.len() != self.dims[0] {
            return Err(Error::Dimension(format!(
                "input dim {} does not match network input {}",
                x.len(),
                self.dims[0]
            )));
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let mut buf = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(acts.last().unwrap(), &mut buf);
            if i + 1 < self.layers.len() {
                for v in buf.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            acts.push(buf.clone());
        }
        Ok(ForwardCache { acts })
    }

    /// Logits and the penultimate activation for an input.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let cache = self.forward_cached(x)?;
        Ok((cache.logits().to_vec(), cache.penultimate().to_vec()))
    }

    /// Backpropagate a gradient w.r.t. the logits down to parameters and
    /// input.
    pub(crate) fn backward(&self, cache: &ForwardCache, grad_logits: &[f64]) -> Gradients {
        let mut gw = Vec::with_capacity(self.layers.len());
        let mut gb = Vec::with_capacity(self.layers.len());
        let mut g = grad_logits.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.acts[l];
            let mut wgrad = vec![0.0; layer.w.len()];
            for o in 0..layer.out_dim {
                for i in 0..layer.in_dim {
                    wgrad[o * layer.in_dim + i] = g[o] * input[i];
                }
            }
            gw.push(wgrad);
            gb.push(g.clone());
            // propagate through the layer, then the rectifier mask
            let mut gin = vec![0.0; layer.in_dim];
            for o in 0..layer.out_dim {
                let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                for i in 0..layer.in_dim {
                    gin[i] += row[i] * g[o];
                }
            }
            if l > 0 {
                for (gi, &a) in gin.iter_mut().zip(&cache.acts[l]) {
                    if a <= 0.0 {
                        *gi = 0.0;
                    }
                }
            }
            g = gin;
        }
        gw.reverse();
        gb.reverse();
        Gradients { w: gw, b: gb, input: g }
    }

    /// Gradient of a scalar score w.r.t. the input. `score` returns the
    /// value and its gradient w.r.t. the logits.
    pub fn input_gradient(
        &self,
        x: &[f64],
        score: &dyn Fn(&[f64]) -> (f64, Vec<f64>),
    ) -> Result<Vec<f64>> {
        let cache = self.forward_cached(x)?;
        let (_, grad_logits) = score(cache.logits());
        if grad_logits.len() != self.output_dim() {
            return Err(Error::Dimension("score gradient length mismatch".into()));
        }
        Ok(self.backward(&cache, &grad_logits).input)
    }

    /// Number of scalar parameters (weights and biases).
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Flat parameter access in a fixed order (per layer: weights, then
    /// biases). Exists for finite-difference harnesses.
    pub fn param(&self, mut idx: usize) -> f64 {
        for layer in &self.layers {
            if idx < layer.w.len() {
                return layer.w[idx];
            }
            idx -= layer.w.len();
            if idx < layer.b.len() {
                return layer.b[idx];
            }
            idx -= layer.b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut idx: usize, value: f64) {
        for layer in self.layers.iter_mut() {
            if idx < layer.w.len() {
                layer.w[idx] = value;
                return;
            }
            idx -= layer.w.len();
            if idx < layer.b.len() {
                layer.b[idx] = value;
                return;
            }
            idx -= layer.b.len();
        }
        panic!("parameter index out of range");
    }

    /// Parameter gradients of a per-sample loss, flattened in `param`
    /// order, together with the loss value.
    pub fn loss_param_gradients(
        &self,
        x: &[f64],
        loss: &dyn Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
    ) -> Result<(f64, Vec<f64>)> {
        let cache = self.forward_cached(x)?;
        let (value, grad_logits) = loss(cache.logits())?;
        let g = self.backward(&cache, &grad_logits);
        let mut flat = Vec::with_capacity(self.param_count());
        for (wg, bg) in g.w.iter().zip(&g.b) {
            flat.extend_from_slice(wg);
            flat.extend_from_slice(bg);
        }
        Ok((value, flat))
    }

    /// FNV-1a over all parameter bits; used to assert a network is
    /// untouched.
    pub fn params_digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: f64| {
            for byte in v.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x1000_0000_01b3);
            }
        };
        for layer in &self.layers {
            layer.w.iter().for_each(|&v| eat(v));
            layer.b.iter().for_each(|&v| eat(v));
        }
        h
    }

    /// Flat text format: `dims: d0,d1,...,K` then one line per parameter
    /// tensor (weights, then biases, per layer) at 17 significant digits.
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            f,
            "dims: {}",
            self.dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
        )?;
        for layer in &self.layers {
            writeln!(f, "{}", join_f64(&layer.w))?;
            writeln!(f, "{}", join_f64(&layer.b))?;
        }
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Network> {
        let f = BufReader::new(std::fs::File::open(path)?);
        let mut lines = f.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 1, msg: "empty file".into() })?;
        let header = header?;
        let dims_str = header
            .strip_prefix("dims:")
            .ok_or_else(|| Error::Parse { line: 1, msg: "missing `dims:` header".into() })?;
        let dims = parse_f64_line(dims_str, 1)?
            .into_iter()
            .map(|d| d as usize)
            .collect::<Vec<_>>();
        if dims.len() < 2 {
            return Err(Error::Parse { line: 1, msg: "need at least two dims".into() });
        }
        let mut layers = Vec::new();
        for win in dims.windows(2) {
            let (in_dim, out_dim) = (win[0], win[1]);
            let (ln_w, w_line) = lines
                .next()
                .ok_or_else(|| Error::Parse { line: 0, msg: "missing weight line".into() })?;
            let w = parse_f64_line(&w_line?, ln_w + 1)?;
            if w.len() != in_dim * out_dim {
                return Err(Error::Parse {
                    line: ln_w + 1,
                    msg: format!("expected {} weights, got {}", in_dim * out_dim, w.len()),
                });
            }
            let (ln_b, b_line) = lines
                .next()
                .ok_or_else(|| Error::Parse { line: 0, msg: "missing bias line".into() })?;
            let b = parse_f64_line(&b_line?, ln_b + 1)?;
            if b.len() != out_dim {
                return Err(Error::Parse {
                    line: ln_b + 1,
                    msg: format!("expected {} biases, got {}", out_dim, b.len()),
                });
            }
            layers.push(Layer { w, b, in_dim, out_dim });
        }
        Ok(Network { layers, dims })
    }
}

pub(crate) fn join_f64(xs: &[f64]) -> String {
    xs.iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(",")
}

pub(crate) fn parse_f64_line(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse { line: lineno, msg: format!("`{}`: {e}", tok.trim()) })
        })
        .collect()
}

/// Cross-entropy on softmax probabilities; gradient is softmax − onehot.
pub fn loss_softmax_ce(logits: &[f64], y: usize) -> Result<(f64, Vec<f64>)> {
    if y >= logits.len() {
        return Err(Error::Dimension(format!("label {y} out of range for K = {}", logits.len())));
    }
    let p = softmax(logits);
    let loss = -p[y].max(1e-300).ln();
    let mut grad = p;
    grad[y] -= 1.0;
    Ok((loss, grad))
}

/// Variational Dirichlet objective with a uniform prior, KL weighted by λ.
/// Concentrations are α_k = exp(f_k).
pub fn loss_evidential(logits: &[f64], y: usize, lambda: f64) -> Result<(f64, Vec<f64>)> {
    if y >= logits.len() {
        return Err(Error::Dimension(format!("label {y} out of range for K = {}", logits.len())));
    }
    if lambda < 0.0 {
        return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
    }
    let k = logits.len() as f64;
    let alpha: Vec<f64> = logits.iter().map(|f| f.exp()).collect();
    let a0: f64 = alpha.iter().sum();
    let loss = -(digamma(alpha[y]) - digamma(a0)) + lambda * kl_to_uniform_slice(&alpha);
    let tg_a0 = trigamma(a0);
    let grad = alpha
        .iter()
        .enumerate()
        .map(|(j, &aj)| {
            let mut d = tg_a0 + lambda * ((aj - 1.0) * trigamma(aj) - tg_a0 * (a0 - k));
            if j == y {
                d -= trigamma(aj);
            }
            aj * d
        })
        .collect();
    Ok((loss, grad))
}

/// Target side of the reverse-KL objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RklTarget {
    /// Labeled in-distribution sample; prototype is sharp on the label.
    InDist(usize),
    /// Out-of-distribution sample; prototype is the uniform Dirichlet.
    Ood,
}

fn kl_forward_grad(alpha: &[f64], proto: &[f64]) -> Vec<f64> {
    let a0: f64 = alpha.iter().sum();
    let q0: f64 = proto.iter().sum();
    let tg_a0 = trigamma(a0);
    alpha
        .iter()
        .zip(proto)
        .map(|(&aj, &qj)| aj * ((aj - qj) * trigamma(aj) - tg_a0 * (a0 - q0)))
        .collect()
}

/// Reverse-KL objective: pull in-distribution samples toward a sharp
/// prototype (β_in on the label) and OOD samples toward the uniform
/// Dirichlet, the latter weighted by λ.
pub fn loss_reverse_kl(
    logits: &[f64],
    target: RklTarget,
    beta_in: f64,
    lambda: f64,
) -> Result<(f64, Vec<f64>)> {
    let alpha: Vec<f64> = logits.iter().map(|f| f.exp()).collect();
    match target {
        RklTarget::InDist(y) => {
            if y >= logits.len() {
                return Err(Error::Dimension(format!(
                    "label {y} out of range for K = {}",
                    logits.len()
                )));
            }
            if !beta_in.is_finite() || beta_in <= 1.0 {
                return Err(Error::Config(format!(
                    "beta_in must be > 1 (sharp target), got {beta_in}"
                )));
            }
            let mut proto = vec![1.0; logits.len()];
            proto[y] = beta_in;
            let loss = crate::dirichlet::kl_dirichlet_slices(&alpha, &proto);
            Ok((loss, kl_forward_grad(&alpha, &proto)))
        }
        RklTarget::Ood => {
            let proto = vec![1.0; logits.len()];
            let loss = lambda * crate::dirichlet::kl_dirichlet_slices(&alpha, &proto);
            let grad = kl_forward_grad(&alpha, &proto)
                .into_iter()
                .map(|g| lambda * g)
                .collect();
            Ok((loss, grad))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    SoftmaxCe,
    Evidential,
    ReverseKl,
}

impl Objective {
    pub fn name(&self) -> &'static str {
        match self {
            Objective::SoftmaxCe => "softmax-ce",
            Objective::Evidential => "evidential",
            Objective::ReverseKl => "reverse-kl",
        }
    }

    pub fn from_name(s: &str) -> Result<Objective> {
        match s {
            "softmax-ce" => Ok(Objective::SoftmaxCe),
            "evidential" => Ok(Objective::Evidential),
            "reverse-kl" => Ok(Objective::ReverseKl),
            other => Err(Error::Config(format!("unknown objective `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    SgdMomentum { lr: f64, momentum: f64, weight_decay: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn sgd(lr: f64) -> Optimizer {
        Optimizer::SgdMomentum { lr, momentum: 0.9, weight_decay: 0.0 }
    }

    pub fn adam(lr: f64) -> Optimizer {
        Optimizer::Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    fn lr(&self) -> f64 {
        match self {
            Optimizer::SgdMomentum { lr, .. } | Optimizer::Adam { lr, .. } => *lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lr() <= 0.0 {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", self.lr())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub objective: Objective,
    /// KL weight for the evidential objective; OOD weight for reverse-KL.
    pub lambda: f64,
    /// In-distribution target concentration (reverse-KL only).
    pub beta_in: f64,
    pub optimizer: Optimizer,
    pub epochs: usize,
    /// 0 means full batch.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            objective: Objective::Evidential,
            lambda: 5e-2,
            beta_in: 100.0,
            optimizer: Optimizer::adam(0.02),
            epochs: 200,
            batch_size: 0,
            seed: 0,
        }
    }
}

pub(crate) struct OptimizerState {
    m_w: Vec<Vec<f64>>,
    m_b: Vec<Vec<f64>>,
    v_w: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
    t: u64,
}

impl OptimizerState {
    pub(crate) fn new(net: &Network) -> Self {
        let zw: Vec<Vec<f64>> = net.layers.iter().map(|l| vec![0.0; l.w.len()]).collect();
        let zb: Vec<Vec<f64>> = net.layers.iter().map(|l| vec![0.0; l.b.len()]).collect();
        OptimizerState { m_w: zw.clone(), m_b: zb.clone(), v_w: zw, v_b: zb, t: 0 }
    }

    pub(crate) fn step(&mut self, net: &mut Network, grads: &Gradients, opt: &Optimizer) {
        self.t += 1;
        match *opt {
            Optimizer::SgdMomentum { lr, momentum, weight_decay } => {
                for (l, layer) in net.layers.iter_mut().enumerate() {
                    sgd_update(&mut layer.w, &grads.w[l], &mut self.m_w[l], lr, momentum, weight_decay);
                    sgd_update(&mut layer.b, &grads.b[l], &mut self.m_b[l], lr, momentum, 0.0);
                }
            }
            Optimizer::Adam { lr, beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.t as i32);
                let c2 = 1.0 - beta2.powi(self.t as i32);
                for (l, layer) in net.layers.iter_mut().enumerate() {
                    adam_update(&mut layer.w, &grads.w[l], &mut self.m_w[l], &mut self.v_w[l], lr, beta1, beta2, eps, c1, c2);
                    adam_update(&mut layer.b, &grads.b[l], &mut self.m_b[l], &mut self.v_b[l], lr, beta1, beta2, eps, c1, c2);
                }
            }
        }
    }
}

fn sgd_update(p: &mut [f64], g: &[f64], vel: &mut [f64], lr: f64, momentum: f64, wd: f64) {
    for i in 0..p.len() {
        let grad = g[i] + wd * p[i];
        vel[i] = momentum * vel[i] - lr * grad;
        p[i] += vel[i];
    }
}

#[allow(clippy::too_many_arguments)]
fn adam_update(
    p: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    c1: f64,
    c2: f64,
) {
    for i in 0..p.len() {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
    }
}

fn per_sample_loss(
    cfg: &TrainConfig,
    logits: &[f64],
    target: RklTarget,
) -> Result<(f64, Vec<f64>)> {
    match (cfg.objective, target) {
        (Objective::SoftmaxCe, RklTarget::InDist(y)) => loss_softmax_ce(logits, y),
        (Objective::Evidential, RklTarget::InDist(y)) => loss_evidential(logits, y, cfg.lambda),
        (Objective::ReverseKl, t) => loss_reverse_kl(logits, t, cfg.beta_in, cfg.lambda),
        _ => Err(Error::Config("OOD samples require the reverse-KL objective".into())),
    }
}

/// Train a network; returns the final network and the per-epoch mean loss.
///
/// Deterministic given `cfg.seed` (fixed shuffling stream). Only the
/// reverse-KL objective accepts an OOD dataset. Aborts on non-finite loss.
pub fn train(
    net: Network,
    data: &crate::data::Dataset,
    ood: Option<&crate::data::Dataset>,
    cfg: &TrainConfig,
) -> Result<(Network, Vec<f64>)> {
    cfg.optimizer.validate()?;
    let labels = data
        .labels
        .as_ref()
        .ok_or_else(|| Error::Config("training data must be labeled".into()))?;
    if ood.is_some() && cfg.objective != Objective::ReverseKl {
        return Err(Error::Config(format!(
            "objective {} does not consume OOD data",
            cfg.objective.name()
        )));
    }
    let mut net = net;
    let mut history = Vec::with_capacity(cfg.epochs);
    if cfg.epochs == 0 {
        return Ok((net, history));
    }
    let n = data.len();
    let batch = if cfg.batch_size == 0 { n } else { cfg.batch_size.min(n) };
    let mut rng = SplitMix64::new_stream(cfg.seed, 0x7a11);
    let mut state = OptimizerState::new(&net);
    let mut order: Vec<usize> = (0..n).collect();
    let mut ood_order: Vec<usize> = ood.map(|d| (0..d.len()).collect()).unwrap_or_default();
    let mut ood_cursor = 0usize;

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for chunk in order.chunks(batch) {
            let mut grads = Gradients::zeros_like(&net);
            let inv = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            for &i in chunk {
                let cache = net.forward_cached(&data.features[i])?;
                let (loss, grad_logits) =
                    per_sample_loss(cfg, cache.logits(), RklTarget::InDist(labels[i]))?;
                batch_loss += loss * inv;
                let g = net.backward(&cache, &grad_logits);
                grads.add_scaled(&g, inv);
            }
            if let Some(ood_data) = ood {
                // OOD slice sized proportionally to the in-distribution batch
                let n_ood = ood_data.len();
                let take = ((chunk.len() * n_ood + n / 2) / n).max(1).min(n_ood);
                let inv_ood = 1.0 / take as f64;
                for _ in 0..take {
                    if ood_cursor == 0 {
                        rng.shuffle(&mut ood_order);
                    }
                    let i = ood_order[ood_cursor];
                    ood_cursor = (ood_cursor + 1) % n_ood;
                    let cache = net.forward_cached(&ood_data.features[i])?;
                    let (loss, grad_logits) = per_sample_loss(cfg, cache.logits(), RklTarget::Ood)?;
                    batch_loss += loss * inv_ood;
                    let g = net.backward(&cache, &grad_logits);
                    grads.add_scaled(&g, inv_ood);
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at epoch {epoch}, aborting training"
                )));
            }
            state.step(&mut net, &grads, &cfg.optimizer);
            epoch_loss += batch_loss;
            n_batches += 1;
        }
        history.push(epoch_loss / n_batches as f64);
    }
    Ok((net, history))
}
