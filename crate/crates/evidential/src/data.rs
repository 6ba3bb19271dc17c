//! Synthetic 2-D benchmark generation and dataset plumbing.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Means of the three mixture components (equidistant centers).
pub const MIXTURE_MEANS: [[f64; 2]; 3] = [
    [0.0, 0.866_025_403_784_438_6],
    [-1.0, -0.866_025_403_784_438_6],
    [1.0, -0.866_025_403_784_438_6],
];

pub const MIXTURE_K: usize = 3;

/// Three equally weighted isotropic Gaussians.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MixtureConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        MixtureConfig { n_train: 1000, n_test: 1000, sigma: 4.0, seed: 0 }
    }
}

/// Noisy circle of OOD points around the mixture.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RingConfig {
    pub n_ood: usize,
    pub radius: f64,
    /// Radial noise standard deviation.
    pub noise: f64,
    pub seed: u64,
}

impl Default for RingConfig {
    fn default() -> Self {
        RingConfig { n_ood: 100, radius: 12.0, noise: 2.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map(|f| f.len()).unwrap_or(0)
    }

    pub fn labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::Config("dataset has no labels".into()))
    }
}

fn draw_mixture(n: usize, sigma: f64, rng: &mut SplitMix64) -> Dataset {
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y = rng.next_below(MIXTURE_K);
        let x = [
            MIXTURE_MEANS[y][0] + sigma * rng.next_gaussian(),
            MIXTURE_MEANS[y][1] + sigma * rng.next_gaussian(),
        ];
        features.push(x.to_vec());
        labels.push(y);
    }
    Dataset { features, labels: Some(labels) }
}

/// Train and test sets on disjoint deterministic streams.
pub fn gen_mixture(cfg: &MixtureConfig) -> Result<(Dataset, Dataset)> {
    if cfg.sigma <= 0.0 {
        return Err(Error::Config(format!("sigma must be > 0, got {}", cfg.sigma)));
    }
    let mut train_rng = SplitMix64::new_stream(cfg.seed, 0x7e57_0001);
    let mut test_rng = SplitMix64::new_stream(cfg.seed, 0x7e57_0002);
    Ok((
        draw_mixture(cfg.n_train, cfg.sigma, &mut train_rng),
        draw_mixture(cfg.n_test, cfg.sigma, &mut test_rng),
    ))
}

/// Unlabeled ring: uniform angle, radius ~ N(R, s²) clamped positive.
pub fn gen_ring(cfg: &RingConfig) -> Result<Dataset> {
    if cfg.radius <= 0.0 || cfg.noise < 0.0 {
        return Err(Error::Config(format!(
            "ring needs radius > 0 and noise >= 0, got R = {}, s = {}",
            cfg.radius, cfg.noise
        )));
    }
    let mut rng = SplitMix64::new_stream(cfg.seed, 0x7e57_0003);
    let mut features = Vec::with_capacity(cfg.n_ood);
    for _ in 0..cfg.n_ood {
        let theta = 2.0 * std::f64::consts::PI * rng.next_f64();
        let r = (cfg.radius + cfg.noise * rng.next_gaussian()).max(1e-9);
        features.push(vec![r * theta.cos(), r * theta.sin()]);
    }
    Ok(Dataset { features, labels: None })
}

/// Exact class posteriors of the mixture at a point; the Bayes-optimal
/// classifier is their argmax. Used as the analytic oracle for the
/// synthetic benchmark.
pub fn mixture_posterior(x: &[f64], sigma: f64) -> [f64; 3] {
    let mut logp = [0.0f64; 3];
    for (k, mu) in MIXTURE_MEANS.iter().enumerate() {
        let d2 = (x[0] - mu[0]).powi(2) + (x[1] - mu[1]).powi(2);
        logp[k] = -d2 / (2.0 * sigma * sigma);
    }
    let m = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p = [0.0f64; 3];
    let mut sum = 0.0;
    for k in 0..3 {
        p[k] = (logp[k] - m).exp();
        sum += p[k];
    }
    for v in p.iter_mut() {
        *v /= sum;
    }
    p
}

/// CSV with header `f0,f1,...[,label]`, features at 17 significant digits.
pub fn save_csv<P: AsRef<Path>>(d: &Dataset, path: P) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let dim = d.dim();
    let mut header: Vec<String> = (0..dim).map(|i| format!("f{i}")).collect();
    if d.labels.is_some() {
        header.push("label".into());
    }
    writeln!(f, "{}", header.join(","))?;
    for (i, row) in d.features.iter().enumerate() {
        let mut cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        if let Some(labels) = &d.labels {
            cells.push(labels[i].to_string());
        }
        writeln!(f, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn load_csv<P: AsRef<Path>>(path: P) -> Result<Dataset> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut lines = f.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, msg: "empty file".into() })?;
    let header = header?;
    let cols: Vec<&str> = header.split(',').map(|c| c.trim()).collect();
    let has_label = cols.last() == Some(&"label");
    let dim = if has_label { cols.len() - 1 } else { cols.len() };
    for (i, col) in cols.iter().take(dim).enumerate() {
        if *col != format!("f{i}") {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected column `f{i}`, found `{col}`"),
            });
        }
    }
    let mut features = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != cols.len() {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {} cells, found {}", cols.len(), cells.len()),
            });
        }
        let mut row = Vec::with_capacity(dim);
        for cell in &cells[..dim] {
            row.push(cell.trim().parse::<f64>().map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("`{}`: {e}", cell.trim()),
            })?);
        }
        features.push(row);
        if has_label {
            let raw = cells[dim].trim();
            let y = raw.parse::<usize>().map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("label `{raw}`: {e}"),
            })?;
            labels.push(y);
        }
    }
    Ok(Dataset { features, labels: if has_label { Some(labels) } else { None } })
}

/// Deterministic shuffled partition. Fractions must sum to 1; boundaries
/// use cumulative rounding so (0.9, 0.1) of 1000 gives exactly 900/100.
pub fn split(d: &Dataset, fractions: &[f64], seed: u64) -> Result<Vec<Dataset>> {
    if fractions.is_empty() {
        return Err(Error::Config("need at least one fraction".into()));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 || fractions.iter().any(|&f| f < 0.0) {
        return Err(Error::Config(format!("fractions must be >= 0 and sum to 1, got {total}")));
    }
    let n = d.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = SplitMix64::new_stream(seed, 0x5011_7000);
    rng.shuffle(&mut order);
    let mut out = Vec::with_capacity(fractions.len());
    let mut cum = 0.0;
    let mut start = 0usize;
    for &frac in fractions {
        cum += frac;
        let end = (cum * n as f64).round() as usize;
        let idx = &order[start..end.min(n)];
        out.push(Dataset {
            features: idx.iter().map(|&i| d.features[i].clone()).collect(),
            labels: d
                .labels
                .as_ref()
                .map(|ls| idx.iter().map(|&i| ls[i]).collect()),
        });
        start = end.min(n);
    }
    Ok(out)
}
