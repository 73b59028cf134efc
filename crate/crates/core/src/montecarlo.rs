//! Seeded Monte Carlo engine for exact SINRs and mutual informations.
//!
//! Trial `i` always draws its channel from stream `i` of the master seed.
//! Trials are grouped in fixed blocks of [`BLOCK`] indices; each block is
//! evaluated by a single worker and block results are merged in index order,
//! so the summary does not depend on how many workers ran.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{draw_channel_into, CorrelationPair, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::mmse::MmseWorkspace;
use crate::outage::{std_normal_cdf, MutualInfoGaussian, Receiver};
use crate::par::Workers;

pub const BLOCK: usize = 4096;
/// Blocks evaluated between merges; bounds transient memory.
const WAVE_BLOCKS: usize = 256;
/// Up to this many trials every sample is kept.
pub const RETAIN_LIMIT: u64 = 10_000_000;
/// Size of the quantile sketch used past [`RETAIN_LIMIT`].
pub const SKETCH_POINTS: usize = 4096;

#[derive(Debug, Clone)]
pub struct TrialBatchSpec {
    pub config: SystemConfig,
    pub pair: CorrelationPair,
    pub n_trials: u64,
    pub master_seed: u64,
}

impl TrialBatchSpec {
    pub fn new(config: SystemConfig, pair: CorrelationPair, n_trials: u64, master_seed: u64) -> Result<Self> {
        if n_trials == 0 {
            return Err(Error::InvalidConfig("number of trials must be at least 1".into()));
        }
        pair.check_dims(&config)?;
        Ok(Self {
            config,
            pair,
            n_trials,
            master_seed,
        })
    }
}

/// Count, mean and central moment sums of a scalar stream.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
    m3: f64,
}

impl Moments {
    fn of(x: &[f64]) -> Self {
        let n = x.len() as f64;
        let mean = neumaier(x.iter().copied()) / n;
        let m2 = neumaier(x.iter().map(|v| (v - mean).powi(2)));
        let m3 = neumaier(x.iter().map(|v| (v - mean).powi(3)));
        Self { n, mean, m2, m3 }
    }

    fn merge(self, o: Self) -> Self {
        if self.n == 0.0 {
            return o;
        }
        if o.n == 0.0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        let (na, nb) = (self.n, o.n);
        Self {
            n,
            mean: self.mean + d * nb / n,
            m2: self.m2 + o.m2 + d * d * na * nb / n,
            m3: self.m3 + o.m3 + d * d * d * na * nb * (na - nb) / (n * n) + 3.0 * d * (na * o.m2 - nb * self.m2) / n,
        }
    }

    fn variance(&self) -> f64 {
        if self.n > 1.0 {
            (self.m2 / (self.n - 1.0)).max(0.0)
        } else {
            0.0
        }
    }

    fn skewness(&self) -> f64 {
        if self.m2 > 0.0 {
            self.n.sqrt() * self.m3 / self.m2.powf(1.5)
        } else {
            0.0
        }
    }
}

fn neumaier(it: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in it {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

/// Mean vector and co-moment matrix of the per-stream SINRs.
#[derive(Debug, Clone)]
struct VectorMoments {
    n: f64,
    mean: Vec<f64>,
    co: Vec<f64>,
    m3: Vec<f64>,
}

impl VectorMoments {
    /// `g` is row-major `trials x m`.
    fn of(g: &[f64], m: usize) -> Self {
        let rows = g.len() / m;
        let n = rows as f64;
        let mean: Vec<f64> = (0..m).map(|k| neumaier((0..rows).map(|i| g[i * m + k])) / n).collect();
        let mut co = vec![0.0; m * m];
        for a in 0..m {
            for b in 0..=a {
                let v = neumaier((0..rows).map(|i| (g[i * m + a] - mean[a]) * (g[i * m + b] - mean[b])));
                co[a * m + b] = v;
                co[b * m + a] = v;
            }
        }
        let m3 = (0..m).map(|k| neumaier((0..rows).map(|i| (g[i * m + k] - mean[k]).powi(3)))).collect();
        Self { n, mean, co, m3 }
    }

    fn merge(self, o: Self) -> Self {
        if self.n == 0.0 {
            return o;
        }
        let m = self.mean.len();
        let n = self.n + o.n;
        let (na, nb) = (self.n, o.n);
        let d: Vec<f64> = (0..m).map(|k| o.mean[k] - self.mean[k]).collect();
        let mean = (0..m).map(|k| self.mean[k] + d[k] * nb / n).collect();
        let mut co = vec![0.0; m * m];
        for a in 0..m {
            for b in 0..m {
                co[a * m + b] = self.co[a * m + b] + o.co[a * m + b] + d[a] * d[b] * na * nb / n;
            }
        }
        let m3 = (0..m)
            .map(|k| {
                let (m2a, m2b) = (self.co[k * m + k], o.co[k * m + k]);
                self.m3[k] + o.m3[k] + d[k].powi(3) * na * nb * (na - nb) / (n * n) + 3.0 * d[k] * (na * m2b - nb * m2a) / n
            })
            .collect();
        Self { n, mean, co, m3 }
    }
}

struct BlockResult {
    mi: Vec<f64>,
    opt: Vec<f64>,
    mi_mom: Moments,
    opt_mom: Moments,
    sinr: VectorMoments,
}

fn run_block(spec: &TrialBatchSpec, start: u64, end: u64) -> Result<BlockResult> {
    let (n, m) = (spec.config.n(), spec.config.m());
    let rho = spec.config.rho();
    let len = (end - start) as usize;
    let mut h = vec![C64::new(0.0, 0.0); n * m];
    let mut scratch = h.clone();
    let mut ws = MmseWorkspace::new(n, m);
    let mut mi = Vec::with_capacity(len);
    let mut opt = Vec::with_capacity(len);
    let mut gammas = Vec::with_capacity(len * m);
    for trial in start..end {
        draw_channel_into(&spec.pair, spec.master_seed, trial, &mut h, &mut scratch);
        let logdet = ws.evaluate(&h, rho);
        if !logdet.is_finite() {
            return Err(Error::StabilityViolation {
                margin: f64::NAN,
                context: format!("trial {trial}: non-finite log-det"),
            });
        }
        mi.push(ws.gammas.iter().map(|g| g.ln_1p()).sum::<f64>());
        opt.push(logdet);
        gammas.extend_from_slice(&ws.gammas);
    }
    Ok(BlockResult {
        mi_mom: Moments::of(&mi),
        opt_mom: Moments::of(&opt),
        sinr: VectorMoments::of(&gammas, m),
        mi,
        opt,
    })
}

/// Weighted quantile sketch, merged in a fixed order.
#[derive(Debug, Clone, Default)]
struct Sketch {
    points: Vec<(f64, f64)>,
}

impl Sketch {
    fn absorb(&mut self, sorted: &[f64]) {
        let mut all = Vec::with_capacity(self.points.len() + sorted.len());
        let (mut i, mut j) = (0, 0);
        while i < self.points.len() || j < sorted.len() {
            if j == sorted.len() || (i < self.points.len() && self.points[i].0 <= sorted[j]) {
                all.push(self.points[i]);
                i += 1;
            } else {
                all.push((sorted[j], 1.0));
                j += 1;
            }
        }
        self.points = compress(&all, SKETCH_POINTS);
    }

    fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.0).collect()
    }
}

fn compress(points: &[(f64, f64)], k: usize) -> Vec<(f64, f64)> {
    let total: f64 = points.iter().map(|p| p.1).sum();
    if points.len() <= k {
        return points.to_vec();
    }
    let w = total / k as f64;
    let mut out = Vec::with_capacity(k);
    let mut acc = 0.0;
    let mut idx = 0;
    for q in 0..k {
        let target = (q as f64 + 0.5) * w;
        while idx + 1 < points.len() && acc + points[idx].1 < target {
            acc += points[idx].1;
            idx += 1;
        }
        out.push((points[idx].0, w));
    }
    out
}

/// Empirical distribution and moments of one batch, in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSummary {
    pub n_trials: u64,
    pub master_seed: u64,
    pub m: usize,
    pub n: usize,
    pub rho: f64,
    /// `false` when the sample vectors hold a quantile sketch instead of every trial.
    pub samples_exact: bool,
    #[serde(skip)]
    pub mi_samples: Vec<f64>,
    #[serde(skip)]
    pub opt_samples: Vec<f64>,
    pub sinr_mean: Vec<f64>,
    pub sinr_cov: Vec<Vec<f64>>,
    pub sinr_skewness: Vec<f64>,
    pub mi_mean: f64,
    pub mi_var: f64,
    pub mi_skewness: f64,
    /// Delete-one-block jackknife standard error of `mi_var`.
    pub mi_var_se: Option<f64>,
    pub opt_mean: f64,
    pub opt_var: f64,
    pub opt_skewness: f64,
    pub opt_var_se: Option<f64>,
}

impl EmpiricalSummary {
    pub fn samples(&self, receiver: Receiver) -> &[f64] {
        match receiver {
            Receiver::Mmse => &self.mi_samples,
            Receiver::Optimal => &self.opt_samples,
        }
    }

    /// Fraction of samples `<= x` (binary search on the sorted vector).
    pub fn ecdf(&self, receiver: Receiver, x: f64) -> f64 {
        let s = self.samples(receiver);
        s.partition_point(|&v| v <= x) as f64 / s.len() as f64
    }

    /// Scalar cumulants and metadata as pretty JSON (no samples).
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut s = self.to_json()?;
        s.push('\n');
        std::fs::write(path, s)?;
        Ok(())
    }

    /// `mi_nats,opt_nats` rows, each column sorted ascending, floats formatted by `fmt`.
    pub fn write_samples_csv(&self, mut out: impl Write, fmt: impl Fn(f64) -> String) -> Result<()> {
        writeln!(out, "mi_nats,opt_nats")?;
        for (a, b) in self.mi_samples.iter().zip(&self.opt_samples) {
            writeln!(out, "{},{}", fmt(*a), fmt(*b))?;
        }
        Ok(())
    }
}

fn jackknife_var_se(blocks: &[Moments]) -> Option<f64> {
    let b = blocks.len();
    if b < 2 {
        return None;
    }
    let mut prefix = vec![Moments::default(); b + 1];
    for i in 0..b {
        prefix[i + 1] = prefix[i].merge(blocks[i]);
    }
    let mut suffix = vec![Moments::default(); b + 1];
    for i in (0..b).rev() {
        suffix[i] = blocks[i].merge(suffix[i + 1]);
    }
    let loo: Vec<f64> = (0..b).map(|i| prefix[i].merge(suffix[i + 1]).variance()).collect();
    let mean = neumaier(loo.iter().copied()) / b as f64;
    let ss = neumaier(loo.iter().map(|v| (v - mean).powi(2)));
    Some(((b as f64 - 1.0) / b as f64 * ss).sqrt())
}

fn reserve(v: &mut Vec<f64>, n: usize, requested: u64) -> Result<()> {
    v.try_reserve_exact(n).map_err(|e| Error::Resource {
        completed: 0,
        requested,
        reason: format!("cannot allocate sample storage: {e}"),
    })
}

/// Runs `n_trials` independent trials. No partial summary is returned on error.
pub fn run_trials(spec: &TrialBatchSpec, workers: &Workers) -> Result<EmpiricalSummary> {
    if spec.n_trials == 0 {
        return Err(Error::InvalidConfig("number of trials must be at least 1".into()));
    }
    spec.pair.check_dims(&spec.config)?;
    let m = spec.config.m();
    let exact = spec.n_trials <= RETAIN_LIMIT;
    let mut mi_all = Vec::new();
    let mut opt_all = Vec::new();
    if exact {
        reserve(&mut mi_all, spec.n_trials as usize, spec.n_trials)?;
        reserve(&mut opt_all, spec.n_trials as usize, spec.n_trials)?;
    }
    let (mut mi_sketch, mut opt_sketch) = (Sketch::default(), Sketch::default());
    let n_blocks = spec.n_trials.div_ceil(BLOCK as u64);
    let mut mi_blocks = Vec::with_capacity(n_blocks as usize);
    let mut opt_blocks = Vec::with_capacity(n_blocks as usize);
    let mut sinr: Option<VectorMoments> = None;
    let mut wave_start = 0u64;
    while wave_start < n_blocks {
        let wave_len = (n_blocks - wave_start).min(WAVE_BLOCKS as u64) as usize;
        let results = workers
            .try_map(wave_len, |j| {
                let b = wave_start + j as u64;
                let start = b * BLOCK as u64;
                let end = (start + BLOCK as u64).min(spec.n_trials);
                run_block(spec, start, end)
            })
            .map_err(|e| match e {
                Error::Resource { requested, reason, .. } => Error::Resource {
                    completed: wave_start * BLOCK as u64,
                    requested,
                    reason,
                },
                other => other,
            })?;
        let mut wave_mi = Vec::new();
        let mut wave_opt = Vec::new();
        for r in results {
            mi_blocks.push(r.mi_mom);
            opt_blocks.push(r.opt_mom);
            sinr = Some(match sinr {
                None => r.sinr,
                Some(acc) => acc.merge(r.sinr),
            });
            if exact {
                mi_all.extend_from_slice(&r.mi);
                opt_all.extend_from_slice(&r.opt);
            } else {
                wave_mi.extend_from_slice(&r.mi);
                wave_opt.extend_from_slice(&r.opt);
            }
        }
        if !exact {
            wave_mi.sort_by(f64::total_cmp);
            wave_opt.sort_by(f64::total_cmp);
            mi_sketch.absorb(&wave_mi);
            opt_sketch.absorb(&wave_opt);
        }
        wave_start += wave_len as u64;
    }
    if exact {
        mi_all.sort_by(f64::total_cmp);
        opt_all.sort_by(f64::total_cmp);
    } else {
        mi_all = mi_sketch.values();
        opt_all = opt_sketch.values();
    }
    let mi = mi_blocks.iter().fold(Moments::default(), |a, b| a.merge(*b));
    let opt = opt_blocks.iter().fold(Moments::default(), |a, b| a.merge(*b));
    let sinr = sinr.expect("at least one block");
    let denom = (sinr.n - 1.0).max(1.0);
    let sinr_cov = (0..m)
        .map(|a| (0..m).map(|b| if sinr.n > 1.0 { sinr.co[a * m + b] / denom } else { 0.0 }).collect())
        .collect();
    let sinr_skewness = (0..m)
        .map(|k| {
            let m2 = sinr.co[k * m + k];
            if m2 > 0.0 {
                sinr.n.sqrt() * sinr.m3[k] / m2.powf(1.5)
            } else {
                0.0
            }
        })
        .collect();
    Ok(EmpiricalSummary {
        n_trials: spec.n_trials,
        master_seed: spec.master_seed,
        m,
        n: spec.config.n(),
        rho: spec.config.rho(),
        samples_exact: exact,
        mi_samples: mi_all,
        opt_samples: opt_all,
        sinr_mean: sinr.mean.clone(),
        sinr_cov,
        sinr_skewness,
        mi_mean: mi.mean,
        mi_var: mi.variance(),
        mi_skewness: mi.skewness(),
        mi_var_se: jackknife_var_se(&mi_blocks),
        opt_mean: opt.mean,
        opt_var: opt.variance(),
        opt_skewness: opt.skewness(),
        opt_var_se: jackknife_var_se(&opt_blocks),
    })
}

/// Empirical outage fraction with its Wilson 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutageEstimate {
    pub probability: f64,
    pub ci_halfwidth: f64,
    pub n: u64,
}

const Z95: f64 = 1.959_963_984_540_054;

pub fn wilson_halfwidth(p: f64, n: u64) -> f64 {
    let n = n as f64;
    let z2 = Z95 * Z95;
    Z95 / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt()
}

pub fn empirical_outage(summary: &EmpiricalSummary, rate: f64, receiver: Receiver) -> OutageEstimate {
    let p = summary.ecdf(receiver, rate);
    OutageEstimate {
        probability: p,
        ci_halfwidth: wilson_halfwidth(p, summary.n_trials),
        n: summary.n_trials,
    }
}

/// Two-sided Kolmogorov-Smirnov statistic of sorted samples against `cdf`.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d.clamp(0.0, 1.0)
}

/// KS distance between the samples of `model.receiver` and the model Gaussian.
pub fn ks_distance(summary: &EmpiricalSummary, model: &MutualInfoGaussian) -> f64 {
    let sd = model.std_dev();
    ks_statistic(summary.samples(model.receiver), |x| {
        if sd > 0.0 {
            std_normal_cdf((x - model.c1) / sd)
        } else if x >= model.c1 {
            1.0
        } else {
            0.0
        }
    })
}
