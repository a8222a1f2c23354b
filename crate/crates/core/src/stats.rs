//! Estimators, bootstrap uncertainty and finite-size crossing analysis.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoder::{BiasMode, ClassificationOutcome};
use crate::error::{invalid, Error, Result};
use crate::seed::{derive_stream_seed, stream_rng};

pub const DEFAULT_BOOTSTRAP: usize = 1000;
pub const DEFAULT_CROSSING_RESAMPLES: usize = 200;
pub const DEFAULT_BINS: usize = 50;
/// Lower-tail threshold for `P(P_corr < eps)`.
pub const TAIL_THRESHOLD: f64 = 0.4;

/// Accuracy of the independent-measurement mean estimator,
/// `(1 + erf(sqrt(p t_f / L))) / 2`.
pub fn lower_bound_accuracy(p: f64, n_timesteps: usize, n_sites: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return invalid(format!("p={p} outside [0, 1]"));
    }
    if n_timesteps == 0 || n_sites == 0 {
        return invalid("t_f and L must be positive");
    }
    Ok(0.5 * (1.0 + libm::erf((p * n_timesteps as f64 / n_sites as f64).sqrt())))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Kurtosis `mu_4 / mu_2^2` of the centered samples.
pub fn binder_ratio(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::Degenerate("Binder ratio needs at least two samples".into()));
    }
    let m = mean(samples);
    let (mut m2, mut m4) = (0.0, 0.0);
    for &x in samples {
        let d = (x - m) * (x - m);
        m2 += d;
        m4 += d * d;
    }
    let n = samples.len() as f64;
    let (m2, m4) = (m2 / n, m4 / n);
    // relative to the scale of the data, so near-constant inputs count as constant
    let scale = samples.iter().map(|x| x.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    if m2 <= (1e-12 * scale).powi(2) {
        return Err(Error::Degenerate("zero variance".into()));
    }
    Ok(m4 / (m2 * m2))
}

/// A point estimate with a 95% percentile interval and bootstrap standard
/// error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    pub stderr: f64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos - pos.floor());
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

/// Nonparametric bootstrap of `stat` over index resamples. Resamples where
/// `stat` fails are dropped.
pub fn bootstrap<F>(n: usize, n_boot: usize, seed: u64, stat: F) -> Vec<f64>
where
    F: Fn(&[usize]) -> Option<f64>,
{
    let mut rng = stream_rng(seed);
    let mut idx = vec![0usize; n];
    let mut out = Vec::with_capacity(n_boot);
    for _ in 0..n_boot {
        idx.iter_mut().for_each(|i| *i = rng.random_range(0..n));
        if let Some(v) = stat(&idx) {
            out.push(v);
        }
    }
    out
}

fn estimate_from(value: f64, mut draws: Vec<f64>) -> Estimate {
    if draws.is_empty() {
        return Estimate { value, lo: value, hi: value, stderr: 0.0 };
    }
    draws.sort_by(f64::total_cmp);
    let m = mean(&draws);
    let var = draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (draws.len().max(2) - 1) as f64;
    Estimate { value, lo: percentile(&draws, 0.025), hi: percentile(&draws, 0.975), stderr: var.sqrt() }
}

pub fn mean_with_ci(samples: &[f64], n_boot: usize, seed: u64) -> Result<Estimate> {
    if samples.is_empty() {
        return invalid("empty sample");
    }
    let draws = bootstrap(samples.len(), n_boot, seed, |idx| {
        Some(idx.iter().map(|&i| samples[i]).sum::<f64>() / idx.len() as f64)
    });
    Ok(estimate_from(mean(samples), draws))
}

/// Fraction correct with a bootstrap interval.
pub fn accuracy_with_ci(correct: &[bool], n_boot: usize, seed: u64) -> Result<Estimate> {
    if correct.is_empty() {
        return invalid("empty sample");
    }
    let as_f: Vec<f64> = correct.iter().map(|&c| f64::from(u8::from(c))).collect();
    mean_with_ci(&as_f, n_boot, seed)
}

pub fn binder_with_ci(samples: &[f64], n_boot: usize, seed: u64) -> Result<Estimate> {
    let value = binder_ratio(samples)?;
    let draws = bootstrap(samples.len(), n_boot, seed, |idx| {
        let resample: Vec<f64> = idx.iter().map(|&i| samples[i]).collect();
        binder_ratio(&resample).ok()
    });
    Ok(estimate_from(value, draws))
}

/// Fraction of samples strictly below `eps`.
pub fn tail_weight(samples: &[f64], eps: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().filter(|&&x| x < eps).count() as f64 / samples.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    /// `n_bins + 1` equally spaced edges on `[0, 1]`.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Cumulative fraction at each upper edge.
    pub cdf: Vec<f64>,
    pub tail_threshold: f64,
    pub tail_weight: f64,
}

/// Histogram of samples in `[0, 1]`; the top bin is closed.
pub fn distribution_report(samples: &[f64], n_bins: usize) -> Result<DistributionReport> {
    if n_bins < 2 {
        return invalid("need at least two bins");
    }
    if samples.is_empty() {
        return invalid("empty sample");
    }
    let mut counts = vec![0usize; n_bins];
    for &x in samples {
        if !(0.0..=1.0).contains(&x) {
            return invalid(format!("sample {x} outside [0, 1]"));
        }
        counts[((x * n_bins as f64) as usize).min(n_bins - 1)] += 1;
    }
    let n = samples.len() as f64;
    let mut acc = 0usize;
    let mut cdf: Vec<f64> = counts
        .iter()
        .map(|&c| {
            acc += c;
            acc as f64 / n
        })
        .collect();
    *cdf.last_mut().expect("bins") = 1.0;
    Ok(DistributionReport {
        edges: (0..=n_bins).map(|i| i as f64 / n_bins as f64).collect(),
        counts,
        cdf,
        tail_threshold: TAIL_THRESHOLD,
        tail_weight: tail_weight(samples, TAIL_THRESHOLD),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub p: f64,
    pub value: f64,
    pub err: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub p_star: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Crossing of the difference `d = a - b` along the grid. With several sign
/// changes the one that best splits the grid into a positive and a negative
/// side (weighted by `|d| / err`) is taken.
fn crossing_of(p: &[f64], d: &[f64], w: &[f64]) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for k in 0..d.len() - 1 {
        let (x, y) = (d[k], d[k + 1]);
        // a zero is attributed to the interval on its left
        let at = if x * y < 0.0 {
            p[k] + (p[k + 1] - p[k]) * x / (x - y)
        } else if y == 0.0 && x != 0.0 {
            p[k + 1]
        } else if k == 0 && x == 0.0 && y != 0.0 {
            p[0]
        } else {
            continue;
        };
        let s = if y > 0.0 || (y == 0.0 && x < 0.0) { 1.0 } else { -1.0 };
        let score: f64 = (0..d.len()).map(|i| if i <= k { -s * d[i] * w[i] } else { s * d[i] * w[i] }).sum();
        if best.is_none_or(|(b, _)| score > b) {
            best = Some((score, at));
        }
    }
    best.map(|(_, at)| at)
}

/// Location where curve `a` crosses curve `b`, with a band from resampling
/// each point within its error. `None` when the curves do not cross.
pub fn crossing_estimate(
    a: &[CurvePoint],
    b: &[CurvePoint],
    n_resamples: usize,
    seed: u64,
) -> Result<Option<Crossing>> {
    if a.len() != b.len() || a.len() < 2 {
        return invalid("curves need a common grid of at least two points");
    }
    for (k, (x, y)) in a.iter().zip(b).enumerate() {
        if (x.p - y.p).abs() > 1e-12 {
            return invalid(format!("grid mismatch at point {k}: {} vs {}", x.p, y.p));
        }
        if k > 0 && x.p <= a[k - 1].p {
            return invalid("grid must be strictly ascending");
        }
    }
    let p: Vec<f64> = a.iter().map(|c| c.p).collect();
    let w: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let e = (x.err * x.err + y.err * y.err).sqrt();
            if e > 0.0 {
                1.0 / e
            } else {
                1.0
            }
        })
        .collect();
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x.value - y.value).collect();
    let Some(p_star) = crossing_of(&p, &d, &w) else {
        return Ok(None);
    };
    let mut rng = stream_rng(seed);
    let mut draws = Vec::with_capacity(n_resamples);
    for _ in 0..n_resamples {
        let dd: Vec<f64> = a
            .iter()
            .zip(b)
            .map(|(x, y)| {
                let zx: f64 = rng.sample(StandardNormal);
                let zy: f64 = rng.sample(StandardNormal);
                (x.value + zx * x.err) - (y.value + zy * y.err)
            })
            .collect();
        if let Some(c) = crossing_of(&p, &dd, &w) {
            draws.push(c);
        }
    }
    draws.sort_by(f64::total_cmp);
    let (lo, hi) = if draws.is_empty() {
        (p_star, p_star)
    } else {
        (percentile(&draws, 0.025).min(p_star), percentile(&draws, 0.975).max(p_star))
    };
    Ok(Some(Crossing { p_star, lo, hi }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupKey {
    pub n_sites: usize,
    pub p: f64,
    pub mode: BiasMode,
    pub task: String,
}

/// Per-record decoder outputs of one group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub key: GroupKey,
    pub p_corr: Vec<f64>,
    pub entropy_bits: Vec<f64>,
    pub correct: Vec<bool>,
    /// `max_Q P(Q|m)`.
    pub confidence: Vec<f64>,
    /// `sum_Q P(Q|m)^2`.
    pub purity: Vec<f64>,
}

impl SampleSet {
    pub fn new(key: GroupKey) -> Self {
        Self {
            key,
            p_corr: Vec::new(),
            entropy_bits: Vec::new(),
            correct: Vec::new(),
            confidence: Vec::new(),
            purity: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.correct.len()
    }

    pub fn is_empty(&self) -> bool {
        self.correct.is_empty()
    }

    /// Adds one evaluated record; its true label must be known.
    pub fn push(&mut self, outcome: &ClassificationOutcome, true_label: usize) -> Result<()> {
        let p_corr = outcome.p_corr.ok_or_else(|| Error::InvalidArgument("outcome has no p_corr".into()))?;
        self.p_corr.push(p_corr);
        self.entropy_bits.push(outcome.entropy_bits);
        self.correct.push(outcome.predicted_label == true_label);
        self.confidence.push(outcome.max_posterior());
        self.purity.push(outcome.purity());
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub key: GroupKey,
    pub n_samples: usize,
    pub accuracy: Estimate,
    /// `E[max_Q P(Q|m)]`.
    pub theoretical_accuracy: Estimate,
    pub mean_entropy: Estimate,
    pub mean_p_corr: Estimate,
    /// `E[sum_Q P(Q|m)^2]`.
    pub mean_purity: Estimate,
    /// `1 - E[P_corr]`.
    pub order_param: f64,
    /// `None` when the distribution is degenerate.
    pub binder_pcorr: Option<Estimate>,
    pub binder_entropy: Option<Estimate>,
    pub tail_weight: f64,
}

fn summarize(set: &SampleSet, n_boot: usize, seed: u64) -> Result<SummaryRow> {
    if set.is_empty() {
        return invalid(format!("empty group {:?}", set.key));
    }
    let s = |k| derive_stream_seed(seed, k);
    let mean_p_corr = mean_with_ci(&set.p_corr, n_boot, s(3))?;
    Ok(SummaryRow {
        key: set.key.clone(),
        n_samples: set.len(),
        accuracy: accuracy_with_ci(&set.correct, n_boot, s(0))?,
        theoretical_accuracy: mean_with_ci(&set.confidence, n_boot, s(1))?,
        mean_entropy: mean_with_ci(&set.entropy_bits, n_boot, s(2))?,
        order_param: 1.0 - mean_p_corr.value,
        mean_p_corr,
        mean_purity: mean_with_ci(&set.purity, n_boot, s(4))?,
        binder_pcorr: binder_with_ci(&set.p_corr, n_boot, s(5)).ok(),
        binder_entropy: binder_with_ci(&set.entropy_bits, n_boot, s(6)).ok(),
        tail_weight: tail_weight(&set.p_corr, TAIL_THRESHOLD),
    })
}

/// One summary row per group, each with its own bootstrap stream.
pub fn order_parameter_table(sets: &[SampleSet], n_boot: usize, seed: u64) -> Result<Vec<SummaryRow>> {
    for (i, s) in sets.iter().enumerate() {
        if sets[..i].iter().any(|o| o.key == s.key) {
            return invalid(format!("duplicate group {:?}", s.key));
        }
    }
    sets.par_iter().enumerate().map(|(i, set)| summarize(set, n_boot, derive_stream_seed(seed, i as u64))).collect()
}
