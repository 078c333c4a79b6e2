//! Link metrics: SINR from component powers, bit-error rate, convergence
//! detection on error-metric traces, and distribution summaries.

use crate::config::Scheme;
use crate::error::{Result, SimError};

/// 10·log10(P_x / (P_i + P_nR)) from linear powers. Powers are whatever the
/// caller accumulated consistently (per antenna and sample here); only the
/// ratio matters.
pub fn sinr_db(signal_power: f64, residual_interference_power: f64, noise_power: f64) -> Result<f64> {
    if !(noise_power > 0.0) {
        return Err(SimError::Config("noise power must be positive".into()));
    }
    if residual_interference_power < 0.0 || signal_power < 0.0 {
        return Err(SimError::Input("powers must be nonnegative".into()));
    }
    Ok(10.0 * (signal_power / (residual_interference_power + noise_power)).log10())
}

/// Hamming distance over length.
pub fn ber(tx: &[u8], rx: &[u8]) -> Result<f64> {
    if tx.len() != rx.len() {
        return Err(SimError::Input(format!(
            "bit streams of different lengths: {} vs {}",
            tx.len(),
            rx.len()
        )));
    }
    if tx.is_empty() {
        return Err(SimError::Input("bit streams are empty".into()));
    }
    let errors = tx.iter().zip(rx).filter(|(a, b)| a != b).count();
    Ok(errors as f64 / tx.len() as f64)
}

/// First-crossing convergence rule: the smallest 1-based index n with
/// trace[n] ≤ threshold (inclusive), or `None` if the trace never crosses.
pub fn convergence_time(trace: &[f64], threshold_db: f64) -> Option<usize> {
    trace.iter().position(|&em| em <= threshold_db).map(|i| i + 1)
}

/// Per-sample error-metric values in dB for one adaptation run.
#[derive(Debug, Clone, Default)]
pub struct EmTrace {
    values: Vec<f64>,
}

impl EmTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self { values: Vec::with_capacity(n) }
    }

    pub fn push(&mut self, em_db: f64) {
        self.values.push(em_db);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }

    pub fn convergence_time(&self, threshold_db: f64) -> Option<usize> {
        convergence_time(&self.values, threshold_db)
    }
}

/// Fixed-width histogram bin.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub start: f64,
    pub count: usize,
}

/// Moments, log-moment-fitted log-normal parameters and a fixed-width
/// histogram of convergence times.
#[derive(Debug, Clone)]
pub struct ConvergenceSummary {
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    /// Mean of the natural logs (log-normal mu).
    pub log_mean: f64,
    /// Standard deviation of the natural logs (log-normal sigma).
    pub log_std: f64,
    pub bin_width: f64,
    pub histogram: Vec<HistogramBin>,
}

/// Summarizes converged-run sample counts. Bin width is 100 samples with the
/// range fitted to the data; non-converged runs are the caller's to count.
pub fn summarize_convergence(samples: &[f64]) -> Result<ConvergenceSummary> {
    if samples.is_empty() {
        return Err(SimError::EmptySummary);
    }
    if samples.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(SimError::Input("convergence samples must be positive and finite".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let logs: Vec<f64> = samples.iter().map(|v| v.ln()).collect();
    let log_mean = logs.iter().sum::<f64>() / n;
    let log_var = logs.iter().map(|v| (v - log_mean).powi(2)).sum::<f64>() / n;

    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };

    let bin_width = 100.0;
    let lo = (sorted[0] / bin_width).floor() * bin_width;
    let hi = sorted[sorted.len() - 1];
    let bins = (((hi - lo) / bin_width).floor() as usize) + 1;
    let mut histogram: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin { start: lo + b as f64 * bin_width, count: 0 })
        .collect();
    for v in &sorted {
        let idx = (((v - lo) / bin_width).floor() as usize).min(bins - 1);
        histogram[idx].count += 1;
    }

    Ok(ConvergenceSummary {
        mean,
        median,
        std: var.sqrt(),
        log_mean,
        log_std: log_var.sqrt(),
        bin_width,
        histogram,
    })
}

/// One experiment row. Convergence runs emit one record per realization;
/// the sweeps emit one pooled record per (scheme, interference power) point.
/// Fields that do not apply to a given experiment stay `None`/zero.
#[derive(Debug, Clone)]
pub struct MetricsRecord {
    pub scheme: Scheme,
    pub sigma2_li_db: f64,
    pub sinr_db: Option<f64>,
    pub ber: Option<f64>,
    /// 1-based sample index of the first error-metric crossing; absent iff
    /// the run never converged.
    pub convergence_sample: Option<u64>,
    pub em_final_db: Option<f64>,
    /// Derived per-realization seed (convergence rows) or the master seed
    /// (pooled sweep rows).
    pub seed: u64,
    pub realization: u64,
    pub realizations: u64,
    pub bits: u64,
    pub bit_errors: u64,
    pub symbols: u64,
    pub samples: u64,
}

impl MetricsRecord {
    pub fn converged(&self) -> bool {
        self.convergence_sample.is_some()
    }
}

/// Interpolated abscissa (in dB) where a monotonically rising curve crosses
/// `level`: scans for the first adjacent pair with y0 ≤ level < y1 and
/// interpolates linearly in (x, log10 y). `None` when the curve never
/// brackets the level from below.
pub fn crossing_db(curve: &[(f64, f64)], level: f64) -> Option<f64> {
    for w in curve.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        if y0 <= level && level < y1 && y0 > 0.0 {
            let t = (level.log10() - y0.log10()) / (y1.log10() - y0.log10());
            return Some(x0 + t * (x1 - x0));
        }
    }
    None
}

/// Least-squares slope of y against x.
pub fn fitted_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    num / den
}
