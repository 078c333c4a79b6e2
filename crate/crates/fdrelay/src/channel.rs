//! Frequency-selective MIMO channels as FIR matrix filters.
//!
//! A channel is a tapped filter H(z) = Σ_{k=0..L} H[k] z^{-k} applied to a
//! history of complex column vectors. The module also provides Rayleigh tap
//! draws, imperfect channel estimates (true taps minus a Gaussian error) and
//! the circularly symmetric receiver noise process.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SimError};

pub type C64 = Complex64;

/// One circularly symmetric complex Gaussian sample with per-entry variance
/// `variance` (real and imaginary parts each carry half).
pub fn complex_gaussian(variance: f64, rng: &mut impl Rng) -> C64 {
    debug_assert!(variance >= 0.0);
    let s = (variance * 0.5).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

/// i.i.d. CN(0, variance) noise vector of the given dimension.
pub fn awgn(dim: usize, variance: f64, rng: &mut impl Rng) -> DVector<C64> {
    assert!(dim >= 1, "awgn: dim must be at least 1");
    assert!(variance >= 0.0, "awgn: variance must be nonnegative");
    DVector::from_fn(dim, |_, _| complex_gaussian(variance, rng))
}

/// Overwrites `out` with i.i.d. CN(0, variance) entries.
pub fn awgn_into(out: &mut DVector<C64>, variance: f64, rng: &mut impl Rng) {
    debug_assert!(variance >= 0.0);
    for v in out.iter_mut() {
        *v = complex_gaussian(variance, rng);
    }
}

/// FIR matrix filter H(z) = Σ_{k=0..L} H[k] z^{-k}.
///
/// All taps share the same rows×cols shape; the taps list is never empty.
/// Immutable after construction and safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct FirMimoChannel {
    taps: Vec<DMatrix<C64>>,
}

impl FirMimoChannel {
    pub fn new(taps: Vec<DMatrix<C64>>) -> Result<Self> {
        if taps.is_empty() {
            return Err(SimError::Config("channel needs at least one tap".into()));
        }
        let (rows, cols) = taps[0].shape();
        if rows == 0 || cols == 0 {
            return Err(SimError::Config("channel taps must be non-empty matrices".into()));
        }
        if taps.iter().any(|t| t.shape() != (rows, cols)) {
            return Err(SimError::Config("all channel taps must share the same shape".into()));
        }
        Ok(Self { taps })
    }

    /// All-zero channel with `order + 1` taps.
    pub fn zero(rows: usize, cols: usize, order: usize) -> Self {
        let taps = (0..=order).map(|_| DMatrix::zeros(rows, cols)).collect();
        Self { taps }
    }

    /// Single-tap identity channel (L = 0, H[0] = I).
    pub fn identity(dim: usize) -> Self {
        Self { taps: vec![DMatrix::identity(dim, dim)] }
    }

    /// Draws a channel whose tap entries are i.i.d. CN(0, tap_variance).
    pub fn rayleigh(
        rows: usize,
        cols: usize,
        order: usize,
        tap_variance: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if rows < 1 || cols < 1 {
            return Err(SimError::Config("channel dimensions must be at least 1".into()));
        }
        if tap_variance < 0.0 {
            return Err(SimError::Config("tap variance must be nonnegative".into()));
        }
        let taps = (0..=order)
            .map(|_| DMatrix::from_fn(rows, cols, |_, _| complex_gaussian(tap_variance, rng)))
            .collect();
        Ok(Self { taps })
    }

    /// Imperfect estimate of `self`: H̃[k] = H[k] − E[k] with E[k] entries
    /// i.i.d. CN(0, error_variance), so the true taps decompose as
    /// H[k] = H̃[k] + E[k]. The error is drawn once per call and is static
    /// over the realization that uses it.
    pub fn perturbed(&self, error_variance: f64, rng: &mut impl Rng) -> Result<Self> {
        if error_variance < 0.0 {
            return Err(SimError::Config("estimation error variance must be nonnegative".into()));
        }
        let taps = self
            .taps
            .iter()
            .map(|t| t.map(|h| h - complex_gaussian(error_variance, rng)))
            .collect();
        Ok(Self { taps })
    }

    /// Channel with every tap negated.
    pub fn negated(&self) -> Self {
        Self { taps: self.taps.iter().map(|t| -t).collect() }
    }

    pub fn rows(&self) -> usize {
        self.taps[0].nrows()
    }

    pub fn cols(&self) -> usize {
        self.taps[0].ncols()
    }

    /// Filter order L; the channel has L + 1 taps.
    pub fn order(&self) -> usize {
        self.taps.len() - 1
    }

    pub fn taps(&self) -> &[DMatrix<C64>] {
        &self.taps
    }

    pub fn tap(&self, k: usize) -> &DMatrix<C64> {
        &self.taps[k]
    }

    /// Σ_k ‖H[k]‖²_F over all taps.
    pub fn frobenius_sq(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_squared()).sum()
    }

    /// Convolution output Σ_{k=0..L} H[k]·x(n−k). Samples older than the
    /// history fill are treated as zero (cold start).
    pub fn apply(&self, history: &SignalHistory) -> Result<DVector<C64>> {
        if history.dim() != self.cols() {
            return Err(SimError::Config(format!(
                "channel expects input dimension {}, history carries {}",
                self.cols(),
                history.dim()
            )));
        }
        let mut out = DVector::zeros(self.rows());
        self.apply_into(history, &mut out);
        Ok(out)
    }

    /// Unchecked hot-path variant of [`apply`](Self::apply); `out` is overwritten.
    pub fn apply_into(&self, history: &SignalHistory, out: &mut DVector<C64>) {
        debug_assert_eq!(history.dim(), self.cols());
        debug_assert_eq!(out.len(), self.rows());
        out.fill(C64::new(0.0, 0.0));
        let one = C64::new(1.0, 0.0);
        for (k, tap) in self.taps.iter().enumerate() {
            if let Some(x) = history.get(k) {
                out.gemv(one, tap, x, one);
            }
        }
    }

    /// DFT of the tap sequence: H(m) = Σ_k H[k] e^{−j2πmk/N} for
    /// m = 0..n_points−1. This is the exact per-subcarrier response seen by
    /// an OFDM receiver with a sufficient cyclic prefix.
    pub fn frequency_response(&self, n_points: usize) -> Vec<DMatrix<C64>> {
        let (rows, cols) = (self.rows(), self.cols());
        (0..n_points)
            .map(|m| {
                let mut h = DMatrix::zeros(rows, cols);
                for (k, tap) in self.taps.iter().enumerate() {
                    let phase = -2.0 * std::f64::consts::PI * (m as f64) * (k as f64)
                        / (n_points as f64);
                    let w = C64::from_polar(1.0, phase);
                    h += tap * w;
                }
                h
            })
            .collect()
    }
}

/// Fixed-capacity ring buffer of complex column vectors, most recent first.
///
/// Single writer; reads of x(n−k) beyond the current fill return `None`,
/// which the channel treats as the zero vector.
#[derive(Debug, Clone)]
pub struct SignalHistory {
    slots: Vec<DVector<C64>>,
    head: usize,
    filled: usize,
}

impl SignalHistory {
    pub fn new(dim: usize, capacity: usize) -> Self {
        assert!(dim >= 1 && capacity >= 1);
        Self {
            slots: (0..capacity).map(|_| DVector::zeros(dim)).collect(),
            head: 0,
            filled: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.slots[0].len()
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    /// Number of samples currently held (saturates at capacity).
    pub fn len(&self) -> usize {
        self.filled
    }

    pub fn is_empty(&self) -> bool {
        self.filled == 0
    }

    /// Appends the newest sample, dropping the oldest once full.
    pub fn push(&mut self, sample: &DVector<C64>) {
        debug_assert_eq!(sample.len(), self.dim());
        let cap = self.capacity();
        self.head = (self.head + cap - 1) % cap;
        self.slots[self.head].copy_from(sample);
        self.filled = (self.filled + 1).min(cap);
    }

    /// Sample x(n−lag); `None` once the lag reaches past the recorded fill.
    pub fn get(&self, lag: usize) -> Option<&DVector<C64>> {
        if lag >= self.filled {
            return None;
        }
        Some(&self.slots[(self.head + lag) % self.capacity()])
    }

    pub fn clear(&mut self) {
        self.filled = 0;
        self.head = 0;
    }
}
