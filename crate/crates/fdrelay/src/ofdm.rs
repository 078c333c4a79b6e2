//! OFDM physical layer: 16-QAM mapping, cyclic-prefix OFDM modulation with
//! unitary transforms, per-subcarrier zero-forcing MIMO detection and the
//! additive transmit-impairment noise model.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rustfft::{Fft, FftPlanner};

use crate::channel::{awgn, C64};
use crate::error::{Result, SimError};

/// Scale factor that normalizes the 16-QAM constellation to unit average energy.
const QAM16_SCALE: f64 = 0.316227766016837933; // 1/sqrt(10)

/// Gray-coded amplitude for a bit pair: 00→−3, 01→−1, 11→+1, 10→+3.
fn gray_level(b0: u8, b1: u8) -> f64 {
    match (b0, b1) {
        (0, 0) => -3.0,
        (0, 1) => -1.0,
        (1, 1) => 1.0,
        (1, 0) => 3.0,
        _ => unreachable!("bits must be 0 or 1"),
    }
}

/// The 16 constellation points indexed by the 4-bit pattern b0b1b2b3
/// (b0 is the most significant index bit). b0b1 select the I level and
/// b2b3 the Q level. This table is normative and bit-exact.
pub fn qam16_constellation() -> [C64; 16] {
    let mut points = [C64::new(0.0, 0.0); 16];
    for (idx, p) in points.iter_mut().enumerate() {
        let b = [(idx >> 3) & 1, (idx >> 2) & 1, (idx >> 1) & 1, idx & 1];
        let i = gray_level(b[0] as u8, b[1] as u8);
        let q = gray_level(b[2] as u8, b[3] as u8);
        *p = C64::new(i * QAM16_SCALE, q * QAM16_SCALE);
    }
    points
}

/// Maps bits (4 per symbol) onto unit-energy 16-QAM symbols.
pub fn qam16_map(bits: &[u8]) -> Result<Vec<C64>> {
    if bits.len() % 4 != 0 {
        return Err(SimError::Input(format!(
            "bit count {} is not a multiple of 4",
            bits.len()
        )));
    }
    let table = qam16_constellation();
    Ok(bits
        .chunks_exact(4)
        .map(|b| {
            let idx = ((b[0] as usize) << 3) | ((b[1] as usize) << 2) | ((b[2] as usize) << 1)
                | b[3] as usize;
            table[idx]
        })
        .collect())
}

/// Minimum-distance hard demapping; the inverse of [`qam16_map`] on noiseless
/// input. Exact ties resolve to the smaller constellation index.
pub fn qam16_demap(symbols: &[C64]) -> Vec<u8> {
    let table = qam16_constellation();
    let mut bits = Vec::with_capacity(symbols.len() * 4);
    for s in symbols {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (idx, p) in table.iter().enumerate() {
            let d = (s - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = idx;
            }
        }
        bits.push(((best >> 3) & 1) as u8);
        bits.push(((best >> 2) & 1) as u8);
        bits.push(((best >> 1) & 1) as u8);
        bits.push((best & 1) as u8);
    }
    bits
}

/// Unitary-DFT OFDM modulator/demodulator with a cyclic prefix.
///
/// Both directions carry the 1/√N scale so signal power is identical in the
/// time and frequency domains. Subcarriers use natural order 0..N−1.
#[derive(Clone)]
pub struct OfdmModulator {
    n_sub: usize,
    n_cp: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl OfdmModulator {
    pub fn new(n_sub: usize, n_cp: usize) -> Result<Self> {
        if n_sub < 1 {
            return Err(SimError::Config("n_sub must be at least 1".into()));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n_sub,
            n_cp,
            forward: planner.plan_fft_forward(n_sub),
            inverse: planner.plan_fft_inverse(n_sub),
        })
    }

    pub fn n_sub(&self) -> usize {
        self.n_sub
    }

    pub fn n_cp(&self) -> usize {
        self.n_cp
    }

    /// Samples per OFDM symbol including the cyclic prefix.
    pub fn symbol_len(&self) -> usize {
        self.n_sub + self.n_cp
    }

    /// Unitary IDFT of the grid followed by the cyclic prefix (the last
    /// `n_cp` body samples prepended).
    pub fn modulate(&self, grid: &[C64]) -> Result<Vec<C64>> {
        if grid.len() != self.n_sub {
            return Err(SimError::Input(format!(
                "grid has {} entries, expected {}",
                grid.len(),
                self.n_sub
            )));
        }
        let mut body = grid.to_vec();
        self.inverse.process(&mut body);
        let scale = 1.0 / (self.n_sub as f64).sqrt();
        for v in &mut body {
            *v *= scale;
        }
        let mut out = Vec::with_capacity(self.symbol_len());
        out.extend_from_slice(&body[self.n_sub - self.n_cp..]);
        out.extend_from_slice(&body);
        Ok(out)
    }

    /// Drops the cyclic prefix and applies the unitary DFT.
    pub fn demodulate(&self, samples: &[C64]) -> Result<Vec<C64>> {
        if samples.len() != self.symbol_len() {
            return Err(SimError::Input(format!(
                "symbol has {} samples, expected {}",
                samples.len(),
                self.symbol_len()
            )));
        }
        let mut grid = samples[self.n_cp..].to_vec();
        self.forward.process(&mut grid);
        let scale = 1.0 / (self.n_sub as f64).sqrt();
        for v in &mut grid {
            *v *= scale;
        }
        Ok(grid)
    }
}

/// Per-stream grids of frequency-domain symbols plus the serialized
/// time-domain sample stream with cyclic prefix.
#[derive(Debug, Clone)]
pub struct OfdmFrame {
    pub freq_grid: Vec<Vec<C64>>,
    pub time_samples: Vec<Vec<C64>>,
    pub n_sub: usize,
    pub n_cp: usize,
}

impl OfdmFrame {
    pub fn modulate(grids: Vec<Vec<C64>>, modulator: &OfdmModulator) -> Result<Self> {
        let time_samples = grids
            .iter()
            .map(|g| modulator.modulate(g))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            freq_grid: grids,
            time_samples,
            n_sub: modulator.n_sub(),
            n_cp: modulator.n_cp(),
        })
    }

    pub fn streams(&self) -> usize {
        self.freq_grid.len()
    }
}

/// Zero-forcing detection output for one OFDM symbol.
#[derive(Debug, Clone)]
pub struct ZfOutput {
    /// Per-subcarrier stream estimates (length N_S each).
    pub estimates: Vec<DVector<C64>>,
    /// Subcarriers whose channel matrix was rank deficient; their estimates
    /// are all-zero and they are counted rather than treated as fatal.
    pub failed_subcarriers: usize,
}

/// Per-subcarrier zero-forcing equalizer x̂(m) = (Hᴴ(m)H(m))⁻¹Hᴴ(m) r(m),
/// built once from the per-subcarrier channel response.
pub struct ZfEqualizer {
    pinv: Vec<Option<DMatrix<C64>>>,
    streams: usize,
}

impl ZfEqualizer {
    pub fn new(response: &[DMatrix<C64>]) -> Result<Self> {
        if response.is_empty() {
            return Err(SimError::Config("empty channel response".into()));
        }
        let streams = response[0].ncols();
        let pinv = response
            .iter()
            .map(|h| {
                let gram = h.adjoint() * h;
                gram.try_inverse().map(|g| g * h.adjoint())
            })
            .collect();
        Ok(Self { pinv, streams })
    }

    pub fn subcarriers(&self) -> usize {
        self.pinv.len()
    }

    /// Equalizes one symbol worth of per-subcarrier receive vectors.
    pub fn detect(&self, received: &[DVector<C64>]) -> Result<ZfOutput> {
        if received.len() != self.pinv.len() {
            return Err(SimError::Input(format!(
                "received {} subcarriers, equalizer built for {}",
                received.len(),
                self.pinv.len()
            )));
        }
        let mut failed = 0usize;
        let estimates = received
            .iter()
            .zip(&self.pinv)
            .map(|(r, p)| match p {
                Some(p) => p * r,
                None => {
                    failed += 1;
                    DVector::zeros(self.streams)
                }
            })
            .collect();
        Ok(ZfOutput { estimates, failed_subcarriers: failed })
    }
}

/// One-shot zero-forcing detection over per-subcarrier receive vectors and
/// channel matrices.
pub fn zf_detect(received: &[DVector<C64>], response: &[DMatrix<C64>]) -> Result<ZfOutput> {
    if received.len() != response.len() {
        return Err(SimError::Input(format!(
            "{} receive vectors for {} channel matrices",
            received.len(),
            response.len()
        )));
    }
    ZfEqualizer::new(response)?.detect(received)
}

/// Transmit-impairment model: the actually radiated signal is the known
/// baseband signal plus additive noise with per-entry variance
/// delta × (mean total transmit power).
#[derive(Debug, Clone, Copy)]
pub struct ImpairmentModel {
    delta: f64,
}

impl ImpairmentModel {
    pub fn new(delta: f64) -> Result<Self> {
        if delta < 0.0 || !delta.is_finite() {
            return Err(SimError::Config("delta must be finite and nonnegative".into()));
        }
        Ok(Self { delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// t(n) = t̃(n) + E_t(n), with E_t ~ CN(0, delta·mean_power I).
    pub fn impair(
        &self,
        transmit: &DVector<C64>,
        mean_power: f64,
        rng: &mut impl rand::Rng,
    ) -> DVector<C64> {
        assert!(mean_power >= 0.0);
        if self.delta == 0.0 || mean_power == 0.0 {
            return transmit.clone();
        }
        transmit + awgn(transmit.len(), self.delta * mean_power, rng)
    }

    /// In-place variant of [`impair`](Self::impair): writes t(n) into `out`.
    pub fn impair_into(
        &self,
        transmit: &DVector<C64>,
        mean_power: f64,
        rng: &mut impl rand::Rng,
        out: &mut DVector<C64>,
    ) {
        debug_assert!(mean_power >= 0.0);
        out.copy_from(transmit);
        if self.delta > 0.0 && mean_power > 0.0 {
            let var = self.delta * mean_power;
            for v in out.iter_mut() {
                *v += crate::channel::complex_gaussian(var, rng);
            }
        }
    }
}
