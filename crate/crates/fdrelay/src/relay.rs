//! The per-sample full-duplex relay loop.
//!
//! Each tick produces one discrete-time sample of the relay receive chain:
//! the source OFDM signal through the source-relay channel, the relay's own
//! transmission (with transmit impairments) through the loopback channel,
//! additive receiver noise, and the configured cancellation scheme. The
//! sample keeps the three receive components separate so interference and
//! noise powers can be accounted exactly.
//!
//! The canceller path only ever sees the observed signal q(n) and the known
//! baseband transmit history; the true loopback channel, the impairment
//! noise and the interference component are simulator-side truth.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::canceller::{fill_regressor, CancellerFilter, RlsState};
use crate::channel::{awgn_into, complex_gaussian, FirMimoChannel, SignalHistory, C64};
use crate::error::{Result, SimError};
use crate::ofdm::{qam16_demap, qam16_map, ImpairmentModel, OfdmModulator, ZfEqualizer};

/// Channels, impairment and noise levels for one relay realization.
#[derive(Debug, Clone)]
pub struct RelayScenario {
    /// Source-to-relay channel (M_R × N_S, order L_SR).
    pub h_sr: FirMimoChannel,
    /// Loopback self-interference channel (M_R × M_T, order L_LI).
    pub h_li: FirMimoChannel,
    /// Imperfect loopback estimate used by time-domain cancellation.
    pub h_li_estimate: Option<FirMimoChannel>,
    pub impairment: ImpairmentModel,
    /// Receiver noise variance per antenna, linear.
    pub noise_variance: f64,
    /// Decode-and-forward processing delay in samples, strictly positive.
    /// The relay transmit stream is generated independently of the received
    /// data, so the delay is bookkeeping; it must still be at least one
    /// sample for the loop to be physically meaningful.
    pub processing_delay: usize,
}

impl RelayScenario {
    pub fn validate(&self) -> Result<()> {
        if self.h_sr.rows() != self.h_li.rows() {
            return Err(SimError::Config(format!(
                "source channel feeds {} antennas, loopback feeds {}",
                self.h_sr.rows(),
                self.h_li.rows()
            )));
        }
        if let Some(est) = &self.h_li_estimate {
            if est.rows() != self.h_li.rows()
                || est.cols() != self.h_li.cols()
                || est.order() != self.h_li.order()
            {
                return Err(SimError::Config(
                    "loopback estimate does not match the loopback channel shape".into(),
                ));
            }
        }
        if !(self.noise_variance >= 0.0) || !self.noise_variance.is_finite() {
            return Err(SimError::Config("noise variance must be finite and nonnegative".into()));
        }
        if self.processing_delay < 1 {
            return Err(SimError::Config("processing delay must be at least one sample".into()));
        }
        Ok(())
    }
}

/// One tick of the loop with exact component bookkeeping:
/// q = desired + interference + noise, and e = q + z.
#[derive(Debug, Clone)]
pub struct LoopSample {
    /// H_SR(z) x(n).
    pub desired: DVector<C64>,
    /// f(n) = H_LI(z) t(n) — simulator-side truth, hidden from the canceller.
    pub interference: DVector<C64>,
    /// n_R(n).
    pub noise: DVector<C64>,
    /// q(n), the relay receive signal.
    pub received: DVector<C64>,
    /// e(n), the post-cancellation signal.
    pub output: DVector<C64>,
}

impl LoopSample {
    /// Remaining interference after cancellation, i(n) = f(n) + z(n).
    pub fn residual_interference(&self) -> DVector<C64> {
        &self.interference + (&self.output - &self.received)
    }
}

/// The mitigation scheme driving the loop. Natural isolation and the
/// interference-free reference carry no canceller state at all; time-domain
/// cancellation carries a fixed filter; the adaptive scheme carries the
/// recursive-least-squares state.
pub enum LoopCanceller {
    Passthrough,
    Fixed(CancellerFilter),
    Adaptive(RlsState),
}

/// Continuous generator of 16-QAM OFDM time samples across parallel streams.
///
/// Streams are independent; each carries `total_power / streams` so the
/// summed sample power is `total_power`. Bits are retained per symbol when
/// requested so a detector can be scored against them.
pub struct OfdmTxStream {
    modulator: OfdmModulator,
    streams: usize,
    amplitude: f64,
    keep_bits: bool,
    rng: ChaCha8Rng,
    time: Vec<Vec<C64>>,
    bits: Vec<u8>,
    pos: usize,
    symbols_generated: u64,
}

impl OfdmTxStream {
    pub fn new(
        streams: usize,
        n_sub: usize,
        n_cp: usize,
        total_power: f64,
        keep_bits: bool,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        if streams < 1 {
            return Err(SimError::Config("stream count must be at least 1".into()));
        }
        if !(total_power >= 0.0) {
            return Err(SimError::Config("stream power must be nonnegative".into()));
        }
        Ok(Self {
            modulator: OfdmModulator::new(n_sub, n_cp)?,
            streams,
            amplitude: (total_power / streams as f64).sqrt(),
            keep_bits,
            rng,
            time: vec![Vec::new(); streams],
            bits: Vec::new(),
            pos: 0,
            symbols_generated: 0,
        })
    }

    pub fn streams(&self) -> usize {
        self.streams
    }

    pub fn symbol_len(&self) -> usize {
        self.modulator.symbol_len()
    }

    /// Per-stream frequency-symbol amplitude (sqrt of per-stream power).
    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// Transmitted bits of the symbol currently being emitted,
    /// stream-major: all bits of stream 0, then stream 1, …
    pub fn current_bits(&self) -> &[u8] {
        &self.bits
    }

    fn regenerate(&mut self) -> Result<()> {
        let n_sub = self.modulator.n_sub();
        if self.keep_bits {
            self.bits.clear();
        }
        for s in 0..self.streams {
            let bits: Vec<u8> = (0..4 * n_sub).map(|_| self.rng.gen_range(0..2u8)).collect();
            let grid: Vec<C64> = qam16_map(&bits)?
                .into_iter()
                .map(|v| v * self.amplitude)
                .collect();
            self.time[s] = self.modulator.modulate(&grid)?;
            if self.keep_bits {
                self.bits.extend_from_slice(&bits);
            }
        }
        self.symbols_generated += 1;
        Ok(())
    }

    /// Writes the next time sample across streams into `out`.
    pub fn next_sample(&mut self, out: &mut DVector<C64>) -> Result<()> {
        debug_assert_eq!(out.len(), self.streams);
        if self.pos == 0 {
            self.regenerate()?;
        }
        for s in 0..self.streams {
            out[s] = self.time[s][self.pos];
        }
        self.pos = (self.pos + 1) % self.symbol_len();
        Ok(())
    }
}

/// Drives the full-duplex loop sample by sample for one realization.
///
/// Strictly sequential within a realization; realizations run data-parallel
/// with independent generators.
pub struct RelayLoop {
    scenario: RelayScenario,
    source: OfdmTxStream,
    relay_tx: OfdmTxStream,
    canceller: LoopCanceller,
    x_history: SignalHistory,
    t_known_history: SignalHistory,
    t_actual_history: SignalHistory,
    noise_rng: ChaCha8Rng,
    impair_rng: ChaCha8Rng,
    // per-tick buffers
    x: DVector<C64>,
    t_known: DVector<C64>,
    t_actual: DVector<C64>,
    desired: DVector<C64>,
    interference: DVector<C64>,
    noise: DVector<C64>,
    received: DVector<C64>,
    output: DVector<C64>,
    t_bar: DVector<C64>,
    sample_index: u64,
}

impl RelayLoop {
    pub fn new(
        scenario: RelayScenario,
        source: OfdmTxStream,
        relay_tx: OfdmTxStream,
        canceller: LoopCanceller,
        noise_rng: ChaCha8Rng,
        impair_rng: ChaCha8Rng,
    ) -> Result<Self> {
        scenario.validate()?;
        let n_s = scenario.h_sr.cols();
        let m_t = scenario.h_li.cols();
        let m_r = scenario.h_sr.rows();
        if source.streams() != n_s {
            return Err(SimError::Config(format!(
                "source generates {} streams, channel expects {}",
                source.streams(),
                n_s
            )));
        }
        if relay_tx.streams() != m_t {
            return Err(SimError::Config(format!(
                "relay transmitter generates {} streams, loopback expects {}",
                relay_tx.streams(),
                m_t
            )));
        }
        let canceller_order = match &canceller {
            LoopCanceller::Passthrough => scenario.h_li.order(),
            LoopCanceller::Fixed(f) => f.filter().order(),
            LoopCanceller::Adaptive(s) => s.order(),
        };
        let t_capacity = canceller_order.max(scenario.h_li.order()) + 1;
        Ok(Self {
            x_history: SignalHistory::new(n_s, scenario.h_sr.order() + 1),
            t_known_history: SignalHistory::new(m_t, t_capacity),
            t_actual_history: SignalHistory::new(m_t, scenario.h_li.order() + 1),
            x: DVector::zeros(n_s),
            t_known: DVector::zeros(m_t),
            t_actual: DVector::zeros(m_t),
            desired: DVector::zeros(m_r),
            interference: DVector::zeros(m_r),
            noise: DVector::zeros(m_r),
            received: DVector::zeros(m_r),
            output: DVector::zeros(m_r),
            t_bar: DVector::zeros((canceller_order + 1) * m_t),
            scenario,
            source,
            relay_tx,
            canceller,
            noise_rng,
            impair_rng,
            sample_index: 0,
        })
    }

    pub fn scenario(&self) -> &RelayScenario {
        &self.scenario
    }

    pub fn canceller(&self) -> &LoopCanceller {
        &self.canceller
    }

    pub fn sample_index(&self) -> u64 {
        self.sample_index
    }

    pub fn symbol_len(&self) -> usize {
        self.source.symbol_len()
    }

    /// Transmitted source bits of the OFDM symbol currently on air.
    pub fn source_bits(&self) -> &[u8] {
        self.source.current_bits()
    }

    pub fn source_amplitude(&self) -> f64 {
        self.source.amplitude()
    }

    /// Advances the loop by one sample. Component buffers are readable
    /// through the accessors until the next call.
    pub fn tick(&mut self) -> Result<()> {
        self.source.next_sample(&mut self.x)?;
        self.x_history.push(&self.x);

        self.relay_tx.next_sample(&mut self.t_known)?;
        self.scenario.impairment.impair_into(
            &self.t_known,
            1.0,
            &mut self.impair_rng,
            &mut self.t_actual,
        );
        self.t_known_history.push(&self.t_known);
        self.t_actual_history.push(&self.t_actual);

        self.scenario.h_sr.apply_into(&self.x_history, &mut self.desired);
        self.scenario.h_li.apply_into(&self.t_actual_history, &mut self.interference);
        awgn_into(&mut self.noise, self.scenario.noise_variance, &mut self.noise_rng);

        self.received.copy_from(&self.desired);
        self.received += &self.interference;
        self.received += &self.noise;

        match &mut self.canceller {
            LoopCanceller::Passthrough => self.output.copy_from(&self.received),
            LoopCanceller::Fixed(filter) => {
                filter.filter().apply_into(&self.t_known_history, &mut self.output);
                self.output += &self.received;
            }
            LoopCanceller::Adaptive(state) => {
                fill_regressor(&self.t_known_history, state.order(), &mut self.t_bar);
                state.step_into(&self.t_bar, &self.received, &mut self.output)?;
            }
        }

        self.sample_index += 1;
        Ok(())
    }

    /// Owned copy of the most recent tick.
    pub fn tick_sample(&mut self) -> Result<LoopSample> {
        self.tick()?;
        Ok(LoopSample {
            desired: self.desired.clone(),
            interference: self.interference.clone(),
            noise: self.noise.clone(),
            received: self.received.clone(),
            output: self.output.clone(),
        })
    }

    pub fn desired(&self) -> &DVector<C64> {
        &self.desired
    }

    pub fn interference(&self) -> &DVector<C64> {
        &self.interference
    }

    pub fn noise(&self) -> &DVector<C64> {
        &self.noise
    }

    pub fn received(&self) -> &DVector<C64> {
        &self.received
    }

    pub fn output(&self) -> &DVector<C64> {
        &self.output
    }

    /// ‖f(n) + z(n)‖²: instantaneous residual interference power summed over
    /// antennas, from the exact component bookkeeping.
    pub fn residual_interference_power(&self) -> f64 {
        let mut acc = 0.0;
        for a in 0..self.output.len() {
            let i = self.interference[a] + (self.output[a] - self.received[a]);
            acc += i.norm_sqr();
        }
        acc
    }

    /// Error metric of the adaptive canceller against the true loopback
    /// channel; `None` for non-adaptive schemes.
    pub fn adaptive_em_db(&self, h_star: &DMatrix<C64>) -> Option<Result<f64>> {
        match &self.canceller {
            LoopCanceller::Adaptive(state) => Some(state.error_metric_db(h_star)),
            _ => None,
        }
    }
}

/// Detected bits and rank-failure count for one OFDM symbol.
#[derive(Debug, Clone)]
pub struct DetectedSymbol {
    pub bits: Vec<u8>,
    pub failed_subcarriers: usize,
}

/// OFDM-domain zero-forcing detector of the source data at the relay.
///
/// The per-subcarrier response is the exact DFT of the source-relay channel
/// taps (the relay is granted perfect knowledge of that channel); valid for
/// channel order ≤ cyclic prefix length.
pub struct RelayDetector {
    demodulator: OfdmModulator,
    equalizer: ZfEqualizer,
    n_streams: usize,
    m_r: usize,
    amplitude: f64,
}

impl RelayDetector {
    pub fn new(
        h_sr: &FirMimoChannel,
        n_sub: usize,
        n_cp: usize,
        source_amplitude: f64,
    ) -> Result<Self> {
        if h_sr.order() > n_cp {
            return Err(SimError::Config(format!(
                "channel order {} exceeds cyclic prefix {}",
                h_sr.order(),
                n_cp
            )));
        }
        Ok(Self {
            demodulator: OfdmModulator::new(n_sub, n_cp)?,
            equalizer: ZfEqualizer::new(&h_sr.frequency_response(n_sub))?,
            n_streams: h_sr.cols(),
            m_r: h_sr.rows(),
            amplitude: source_amplitude,
        })
    }

    pub fn symbol_len(&self) -> usize {
        self.demodulator.symbol_len()
    }

    /// Demodulates one frame-aligned window of post-cancellation samples and
    /// recovers the source bit stream (stream-major, matching
    /// [`OfdmTxStream::current_bits`]). Rank-deficient subcarriers are
    /// counted, not fatal.
    pub fn detect_symbol(&self, window: &[DVector<C64>]) -> Result<DetectedSymbol> {
        if window.len() != self.symbol_len() {
            return Err(SimError::Input(format!(
                "detection window holds {} samples, expected {}",
                window.len(),
                self.symbol_len()
            )));
        }
        let n_sub = self.demodulator.n_sub();
        let mut grids = Vec::with_capacity(self.m_r);
        let mut antenna_series = vec![C64::new(0.0, 0.0); self.symbol_len()];
        for a in 0..self.m_r {
            for (t, s) in window.iter().enumerate() {
                antenna_series[t] = s[a];
            }
            grids.push(self.demodulator.demodulate(&antenna_series)?);
        }

        let received: Vec<DVector<C64>> = (0..n_sub)
            .map(|m| DVector::from_fn(self.m_r, |a, _| grids[a][m]))
            .collect();
        let zf = self.equalizer.detect(&received)?;

        let inv_amp = if self.amplitude > 0.0 { 1.0 / self.amplitude } else { 0.0 };
        let mut bits = Vec::with_capacity(self.n_streams * n_sub * 4);
        let mut stream_symbols = vec![C64::new(0.0, 0.0); n_sub];
        for s in 0..self.n_streams {
            for m in 0..n_sub {
                stream_symbols[m] = zf.estimates[m][s] * inv_amp;
            }
            bits.extend(qam16_demap(&stream_symbols));
        }
        Ok(DetectedSymbol { bits, failed_subcarriers: zf.failed_subcarriers })
    }
}

/// Gaussian-driven unit test hook: a stream with CN(0, power/streams)
/// entries, used where OFDM structure is irrelevant.
pub fn gaussian_sample(streams: usize, total_power: f64, rng: &mut impl Rng) -> DVector<C64> {
    DVector::from_fn(streams, |_, _| complex_gaussian(total_power / streams as f64, rng))
}
