//! Monte-Carlo experiment drivers: convergence-time measurement, SINR sweep
//! and BER sweep, with deterministic per-realization seeding, data-parallel
//! execution and CSV output.
//!
//! Measurement protocol. Stationary schemes (natural isolation, time-domain
//! cancellation, the interference-free reference) collect statistics after a
//! short fixed warm-up. The adaptive scheme adapts continuously from cold
//! start; statistics begin at its measured convergence sample. SINR windows
//! then run to the end of the realization. BER windows span a fixed multiple
//! of the convergence time (published relay results are taken in the period
//! right after convergence; a window proportional to the convergence time
//! keeps the adaptation residual in a fixed proportion to the interference
//! level across the sweep), with a fallback window when the error metric
//! never crosses its threshold — at low interference power the metric is
//! relative to a vanishing channel and the residual is negligible anyway.

use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::canceller::{stack_channel, CancellerFilter, RlsState};
use crate::channel::{FirMimoChannel, C64};
use crate::config::{db_to_linear, format_float, Scheme, SimConfig};
use crate::error::{Result, SimError};
use crate::metrics::{sinr_db, MetricsRecord};
use crate::ofdm::ImpairmentModel;
use crate::relay::{LoopCanceller, OfdmTxStream, RelayDetector, RelayLoop, RelayScenario};
use crate::seed::{realization_seed, seed_for, StreamRole};

/// Fixed warm-up (in OFDM symbols) before statistics of non-adaptive runs.
pub const WARMUP_SYMBOLS: usize = 2;
/// BER: wait at most this many symbols for the adaptive filter to converge.
pub const BER_ADAPT_CAP_SYMBOLS: usize = 48;
/// BER: measure from the first fully converged symbol until the sample count
/// reaches this multiple of the convergence sample.
pub const BER_WINDOW_RATIO: u64 = 2;
/// BER: never measure fewer than this many symbols.
pub const BER_MIN_MEASURE_SYMBOLS: usize = 4;
/// BER: symbols measured when the error metric never crosses the threshold.
pub const BER_FALLBACK_MEASURE_SYMBOLS: usize = 12;

/// Run identification carried by every experiment result.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub tool_version: String,
    pub timestamp_unix: u64,
    pub master_seed: u64,
}

impl Provenance {
    fn now(master_seed: u64) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            master_seed,
        }
    }
}

/// Config snapshot, result rows and provenance of one experiment run.
/// Rerunning with the same config and master seed reproduces the records —
/// and therefore the CSV bodies — byte for byte, at any worker count.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: SimConfig,
    pub records: Vec<MetricsRecord>,
    pub provenance: Provenance,
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SimError::Config(format!("workers: cannot build thread pool: {e}")))
}

fn schemes_to_run(cfg: &SimConfig) -> Vec<Scheme> {
    match cfg.scheme {
        Some(s) => vec![s],
        None => Scheme::all().to_vec(),
    }
}

/// Builds one realization's relay loop. Channels, data, noise and impairment
/// streams are keyed by (master seed, realization, role) only, so all
/// schemes and sweep points of a given realization index share the same
/// channel shapes and signal paths (the loopback taps scale with the
/// configured interference power).
fn build_relay_loop(
    cfg: &SimConfig,
    scheme: Scheme,
    sigma2_li_db: f64,
    realization: u64,
    keep_bits: bool,
) -> Result<(RelayLoop, Option<DMatrix<C64>>)> {
    let sigma2_li = db_to_linear(sigma2_li_db);

    let mut sr_rng = seed_for(cfg.master_seed, realization, StreamRole::SourceChannel);
    let h_sr =
        FirMimoChannel::rayleigh(cfg.m_r, cfg.n_s, cfg.l_sr, cfg.h_sr_tap_variance, &mut sr_rng)?;

    let h_li = if scheme == Scheme::NoSi {
        FirMimoChannel::zero(cfg.m_r, cfg.m_t, cfg.l_li)
    } else {
        let mut li_rng = seed_for(cfg.master_seed, realization, StreamRole::LoopbackChannel);
        FirMimoChannel::rayleigh(cfg.m_r, cfg.m_t, cfg.l_li, sigma2_li, &mut li_rng)?
    };

    let h_li_estimate = if scheme == Scheme::Tdc {
        let mut est_rng = seed_for(cfg.master_seed, realization, StreamRole::LoopbackEstimate);
        Some(h_li.perturbed(cfg.alpha * sigma2_li, &mut est_rng)?)
    } else {
        None
    };

    let canceller = match scheme {
        Scheme::Ni | Scheme::NoSi => LoopCanceller::Passthrough,
        Scheme::Tdc => LoopCanceller::Fixed(CancellerFilter::tdc(
            h_li_estimate.as_ref().expect("estimate drawn for tdc"),
        )),
        Scheme::Rls => {
            LoopCanceller::Adaptive(RlsState::new(cfg.m_r, cfg.m_t, cfg.l_a, cfg.lambda, cfg.mu)?)
        }
    };
    let h_star = (scheme == Scheme::Rls).then(|| stack_channel(&h_li));

    let scenario = RelayScenario {
        h_sr,
        h_li,
        h_li_estimate,
        impairment: ImpairmentModel::new(cfg.delta)?,
        noise_variance: cfg.sigma2_nr_linear(),
        processing_delay: cfg.symbol_len(),
    };
    let source = OfdmTxStream::new(
        cfg.n_s,
        cfg.n_sub,
        cfg.n_cp,
        1.0,
        keep_bits,
        seed_for(cfg.master_seed, realization, StreamRole::SourceData),
    )?;
    let relay_tx = OfdmTxStream::new(
        cfg.m_t,
        cfg.n_sub,
        cfg.n_cp,
        1.0,
        false,
        seed_for(cfg.master_seed, realization, StreamRole::RelayData),
    )?;
    let relay_loop = RelayLoop::new(
        scenario,
        source,
        relay_tx,
        canceller,
        seed_for(cfg.master_seed, realization, StreamRole::ReceiverNoise),
        seed_for(cfg.master_seed, realization, StreamRole::TransmitImpairment),
    )?;
    Ok((relay_loop, h_star))
}

// ---------------------------------------------------------------------------
// Convergence experiment
// ---------------------------------------------------------------------------

struct ConvergenceOutcome {
    realization: u64,
    convergence_sample: Option<u64>,
    em_final_db: f64,
    samples: u64,
}

fn convergence_realization(
    cfg: &SimConfig,
    sigma2_li_db: f64,
    realization: u64,
) -> Result<ConvergenceOutcome> {
    let (mut relay_loop, h_star) = build_relay_loop(cfg, Scheme::Rls, sigma2_li_db, realization, false)?;
    let h_star = h_star.expect("adaptive run carries the stacked truth");
    let cap = (cfg.ofdm_symbols * cfg.symbol_len()) as u64;
    let mut em = 0.0;
    let mut crossed = None;
    let mut n = 0u64;
    while n < cap {
        match relay_loop.tick() {
            Ok(()) => {}
            // A diverged filter counts as a non-converged realization.
            Err(SimError::Divergence { .. }) => break,
            Err(e) => return Err(e),
        }
        n += 1;
        em = relay_loop
            .adaptive_em_db(&h_star)
            .expect("adaptive scheme")?;
        if em <= cfg.em_threshold_db {
            crossed = Some(n);
            break;
        }
    }
    Ok(ConvergenceOutcome {
        realization,
        convergence_sample: crossed,
        em_final_db: em,
        samples: n,
    })
}

/// Runs the convergence-time experiment: per realization, fresh channels and
/// adaptation from cold start until the error metric first crosses the
/// configured threshold (or the symbol budget runs out). One record per
/// realization.
pub fn run_convergence(cfg: &SimConfig) -> Result<ExperimentResult> {
    if cfg.sigma2_li_db.len() == 1 && db_to_linear(cfg.sigma2_li_db[0]) == 0.0 {
        // No interference to learn: the error metric has no reference.
        return Err(SimError::UndefinedMetric);
    }
    cfg.validate()?;
    if cfg.scheme != Some(Scheme::Rls) {
        return Err(SimError::Config(
            "scheme: the convergence experiment requires scheme=rls".into(),
        ));
    }
    if cfg.sigma2_li_db.len() != 1 {
        return Err(SimError::Config(
            "sigma2-li-db: the convergence experiment takes a single value".into(),
        ));
    }
    let sigma2_li_db = cfg.sigma2_li_db[0];

    let outcomes: Vec<ConvergenceOutcome> = pool(cfg.workers)?.install(|| {
        (0..cfg.realizations)
            .into_par_iter()
            .map(|r| convergence_realization(cfg, sigma2_li_db, r))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut records: Vec<MetricsRecord> = outcomes
        .into_iter()
        .map(|o| MetricsRecord {
            scheme: Scheme::Rls,
            sigma2_li_db,
            sinr_db: None,
            ber: None,
            convergence_sample: o.convergence_sample,
            em_final_db: Some(o.em_final_db),
            seed: realization_seed(cfg.master_seed, o.realization),
            realization: o.realization,
            realizations: 1,
            bits: 0,
            bit_errors: 0,
            symbols: cfg.ofdm_symbols as u64,
            samples: o.samples,
        })
        .collect();
    records.sort_by_key(|r| r.realization);

    Ok(ExperimentResult {
        config: cfg.clone(),
        records,
        provenance: Provenance::now(cfg.master_seed),
    })
}

// ---------------------------------------------------------------------------
// SINR sweep
// ---------------------------------------------------------------------------

#[derive(Default, Clone, Copy)]
struct PowerSums {
    desired: f64,
    residual: f64,
    noise: f64,
    samples: u64,
}

impl PowerSums {
    fn add(&mut self, relay_loop: &RelayLoop) {
        self.desired += relay_loop.desired().norm_squared();
        self.residual += relay_loop.residual_interference_power();
        self.noise += relay_loop.noise().norm_squared();
        self.samples += 1;
    }

    fn merge(&mut self, other: &PowerSums) {
        self.desired += other.desired;
        self.residual += other.residual;
        self.noise += other.noise;
        self.samples += other.samples;
    }
}

fn sinr_realization(
    cfg: &SimConfig,
    scheme: Scheme,
    sigma2_li_db: f64,
    realization: u64,
) -> Result<PowerSums> {
    let (mut relay_loop, h_star) = build_relay_loop(cfg, scheme, sigma2_li_db, realization, false)?;
    let total = (cfg.ofdm_symbols * cfg.symbol_len()) as u64;
    let warmup = (WARMUP_SYMBOLS * cfg.symbol_len()) as u64;

    // Adaptive runs start their window at the convergence sample; if the
    // metric never crosses (vanishing loopback power), fall back to the
    // fixed warm-up.
    let mut post_warmup = PowerSums::default();
    let mut post_convergence = PowerSums::default();
    let mut converged_at: Option<u64> = None;

    for n in 1..=total {
        relay_loop.tick()?;
        if scheme == Scheme::Rls && converged_at.is_none() {
            let em = relay_loop
                .adaptive_em_db(h_star.as_ref().expect("adaptive scheme"))
                .expect("adaptive scheme")?;
            if em <= cfg.em_threshold_db {
                converged_at = Some(n);
            }
        }
        if n > warmup {
            post_warmup.add(&relay_loop);
        }
        match converged_at {
            Some(nc) if n > nc => post_convergence.add(&relay_loop),
            _ => {}
        }
    }

    Ok(match scheme {
        Scheme::Rls if converged_at.is_some() && post_convergence.samples > 0 => post_convergence,
        _ => post_warmup,
    })
}

/// Runs the SINR sweep: post-convergence signal, residual-interference and
/// noise powers pooled over realizations, one record per (scheme, loopback
/// power) point, sorted by scheme label then power.
pub fn run_sinr_sweep(cfg: &SimConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let schemes = schemes_to_run(cfg);
    let mut records = Vec::new();
    let pool = pool(cfg.workers)?;

    for &scheme in &schemes {
        for &s_db in &cfg.sigma2_li_db {
            let partials: Vec<PowerSums> = pool.install(|| {
                (0..cfg.realizations)
                    .into_par_iter()
                    .map(|r| sinr_realization(cfg, scheme, s_db, r))
                    .collect::<Result<Vec<_>>>()
            })?;
            // Ordered fold keeps the floating-point reduction identical at
            // any worker count.
            let mut sums = PowerSums::default();
            for p in &partials {
                sums.merge(p);
            }
            let norm = (sums.samples.max(1) * cfg.m_r as u64) as f64;
            let sinr = sinr_db(
                sums.desired / norm,
                sums.residual / norm,
                sums.noise / norm,
            )?;
            records.push(MetricsRecord {
                scheme,
                sigma2_li_db: s_db,
                sinr_db: Some(sinr),
                ber: None,
                convergence_sample: None,
                em_final_db: None,
                seed: cfg.master_seed,
                realization: 0,
                realizations: cfg.realizations,
                bits: 0,
                bit_errors: 0,
                symbols: (cfg.ofdm_symbols as u64) * cfg.realizations,
                samples: sums.samples,
            });
        }
    }
    records.sort_by(|a, b| {
        a.scheme
            .label()
            .cmp(b.scheme.label())
            .then(a.sigma2_li_db.partial_cmp(&b.sigma2_li_db).unwrap())
    });

    Ok(ExperimentResult {
        config: cfg.clone(),
        records,
        provenance: Provenance::now(cfg.master_seed),
    })
}

// ---------------------------------------------------------------------------
// BER sweep
// ---------------------------------------------------------------------------

#[derive(Default, Clone, Copy)]
struct BerSums {
    bits: u64,
    errors: u64,
    symbols: u64,
}

fn ber_realization(
    cfg: &SimConfig,
    scheme: Scheme,
    sigma2_li_db: f64,
    realization: u64,
) -> Result<BerSums> {
    let (mut relay_loop, h_star) = build_relay_loop(cfg, scheme, sigma2_li_db, realization, true)?;
    let detector = RelayDetector::new(
        &relay_loop.scenario().h_sr,
        cfg.n_sub,
        cfg.n_cp,
        (1.0 / cfg.n_s as f64).sqrt(),
    )?;
    let sym_len = cfg.symbol_len();
    let max_symbols = cfg.ofdm_symbols;

    let fallback_window = |from: usize| {
        let start = from.min(max_symbols);
        (start, (start + BER_FALLBACK_MEASURE_SYMBOLS).min(max_symbols))
    };
    // Small symbol budgets pull the adaptation cap in so a window always
    // exists inside the run.
    let adapt_cap = BER_ADAPT_CAP_SYMBOLS.min(max_symbols / 2);
    let (mut start_sym, mut end_sym) = match scheme {
        Scheme::Rls => (None, None),
        _ => {
            let (a, b) = fallback_window(WARMUP_SYMBOLS);
            (Some(a), Some(b))
        }
    };

    let mut crossed: Option<u64> = None;
    let mut sums = BerSums::default();
    let mut window: Vec<DVector<C64>> = Vec::with_capacity(sym_len);
    let mut tx_bits: Vec<u8> = Vec::new();

    for s in 0..max_symbols {
        if let Some(end) = end_sym {
            if s >= end {
                break;
            }
        }
        // Adaptive runs that never converge within the cap measure a
        // fixed window; the residual there is negligible by construction.
        if scheme == Scheme::Rls && start_sym.is_none() && s >= adapt_cap {
            let (a, b) = fallback_window(s);
            start_sym = Some(a);
            end_sym = Some(b);
        }
        let measuring = start_sym.is_some_and(|a| s >= a) && end_sym.is_some_and(|b| s < b);
        window.clear();

        for t in 0..sym_len {
            relay_loop.tick()?;
            let n = (s * sym_len + t + 1) as u64;
            if scheme == Scheme::Rls && crossed.is_none() {
                let em = relay_loop
                    .adaptive_em_db(h_star.as_ref().expect("adaptive scheme"))
                    .expect("adaptive scheme")?;
                if em <= cfg.em_threshold_db {
                    crossed = Some(n);
                    if start_sym.is_none() {
                        let a = (n as usize).div_ceil(sym_len);
                        let b_samples = (BER_WINDOW_RATIO * n) as usize;
                        let b = b_samples
                            .div_ceil(sym_len)
                            .max(a + BER_MIN_MEASURE_SYMBOLS)
                            .min(max_symbols);
                        start_sym = Some(a.min(max_symbols));
                        end_sym = Some(b);
                    }
                }
            }
            if measuring {
                if t == 0 {
                    tx_bits.clear();
                    tx_bits.extend_from_slice(relay_loop.source_bits());
                }
                window.push(relay_loop.output().clone());
            }
        }

        if measuring {
            let detected = detector.detect_symbol(&window)?;
            sums.errors += detected
                .bits
                .iter()
                .zip(&tx_bits)
                .filter(|(a, b)| a != b)
                .count() as u64;
            sums.bits += detected.bits.len() as u64;
            sums.symbols += 1;
        }
    }
    Ok(sums)
}

/// Runs the BER sweep: bit errors at the relay pooled over realizations per
/// (scheme, loopback power) point, including the interference-free
/// reference curve. Sorted by scheme label then power.
pub fn run_ber_sweep(cfg: &SimConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let schemes = schemes_to_run(cfg);
    let mut records = Vec::new();
    let pool = pool(cfg.workers)?;

    for &scheme in &schemes {
        for &s_db in &cfg.sigma2_li_db {
            let partials: Vec<BerSums> = pool.install(|| {
                (0..cfg.realizations)
                    .into_par_iter()
                    .map(|r| ber_realization(cfg, scheme, s_db, r))
                    .collect::<Result<Vec<_>>>()
            })?;
            let mut sums = BerSums::default();
            for p in &partials {
                sums.bits += p.bits;
                sums.errors += p.errors;
                sums.symbols += p.symbols;
            }
            if sums.bits == 0 {
                return Err(SimError::Config(
                    "ofdm-symbols: no measurable symbols inside the configured budget".into(),
                ));
            }
            records.push(MetricsRecord {
                scheme,
                sigma2_li_db: s_db,
                sinr_db: None,
                ber: Some(sums.errors as f64 / sums.bits as f64),
                convergence_sample: None,
                em_final_db: None,
                seed: cfg.master_seed,
                realization: 0,
                realizations: cfg.realizations,
                bits: sums.bits,
                bit_errors: sums.errors,
                symbols: sums.symbols,
                samples: 0,
            });
        }
    }
    records.sort_by(|a, b| {
        a.scheme
            .label()
            .cmp(b.scheme.label())
            .then(a.sigma2_li_db.partial_cmp(&b.sigma2_li_db).unwrap())
    });

    Ok(ExperimentResult {
        config: cfg.clone(),
        records,
        provenance: Provenance::now(cfg.master_seed),
    })
}

// ---------------------------------------------------------------------------
// Curves and CSV output
// ---------------------------------------------------------------------------

/// (interference power dB, BER) points of one scheme, sorted by power.
pub fn ber_curve(result: &ExperimentResult, scheme: Scheme) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = result
        .records
        .iter()
        .filter(|r| r.scheme == scheme)
        .filter_map(|r| r.ber.map(|b| (r.sigma2_li_db, b)))
        .collect();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pts
}

/// (interference power dB, SINR dB) points of one scheme, sorted by power.
pub fn sinr_curve(result: &ExperimentResult, scheme: Scheme) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = result
        .records
        .iter()
        .filter(|r| r.scheme == scheme)
        .filter_map(|r| r.sinr_db.map(|s| (r.sigma2_li_db, s)))
        .collect();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pts
}

fn write_echo<W: Write>(w: &mut W, cfg: &SimConfig) -> std::io::Result<()> {
    for (k, v) in cfg.echo() {
        writeln!(w, "# {k}={v}")?;
    }
    Ok(())
}

/// Writes `realization,seed,converged,convergence_sample,em_final_db` rows.
pub fn write_convergence_csv<W: Write>(result: &ExperimentResult, w: &mut W) -> Result<()> {
    write_echo(w, &result.config)?;
    writeln!(w, "realization,seed,converged,convergence_sample,em_final_db")?;
    for r in &result.records {
        let sample = r.convergence_sample.map(|s| s.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{:.6}",
            r.realization,
            r.seed,
            r.converged(),
            sample,
            r.em_final_db.unwrap_or(f64::NAN)
        )?;
    }
    Ok(())
}

/// Writes `scheme,sigma2_li_db,sinr_db,realizations,samples_per_point` rows.
pub fn write_sinr_csv<W: Write>(result: &ExperimentResult, w: &mut W) -> Result<()> {
    write_echo(w, &result.config)?;
    writeln!(w, "scheme,sigma2_li_db,sinr_db,realizations,samples_per_point")?;
    for r in &result.records {
        writeln!(
            w,
            "{},{},{:.6},{},{}",
            r.scheme.label(),
            format_float(r.sigma2_li_db),
            r.sinr_db.unwrap_or(f64::NAN),
            r.realizations,
            r.samples
        )?;
    }
    Ok(())
}

/// Writes `scheme,sigma2_li_db,ber,bits_counted,bit_errors` rows.
pub fn write_ber_csv<W: Write>(result: &ExperimentResult, w: &mut W) -> Result<()> {
    write_echo(w, &result.config)?;
    writeln!(w, "scheme,sigma2_li_db,ber,bits_counted,bit_errors")?;
    for r in &result.records {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.scheme.label(),
            format_float(r.sigma2_li_db),
            format_float(r.ber.unwrap_or(f64::NAN)),
            r.bits,
            r.bit_errors
        )?;
    }
    Ok(())
}

pub fn convergence_csv_string(result: &ExperimentResult) -> Result<String> {
    let mut buf = Vec::new();
    write_convergence_csv(result, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn sinr_csv_string(result: &ExperimentResult) -> Result<String> {
    let mut buf = Vec::new();
    write_sinr_csv(result, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn ber_csv_string(result: &ExperimentResult) -> Result<String> {
    let mut buf = Vec::new();
    write_ber_csv(result, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}
