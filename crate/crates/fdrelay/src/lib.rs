//! Link-level simulator of an in-band full-duplex decode-and-forward
//! MIMO-OFDM relay over frequency-selective channels.
//!
//! The relay receives a source transmission while simultaneously
//! transmitting in the same band, so its own signal loops back through a
//! frequency-selective self-interference channel. Three mitigation schemes
//! are implemented and compared on convergence time, post-cancellation SINR
//! and bit-error rate at the relay:
//!
//! * natural isolation (no digital cancellation),
//! * time-domain cancellation from an explicit imperfect channel estimate,
//! * a recursive-least-squares canceller that identifies the loopback
//!   channel online from the observed receive signal and the known
//!   baseband transmission.
//!
//! Start with the runnable programs under `examples/` — one per capability —
//! or the `fdrelay` binary, which drives the Monte-Carlo experiments and
//! writes CSV results.

pub mod canceller;
pub mod channel;
pub mod config;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod ofdm;
pub mod relay;
pub mod seed;

pub use config::{Scheme, SimConfig};
pub use error::{Result, SimError};
pub use experiment::{run_ber_sweep, run_convergence, run_sinr_sweep, ExperimentResult};
