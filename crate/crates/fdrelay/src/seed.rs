//! Deterministic derivation of independent random streams.
//!
//! Every random draw in an experiment comes from a generator keyed by
//! (master seed, realization index, role). The derivation is a keyed mix,
//! not sequential draws from a shared generator, so results do not depend on
//! execution order or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The independent random roles inside one realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamRole {
    /// Source-to-relay channel taps.
    SourceChannel,
    /// Loopback self-interference channel taps.
    LoopbackChannel,
    /// Estimation error of the loopback channel (time-domain cancellation).
    LoopbackEstimate,
    /// Receiver thermal noise.
    ReceiverNoise,
    /// Source data bits.
    SourceData,
    /// Relay transmit data bits.
    RelayData,
    /// Transmit impairment noise.
    TransmitImpairment,
}

impl StreamRole {
    pub fn tag(&self) -> &'static str {
        match self {
            StreamRole::SourceChannel => "source-channel",
            StreamRole::LoopbackChannel => "loopback-channel",
            StreamRole::LoopbackEstimate => "loopback-estimate",
            StreamRole::ReceiverNoise => "receiver-noise",
            StreamRole::SourceData => "source-data",
            StreamRole::RelayData => "relay-data",
            StreamRole::TransmitImpairment => "transmit-impairment",
        }
    }

    pub fn all() -> [StreamRole; 7] {
        [
            StreamRole::SourceChannel,
            StreamRole::LoopbackChannel,
            StreamRole::LoopbackEstimate,
            StreamRole::ReceiverNoise,
            StreamRole::SourceData,
            StreamRole::RelayData,
            StreamRole::TransmitImpairment,
        ]
    }
}

fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xCBF2_9CE4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

/// Derived identifier of one realization, reported in CSV output.
pub fn realization_seed(master_seed: u64, realization: u64) -> u64 {
    splitmix64(splitmix64(master_seed) ^ realization)
}

/// Independent generator for (master seed, realization, role).
pub fn seed_for(master_seed: u64, realization: u64, role: StreamRole) -> ChaCha8Rng {
    let mut state = realization_seed(master_seed, realization);
    state = splitmix64(state ^ fnv1a64(role.tag().as_bytes()));
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
