//! A complete OFDM link: 16-QAM mapping, cyclic-prefix modulation, a
//! frequency-selective MIMO channel, zero-forcing detection and demapping —
//! first noiseless (exact recovery), then with receiver noise.
//!
//! ```sh
//! cargo run --release --example ofdm_link
//! ```

use fdrelay::channel::{awgn, complex_gaussian, FirMimoChannel, SignalHistory, C64};
use fdrelay::metrics::ber;
use fdrelay::ofdm::{qam16_demap, qam16_map, zf_detect, OfdmModulator};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N_SUB: usize = 64;
const N_CP: usize = 4;
const N_STREAMS: usize = 2;
const N_RX: usize = 3;

fn run_link(noise_var: f64, rng: &mut ChaCha8Rng) -> f64 {
    let modulator = OfdmModulator::new(N_SUB, N_CP).unwrap();
    let channel = FirMimoChannel::rayleigh(N_RX, N_STREAMS, N_CP, 1.0, rng).unwrap();

    // Map independent bit streams onto the subcarrier grids.
    let amplitude = (1.0 / N_STREAMS as f64).sqrt();
    let bits: Vec<u8> = (0..N_STREAMS * N_SUB * 4).map(|_| rng.gen_range(0..2u8)).collect();
    let grids: Vec<Vec<C64>> = bits
        .chunks(N_SUB * 4)
        .map(|b| qam16_map(b).unwrap().into_iter().map(|s| s * amplitude).collect())
        .collect();
    let time: Vec<Vec<C64>> = grids.iter().map(|g| modulator.modulate(g).unwrap()).collect();

    // Stream through the channel sample by sample and add noise.
    let mut history = SignalHistory::new(N_STREAMS, channel.order() + 1);
    let mut rx: Vec<Vec<C64>> = vec![Vec::new(); N_RX];
    for t in 0..modulator.symbol_len() {
        history.push(&DVector::from_fn(N_STREAMS, |s, _| time[s][t]));
        let mut y = channel.apply(&history).unwrap();
        if noise_var > 0.0 {
            y += awgn(N_RX, noise_var, rng);
        }
        for (a, row) in rx.iter_mut().enumerate() {
            row.push(y[a]);
        }
    }

    // Demodulate per antenna, equalize per subcarrier, demap per stream.
    let demod: Vec<Vec<C64>> = rx.iter().map(|r| modulator.demodulate(r).unwrap()).collect();
    let received: Vec<DVector<C64>> = (0..N_SUB)
        .map(|m| DVector::from_fn(N_RX, |a, _| demod[a][m]))
        .collect();
    let detected = zf_detect(&received, &channel.frequency_response(N_SUB)).unwrap();

    let mut recovered = Vec::with_capacity(bits.len());
    for s in 0..N_STREAMS {
        let symbols: Vec<C64> =
            detected.estimates.iter().map(|e| e[s] / amplitude).collect();
        recovered.extend(qam16_demap(&symbols));
    }
    ber(&bits, &recovered).unwrap()
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);

    let clean = run_link(0.0, &mut rng);
    println!("noiseless link: BER = {clean} (exact recovery)");
    assert_eq!(clean, 0.0);

    for noise_db in [-20.0, -15.0, -10.0f64] {
        let mut errors = 0.0;
        let frames = 200;
        for _ in 0..frames {
            errors += run_link(10f64.powf(noise_db / 10.0), &mut rng);
        }
        println!("noise {noise_db:>5} dB: BER = {:.2e}", errors / frames as f64);
    }

    // Unitary transforms keep powers identical in both domains.
    let modulator = OfdmModulator::new(N_SUB, N_CP).unwrap();
    let grid: Vec<C64> = (0..N_SUB).map(|_| complex_gaussian(1.0, &mut rng)).collect();
    let time = modulator.modulate(&grid).unwrap();
    let eg: f64 = grid.iter().map(|v| v.norm_sqr()).sum();
    let et: f64 = time[N_CP..].iter().map(|v| v.norm_sqr()).sum();
    println!("grid energy {eg:.6} = body energy {et:.6}");
}
