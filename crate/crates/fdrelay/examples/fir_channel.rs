//! FIR MIMO channel basics: tap filtering, Rayleigh draws, imperfect
//! estimates and the per-subcarrier frequency response.
//!
//! ```sh
//! cargo run --release --example fir_channel
//! ```

use fdrelay::channel::{complex_gaussian, FirMimoChannel, SignalHistory};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    // A 3x2 channel with two taps (order 1), per-entry unit variance.
    let channel = FirMimoChannel::rayleigh(3, 2, 1, 1.0, &mut rng).unwrap();
    println!(
        "channel: {}x{}, {} taps, total tap power {:.3}",
        channel.rows(),
        channel.cols(),
        channel.order() + 1,
        channel.frobenius_sq()
    );

    // Filter a short random sequence sample by sample.
    let mut history = SignalHistory::new(2, channel.order() + 1);
    println!("filtering a 5-sample burst:");
    for n in 0..5 {
        let x = DVector::from_fn(2, |_, _| complex_gaussian(1.0, &mut rng));
        history.push(&x);
        let y = channel.apply(&history).unwrap();
        println!("  n={n}: |x| = {:.3}, |y| = {:.3}", x.norm(), y.norm());
    }

    // An imperfect estimate: true taps = estimate + error.
    let estimate = channel.perturbed(1e-2, &mut rng).unwrap();
    let err: f64 = channel
        .taps()
        .iter()
        .zip(estimate.taps())
        .map(|(t, e)| (t - e).norm_squared())
        .sum();
    println!(
        "estimate with -20 dB error: measured error power per entry {:.2e}",
        err / 12.0
    );

    // The exact response an OFDM receiver sees on each subcarrier.
    let response = channel.frequency_response(8);
    println!("frequency response magnitude (first output, first input):");
    for (m, h) in response.iter().enumerate() {
        println!("  bin {m}: {:.3}", h[(0, 0)].norm());
    }

    // Empirical check of the requested tap variance.
    let mut power = 0.0;
    let draws = 2000;
    for _ in 0..draws {
        power += FirMimoChannel::rayleigh(3, 3, 1, 0.25, &mut rng).unwrap().frobenius_sq();
    }
    println!(
        "mean per-entry power over {draws} draws at variance 0.25: {:.4}",
        power / (draws as f64 * 18.0)
    );
}
