//! Online identification of an unknown loopback channel with the
//! recursive-least-squares canceller: error-metric milestones, agreement
//! with the dense batch solution, and the no-inversion update at work.
//!
//! ```sh
//! cargo run --release --example rls_identification
//! ```

use fdrelay::canceller::{batch_solve, fill_regressor, stack_channel, RlsState};
use fdrelay::channel::{complex_gaussian, FirMimoChannel, SignalHistory};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (m_r, m_t, order) = (3, 3, 1);

    // The unknown channel the filter has to find (0 dB loopback power).
    let unknown = FirMimoChannel::rayleigh(m_r, m_t, order, 1.0, &mut rng).unwrap();
    let truth = stack_channel(&unknown);

    let mut state = RlsState::new(m_r, m_t, order, 1.0, 1.0).unwrap();
    let mut history = SignalHistory::new(m_t, order + 1);
    let mut t_bar = DVector::zeros(state.dim());

    let mut regressors = Vec::new();
    let mut observations = Vec::new();

    println!("identifying a {m_r}x{m_t} two-tap channel from noisy observations:");
    let noise_var = 0.1;
    for n in 1..=3000usize {
        // Known probe signal, unit total power across antennas.
        history.push(&DVector::from_fn(m_t, |_, _| {
            complex_gaussian(1.0 / m_t as f64, &mut rng)
        }));
        fill_regressor(&history, order, &mut t_bar);

        // Observation: channel output plus noise the filter cannot predict.
        let mut q = unknown.apply(&history).unwrap();
        for v in q.iter_mut() {
            *v += complex_gaussian(noise_var, &mut rng);
        }

        regressors.push(t_bar.clone());
        observations.push(q.clone());
        state.step(&t_bar, &q).unwrap();

        if matches!(n, 10 | 30 | 100 | 300 | 1000 | 3000) {
            let em = state.error_metric_db(&truth).unwrap();
            println!("  n = {n:>4}: error metric {em:>7.2} dB");
        }
    }

    // The recursion reproduces the ridge-regularized batch solve exactly.
    let batch = batch_solve(&regressors, &observations, 1.0, 1.0).unwrap();
    let rel = (state.coefficients() - &batch).norm() / batch.norm();
    println!("recursive vs batch least squares: relative error {rel:.2e}");

    // The recovered taps are the unknown channel.
    let estimate = state.estimated_channel();
    for (k, (e, t)) in estimate.taps().iter().zip(unknown.taps()).enumerate() {
        println!("  tap {k}: |error| / |tap| = {:.2e}", (e - t).norm() / t.norm());
    }
}
