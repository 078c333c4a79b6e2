//! Self-interference cancellation.
//!
//! Three schemes act on the relay receive signal q(n) through an additive
//! FIR correction, e(n) = q(n) + Σ_l A[l] t̃(n−l):
//!
//! * natural isolation — no filtering, A = 0;
//! * time-domain cancellation — A(z) = −H̃(z) built from an explicit
//!   (imperfect) estimate of the loopback channel;
//! * recursive least squares — A is the negated online estimate of the
//!   loopback channel, identified from the observed pairs (q, t̃) alone.
//!
//! The RLS update is the three-step rule: gain from the inverse correlation
//! matrix (rank-one updated through the matrix-inversion lemma, so no inverse
//! is ever formed), coefficient correction by the a-priori error, and the
//! O(d²) inverse-correlation update. With unit forgetting factor and unit
//! step size the recursion reproduces the ridge-regularized batch
//! least-squares solution exactly at every iteration, which is what the
//! [`batch_solve`] oracle checks.

use nalgebra::{DMatrix, DVector};

use crate::channel::{FirMimoChannel, SignalHistory, C64};
use crate::error::{Result, SimError};

/// Reporting floor for the error metric when the estimate matches exactly.
pub const EM_FLOOR_DB: f64 = -300.0;

const DIVERGENCE_COEFF_LIMIT_SQ: f64 = 1e12; // |entry| > 1e6
const DIVERGENCE_TRACE_LIMIT: f64 = 1e12;

/// Tap-concatenated, conjugate-transposed filter parameters: block row l of
/// the (L+1)·M_T × M_R matrix holds taps[l]ᴴ, so the filter output is
/// Σ_l A[l] t̃(n−l) = A_⋆ᴴ t̄(n).
pub fn stack_channel(ch: &FirMimoChannel) -> DMatrix<C64> {
    let (m_r, m_t) = (ch.rows(), ch.cols());
    let mut stacked = DMatrix::zeros((ch.order() + 1) * m_t, m_r);
    for (l, tap) in ch.taps().iter().enumerate() {
        stacked.view_mut((l * m_t, 0), (m_t, m_r)).copy_from(&tap.adjoint());
    }
    stacked
}

/// Inverse of [`stack_channel`]: recovers the tap matrices from the stacked
/// parameter matrix.
pub fn unstack_coefficients(a_star: &DMatrix<C64>, m_r: usize, m_t: usize) -> Result<FirMimoChannel> {
    if a_star.ncols() != m_r || a_star.nrows() == 0 || m_t == 0 || a_star.nrows() % m_t != 0 {
        return Err(SimError::Config(format!(
            "stacked coefficients of shape {}x{} do not fit {} outputs x {} inputs",
            a_star.nrows(),
            a_star.ncols(),
            m_r,
            m_t
        )));
    }
    let taps = (0..a_star.nrows() / m_t)
        .map(|l| a_star.view((l * m_t, 0), (m_t, m_r)).adjoint())
        .collect();
    FirMimoChannel::new(taps)
}

/// Writes the stacked regressor t̄(n) = vec{[t̃(n),…,t̃(n−L)]} into `out`,
/// tap-major (all antennas of lag 0, then lag 1, …). Samples beyond the
/// history fill are zero.
pub fn fill_regressor(history: &SignalHistory, order: usize, out: &mut DVector<C64>) {
    let m_t = history.dim();
    debug_assert_eq!(out.len(), (order + 1) * m_t);
    for l in 0..=order {
        match history.get(l) {
            Some(x) => out.rows_mut(l * m_t, m_t).copy_from(x),
            None => out.rows_mut(l * m_t, m_t).fill(C64::new(0.0, 0.0)),
        }
    }
}

/// Allocating convenience wrapper around [`fill_regressor`].
pub fn stacked_regressor(history: &SignalHistory, order: usize) -> DVector<C64> {
    let mut out = DVector::zeros((order + 1) * history.dim());
    fill_regressor(history, order, &mut out);
    out
}

/// Normalized coefficient error in dB: 10·log10(‖Â − H_⋆‖²_F / ‖H_⋆‖²_F),
/// floored at [`EM_FLOOR_DB`] for exact matches.
pub fn error_metric_db(a_star: &DMatrix<C64>, h_star: &DMatrix<C64>) -> Result<f64> {
    if a_star.shape() != h_star.shape() {
        return Err(SimError::Config(format!(
            "coefficient shape {:?} does not match reference {:?}",
            a_star.shape(),
            h_star.shape()
        )));
    }
    let denom = h_star.norm_squared();
    if denom == 0.0 {
        return Err(SimError::UndefinedMetric);
    }
    let ratio = (a_star - h_star).norm_squared() / denom;
    if ratio <= 0.0 {
        return Ok(EM_FLOOR_DB);
    }
    Ok((10.0 * ratio.log10()).max(EM_FLOOR_DB))
}

/// The additive canceller filter A(z) of the relay: e(n) = q(n) + A(z)t̃(n).
#[derive(Debug, Clone)]
pub struct CancellerFilter {
    filter: FirMimoChannel,
}

impl CancellerFilter {
    /// Natural isolation: no filtering, A = 0.
    pub fn ni(m_r: usize, m_t: usize, order: usize) -> Self {
        Self { filter: FirMimoChannel::zero(m_r, m_t, order) }
    }

    /// Time-domain cancellation from an explicit channel estimate:
    /// A(z) = −H̃(z), with the filter order matching the estimate.
    pub fn tdc(estimate: &FirMimoChannel) -> Self {
        Self { filter: estimate.negated() }
    }

    pub fn from_filter(filter: FirMimoChannel) -> Self {
        Self { filter }
    }

    pub fn filter(&self) -> &FirMimoChannel {
        &self.filter
    }

    /// Cancellation signal z(n) = A(z)t̃(n).
    pub fn correction(&self, t_history: &SignalHistory) -> Result<DVector<C64>> {
        self.filter.apply(t_history)
    }

    /// e(n) = q(n) + A(z)t̃(n).
    pub fn cancel(&self, t_history: &SignalHistory, q: &DVector<C64>) -> Result<DVector<C64>> {
        if q.len() != self.filter.rows() {
            return Err(SimError::Config(format!(
                "received vector of dimension {}, filter produces {}",
                q.len(),
                self.filter.rows()
            )));
        }
        Ok(q + self.correction(t_history)?)
    }
}

/// Recursive-least-squares canceller state.
///
/// `a_star` is the stacked coefficient estimate of the loopback channel
/// (converging to [`stack_channel`] of the true channel); `p_bar` is the
/// inverse of the ridge-seeded, exponentially weighted regressor correlation
/// matrix. Initial state: Â_⋆ = 0, P̄ = I. Single-owner mutable value; one
/// instance per simulated relay.
#[derive(Debug, Clone)]
pub struct RlsState {
    a_star: DMatrix<C64>,
    p_bar: DMatrix<C64>,
    lambda: f64,
    mu: f64,
    iteration: u64,
    m_r: usize,
    m_t: usize,
    order: usize,
    // scratch buffers for the per-sample update
    pt: DVector<C64>,
    gain: DVector<C64>,
    innovation: DVector<C64>,
}

impl RlsState {
    pub fn new(m_r: usize, m_t: usize, order: usize, lambda: f64, mu: f64) -> Result<Self> {
        if m_r < 1 || m_t < 1 {
            return Err(SimError::Config("filter dimensions must be at least 1".into()));
        }
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(SimError::Config(format!(
                "forgetting factor must lie in (0, 1], got {lambda}"
            )));
        }
        if !(mu > 0.0) {
            return Err(SimError::Config(format!("step size must be positive, got {mu}")));
        }
        let d = (order + 1) * m_t;
        Ok(Self {
            a_star: DMatrix::zeros(d, m_r),
            p_bar: DMatrix::identity(d, d),
            lambda,
            mu,
            iteration: 0,
            m_r,
            m_t,
            order,
            pt: DVector::zeros(d),
            gain: DVector::zeros(d),
            innovation: DVector::zeros(m_r),
        })
    }

    pub fn dim(&self) -> usize {
        (self.order + 1) * self.m_t
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Stacked coefficient estimate Â_⋆ (dim × M_R).
    pub fn coefficients(&self) -> &DMatrix<C64> {
        &self.a_star
    }

    /// Inverse correlation estimate P̄ (dim × dim, Hermitian).
    pub fn p_bar(&self) -> &DMatrix<C64> {
        &self.p_bar
    }

    /// The filter's current estimate of the loopback channel taps.
    pub fn estimated_channel(&self) -> FirMimoChannel {
        unstack_coefficients(&self.a_star, self.m_r, self.m_t)
            .expect("state dimensions are consistent by construction")
    }

    /// The additive canceller A(z) = −Â(z) realized by the current estimate.
    pub fn canceller(&self) -> CancellerFilter {
        CancellerFilter::from_filter(self.estimated_channel().negated())
    }

    /// Residual error in dB against a stacked reference channel.
    pub fn error_metric_db(&self, h_star: &DMatrix<C64>) -> Result<f64> {
        error_metric_db(&self.a_star, h_star)
    }

    /// One adaptation step on the regressor t̄(n) (built from the known
    /// baseband signal, never the impaired one) and the observed q(n).
    /// Writes the a-priori error e(n) = q(n) − Â_⋆ᴴt̄(n) — the relay's
    /// post-cancellation signal — into `residual`, then updates the state:
    ///
    ///   k(n)   = P̄ t̄ / (λ + t̄ᴴ P̄ t̄)
    ///   Â_⋆,n  = Â_⋆,n−1 + μ k(n) e(n)ᴴ
    ///   P̄(n+1) = (P̄ − k t̄ᴴP̄) / λ
    ///
    /// Cost is O(dim²); no matrix inversion. P̄ is re-symmetrized every step.
    pub fn step_into(
        &mut self,
        t_bar: &DVector<C64>,
        q: &DVector<C64>,
        residual: &mut DVector<C64>,
    ) -> Result<()> {
        let d = self.dim();
        if t_bar.len() != d || q.len() != self.m_r || residual.len() != self.m_r {
            return Err(SimError::Config(format!(
                "rls step expects regressor {} and observation {}, got {} and {}",
                d,
                self.m_r,
                t_bar.len(),
                q.len()
            )));
        }
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);

        self.pt.gemv(one, &self.p_bar, t_bar, zero);
        let denom = self.lambda + t_bar.dotc(&self.pt).re;
        if !denom.is_finite() || denom <= 0.0 {
            return Err(SimError::Divergence { iteration: self.iteration + 1 });
        }
        self.gain.copy_from(&self.pt);
        self.gain.unscale_mut(denom);

        // a-priori error against the not-yet-updated coefficients
        for j in 0..self.m_r {
            self.innovation[j] = q[j] - self.a_star.column(j).dotc(t_bar);
        }
        residual.copy_from(&self.innovation);

        self.a_star.gerc(C64::new(self.mu, 0.0), &self.gain, &self.innovation, one);

        // t̄ᴴP̄ = (P̄t̄)ᴴ while P̄ is Hermitian
        self.p_bar.gerc(-one, &self.gain, &self.pt, one);
        self.p_bar.unscale_mut(self.lambda);
        self.symmetrize();

        self.iteration += 1;
        self.check_health()
    }

    /// Allocating wrapper around [`step_into`](Self::step_into).
    pub fn step(&mut self, t_bar: &DVector<C64>, q: &DVector<C64>) -> Result<DVector<C64>> {
        let mut residual = DVector::zeros(self.m_r);
        self.step_into(t_bar, q, &mut residual)?;
        Ok(residual)
    }

    /// Rank-one recursions accumulate asymmetry in floating point; fold the
    /// matrix back onto its Hermitian part after every update.
    fn symmetrize(&mut self) {
        let d = self.dim();
        for i in 0..d {
            let diag = self.p_bar[(i, i)];
            self.p_bar[(i, i)] = C64::new(diag.re, 0.0);
            for j in (i + 1)..d {
                let m = (self.p_bar[(i, j)] + self.p_bar[(j, i)].conj()) * 0.5;
                self.p_bar[(i, j)] = m;
                self.p_bar[(j, i)] = m.conj();
            }
        }
    }

    fn check_health(&self) -> Result<()> {
        let diverged = self
            .a_star
            .iter()
            .any(|v| !v.re.is_finite() || !v.im.is_finite() || v.norm_sqr() > DIVERGENCE_COEFF_LIMIT_SQ);
        let trace: f64 = (0..self.dim()).map(|i| self.p_bar[(i, i)].re).sum();
        if diverged || !trace.is_finite() || trace > DIVERGENCE_TRACE_LIMIT {
            return Err(SimError::Divergence { iteration: self.iteration });
        }
        Ok(())
    }
}

/// Dense exponentially weighted least-squares solve, used as the independent
/// reference for the recursion:
///
///   Â = (ridge·λⁿ·I + Σ_k λ^{n−k} t̄(k)t̄ᴴ(k))⁻¹ · Σ_k λ^{n−k} t̄(k)qᴴ(k)
///
/// `ridge = 1` reproduces the recursion's identity-seeded fixed point;
/// `ridge = 0` is the plain weighted least-squares estimator.
pub fn batch_solve(
    regressors: &[DVector<C64>],
    observations: &[DVector<C64>],
    lambda: f64,
    ridge: f64,
) -> Result<DMatrix<C64>> {
    if regressors.len() != observations.len() || regressors.is_empty() {
        return Err(SimError::Input(format!(
            "{} regressors for {} observations",
            regressors.len(),
            observations.len()
        )));
    }
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(SimError::Config(format!(
            "forgetting factor must lie in (0, 1], got {lambda}"
        )));
    }
    let d = regressors[0].len();
    let m_r = observations[0].len();
    let n = regressors.len();

    let mut corr = DMatrix::<C64>::identity(d, d) * C64::new(ridge * lambda.powi(n as i32), 0.0);
    let mut cross = DMatrix::<C64>::zeros(d, m_r);
    let one = C64::new(1.0, 0.0);
    for (k, (t, q)) in regressors.iter().zip(observations).enumerate() {
        let age = (n - 1 - k) as i32;
        let w = C64::new(lambda.powi(age), 0.0);
        corr.gerc(w, t, t, one);
        cross.gerc(w, t, q, one);
    }
    corr.lu().solve(&cross).ok_or(SimError::RankDeficient)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::complex_gaussian;
    use nalgebra::dmatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_channel(m_r: usize, m_t: usize, order: usize, var: f64, seed: u64) -> FirMimoChannel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FirMimoChannel::rayleigh(m_r, m_t, order, var, &mut rng).unwrap()
    }

    fn random_vec(dim: usize, var: f64, rng: &mut ChaCha8Rng) -> DVector<C64> {
        DVector::from_fn(dim, |_, _| complex_gaussian(var, rng))
    }

    #[test]
    fn stacking_round_trips() {
        let ch = random_channel(3, 2, 2, 1.0, 1);
        let stacked = stack_channel(&ch);
        assert_eq!(stacked.shape(), (6, 3));
        let back = unstack_coefficients(&stacked, 3, 2).unwrap();
        assert_eq!(ch, back);
    }

    #[test]
    fn ni_filter_adds_nothing() {
        let filt = CancellerFilter::ni(3, 3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut hist = SignalHistory::new(3, 2);
        hist.push(&random_vec(3, 1.0, &mut rng));
        let q = random_vec(3, 1.0, &mut rng);
        assert!(filt.correction(&hist).unwrap().norm() == 0.0);
        assert_eq!(filt.cancel(&hist, &q).unwrap(), q);
    }

    #[test]
    fn ni_has_zero_db_error_metric() {
        let ch = random_channel(3, 3, 1, 1.0, 3);
        let zero = DMatrix::zeros(6, 3);
        let em = error_metric_db(&zero, &stack_channel(&ch)).unwrap();
        assert!(em.abs() < 1e-12);
    }

    #[test]
    fn perfect_tdc_cancels_exactly() {
        let ch = random_channel(3, 3, 1, 1.0, 4);
        let filt = CancellerFilter::tdc(&ch);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut hist = SignalHistory::new(3, 2);
        for _ in 0..10 {
            hist.push(&random_vec(3, 1.0, &mut rng));
            let f = ch.apply(&hist).unwrap(); // q with no source/noise/impairment
            let e = filt.cancel(&hist, &f).unwrap();
            assert!(e.norm() <= 1e-14 * f.norm().max(1.0));
        }
    }

    #[test]
    fn zero_estimate_tdc_degenerates_to_ni() {
        let filt = CancellerFilter::tdc(&FirMimoChannel::zero(3, 3, 1));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut hist = SignalHistory::new(3, 2);
        hist.push(&random_vec(3, 1.0, &mut rng));
        let q = random_vec(3, 1.0, &mut rng);
        assert_eq!(filt.cancel(&hist, &q).unwrap(), q);
    }

    #[test]
    fn tdc_residual_power_matches_estimation_error_budget() {
        // With delta = 0 the residual is the estimation-error channel driven
        // by t~: per-antenna power alpha * sigma2_li * E{t~^H t~} * (L+1).
        // Averaged over many estimate draws to tame the chi-square spread.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (m_r, m_t, order) = (3, 3, 1);
        let (sigma2_li, alpha) = (1.0, 1e-2);
        let expected = alpha * sigma2_li * 1.0 * (order as f64 + 1.0);

        let mut sum = 0.0;
        let mut count = 0usize;
        for _ in 0..200 {
            let ch = FirMimoChannel::rayleigh(m_r, m_t, order, sigma2_li, &mut rng).unwrap();
            let est = ch.perturbed(alpha * sigma2_li, &mut rng).unwrap();
            let filt = CancellerFilter::tdc(&est);
            let mut hist = SignalHistory::new(m_t, order + 1);
            for _ in 0..5000 {
                hist.push(&random_vec(m_t, 1.0 / m_t as f64, &mut rng));
                let f = ch.apply(&hist).unwrap();
                let e = filt.cancel(&hist, &f).unwrap();
                sum += e.norm_squared();
                count += 1;
            }
        }
        let measured = sum / (count * m_r) as f64;
        assert!(
            (measured - expected).abs() <= 0.05 * expected,
            "residual {measured} vs {expected}"
        );
    }

    #[test]
    fn scalar_cancel_hand_value() {
        // A[0] = -1, t~(n) = 2, q(n) = 5 -> e(n) = 3.
        let filt = CancellerFilter::from_filter(
            FirMimoChannel::new(vec![dmatrix![C64::new(-1.0, 0.0)]]).unwrap(),
        );
        let mut hist = SignalHistory::new(1, 1);
        hist.push(&DVector::from_element(1, C64::new(2.0, 0.0)));
        let e = filt.cancel(&hist, &DVector::from_element(1, C64::new(5.0, 0.0))).unwrap();
        assert_eq!(e[0], C64::new(3.0, 0.0));
    }

    #[test]
    fn init_state_is_zero_coefficients_identity_p() {
        let st = RlsState::new(3, 3, 1, 1.0, 1.0).unwrap();
        assert_eq!(st.iteration(), 0);
        assert!(st.coefficients().norm_squared() == 0.0);
        assert_eq!(st.p_bar(), &DMatrix::identity(6, 6));
        // EM against any nonzero channel is 0 dB from init.
        let ch = random_channel(3, 3, 1, 1.0, 8);
        assert!(st.error_metric_db(&stack_channel(&ch)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(RlsState::new(3, 3, 1, 0.0, 1.0).is_err());
        assert!(RlsState::new(3, 3, 1, 1.2, 1.0).is_err());
        assert!(RlsState::new(3, 3, 1, 1.0, 0.0).is_err());
    }

    #[test]
    fn first_step_gain_reduces_to_normalized_regressor() {
        // From init, k(1) = t_bar / (lambda + ||t_bar||^2); with mu = 1 the
        // updated coefficients are k(1) q(1)^H.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut st = RlsState::new(2, 2, 0, 0.9, 1.0).unwrap();
        let t_bar = random_vec(2, 1.0, &mut rng);
        let q = random_vec(2, 1.0, &mut rng);
        st.step(&t_bar, &q).unwrap();
        let k = &t_bar / C64::new(0.9 + t_bar.norm_squared(), 0.0);
        let expect = &k * q.adjoint();
        assert!((st.coefficients() - &expect).norm() <= 1e-12);
    }

    #[test]
    fn scalar_step_hand_computed() {
        // M_R = M_T = 1, L_A = 0, lambda = mu = 1; t~(1) = 1, q(1) = 2:
        // k = 1/2, A = 1, P = 1/2.
        let mut st = RlsState::new(1, 1, 0, 1.0, 1.0).unwrap();
        let t = DVector::from_element(1, C64::new(1.0, 0.0));
        let q = DVector::from_element(1, C64::new(2.0, 0.0));
        let e = st.step(&t, &q).unwrap();
        assert_eq!(e[0], C64::new(2.0, 0.0)); // a-priori error from zero init
        assert!((st.coefficients()[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((st.p_bar()[(0, 0)] - C64::new(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn zero_observations_keep_coefficients_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut st = RlsState::new(3, 3, 1, 1.0, 1.0).unwrap();
        let q = DVector::zeros(3);
        let p_start_trace: f64 = (0..6).map(|i| st.p_bar()[(i, i)].re).sum();
        for _ in 0..50 {
            let t_bar = random_vec(6, 1.0, &mut rng);
            st.step(&t_bar, &q).unwrap();
        }
        assert!(st.coefficients().norm_squared() == 0.0);
        let p_end_trace: f64 = (0..6).map(|i| st.p_bar()[(i, i)].re).sum();
        assert!(p_end_trace < p_start_trace, "P should still contract");
    }

    #[test]
    fn recursion_matches_regularized_batch_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut st = RlsState::new(3, 3, 1, 1.0, 1.0).unwrap();
        let mut regs = Vec::new();
        let mut obs = Vec::new();
        for n in 1..=120usize {
            let t_bar = random_vec(6, 1.0, &mut rng);
            let q = random_vec(3, 1.0, &mut rng);
            st.step(&t_bar, &q).unwrap();
            regs.push(t_bar);
            obs.push(q);
            if n % 20 == 0 {
                let batch = batch_solve(&regs, &obs, 1.0, 1.0).unwrap();
                let rel = (st.coefficients() - &batch).norm() / batch.norm();
                assert!(rel <= 1e-8, "n = {n}: relative error {rel}");
            }
        }
    }

    #[test]
    fn p_bar_matches_direct_inverse_every_step() {
        // Forward-accumulate the ridge-seeded weighted correlation matrix and
        // invert it directly; the recursion must agree to 1e-8 relative.
        for &lambda in &[1.0, 0.95] {
            let mut rng = ChaCha8Rng::seed_from_u64(12);
            let mut st = RlsState::new(3, 3, 1, lambda, 1.0).unwrap();
            let mut corr = DMatrix::<C64>::identity(6, 6);
            let q = DVector::zeros(3);
            for n in 1..=300usize {
                let t_bar = random_vec(6, 1.0, &mut rng);
                st.step(&t_bar, &q).unwrap();
                corr *= C64::new(lambda, 0.0);
                corr.gerc(C64::new(1.0, 0.0), &t_bar, &t_bar, C64::new(1.0, 0.0));
                let direct = corr.clone().try_inverse().unwrap();
                let rel = (st.p_bar() - &direct).norm() / direct.norm();
                assert!(rel <= 1e-8, "lambda {lambda}, n {n}: relative error {rel}");
            }
        }
    }

    #[test]
    fn p_bar_stays_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut st = RlsState::new(3, 3, 1, 0.98, 1.0).unwrap();
        for _ in 0..500 {
            let t_bar = random_vec(6, 1.0, &mut rng);
            let q = random_vec(3, 1.0, &mut rng);
            st.step(&t_bar, &q).unwrap();
        }
        let p = st.p_bar();
        let asym = (p - p.adjoint()).norm() / p.norm();
        assert!(asym <= 1e-10, "asymmetry {asym}");
    }

    #[test]
    fn noise_free_identification_with_strong_excitation() {
        // q = H(z) t~ with no source, noise or impairment. With persistent
        // excitation strong enough to swamp the identity seed of P̄ the
        // estimate reaches EM <= -100 dB within 10·(L_A+1)·M_T = 60 steps.
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let ch = random_channel(3, 3, 1, 1.0, 15);
        let h_star = stack_channel(&ch);
        let mut st = RlsState::new(3, 3, 1, 1.0, 1.0).unwrap();
        let mut hist = SignalHistory::new(3, 2);
        let mut t_bar = DVector::zeros(6);
        let mut em = 0.0;
        for _ in 0..60 {
            hist.push(&random_vec(3, 1e4, &mut rng));
            fill_regressor(&hist, 1, &mut t_bar);
            let q = ch.apply(&hist).unwrap();
            st.step(&t_bar, &q).unwrap();
            em = st.error_metric_db(&h_star).unwrap();
        }
        assert!(em <= -100.0, "EM after 60 noise-free steps: {em} dB");
    }

    #[test]
    fn error_metric_values() {
        let ch = random_channel(3, 3, 1, 1.0, 16);
        let h = stack_channel(&ch);
        // Exact match floors at -300 dB.
        assert_eq!(error_metric_db(&h, &h).unwrap(), EM_FLOOR_DB);
        // Zero estimate: 0 dB.
        assert!(error_metric_db(&DMatrix::zeros(6, 3), &h).unwrap().abs() < 1e-12);
        // (1 + eps) scaling: 20 log10(eps).
        let scaled = &h * C64::new(1.01, 0.0);
        let em = error_metric_db(&scaled, &h).unwrap();
        assert!((em - (-40.0)).abs() < 1e-9, "em {em}");
        // Zero reference is undefined.
        assert!(matches!(
            error_metric_db(&h, &DMatrix::zeros(6, 3)),
            Err(SimError::UndefinedMetric)
        ));
    }

    #[test]
    fn batch_solver_recovers_channel_noise_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let ch = random_channel(3, 3, 1, 1.0, 18);
        let h_star = stack_channel(&ch);
        let mut hist = SignalHistory::new(3, 2);
        let mut regs = Vec::new();
        let mut obs = Vec::new();
        for _ in 0..200 {
            hist.push(&random_vec(3, 1.0 / 3.0, &mut rng));
            regs.push(stacked_regressor(&hist, 1));
            obs.push(ch.apply(&hist).unwrap());
        }
        let est = batch_solve(&regs, &obs, 1.0, 0.0).unwrap();
        let rel = (&est - &h_star).norm() / h_star.norm();
        assert!(rel <= 1e-9, "relative error {rel}");
    }

    #[test]
    fn batch_solver_applies_exponential_age_weights() {
        // Two scalar samples with lambda = 0.9: the older one carries weight
        // 0.9 in the normal equations. Compare against the hand-built solve.
        let t1 = C64::new(1.0, 0.0);
        let q1 = C64::new(2.0, 0.0);
        let t2 = C64::new(3.0, 0.0);
        let q2 = C64::new(-1.0, 0.0);
        let lambda = 0.9;
        let est = batch_solve(
            &[DVector::from_element(1, t1), DVector::from_element(1, t2)],
            &[DVector::from_element(1, q1), DVector::from_element(1, q2)],
            lambda,
            0.0,
        )
        .unwrap();
        let num = lambda * (t1.conj() * q1.conj()).re + (t2.conj() * q2.conj()).re;
        let den = lambda * t1.norm_sqr() + t2.norm_sqr();
        assert!((est[(0, 0)].re - num / den).abs() < 1e-12);
    }

    #[test]
    fn batch_solver_reports_rank_deficiency() {
        // One sample cannot determine a 2-dimensional regressor without ridge.
        let reg = DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let obs = DVector::from_element(1, C64::new(1.0, 0.0));
        assert!(matches!(
            batch_solve(&[reg], &[obs], 1.0, 0.0),
            Err(SimError::RankDeficient)
        ));
    }

    #[test]
    fn non_finite_observation_reports_divergence() {
        let mut st = RlsState::new(1, 1, 0, 1.0, 1.0).unwrap();
        let t = DVector::from_element(1, C64::new(1.0, 0.0));
        let q = DVector::from_element(1, C64::new(f64::INFINITY, 0.0));
        match st.step(&t, &q) {
            Err(SimError::Divergence { iteration }) => assert_eq!(iteration, 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn rls_residual_equals_generic_cancel_with_snapshot_filter() {
        // The a-priori residual from one step equals running the additive
        // canceller built from the pre-step coefficients.
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mut st = RlsState::new(3, 3, 1, 1.0, 1.0).unwrap();
        let mut hist = SignalHistory::new(3, 2);
        let mut t_bar = DVector::zeros(6);
        for _ in 0..20 {
            hist.push(&random_vec(3, 1.0 / 3.0, &mut rng));
            fill_regressor(&hist, 1, &mut t_bar);
            let q = random_vec(3, 1.0, &mut rng);
            let snapshot = st.canceller();
            let via_cancel = snapshot.cancel(&hist, &q).unwrap();
            let via_step = st.step(&t_bar, &q).unwrap();
            assert!((via_cancel - &via_step).norm() <= 1e-12 * via_step.norm().max(1.0));
        }
    }

    #[test]
    fn training_on_q_or_f_converges_to_the_same_mean() {
        // Replacing the unobservable interference f by the observable q only
        // adds uncorrelated noise: over many realizations the mean converged
        // coefficients agree within statistical tolerance.
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let realizations = 200;
        let steps = 1500;
        let mut mean_diff = DMatrix::<C64>::zeros(6, 3);
        let mut per_real_diff_norms = Vec::with_capacity(realizations);
        for _ in 0..realizations {
            let ch = FirMimoChannel::rayleigh(3, 3, 1, 1.0, &mut rng).unwrap();
            let mut st_q = RlsState::new(3, 3, 1, 1.0, 1.0).unwrap();
            let mut st_f = RlsState::new(3, 3, 1, 1.0, 1.0).unwrap();
            let mut hist = SignalHistory::new(3, 2);
            let mut t_bar = DVector::zeros(6);
            for _ in 0..steps {
                hist.push(&random_vec(3, 1.0 / 3.0, &mut rng));
                fill_regressor(&hist, 1, &mut t_bar);
                let f = ch.apply(&hist).unwrap();
                // q adds source-plus-noise power uncorrelated with t~.
                let q = &f + random_vec(3, 0.5, &mut rng);
                st_f.step(&t_bar, &f).unwrap();
                st_q.step(&t_bar, &q).unwrap();
            }
            let diff = st_q.coefficients() - st_f.coefficients();
            per_real_diff_norms.push(diff.norm());
            mean_diff += diff;
        }
        mean_diff.unscale_mut(realizations as f64);
        // The per-realization difference is noise-driven; its mean must
        // shrink roughly with sqrt(realizations).
        let typical: f64 =
            per_real_diff_norms.iter().sum::<f64>() / per_real_diff_norms.len() as f64;
        let tolerance = 3.0 * typical / (realizations as f64).sqrt();
        assert!(
            mean_diff.norm() <= tolerance,
            "mean difference {} exceeds tolerance {}",
            mean_diff.norm(),
            tolerance
        );
    }
}
