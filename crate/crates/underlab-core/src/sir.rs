//! SIR epidemic simulation and underspecified parameter fitting.
//!
//! The rate equations are
//!
//! ```text
//! dS/dt = -beta (I/N) S,   dI/dt = beta (I/N) S - I/D,   dR/dt = I/D
//! ```
//!
//! with transmission rate `beta` and mean infectious duration `D`. Early in
//! an epidemic the infection count grows like `exp((beta - 1/D) t)`, so
//! observations truncated to that window determine only the growth rate: many
//! `(beta, D)` pairs fit equally well yet forecast wildly different peaks.
//! [`fit_sir`] minimizes squared error on observed infections by gradient
//! descent in `(log beta, log D)` (positivity by reparameterization), with
//! the gradient obtained by differentiating through the fixed-step RK4
//! integrator (tangent propagation, exact to roundoff).

use crate::exec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SirError {
    #[error("invalid SIR parameters: {0}")]
    InvalidParams(String),
    #[error("integration failed: non-finite state at step {step} (t = {time})")]
    IntegrationFailure { step: usize, time: f64 },
    #[error("need at least 3 observation points, got {0}")]
    TooFewObservations(usize),
    #[error("degenerate observations: infection series is identically zero")]
    DegenerateInput,
    #[error("divergent loss at iteration {iter} (loss = {loss:.3e}); reduce step_size")]
    StepSize { iter: usize, loss: f64 },
}

/// Epidemic parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SirParams {
    /// Transmission rate (1/time).
    pub beta: f64,
    /// Mean infectious duration D (time).
    pub dur: f64,
    /// Population size N.
    pub n_pop: f64,
}

impl SirParams {
    pub fn new(beta: f64, dur: f64, n_pop: f64) -> Result<Self, SirError> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(SirError::InvalidParams(format!("beta must be positive, got {beta}")));
        }
        if !(dur > 0.0) || !dur.is_finite() {
            return Err(SirError::InvalidParams(format!("dur must be positive, got {dur}")));
        }
        if !(n_pop > 0.0) || !n_pop.is_finite() {
            return Err(SirError::InvalidParams(format!("n_pop must be positive, got {n_pop}")));
        }
        Ok(Self { beta, dur, n_pop })
    }
}

/// Early-epidemic exponential growth rate `beta - 1/D`.
pub fn growth_rate(params: &SirParams) -> f64 {
    params.beta - 1.0 / params.dur
}

/// Initial compartment counts.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SirInit {
    pub s0: f64,
    pub i0: f64,
    pub r0: f64,
}

impl SirInit {
    /// Seed `i0` infections into an otherwise susceptible population.
    pub fn seeded(n_pop: f64, i0: f64) -> Self {
        Self { s0: n_pop - i0, i0, r0: 0.0 }
    }
}

/// S/I/R time series on a uniform grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SirTrajectory {
    pub times: Vec<f64>,
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    pub r: Vec<f64>,
}

impl SirTrajectory {
    /// Peak infection count and the grid time at which it occurs.
    pub fn peak(&self) -> (f64, f64) {
        let (k, &v) = self
            .i
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite trajectory"))
            .expect("non-empty trajectory");
        (self.times[k], v)
    }
}

fn deriv(beta: f64, dur: f64, n_pop: f64, u: [f64; 3]) -> [f64; 3] {
    let infection = beta * u[1] / n_pop * u[0];
    let recovery = u[1] / dur;
    [-infection, infection - recovery, recovery]
}

/// Simulate with classical fixed-step RK4 on the grid `{0, dt, ..., t_max}`.
///
/// RK4 preserves the linear invariant S+I+R = N exactly (up to roundoff)
/// because the stage derivatives sum to zero.
pub fn simulate_sir(
    params: &SirParams,
    init: &SirInit,
    t_max: f64,
    dt: f64,
) -> Result<SirTrajectory, SirError> {
    if !(dt > 0.0) {
        return Err(SirError::InvalidParams(format!("dt must be positive, got {dt}")));
    }
    if t_max < dt {
        return Err(SirError::InvalidParams(format!("t_max = {t_max} must be >= dt = {dt}")));
    }
    if init.i0 <= 0.0 {
        return Err(SirError::InvalidParams(format!("i0 must be positive, got {}", init.i0)));
    }
    let total = init.s0 + init.i0 + init.r0;
    if (total - params.n_pop).abs() > 1e-6 * params.n_pop {
        return Err(SirError::InvalidParams(format!(
            "initial condition sums to {total}, expected n_pop = {}",
            params.n_pop
        )));
    }

    let steps = (t_max / dt).round() as usize;
    let mut traj = SirTrajectory {
        times: Vec::with_capacity(steps + 1),
        s: Vec::with_capacity(steps + 1),
        i: Vec::with_capacity(steps + 1),
        r: Vec::with_capacity(steps + 1),
    };
    let mut u = [init.s0, init.i0, init.r0];
    let push = |traj: &mut SirTrajectory, t: f64, u: [f64; 3]| {
        traj.times.push(t);
        traj.s.push(u[0]);
        traj.i.push(u[1]);
        traj.r.push(u[2]);
    };
    push(&mut traj, 0.0, u);
    let (beta, dur, n_pop) = (params.beta, params.dur, params.n_pop);
    for step in 1..=steps {
        let k1 = deriv(beta, dur, n_pop, u);
        let k2 = deriv(beta, dur, n_pop, add_scaled(u, k1, dt / 2.0));
        let k3 = deriv(beta, dur, n_pop, add_scaled(u, k2, dt / 2.0));
        let k4 = deriv(beta, dur, n_pop, add_scaled(u, k3, dt));
        for c in 0..3 {
            u[c] += dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(SirError::IntegrationFailure { step, time: step as f64 * dt });
        }
        push(&mut traj, step as f64 * dt, u);
    }
    Ok(traj)
}

fn add_scaled(u: [f64; 3], k: [f64; 3], c: f64) -> [f64; 3] {
    [u[0] + c * k[0], u[1] + c * k[1], u[2] + c * k[2]]
}

/// Scenario constants shared by simulation and fitting (held fixed, not fitted).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SirScenario {
    pub n_pop: f64,
    pub i0: f64,
    #[serde(default)]
    pub r0: f64,
    pub dt: f64,
}

impl SirScenario {
    pub fn init(&self) -> SirInit {
        SirInit { s0: self.n_pop - self.i0 - self.r0, i0: self.i0, r0: self.r0 }
    }
}

/// Gradient-descent configuration for [`fit_sir`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SirFitConfig {
    /// Observation cutoff; observations must cover only `t <= t_obs`.
    pub t_obs: f64,
    /// Gradient-descent step on the variance-normalized loss.
    pub step_size: f64,
    pub max_iters: usize,
    /// Initial value for the infectious duration D.
    pub d0_init: f64,
    /// Initial value for beta. `None` derives it from the observed
    /// exponential growth rate: `beta0 = max(slope, 0.01) + 1/d0_init`,
    /// which starts the descent near the growth-rate ridge at its own D.
    pub beta_init: Option<f64>,
    /// Stop when the loss change per iteration falls below this.
    pub tol: f64,
}

impl SirFitConfig {
    pub fn validate(&self) -> Result<(), SirError> {
        if !(self.t_obs > 0.0) {
            return Err(SirError::InvalidParams(format!("t_obs must be positive, got {}", self.t_obs)));
        }
        if !(self.step_size > 0.0) {
            return Err(SirError::InvalidParams(format!("step_size must be positive, got {}", self.step_size)));
        }
        if self.max_iters < 1 {
            return Err(SirError::InvalidParams("max_iters must be >= 1".into()));
        }
        if !(self.d0_init > 0.0) {
            return Err(SirError::InvalidParams(format!("d0_init must be positive, got {}", self.d0_init)));
        }
        Ok(())
    }
}

/// Result of a gradient-descent fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SirFit {
    pub params: SirParams,
    /// Mean squared error on the observation window, in raw counts².
    pub final_mse: f64,
    /// `final_mse` divided by the mean squared observation.
    pub final_nmse: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Variance-normalized loss at each iteration (non-increasing for small steps).
    pub loss_trace: Vec<f64>,
}

/// Integrate infections to `t_obs` carrying tangents wrt `(log beta, log D)`.
///
/// Returns `I` on the grid and `dI/d(log beta), dI/d(log D)` per point. This
/// is the derivative of the *discretized* integrator, not of the continuous
/// flow, so it is consistent with the loss actually being minimized.
fn integrate_with_tangents(
    log_beta: f64,
    log_dur: f64,
    scenario: &SirScenario,
    t_obs: f64,
) -> Option<(Vec<f64>, Vec<[f64; 2]>)> {
    let beta = log_beta.exp();
    let dur = log_dur.exp();
    let (n_pop, dt) = (scenario.n_pop, scenario.dt);
    let init = scenario.init();
    let steps = (t_obs / dt).round() as usize;

    let mut u = [init.s0, init.i0, init.r0];
    let mut du = [[0.0f64; 2]; 3];
    let mut i_series = Vec::with_capacity(steps + 1);
    let mut di_series = Vec::with_capacity(steps + 1);
    i_series.push(u[1]);
    di_series.push([0.0, 0.0]);

    let f = |u: [f64; 3]| deriv(beta, dur, n_pop, u);
    // Tangent of the vector field: J_u f . du + d f/d(log params)
    let jvp = |u: [f64; 3], du: [[f64; 2]; 3]| -> [[f64; 2]; 3] {
        let mut out = [[0.0f64; 2]; 3];
        for p in 0..2 {
            let (s, i) = (u[0], u[1]);
            let (ds, di) = (du[0][p], du[1][p]);
            let mut d_inf = beta / n_pop * (i * ds + s * di);
            let mut d_rec = di / dur;
            if p == 0 {
                d_inf += beta * i * s / n_pop; // d/d(log beta)
            } else {
                d_rec += -i / dur; // d/d(log D)
            }
            out[0][p] = -d_inf;
            out[1][p] = d_inf - d_rec;
            out[2][p] = d_rec;
        }
        out
    };

    for _ in 0..steps {
        let k1 = f(u);
        let dk1 = jvp(u, du);
        let u2 = add_scaled(u, k1, dt / 2.0);
        let k2 = f(u2);
        let dk2 = jvp(u2, tan_add(du, dk1, dt / 2.0));
        let u3 = add_scaled(u, k2, dt / 2.0);
        let k3 = f(u3);
        let dk3 = jvp(u3, tan_add(du, dk2, dt / 2.0));
        let u4 = add_scaled(u, k3, dt);
        let k4 = f(u4);
        let dk4 = jvp(u4, tan_add(du, dk3, dt));
        for c in 0..3 {
            u[c] += dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
            for p in 0..2 {
                du[c][p] += dt / 6.0 * (dk1[c][p] + 2.0 * dk2[c][p] + 2.0 * dk3[c][p] + dk4[c][p]);
            }
        }
        if !u[1].is_finite() {
            return None;
        }
        i_series.push(u[1]);
        di_series.push(du[1]);
    }
    Some((i_series, di_series))
}

fn tan_add(du: [[f64; 2]; 3], dk: [[f64; 2]; 3], c: f64) -> [[f64; 2]; 3] {
    let mut out = [[0.0f64; 2]; 3];
    for i in 0..3 {
        for p in 0..2 {
            out[i][p] = du[i][p] + c * dk[i][p];
        }
    }
    out
}

/// Loss and gradient of the variance-normalized squared error at `(log beta, log D)`.
pub fn fit_loss_grad(
    log_beta: f64,
    log_dur: f64,
    observed: &[f64],
    scenario: &SirScenario,
    t_obs: f64,
) -> Option<(f64, [f64; 2])> {
    let (i_series, di_series) = integrate_with_tangents(log_beta, log_dur, scenario, t_obs)?;
    debug_assert_eq!(i_series.len(), observed.len());
    let m = observed.len() as f64;
    let ybar2: f64 = observed.iter().map(|y| y * y).sum::<f64>() / m;
    let mut loss = 0.0;
    let mut grad = [0.0f64; 2];
    for ((ihat, di), y) in i_series.iter().zip(&di_series).zip(observed) {
        let resid = ihat - y;
        loss += resid * resid;
        grad[0] += 2.0 * resid * di[0];
        grad[1] += 2.0 * resid * di[1];
    }
    loss /= m * ybar2;
    grad[0] /= m * ybar2;
    grad[1] /= m * ybar2;
    if loss.is_finite() {
        Some((loss, grad))
    } else {
        None
    }
}

/// Least-squares slope of `ln I` over the observation window.
fn observed_log_slope(observed: &[f64], dt: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = observed
        .iter()
        .enumerate()
        .filter(|(_, &y)| y > 0.0)
        .map(|(k, &y)| (k as f64 * dt, y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mt, ml) = pts.iter().fold((0.0, 0.0), |(a, b), (t, l)| (a + t, b + l));
    let (mt, ml) = (mt / n, ml / n);
    let (num, den) = pts
        .iter()
        .fold((0.0, 0.0), |(num, den), (t, l)| (num + (t - mt) * (l - ml), den + (t - mt) * (t - mt)));
    (den > 0.0).then(|| num / den)
}

/// Fit `(beta, D)` to observed infections by gradient descent.
///
/// `observed[k]` is the infection count at `t = k * scenario.dt`, covering
/// `[0, t_obs]`. Returns the best iterate; `converged` is false when the
/// iteration budget ran out before the loss change fell below `tol`.
pub fn fit_sir(
    observed: &[f64],
    scenario: &SirScenario,
    config: &SirFitConfig,
) -> Result<SirFit, SirError> {
    config.validate()?;
    let expected = (config.t_obs / scenario.dt).round() as usize + 1;
    if observed.len() < 3 {
        return Err(SirError::TooFewObservations(observed.len()));
    }
    if observed.len() != expected {
        return Err(SirError::InvalidParams(format!(
            "observed series has {} points but t_obs/dt implies {expected}",
            observed.len()
        )));
    }
    if observed.iter().all(|&y| y == 0.0) {
        return Err(SirError::DegenerateInput);
    }

    let mut log_dur = config.d0_init.ln();
    let beta0 = match config.beta_init {
        Some(b) => b,
        None => {
            let slope = observed_log_slope(observed, scenario.dt).ok_or(SirError::DegenerateInput)?;
            slope.max(0.01) + 1.0 / config.d0_init
        }
    };
    let mut log_beta = beta0.ln();

    let m = observed.len() as f64;
    let ybar2: f64 = observed.iter().map(|y| y * y).sum::<f64>() / m;

    let mut trace = Vec::new();
    let mut best = (f64::INFINITY, log_beta, log_dur);
    let mut prev: Option<f64> = None;
    let mut converged = false;
    let mut iters = 0;

    for iter in 0..config.max_iters {
        iters = iter + 1;
        let (loss, grad) = fit_loss_grad(log_beta, log_dur, observed, scenario, config.t_obs)
            .ok_or(SirError::StepSize { iter, loss: f64::NAN })?;
        trace.push(loss);
        if loss < best.0 {
            best = (loss, log_beta, log_dur);
        }
        // a loss exploding past any reasonable scale means the step is too big
        if loss > 1e6 * trace[0].max(1.0) {
            return Err(SirError::StepSize { iter, loss });
        }
        if let Some(p) = prev {
            if (p - loss).abs() < config.tol {
                converged = true;
                break;
            }
        }
        prev = Some(loss);
        log_beta -= config.step_size * grad[0];
        log_dur -= config.step_size * grad[1];
        if !log_beta.is_finite() || !log_dur.is_finite() {
            return Err(SirError::StepSize { iter, loss });
        }
    }

    let (loss, lb, ld) = best;
    Ok(SirFit {
        params: SirParams::new(lb.exp(), ld.exp(), scenario.n_pop)?,
        final_mse: loss * ybar2,
        final_nmse: loss,
        converged,
        iterations: iters,
        loss_trace: trace,
    })
}

/// One ensemble member: the fit and its full-horizon forecast.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub member_id: usize,
    pub d0_init: f64,
    pub fit: SirFit,
    pub forecast: SirTrajectory,
}

/// Fit once per `d0` sample and forecast each fit over `[0, t_max]`.
///
/// Members are independent and evaluated in parallel; output order follows
/// the sample order. Per-member failures are reported in place rather than
/// aborting the batch.
pub fn forecast_ensemble(
    observed: &[f64],
    scenario: &SirScenario,
    template: &SirFitConfig,
    d0_samples: &[f64],
    t_max: f64,
) -> Vec<Result<EnsembleMember, SirError>> {
    exec::map_indexed(d0_samples.len(), |idx| {
        let mut config = template.clone();
        config.d0_init = d0_samples[idx];
        let fit = fit_sir(observed, scenario, &config)?;
        let forecast = simulate_sir(&fit.params, &scenario.init(), t_max, scenario.dt)?;
        Ok(EnsembleMember { member_id: idx, d0_init: d0_samples[idx], fit, forecast })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_scenario() -> SirScenario {
        SirScenario { n_pop: 1e6, i0: 10.0, r0: 0.0, dt: 0.05 }
    }

    #[test]
    fn growth_rate_arithmetic() {
        let p = |b, d| SirParams::new(b, d, 1e6).unwrap();
        assert_abs_diff_eq!(growth_rate(&p(0.5, 2.0)), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(growth_rate(&p(0.4, 5.0)), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(growth_rate(&p(0.3, 4.0)), 0.05, epsilon = 1e-15);
    }

    #[test]
    fn zero_growth_rate_keeps_infections_flat_early() {
        let sc = small_scenario();
        let params = SirParams::new(0.5, 2.0, sc.n_pop).unwrap();
        let traj = simulate_sir(&params, &sc.init(), 5.0, sc.dt).unwrap();
        for &i in &traj.i {
            assert!((i - sc.i0).abs() <= 0.01 * sc.i0, "I drifted to {i}");
        }
    }

    #[test]
    fn beta_zero_decays_exponentially() {
        // beta = 0 decouples I: I(t) = I0 exp(-t/D). SirParams requires
        // beta > 0, so drive the integrator directly with a tiny beta of 0
        // via the raw derivative path.
        let sc = small_scenario();
        let params = SirParams { beta: 0.0, dur: 4.0, n_pop: sc.n_pop };
        let traj = simulate_sir(&params, &sc.init(), 20.0, 0.01).unwrap();
        for (t, i) in traj.times.iter().zip(&traj.i) {
            let expected = sc.i0 * (-t / 4.0).exp();
            assert!((i - expected).abs() <= 1e-9 * sc.i0, "t={t}: {i} vs {expected}");
        }
        let s0 = traj.s[0];
        assert!(traj.s.iter().all(|&s| (s - s0).abs() < 1e-9));
    }

    #[test]
    fn peak_matches_fine_step_doubling_oracle() {
        // oracle: same ODE at dt/100, accepted only if halving again moves
        // the peak by < 1e-6 relative (step-doubling error control)
        let sc = small_scenario();
        let params = SirParams::new(0.4, 5.0, sc.n_pop).unwrap();
        let coarse = simulate_sir(&params, &sc.init(), 150.0, sc.dt).unwrap();
        let fine = simulate_sir(&params, &sc.init(), 150.0, sc.dt / 100.0).unwrap();
        let finer = simulate_sir(&params, &sc.init(), 150.0, sc.dt / 200.0).unwrap();
        let (t_ref, i_ref) = fine.peak();
        let (t_ref2, i_ref2) = finer.peak();
        assert!((i_ref - i_ref2).abs() <= 1e-6 * i_ref2, "oracle not converged");
        assert!((t_ref - t_ref2).abs() <= sc.dt, "oracle peak time not converged");
        let (t_peak, i_peak) = coarse.peak();
        assert!((i_peak - i_ref).abs() <= 1e-5 * i_ref, "peak count {i_peak} vs oracle {i_ref}");
        assert!((t_peak - t_ref).abs() <= sc.dt, "peak time {t_peak} vs oracle {t_ref}");
    }

    #[test]
    fn conservation_to_1e6_relative() {
        let sc = small_scenario();
        let params = SirParams::new(0.4, 5.0, sc.n_pop).unwrap();
        let traj = simulate_sir(&params, &sc.init(), 150.0, 0.01).unwrap();
        let max_violation = traj
            .times
            .iter()
            .enumerate()
            .map(|(k, _)| (traj.s[k] + traj.i[k] + traj.r[k] - sc.n_pop).abs())
            .fold(0.0f64, f64::max);
        assert!(max_violation <= 1e-6 * sc.n_pop, "violation {max_violation}");
    }

    #[test]
    fn equal_growth_rate_pairs_are_observationally_close() {
        // underspecification witness: equal beta - 1/D keeps trajectories
        // within 2% relative L-inf while both runs have S >= 0.99 N.
        // Holds for durations within a factor ~2 of the reference (measured:
        // the gap grows with |beta_1 - beta_2| and reaches ~5% at D=1 vs D=5).
        let sc = small_scenario();
        let reference = SirParams::new(0.4, 5.0, sc.n_pop).unwrap();
        let ta = simulate_sir(&reference, &sc.init(), 150.0, sc.dt).unwrap();
        for d in [2.5, 10.0 / 3.0, 4.0, 10.0] {
            let other = SirParams::new(0.2 + 1.0 / d, d, sc.n_pop).unwrap();
            assert!((growth_rate(&other) - 0.2).abs() < 1e-12);
            let tb = simulate_sir(&other, &sc.init(), 150.0, sc.dt).unwrap();
            let mut max_rel: f64 = 0.0;
            for k in 0..ta.times.len() {
                if ta.s[k] < 0.99 * sc.n_pop || tb.s[k] < 0.99 * sc.n_pop {
                    break;
                }
                max_rel = max_rel.max((ta.i[k] - tb.i[k]).abs() / ta.i[k]);
            }
            assert!(max_rel <= 0.02, "D = {d}: relative L-inf {max_rel}");
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let sc = small_scenario();
        let truth = SirParams::new(0.4, 5.0, sc.n_pop).unwrap();
        let t_obs = 25.0;
        let traj = simulate_sir(&truth, &sc.init(), t_obs, sc.dt).unwrap();
        let obs = traj.i.clone();

        let mut rng = crate::rng::derive_rng(42, "sir.gradcheck", 0);
        use rand::Rng;
        let h = 1e-6;
        for _ in 0..10 {
            let lb = rng.gen_range(-1.5..0.3);
            let ld = rng.gen_range(0.0..3.0);
            let (_, grad) = fit_loss_grad(lb, ld, &obs, &sc, t_obs).unwrap();
            for p in 0..2 {
                let (mut lo, mut hi) = ((lb, ld), (lb, ld));
                if p == 0 {
                    lo.0 -= h;
                    hi.0 += h;
                } else {
                    lo.1 -= h;
                    hi.1 += h;
                }
                let (l_lo, _) = fit_loss_grad(lo.0, lo.1, &obs, &sc, t_obs).unwrap();
                let (l_hi, _) = fit_loss_grad(hi.0, hi.1, &obs, &sc, t_obs).unwrap();
                let fd = (l_hi - l_lo) / (2.0 * h);
                let denom = grad[p].abs().max(fd.abs()).max(1e-12);
                assert!(
                    (grad[p] - fd).abs() / denom <= 1e-4,
                    "param {p} at ({lb},{ld}): grad {} vs fd {fd}",
                    grad[p]
                );
            }
        }
    }

    #[test]
    fn loss_trace_is_monotone_for_small_steps() {
        let sc = small_scenario();
        let truth = SirParams::new(0.4, 5.0, sc.n_pop).unwrap();
        let traj = simulate_sir(&truth, &sc.init(), 25.0, sc.dt).unwrap();
        let config = SirFitConfig {
            t_obs: 25.0,
            step_size: 2e-5,
            max_iters: 400,
            d0_init: 2.0,
            beta_init: None,
            tol: 0.0,
        };
        let fit = fit_sir(&traj.i, &sc, &config).unwrap();
        for w in fit.loss_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "loss increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn zero_observations_are_degenerate() {
        let sc = small_scenario();
        let config = SirFitConfig {
            t_obs: 1.0,
            step_size: 1e-4,
            max_iters: 10,
            d0_init: 5.0,
            beta_init: None,
            tol: 1e-12,
        };
        let zeros = vec![0.0; 21];
        match fit_sir(&zeros, &sc, &config) {
            Err(SirError::DegenerateInput) => {}
            other => panic!("expected degenerate-input error, got {other:?}"),
        }
    }

    #[test]
    fn too_few_observations_rejected() {
        let sc = small_scenario();
        let config = SirFitConfig {
            t_obs: 0.1,
            step_size: 1e-4,
            max_iters: 10,
            d0_init: 5.0,
            beta_init: None,
            tol: 1e-12,
        };
        match fit_sir(&[1.0, 2.0], &sc, &config) {
            Err(SirError::TooFewObservations(2)) => {}
            other => panic!("expected too-few-observations, got {other:?}"),
        }
    }

    #[test]
    fn ensemble_is_deterministic_and_composes() {
        let sc = small_scenario();
        let truth = SirParams::new(0.4, 5.0, sc.n_pop).unwrap();
        let traj = simulate_sir(&truth, &sc.init(), 25.0, sc.dt).unwrap();
        let template = SirFitConfig {
            t_obs: 25.0,
            step_size: 1e-4,
            max_iters: 2000,
            d0_init: 5.0,
            beta_init: None,
            tol: 1e-12,
        };
        let samples = vec![3.0, 3.0, 3.0];
        let members = forecast_ensemble(&traj.i, &sc, &template, &samples, 60.0);
        let first = members[0].as_ref().unwrap();
        for m in &members[1..] {
            let m = m.as_ref().unwrap();
            assert_eq!(m.fit.params.beta.to_bits(), first.fit.params.beta.to_bits());
            assert_eq!(m.forecast.i, first.forecast.i);
        }
        // singleton ensemble equals fit + simulate composition
        let single = forecast_ensemble(&traj.i, &sc, &template, &[3.0], 60.0);
        let single = single[0].as_ref().unwrap();
        let mut config = template.clone();
        config.d0_init = 3.0;
        let direct_fit = fit_sir(&traj.i, &sc, &config).unwrap();
        let direct_traj = simulate_sir(&direct_fit.params, &sc.init(), 60.0, sc.dt).unwrap();
        assert_eq!(single.fit.params.beta.to_bits(), direct_fit.params.beta.to_bits());
        assert_eq!(single.forecast.i, direct_traj.i);
    }
}
