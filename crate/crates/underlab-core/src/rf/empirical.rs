//! Finite-size random-features training and Monte Carlo evaluation.
//!
//! The model is `f_W(x) = theta^T sigma(W x)` with `W` fixed at random
//! (rows uniform on the unit sphere) and only `theta` trained, either as the
//! minimum-norm interpolant / least-squares solution (SVD pseudoinverse) or
//! by ridge regression with the `N lambda / d` penalty scaling. Inputs live
//! on the sphere of radius `sqrt(d)` and labels are linear plus optional
//! Gaussian noise.

use crate::activation::{activation_moments, Activation, ActivationMoments};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use ndarray_linalg::svddc::JobSvd;
use ndarray_linalg::{SolveC, SVDDC};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RfError {
    #[error("invalid random-features config: {0}")]
    InvalidConfig(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("degenerate shift direction: projected norm {0:.3e} is below 1e-12")]
    DegenerateDirection(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("linear algebra failure: {0}")]
    Linalg(String),
    #[error(transparent)]
    Activation(#[from] crate::activation::ActivationError),
}

/// Problem dimensions and distributional parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RfConfig {
    /// Input dimension d.
    pub d: usize,
    /// Training sample count n.
    pub n: usize,
    /// Number of neurons N.
    pub width: usize,
    /// Signal norm ||beta0||.
    pub r: f64,
    /// Label noise standard deviation.
    pub s: f64,
    /// Ridge parameter; 0 selects the min-norm / least-squares path.
    pub lambda: f64,
    pub activation: Activation,
}

impl RfConfig {
    pub fn validate(&self) -> Result<(), RfError> {
        if self.d < 1 || self.n < 1 || self.width < 1 {
            return Err(RfError::InvalidConfig(format!(
                "d, n, width must all be >= 1, got ({}, {}, {})",
                self.d, self.n, self.width
            )));
        }
        if self.r < 0.0 || self.s < 0.0 || self.lambda < 0.0 {
            return Err(RfError::InvalidConfig("r, s, lambda must be >= 0".into()));
        }
        Ok(())
    }

    /// width / d.
    pub fn psi1(&self) -> f64 {
        self.width as f64 / self.d as f64
    }

    /// n / d.
    pub fn psi2(&self) -> f64 {
        self.n as f64 / self.d as f64
    }
}

/// A sampled training set.
#[derive(Debug, Clone)]
pub struct RfDataset {
    /// n x d, rows on the sphere of radius sqrt(d).
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    /// d-vector with ||beta0|| = r.
    pub beta0: Array1<f64>,
    pub noise_std: f64,
}

/// A trained predictor.
#[derive(Debug, Clone)]
pub struct Predictor {
    /// width x d, rows on the unit sphere.
    pub w: Array2<f64>,
    pub theta: Array1<f64>,
    pub activation: Activation,
    pub moments: ActivationMoments,
}

/// Mean-shift specification for the shifted test distribution.
#[derive(Debug, Clone)]
pub struct ShiftSpec {
    pub delta: f64,
    /// d-vector with ||x0|| = delta and <x0, beta0> = 0.
    pub x0: Array1<f64>,
    /// Identifier of the predictor whose weights defined the shift direction.
    pub source_predictor_id: u64,
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

/// Fill an `n x d` matrix with rows uniform on the sphere of radius `radius`.
pub fn sample_sphere_rows(rng: &mut impl Rng, n: usize, d: usize, radius: f64) -> Array2<f64> {
    let mut m = Array2::<f64>::zeros((n, d));
    for mut row in m.rows_mut() {
        let mut norm_sq = 0.0;
        for v in row.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *v = g;
            norm_sq += g * g;
        }
        let scale = radius / norm_sq.sqrt();
        row.mapv_inplace(|v| v * scale);
    }
    m
}

/// Sample a training set: sphere inputs, linear target, optional label noise.
pub fn sample_dataset(config: &RfConfig, rng: &mut impl Rng) -> Result<RfDataset, RfError> {
    config.validate()?;
    let x = sample_sphere_rows(rng, config.n, config.d, (config.d as f64).sqrt());
    let beta0 = sample_sphere_rows(rng, 1, config.d, config.r).row(0).to_owned();
    let mut y = x.dot(&beta0);
    if config.s > 0.0 {
        for v in y.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *v += config.s * g;
        }
    }
    Ok(RfDataset { x, y, beta0, noise_std: config.s })
}

/// Featurize: `sigma(X W^T)`, one row per input.
pub fn features(x: &ArrayView2<f64>, w: &ArrayView2<f64>, activation: Activation) -> Array2<f64> {
    let mut phi = x.dot(&w.t());
    phi.mapv_inplace(|v| activation.apply(v));
    phi
}

/// Minimum-norm interpolant (width >= n) or least-squares solution, via SVD
/// pseudoinverse with singular values below `max(n, N) * eps * sigma_max`
/// treated as zero.
pub fn train_min_norm(phi: &ArrayView2<f64>, y: &ArrayView1<f64>) -> Result<Array1<f64>, RfError> {
    if phi.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(RfError::NonFinite("features or labels"));
    }
    let (n, width) = phi.dim();
    if y.len() != n {
        return Err(RfError::DimensionMismatch(format!("{} labels for {} rows", y.len(), n)));
    }
    let (u, sigma, vt) = phi
        .svddc(JobSvd::Some)
        .map_err(|e| RfError::Linalg(format!("svd: {e}")))?;
    let u = u.expect("JobSvd::Some returns U");
    let vt = vt.expect("JobSvd::Some returns V^T");
    let cutoff = n.max(width) as f64 * f64::EPSILON * sigma.iter().cloned().fold(0.0, f64::max);
    // theta = V diag(1/sigma) U^T y over the retained spectrum
    let uty = u.t().dot(y);
    let mut coeff = Array1::<f64>::zeros(sigma.len());
    for (i, &sv) in sigma.iter().enumerate() {
        if sv > cutoff {
            coeff[i] = uty[i] / sv;
        }
    }
    Ok(vt.t().dot(&coeff))
}

/// Ridge estimator minimizing `(1/n)||y - Phi theta||^2 + (N lambda / d)||theta||^2`.
///
/// Solved exactly via a symmetric positive-definite system; the dual (n x n)
/// form is used when the width exceeds the sample count.
pub fn train_ridge(
    phi: &ArrayView2<f64>,
    y: &ArrayView1<f64>,
    config: &RfConfig,
) -> Result<Array1<f64>, RfError> {
    if config.lambda <= 0.0 {
        return Err(RfError::InvalidConfig(format!("ridge needs lambda > 0, got {}", config.lambda)));
    }
    if phi.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(RfError::NonFinite("features or labels"));
    }
    let (n, width) = phi.dim();
    let nf = n as f64;
    let gamma = config.width as f64 * config.lambda / config.d as f64;
    if width <= n {
        // primal: (Phi^T Phi / n + gamma I) theta = Phi^T y / n
        let mut a = phi.t().dot(phi) / nf;
        for i in 0..width {
            a[(i, i)] += gamma;
        }
        let b = phi.t().dot(y) / nf;
        a.solvec(&b).map_err(|e| RfError::Linalg(format!("spd solve: {e}")))
    } else {
        // dual: theta = Phi^T (Phi Phi^T / n + gamma I)^{-1} y / n
        let mut a = phi.dot(&phi.t()) / nf;
        for i in 0..n {
            a[(i, i)] += gamma;
        }
        let alpha = a
            .solvec(&y.to_owned())
            .map_err(|e| RfError::Linalg(format!("spd solve: {e}")))?;
        Ok(phi.t().dot(&alpha) / nf)
    }
}

/// Sample `W`, featurize the training set, and train `theta` (min-norm when
/// `lambda == 0`, ridge otherwise).
pub fn train_predictor(
    config: &RfConfig,
    data: &RfDataset,
    rng: &mut impl Rng,
) -> Result<Predictor, RfError> {
    config.validate()?;
    let w = sample_sphere_rows(rng, config.width, config.d, 1.0);
    let phi = features(&data.x.view(), &w.view(), config.activation);
    let theta = if config.lambda == 0.0 {
        train_min_norm(&phi.view(), &data.y.view())?
    } else {
        train_ridge(&phi.view(), &data.y.view(), config)?
    };
    Ok(Predictor {
        w,
        theta,
        activation: config.activation,
        moments: activation_moments(config.activation)?,
    })
}

/// Evaluate `f_W` on a batch of inputs.
pub fn predict(predictor: &Predictor, x: &ArrayView2<f64>) -> Array1<f64> {
    features(x, &predictor.w.view(), predictor.activation).dot(&predictor.theta)
}

const EVAL_BATCH: usize = 2048;

fn mc_mean_stderr(values: &[f64]) -> McEstimate {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    McEstimate { mean, stderr: (var / n as f64).sqrt(), n_samples: n }
}

fn risk_core(
    predictor: &Predictor,
    shift: Option<&ShiftSpec>,
    beta0: &ArrayView1<f64>,
    noise_std: f64,
    n_test: usize,
    rng: &mut impl Rng,
) -> Result<McEstimate, RfError> {
    let d = predictor.w.ncols();
    if beta0.len() != d {
        return Err(RfError::DimensionMismatch(format!("beta0 has {} entries, d = {d}", beta0.len())));
    }
    if let Some(sh) = shift {
        if sh.x0.len() != d {
            return Err(RfError::DimensionMismatch(format!("shift has {} entries, d = {d}", sh.x0.len())));
        }
    }
    let mut sq_errors = Vec::with_capacity(n_test);
    let mut remaining = n_test;
    while remaining > 0 {
        let batch = remaining.min(EVAL_BATCH);
        let mut x = sample_sphere_rows(rng, batch, d, (d as f64).sqrt());
        if let Some(sh) = shift {
            x += &sh.x0.view().insert_axis(Axis(0));
        }
        let mut y = x.dot(beta0);
        if noise_std > 0.0 {
            for v in y.iter_mut() {
                let g: f64 = rng.sample(StandardNormal);
                *v += noise_std * g;
            }
        }
        let f = predict(predictor, &x.view());
        sq_errors.extend(y.iter().zip(f.iter()).map(|(yi, fi)| (yi - fi) * (yi - fi)));
        remaining -= batch;
    }
    Ok(mc_mean_stderr(&sq_errors))
}

/// Monte Carlo in-distribution risk `E (y - f_W(x))^2` on fresh draws,
/// with `y = <beta0, x> + noise`.
pub fn estimate_risk(
    predictor: &Predictor,
    beta0: &ArrayView1<f64>,
    noise_std: f64,
    n_test: usize,
    rng: &mut impl Rng,
) -> Result<McEstimate, RfError> {
    if n_test < 100 {
        return Err(RfError::InvalidConfig(format!("n_test must be >= 100, got {n_test}")));
    }
    risk_core(predictor, None, beta0, noise_std, n_test, rng)
}

/// Build the adversarial mean shift for `predictor`:
/// `x0 = -delta P_perp(beta0) W^T theta / ||P_perp(beta0) W^T theta||`.
pub fn adversarial_shift(
    predictor: &Predictor,
    beta0: &ArrayView1<f64>,
    delta: f64,
    source_predictor_id: u64,
) -> Result<ShiftSpec, RfError> {
    let v = predictor.w.t().dot(&predictor.theta);
    if v.len() != beta0.len() {
        return Err(RfError::DimensionMismatch(format!(
            "predictor dimension {} vs beta0 {}",
            v.len(),
            beta0.len()
        )));
    }
    let b_norm_sq = beta0.dot(beta0);
    if b_norm_sq <= 0.0 {
        return Err(RfError::InvalidConfig("beta0 must be nonzero".into()));
    }
    let proj = v.dot(beta0) / b_norm_sq;
    let perp = &v - &(beta0.to_owned() * proj);
    let norm = perp.dot(&perp).sqrt();
    if norm < 1e-12 {
        return Err(RfError::DegenerateDirection(norm));
    }
    Ok(ShiftSpec { delta, x0: perp * (-delta / norm), source_predictor_id })
}

/// Monte Carlo risk under the mean-shifted test distribution
/// `x_test = x0 + x`, labeled by the true linear target at `x_test`.
pub fn shifted_risk(
    predictor: &Predictor,
    shift: &ShiftSpec,
    beta0: &ArrayView1<f64>,
    noise_std: f64,
    n_test: usize,
    rng: &mut impl Rng,
) -> Result<McEstimate, RfError> {
    risk_core(predictor, Some(shift), beta0, noise_std, n_test, rng)
}

/// Monte Carlo sensitivity `E (f_1(x) - f_2(x))^2` on fresh unshifted draws.
pub fn sensitivity(
    p1: &Predictor,
    p2: &Predictor,
    n_test: usize,
    rng: &mut impl Rng,
) -> Result<McEstimate, RfError> {
    let d = p1.w.ncols();
    if p2.w.ncols() != d {
        return Err(RfError::DimensionMismatch(format!("predictors have d = {d} and {}", p2.w.ncols())));
    }
    let mut sq_diffs = Vec::with_capacity(n_test);
    let mut remaining = n_test;
    while remaining > 0 {
        let batch = remaining.min(EVAL_BATCH);
        let x = sample_sphere_rows(rng, batch, d, (d as f64).sqrt());
        let f1 = predict(p1, &x.view());
        let f2 = predict(p2, &x.view());
        sq_diffs.extend(f1.iter().zip(f2.iter()).map(|(a, b)| (a - b) * (a - b)));
        remaining -= batch;
    }
    Ok(mc_mean_stderr(&sq_diffs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn relu_config(d: usize, n: usize, width: usize) -> RfConfig {
        RfConfig { d, n, width, r: 1.0, s: 0.0, lambda: 0.0, activation: Activation::Relu }
    }

    #[test]
    fn dataset_rows_are_on_the_sphere_and_noiseless_labels_are_exact() {
        let config = relu_config(20, 50, 10);
        let mut rng = derive_rng(1, "rf.test.dataset", 0);
        let data = sample_dataset(&config, &mut rng).unwrap();
        let sqrt_d = (config.d as f64).sqrt();
        for row in data.x.rows() {
            assert!((row.dot(&row).sqrt() - sqrt_d).abs() <= 1e-9);
        }
        assert!((data.beta0.dot(&data.beta0).sqrt() - config.r).abs() <= 1e-12);
        // s = 0: labels are exactly the linear target
        let expected = data.x.dot(&data.beta0);
        assert_eq!(data.y, expected);
    }

    #[test]
    fn sphere_second_moment_is_identity() {
        // E[x x^T] = I for x uniform on the sphere of radius sqrt(d)
        let d = 5;
        let n = 100_000;
        let mut rng = derive_rng(2, "rf.test.moment", 0);
        let x = sample_sphere_rows(&mut rng, n, d, (d as f64).sqrt());
        for i in 0..d {
            for j in 0..d {
                let products: Vec<f64> = x.rows().into_iter().map(|r| r[i] * r[j]).collect();
                let est = mc_mean_stderr(&products);
                let target = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (est.mean - target).abs() <= 3.0 * est.stderr.max(1e-6),
                    "entry ({i},{j}): {} vs {target} (se {})",
                    est.mean,
                    est.stderr
                );
            }
        }
    }

    #[test]
    fn min_norm_square_invertible_is_exact_solve() {
        let phi = array![[2.0, 1.0], [1.0, 3.0]];
        let y = array![5.0, 10.0];
        let theta = train_min_norm(&phi.view(), &y.view()).unwrap();
        let resid = &phi.dot(&theta) - &y;
        assert!(resid.dot(&resid).sqrt() <= 1e-10);
    }

    #[test]
    fn min_norm_zero_labels_give_zero_solution() {
        let phi = array![[1.0, 2.0, 0.5], [0.0, 1.0, -1.0]];
        let y = array![0.0, 0.0];
        let theta = train_min_norm(&phi.view(), &y.view()).unwrap();
        assert!(theta.iter().all(|&v| v.abs() <= 1e-14));
    }

    #[test]
    fn min_norm_underdetermined_matches_pseudoinverse_oracle() {
        // Phi = [[1,0,0],[0,1,1]], y = [1,2]: min-norm splits y2 across the
        // two equal columns, theta = (1, 1, 1)
        let phi = array![[1.0, 0.0, 0.0], [0.0, 1.0, 1.0]];
        let y = array![1.0, 2.0];
        let theta = train_min_norm(&phi.view(), &y.view()).unwrap();
        assert_abs_diff_eq!(theta[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(theta[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(theta[2], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn min_norm_interpolates_and_stays_in_row_space() {
        let config = relu_config(15, 30, 60);
        let mut rng = derive_rng(3, "rf.test.minnorm", 0);
        let data = sample_dataset(&config, &mut rng).unwrap();
        let pred = train_predictor(&config, &data, &mut rng).unwrap();
        let phi = features(&data.x.view(), &pred.w.view(), config.activation);
        let resid = &phi.dot(&pred.theta) - &data.y;
        let rel = resid.dot(&resid).sqrt() / data.y.dot(&data.y).sqrt();
        assert!(rel <= 1e-8, "training residual {rel}");

        // theta is orthogonal to null(Phi): check via the SVD basis
        let (_, sigma, vt) = phi.svddc(JobSvd::Some).unwrap();
        let vt = vt.unwrap();
        let cutoff = 60.0 * f64::EPSILON * sigma[0];
        for (i, &sv) in sigma.iter().enumerate() {
            if sv <= cutoff {
                let comp = vt.row(i).dot(&pred.theta);
                assert!(comp.abs() <= 1e-8, "null-space component {comp}");
            }
        }
    }

    #[test]
    fn ridge_scalar_closed_form() {
        // phi = [2], y = [4], n = N = d = 1, lambda = 1:
        // theta = (phi y / n) / (phi^2 / n + N lambda / d) = 8/5
        let config = RfConfig { d: 1, n: 1, width: 1, r: 1.0, s: 0.0, lambda: 1.0, activation: Activation::Relu };
        let phi = array![[2.0]];
        let y = array![4.0];
        let theta = train_ridge(&phi.view(), &y.view(), &config).unwrap();
        assert_abs_diff_eq!(theta[0], 8.0 / 5.0, epsilon = 1e-12);
    }

    #[test]
    fn ridge_norm_shrinks_as_lambda_grows() {
        let mut config = relu_config(10, 40, 20);
        let mut rng = derive_rng(4, "rf.test.ridge", 0);
        let data = sample_dataset(&config, &mut rng).unwrap();
        let w = sample_sphere_rows(&mut rng, config.width, config.d, 1.0);
        let phi = features(&data.x.view(), &w.view(), config.activation);
        let mut last_norm = f64::INFINITY;
        for &lambda in &[1e-4, 1e-2, 1.0, 1e2, 1e4] {
            config.lambda = lambda;
            let theta = train_ridge(&phi.view(), &data.y.view(), &config).unwrap();
            let norm = theta.dot(&theta).sqrt();
            assert!(norm < last_norm, "norm {norm} did not shrink at lambda {lambda}");
            last_norm = norm;
        }
        assert!(last_norm <= 1e-2);
    }

    #[test]
    fn tiny_ridge_approaches_min_norm() {
        let mut config = relu_config(12, 24, 48);
        let mut rng = derive_rng(5, "rf.test.ridgelimit", 0);
        let data = sample_dataset(&config, &mut rng).unwrap();
        let w = sample_sphere_rows(&mut rng, config.width, config.d, 1.0);
        let phi = features(&data.x.view(), &w.view(), config.activation);
        let mn = train_min_norm(&phi.view(), &data.y.view()).unwrap();
        config.lambda = 1e-10;
        let ridge = train_ridge(&phi.view(), &data.y.view(), &config).unwrap();
        let diff = (&ridge - &mn).mapv(|v| v * v).sum().sqrt();
        let rel = diff / mn.dot(&mn).sqrt();
        assert!(rel <= 1e-4, "relative gap {rel}");
    }

    #[test]
    fn ridge_gradient_vanishes_at_solution() {
        let config = RfConfig { d: 8, n: 30, width: 50, r: 1.0, s: 0.1, lambda: 0.05, activation: Activation::Relu };
        let mut rng = derive_rng(6, "rf.test.ridgeopt", 0);
        let data = sample_dataset(&config, &mut rng).unwrap();
        let w = sample_sphere_rows(&mut rng, config.width, config.d, 1.0);
        let phi = features(&data.x.view(), &w.view(), config.activation);
        let theta = train_ridge(&phi.view(), &data.y.view(), &config).unwrap();
        let gamma = config.width as f64 * config.lambda / config.d as f64;
        let n = config.n as f64;
        let grad = &phi.t().dot(&(&phi.dot(&theta) - &data.y)) * (2.0 / n) + &(theta.clone() * (2.0 * gamma));
        let rel = grad.dot(&grad).sqrt() / theta.dot(&theta).sqrt().max(1e-300);
        assert!(rel <= 1e-8, "relative gradient norm {rel}");
    }

    #[test]
    fn zero_predictor_risk_is_signal_plus_noise_power() {
        let config = RfConfig { d: 30, n: 10, width: 5, r: 1.3, s: 0.4, lambda: 0.0, activation: Activation::Relu };
        let mut rng = derive_rng(7, "rf.test.zerorisk", 0);
        let data = sample_dataset(&config, &mut rng).unwrap();
        let mut pred = train_predictor(&config, &data, &mut rng).unwrap();
        pred.theta.fill(0.0);
        let est = estimate_risk(&pred, &data.beta0.view(), config.s, 20_000, &mut rng).unwrap();
        let expected = config.r * config.r + config.s * config.s;
        assert!(
            (est.mean - expected).abs() <= 3.0 * est.stderr,
            "risk {} vs {expected} (se {})",
            est.mean,
            est.stderr
        );
    }

    #[test]
    fn interpolating_predictor_has_zero_training_error() {
        let config = relu_config(10, 40, 80);
        let mut rng = derive_rng(8, "rf.test.interp", 0);
        let data = sample_dataset(&config, &mut rng).unwrap();
        let pred = train_predictor(&config, &data, &mut rng).unwrap();
        let f = predict(&pred, &data.x.view());
        let mse = (&f - &data.y).mapv(|v| v * v).mean().unwrap();
        assert!(mse <= 1e-12, "training mse {mse}");
    }

    #[test]
    fn adversarial_shift_invariants_and_hand_case() {
        // hand case: beta0 = e1, W^T theta = (1,1,0), delta = 2 -> x0 = (0,-2,0)
        let pred = Predictor {
            w: array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            theta: array![1.0, 1.0],
            activation: Activation::Relu,
            moments: activation_moments(Activation::Relu).unwrap(),
        };
        let beta0 = array![1.0, 0.0, 0.0];
        let shift = adversarial_shift(&pred, &beta0.view(), 2.0, 0).unwrap();
        assert_abs_diff_eq!(shift.x0[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(shift.x0[1], -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(shift.x0[2], 0.0, epsilon = 1e-12);

        // generic invariants: ||x0|| = delta, <x0, beta0> = 0
        let config = relu_config(25, 50, 100);
        let mut rng = derive_rng(9, "rf.test.shift", 0);
        let data = sample_dataset(&config, &mut rng).unwrap();
        let pred = train_predictor(&config, &data, &mut rng).unwrap();
        let shift = adversarial_shift(&pred, &data.beta0.view(), 1.7, 3).unwrap();
        assert!((shift.x0.dot(&shift.x0).sqrt() - 1.7).abs() <= 1e-9);
        assert!(shift.x0.dot(&data.beta0).abs() <= 1e-9 * 1.7 * config.r);
    }

    #[test]
    fn zero_theta_shift_is_degenerate() {
        let pred = Predictor {
            w: array![[1.0, 0.0], [0.0, 1.0]],
            theta: array![0.0, 0.0],
            activation: Activation::Relu,
            moments: activation_moments(Activation::Relu).unwrap(),
        };
        let beta0 = array![1.0, 0.0];
        match adversarial_shift(&pred, &beta0.view(), 1.0, 0) {
            Err(RfError::DegenerateDirection(_)) => {}
            other => panic!("expected degenerate direction, got {other:?}"),
        }
    }

    #[test]
    fn zero_delta_shift_equals_unshifted_risk_bit_for_bit() {
        let config = relu_config(20, 40, 80);
        let mut rng = derive_rng(10, "rf.test.zerodelta", 0);
        let data = sample_dataset(&config, &mut rng).unwrap();
        let pred = train_predictor(&config, &data, &mut rng).unwrap();
        let shift = adversarial_shift(&pred, &data.beta0.view(), 0.0, 0).unwrap();
        let mut rng_a = derive_rng(11, "rf.test.zerodelta.eval", 0);
        let mut rng_b = derive_rng(11, "rf.test.zerodelta.eval", 0);
        let base = estimate_risk(&pred, &data.beta0.view(), 0.0, 1000, &mut rng_a).unwrap();
        let shifted = shifted_risk(&pred, &shift, &data.beta0.view(), 0.0, 1000, &mut rng_b).unwrap();
        assert_eq!(base.mean.to_bits(), shifted.mean.to_bits());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let config = relu_config(20, 40, 80);
        let mut rng = derive_rng(12, "rf.test.dim", 0);
        let data = sample_dataset(&config, &mut rng).unwrap();
        let pred = train_predictor(&config, &data, &mut rng).unwrap();
        let bad_shift = ShiftSpec { delta: 1.0, x0: Array1::zeros(7), source_predictor_id: 0 };
        match shifted_risk(&pred, &bad_shift, &data.beta0.view(), 0.0, 500, &mut rng) {
            Err(RfError::DimensionMismatch(_)) => {}
            other => panic!("expected dimension mismatch, got {other:?}"),
        }
    }

    #[test]
    fn sensitivity_of_identical_predictors_is_zero() {
        let config = relu_config(15, 30, 60);
        let mut rng = derive_rng(13, "rf.test.sens0", 0);
        let data = sample_dataset(&config, &mut rng).unwrap();
        let pred = train_predictor(&config, &data, &mut rng).unwrap();
        let est = sensitivity(&pred, &pred, 500, &mut rng).unwrap();
        assert_eq!(est.mean, 0.0);
    }

    #[test]
    fn sensitivity_matches_direct_summation_oracle() {
        let config = relu_config(10, 20, 15);
        let mut rng = derive_rng(14, "rf.test.sensoracle", 0);
        let data = sample_dataset(&config, &mut rng).unwrap();
        let p1 = train_predictor(&config, &data, &mut rng).unwrap();
        let p2 = train_predictor(&config, &data, &mut rng).unwrap();

        let mut rng_est = derive_rng(14, "rf.test.sensoracle.eval", 0);
        let est = sensitivity(&p1, &p2, 10_000, &mut rng_est).unwrap();

        // oracle: naive per-point recomputation on the same shared draws
        let mut rng_oracle = derive_rng(14, "rf.test.sensoracle.eval", 0);
        let x = sample_sphere_rows(&mut rng_oracle, 10_000, config.d, (config.d as f64).sqrt());
        let mut total = 0.0;
        for row in x.rows() {
            let mut f1 = 0.0;
            let mut f2 = 0.0;
            for (k, wrow) in p1.w.rows().into_iter().enumerate() {
                f1 += p1.theta[k] * config.activation.apply(wrow.dot(&row));
            }
            for (k, wrow) in p2.w.rows().into_iter().enumerate() {
                f2 += p2.theta[k] * config.activation.apply(wrow.dot(&row));
            }
            total += (f1 - f2) * (f1 - f2);
        }
        let oracle = total / 10_000.0;
        assert!(
            (est.mean - oracle).abs() <= 3.0 * est.stderr.max(1e-12),
            "estimate {} vs oracle {oracle}",
            est.mean
        );
    }

    #[test]
    fn seeded_training_is_bit_identical() {
        let config = relu_config(12, 24, 48);
        let mut rng1 = derive_rng(99, "rf.test.seeded", 7);
        let mut rng2 = derive_rng(99, "rf.test.seeded", 7);
        let d1 = sample_dataset(&config, &mut rng1).unwrap();
        let d2 = sample_dataset(&config, &mut rng2).unwrap();
        let p1 = train_predictor(&config, &d1, &mut rng1).unwrap();
        let p2 = train_predictor(&config, &d2, &mut rng2).unwrap();
        assert_eq!(p1.w, p2.w);
        assert!(p1.theta.iter().zip(p2.theta.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
