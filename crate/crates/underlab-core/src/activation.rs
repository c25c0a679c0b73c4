//! Activation functions and their Gaussian projection moments.
//!
//! An activation enters the theory only through its projections onto the
//! constant and linear Hermite components under `G ~ N(0,1)`:
//! `mu0 = E sigma(G)`, `mu1 = E G sigma(G)`, and the nonlinear remainder
//! `mu_star^2 = E sigma(G)^2 - mu0^2 - mu1^2`. The ratio `zeta = mu1/mu_star`
//! is the single number the asymptotic formulas consume.

use crate::quadrature::{expect_gaussian, QuadratureError};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// x^2, a purely even activation (mu1 = 0).
    Square,
    Tanh,
    /// Linear activation; has no nonlinear component, so zeta is undefined.
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Square => x * x,
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Activation::Relu => "relu",
            Activation::Square => "square",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        };
        f.write_str(name)
    }
}

impl FromStr for Activation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "square" => Ok(Activation::Square),
            "tanh" => Ok(Activation::Tanh),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(format!("unknown activation '{other}' (expected relu|square|tanh|identity)")),
        }
    }
}

/// Gaussian projection moments of an activation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ActivationMoments {
    /// E sigma(G)
    pub mu0: f64,
    /// E G sigma(G)
    pub mu1: f64,
    /// sqrt(E sigma(G)^2 - mu0^2 - mu1^2)
    pub mu_star: f64,
    /// mu1 / mu_star
    pub zeta: f64,
}

#[derive(Debug, Error)]
pub enum ActivationError {
    #[error("degenerate activation '{0}': nonlinear component mu_star^2 = {1:.3e} is not positive, zeta is undefined")]
    Degenerate(Activation, f64),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Compute the projection moments of `activation` by quadrature.
///
/// Fails with [`ActivationError::Degenerate`] when the activation is affine
/// (`mu_star^2 <= 1e-12`), and propagates the node-doubling convergence error
/// from the quadrature layer.
pub fn activation_moments(activation: Activation) -> Result<ActivationMoments, ActivationError> {
    let mu0 = expect_gaussian(|x| activation.apply(x))?;
    let mu1 = expect_gaussian(|x| x * activation.apply(x))?;
    let second = expect_gaussian(|x| activation.apply(x).powi(2))?;
    let mu_star_sq = second - mu0 * mu0 - mu1 * mu1;
    if mu_star_sq <= 1e-12 {
        return Err(ActivationError::Degenerate(activation, mu_star_sq));
    }
    let mu_star = mu_star_sq.sqrt();
    Ok(ActivationMoments {
        mu0,
        mu1,
        mu_star,
        zeta: mu1 / mu_star,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn relu_moments_match_analytic_gaussian_integrals() {
        // E max(0,G) = 1/sqrt(2 pi); E G max(0,G) = 1/2; E max(0,G)^2 = 1/2
        let m = activation_moments(Activation::Relu).unwrap();
        assert_abs_diff_eq!(m.mu0, 1.0 / (2.0 * PI).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(m.mu1, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(m.mu_star * m.mu_star, 0.5 - 1.0 / (2.0 * PI) - 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(m.zeta, m.mu1 / m.mu_star, epsilon = 0.0);
    }

    #[test]
    fn square_moments_from_gaussian_moment_oracle() {
        // E G^2 = 1, E G^3 = 0, E G^4 = 3 => mu* ^2 = 3 - 1 - 0 = 2
        let m = activation_moments(Activation::Square).unwrap();
        assert_abs_diff_eq!(m.mu0, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.mu1, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.mu_star * m.mu_star, 2.0, epsilon = 1e-11);
    }

    #[test]
    fn identity_is_degenerate() {
        match activation_moments(Activation::Identity) {
            Err(ActivationError::Degenerate(..)) => {}
            other => panic!("expected degenerate-activation error, got {other:?}"),
        }
    }

    #[test]
    fn tanh_has_odd_symmetry_and_positive_nonlinear_mass() {
        let m = activation_moments(Activation::Tanh).unwrap();
        assert_abs_diff_eq!(m.mu0, 0.0, epsilon = 1e-12);
        assert!(m.mu1 > 0.5 && m.mu1 < 1.0);
        assert!(m.mu_star > 0.0);
    }
}
