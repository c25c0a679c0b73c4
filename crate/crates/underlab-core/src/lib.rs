//! Numerical laboratory for studying underspecification in simple model
//! families: an SIR forecasting task whose parameters are underdetermined by
//! early observations, a random-features regression model with exact
//! high-dimensional asymptotics and an adversarial mean-shift construction,
//! a synthetic correlated-feature-cluster study, and the generic ensemble
//! stress-test statistics (F, Spearman, permutation, disagreement, WEAT).
//!
//! Everything is seeded and deterministic: each stochastic unit derives its
//! RNG stream from `(master seed, module tag, unit index)` via [`rng::derive_rng`],
//! so results are independent of thread count and schedule.

pub mod activation;
pub mod cluster;
pub mod exec;
pub mod quadrature;
pub mod rf;
pub mod rng;
pub mod sir;
pub mod stats;
