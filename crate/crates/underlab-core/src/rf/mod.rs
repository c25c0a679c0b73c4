//! Random-features regression: Monte Carlo experiments and their exact
//! high-dimensional asymptotics.

pub mod empirical;
pub mod experiments;
pub mod theory;
