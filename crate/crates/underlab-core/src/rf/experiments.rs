//! Replicated sweeps over `(n/d, N/n)` grids, Monte Carlo and analytic.
//!
//! Both sides emit the same row schema `(n_over_d, width_over_n, metric,
//! mean, mc_stderr, replicates)` so curve files join on the first two
//! columns for overlay plots. Cells run in parallel with derived RNG
//! streams; aggregation order is fixed by the grid, not the schedule.

use crate::activation::{activation_moments, Activation};
use crate::exec;
use crate::rf::empirical::{
    adversarial_shift, estimate_risk, sample_dataset, sensitivity, shifted_risk, train_predictor,
    RfConfig, RfError,
};
use crate::rf::theory::{theory_curves, G1Convention, TheoryError, TheoryInputs};
use crate::rng::{derive_rng, unit_index};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Rf(#[from] RfError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Activation(#[from] crate::activation::ActivationError),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
}

/// One output row; `mc_stderr` and `replicates` are zero for analytic rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n_over_d: f64,
    pub width_over_n: f64,
    pub metric: String,
    pub mean: f64,
    pub mc_stderr: f64,
    pub replicates: usize,
}

/// Monte Carlo sweep configuration at fixed `n/d`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmpiricalSweep {
    pub d: usize,
    /// psi2 = n/d.
    pub n_over_d: f64,
    /// Grid of N/n ratios.
    pub width_over_n_grid: Vec<f64>,
    pub activation: Activation,
    pub r: f64,
    pub s: f64,
    /// Ridge lambda; 0 selects min-norm / least squares.
    pub lambda: f64,
    /// Mean-shift magnitude for shift curves.
    pub delta: f64,
    pub replicates: usize,
    pub n_test: usize,
    pub master_seed: u64,
    /// Offset added to the cell index so concurrent sweeps use disjoint streams.
    #[serde(default)]
    pub cell_offset: usize,
}

impl EmpiricalSweep {
    fn dims(&self, ratio: f64) -> Result<(usize, usize), ExperimentError> {
        let n = (self.n_over_d * self.d as f64).round() as usize;
        let width = (ratio * n as f64).round() as usize;
        if n < 1 || width < 1 {
            return Err(ExperimentError::InvalidSweep(format!(
                "grid point N/n = {ratio} yields n = {n}, N = {width}"
            )));
        }
        Ok((n, width))
    }

    fn config(&self, ratio: f64) -> Result<RfConfig, ExperimentError> {
        let (n, width) = self.dims(ratio)?;
        Ok(RfConfig {
            d: self.d,
            n,
            width,
            r: self.r,
            s: self.s,
            lambda: self.lambda,
            activation: self.activation,
        })
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn stderr_of_mean(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0) / n).sqrt()
}

/// Ratio of means with a leave-one-out jackknife standard error.
fn ratio_of_means(num: &[f64], den: &[f64]) -> (f64, f64) {
    let n = num.len();
    let (sn, sd) = (num.iter().sum::<f64>(), den.iter().sum::<f64>());
    let ratio = sn / sd;
    if n < 2 {
        return (ratio, 0.0);
    }
    let loo: Vec<f64> = (0..n).map(|i| (sn - num[i]) / (sd - den[i])).collect();
    let lm = mean(&loo);
    let var = loo.iter().map(|v| (v - lm) * (v - lm)).sum::<f64>() * (n as f64 - 1.0) / n as f64;
    (ratio, var.sqrt())
}

/// Monte Carlo in-distribution risk curve: metric `risk_mc`.
pub fn risk_curve(sweep: &EmpiricalSweep) -> Result<Vec<CurvePoint>, ExperimentError> {
    run_cells(sweep, |sweep, cell, ratio| {
        let config = sweep.config(ratio)?;
        let risks = replicate_results(sweep, cell, |rep| {
            let mut rng_data = derive_rng(sweep.master_seed, "rf.data", unit_index(cell + sweep.cell_offset, rep));
            let mut rng_w = derive_rng(sweep.master_seed, "rf.w", unit_index(cell + sweep.cell_offset, rep));
            let mut rng_eval = derive_rng(sweep.master_seed, "rf.eval", unit_index(cell + sweep.cell_offset, rep));
            let data = sample_dataset(&config, &mut rng_data)?;
            let pred = train_predictor(&config, &data, &mut rng_w)?;
            let est = estimate_risk(&pred, &data.beta0.view(), config.s, sweep.n_test, &mut rng_eval)?;
            Ok(est.mean)
        })?;
        Ok(vec![CurvePoint {
            n_over_d: sweep.n_over_d,
            width_over_n: ratio,
            metric: "risk_mc".into(),
            mean: mean(&risks),
            mc_stderr: stderr_of_mean(&risks),
            replicates: risks.len(),
        }])
    })
}

/// Monte Carlo shift curve: metrics `risk_mc`, `ratio_targeted_mc`,
/// `ratio_independent_mc`.
///
/// Per replicate, two predictors are trained on the same data with
/// independent feature draws; the shift is built from the first (`W0`) and
/// both are evaluated under it. Normalized ratios are means over replicates,
/// numerator over denominator, with jackknife standard errors.
pub fn shift_curve(sweep: &EmpiricalSweep) -> Result<Vec<CurvePoint>, ExperimentError> {
    run_cells(sweep, |sweep, cell, ratio| {
        let config = sweep.config(ratio)?;
        let triples = replicate_results(sweep, cell, |rep| {
            let uidx = unit_index(cell + sweep.cell_offset, rep);
            let mut rng_data = derive_rng(sweep.master_seed, "rf.shift.data", uidx);
            let mut rng_w0 = derive_rng(sweep.master_seed, "rf.shift.w0", uidx);
            let mut rng_w = derive_rng(sweep.master_seed, "rf.shift.w", uidx);
            let mut rng_base = derive_rng(sweep.master_seed, "rf.shift.eval.base", uidx);
            let mut rng_targ = derive_rng(sweep.master_seed, "rf.shift.eval.targ", uidx);
            let mut rng_ind = derive_rng(sweep.master_seed, "rf.shift.eval.ind", uidx);

            let data = sample_dataset(&config, &mut rng_data)?;
            let targeted_pred = train_predictor(&config, &data, &mut rng_w0)?;
            let independent_pred = train_predictor(&config, &data, &mut rng_w)?;
            let shift = adversarial_shift(&targeted_pred, &data.beta0.view(), sweep.delta, rep as u64)?;

            let base = estimate_risk(&independent_pred, &data.beta0.view(), config.s, sweep.n_test, &mut rng_base)?;
            let targ = shifted_risk(&targeted_pred, &shift, &data.beta0.view(), config.s, sweep.n_test, &mut rng_targ)?;
            let ind = shifted_risk(&independent_pred, &shift, &data.beta0.view(), config.s, sweep.n_test, &mut rng_ind)?;
            Ok((base.mean, targ.mean, ind.mean))
        })?;
        let base: Vec<f64> = triples.iter().map(|t| t.0).collect();
        let targ: Vec<f64> = triples.iter().map(|t| t.1).collect();
        let ind: Vec<f64> = triples.iter().map(|t| t.2).collect();
        let (rt, rt_se) = ratio_of_means(&targ, &base);
        let (ri, ri_se) = ratio_of_means(&ind, &base);
        let reps = base.len();
        let point = |metric: &str, mean_v: f64, se: f64| CurvePoint {
            n_over_d: sweep.n_over_d,
            width_over_n: ratio,
            metric: metric.into(),
            mean: mean_v,
            mc_stderr: se,
            replicates: reps,
        };
        Ok(vec![
            point("risk_mc", mean(&base), stderr_of_mean(&base)),
            point("ratio_targeted_mc", rt, rt_se),
            point("ratio_independent_mc", ri, ri_se),
        ])
    })
}

/// Monte Carlo sensitivity curve: metrics `risk_mc`, `s_av_mc`, `s_over_r_mc`.
pub fn sensitivity_curve(sweep: &EmpiricalSweep) -> Result<Vec<CurvePoint>, ExperimentError> {
    run_cells(sweep, |sweep, cell, ratio| {
        let config = sweep.config(ratio)?;
        let pairs = replicate_results(sweep, cell, |rep| {
            let uidx = unit_index(cell + sweep.cell_offset, rep);
            let mut rng_data = derive_rng(sweep.master_seed, "rf.sens.data", uidx);
            let mut rng_w1 = derive_rng(sweep.master_seed, "rf.sens.w1", uidx);
            let mut rng_w2 = derive_rng(sweep.master_seed, "rf.sens.w2", uidx);
            let mut rng_s = derive_rng(sweep.master_seed, "rf.sens.eval.s", uidx);
            let mut rng_r = derive_rng(sweep.master_seed, "rf.sens.eval.r", uidx);

            let data = sample_dataset(&config, &mut rng_data)?;
            let p1 = train_predictor(&config, &data, &mut rng_w1)?;
            let p2 = train_predictor(&config, &data, &mut rng_w2)?;
            let s = sensitivity(&p1, &p2, sweep.n_test, &mut rng_s)?;
            let r = estimate_risk(&p1, &data.beta0.view(), config.s, sweep.n_test, &mut rng_r)?;
            Ok((s.mean, r.mean))
        })?;
        let s: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let r: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let (sr, sr_se) = ratio_of_means(&s, &r);
        let reps = s.len();
        let point = |metric: &str, mean_v: f64, se: f64| CurvePoint {
            n_over_d: sweep.n_over_d,
            width_over_n: ratio,
            metric: metric.into(),
            mean: mean_v,
            mc_stderr: se,
            replicates: reps,
        };
        Ok(vec![
            point("risk_mc", mean(&r), stderr_of_mean(&r)),
            point("s_av_mc", mean(&s), stderr_of_mean(&s)),
            point("s_over_r_mc", sr, sr_se),
        ])
    })
}

fn replicate_results<T: Send>(
    sweep: &EmpiricalSweep,
    _cell: usize,
    f: impl Fn(usize) -> Result<T, RfError> + Sync + Send,
) -> Result<Vec<T>, ExperimentError> {
    let results = exec::map_indexed(sweep.replicates, f);
    results.into_iter().collect::<Result<Vec<_>, _>>().map_err(Into::into)
}

fn run_cells(
    sweep: &EmpiricalSweep,
    per_cell: impl Fn(&EmpiricalSweep, usize, f64) -> Result<Vec<CurvePoint>, ExperimentError>,
) -> Result<Vec<CurvePoint>, ExperimentError> {
    if sweep.replicates < 1 {
        return Err(ExperimentError::InvalidSweep("replicates must be >= 1".into()));
    }
    let mut out = Vec::new();
    for (cell, &ratio) in sweep.width_over_n_grid.iter().enumerate() {
        out.extend(per_cell(sweep, cell, ratio)?);
    }
    Ok(out)
}

/// Which analytic curve to emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoryMetric {
    Risk,
    Sensitivity,
    Shift,
}

/// Analytic sweep matching an [`EmpiricalSweep`] grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheorySweep {
    /// None derives zeta from the activation's Gaussian moments.
    pub zeta: Option<f64>,
    pub activation: Activation,
    pub n_over_d: f64,
    pub width_over_n_grid: Vec<f64>,
    /// lambda_bar = lambda / mu_star^2; 0 selects the ridgeless limit path.
    pub lambda_bar: f64,
    pub r: f64,
    pub s: f64,
    pub delta: f64,
    #[serde(default)]
    pub g1_convention: G1Convention,
}

/// Evaluate the analytic curve; rows carry `mc_stderr = 0`, `replicates = 0`.
///
/// Shift and sensitivity metrics are `lambda -> 0` limits regardless of
/// `lambda_bar`; the risk metric honors `lambda_bar`. Points in the
/// underparametrized region are flagged by the `_provisional` suffix
/// convention on the metric name.
pub fn theory_curve(sweep: &TheorySweep, metric: TheoryMetric) -> Result<Vec<CurvePoint>, ExperimentError> {
    let moments = activation_moments(sweep.activation)?;
    let zeta = sweep.zeta.unwrap_or(moments.zeta);
    let mut out = Vec::new();
    for &ratio in &sweep.width_over_n_grid {
        let psi2 = sweep.n_over_d;
        let psi1 = ratio * psi2;
        let inputs = TheoryInputs {
            zeta,
            psi1,
            psi2,
            lambda_bar: sweep.lambda_bar,
            r: sweep.r,
            s: sweep.s,
            g1_convention: sweep.g1_convention,
        };
        let curves = theory_curves(&inputs, sweep.delta, moments.mu1)?;
        let suffix = if curves.provisional { "_provisional" } else { "" };
        let point = |name: &str, value: f64| CurvePoint {
            n_over_d: psi2,
            width_over_n: ratio,
            metric: format!("{name}{suffix}"),
            mean: value,
            mc_stderr: 0.0,
            replicates: 0,
        };
        match metric {
            TheoryMetric::Risk => out.push(point("risk_theory", curves.risk)),
            TheoryMetric::Sensitivity => {
                out.push(point("risk_theory", curves.risk));
                out.push(point("s_av_theory", curves.sensitivity_av));
                out.push(point("s_over_r_theory", curves.sensitivity_av / curves.risk));
            }
            TheoryMetric::Shift => {
                out.push(point("risk_theory", curves.risk));
                out.push(point("ratio_targeted_theory", curves.shift.targeted_ratio));
                out.push(point("ratio_independent_theory", curves.shift.independent_ratio));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_sweep() -> EmpiricalSweep {
        EmpiricalSweep {
            d: 10,
            n_over_d: 2.0,
            width_over_n_grid: vec![0.5, 2.0],
            activation: Activation::Relu,
            r: 1.0,
            s: 0.0,
            lambda: 0.0,
            delta: 1.0,
            replicates: 3,
            n_test: 400,
            master_seed: 5,
            cell_offset: 0,
        }
    }

    #[test]
    fn risk_curve_produces_one_row_per_grid_point() {
        let rows = risk_curve(&tiny_sweep()).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.metric == "risk_mc" && r.mean.is_finite()));
    }

    #[test]
    fn sweeps_are_reproducible() {
        let a = shift_curve(&tiny_sweep()).unwrap();
        let b = shift_curve(&tiny_sweep()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.mean.to_bits(), y.mean.to_bits(), "{} differs", x.metric);
        }
    }

    #[test]
    fn theory_rows_align_with_empirical_grid() {
        let sweep = TheorySweep {
            zeta: None,
            activation: Activation::Relu,
            n_over_d: 2.0,
            width_over_n_grid: vec![0.5, 2.0],
            lambda_bar: 0.0,
            r: 1.0,
            s: 0.0,
            delta: 1.0,
            g1_convention: G1Convention::default(),
        };
        let rows = theory_curve(&sweep, TheoryMetric::Shift).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].n_over_d, 2.0);
        assert_eq!(rows[0].width_over_n, 0.5);
        assert!(rows[0].metric.ends_with("_provisional"));
        assert!(!rows[3].metric.ends_with("_provisional"));
        assert!(rows.iter().all(|r| r.replicates == 0 && r.mc_stderr == 0.0));
    }
}
