//! `underlab rf {train, risk, shift-curve, sensitivity-curve, theory-curve}`.
//!
//! Curve commands emit the shared CSV schema
//! `(n_over_d, width_over_n, metric, mean, mc_stderr, replicates)`; theory
//! files align column-for-column with the empirical ones so overlays join on
//! the first two columns. Defaults mirror the published figure settings
//! (d = 80 for the shift figure, d = 40 for the sensitivity figure).

use clap::{Args, Subcommand};
use serde::Serialize;
use std::path::Path;
use underlab_core::activation::{activation_moments, Activation};
use underlab_core::rf::empirical::{estimate_risk, sample_dataset, train_predictor, RfConfig};
use underlab_core::rf::experiments::{
    risk_curve, sensitivity_curve, shift_curve, theory_curve, CurvePoint, EmpiricalSweep,
    TheoryMetric, TheorySweep,
};
use underlab_core::rf::theory::G1Convention;
use underlab_core::rng::derive_rng;

use crate::output::{fmt_f64, write_csv, write_json};
use crate::{CliError, RunOutcome};

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    /// Input dimension d.
    #[arg(long, default_value_t = 80)]
    d: usize,
    /// psi2 = n/d.
    #[arg(long, default_value_t = 5.0)]
    n_over_d: f64,
    /// Comma-separated N/n grid.
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1.0,1.5,2.0,3.0,4.0,6.0,8.0")]
    width_over_n_grid: Vec<f64>,
    #[arg(long, default_value = "relu")]
    activation: Activation,
    /// Signal norm ||beta0||.
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    /// Label noise standard deviation.
    #[arg(long, default_value_t = 0.0)]
    s: f64,
    /// Ridge lambda (0 = min-norm / least squares).
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Mean-shift magnitude for shift curves.
    #[arg(long, default_value_t = 2.6)]
    delta: f64,
    #[arg(long, default_value_t = 50)]
    replicates: usize,
    /// Monte Carlo test points per risk/sensitivity estimate.
    #[arg(long, default_value_t = 20000)]
    n_test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SweepArgs {
    fn sweep(&self) -> EmpiricalSweep {
        EmpiricalSweep {
            d: self.d,
            n_over_d: self.n_over_d,
            width_over_n_grid: self.width_over_n_grid.clone(),
            activation: self.activation,
            r: self.r,
            s: self.s,
            lambda: self.lambda,
            delta: self.delta,
            replicates: self.replicates,
            n_test: self.n_test,
            master_seed: self.seed,
            cell_offset: 0,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum RfCmd {
    /// Train a single predictor and write a JSON summary.
    Train {
        #[arg(long, default_value_t = 80)]
        d: usize,
        #[arg(long, default_value_t = 5.0)]
        n_over_d: f64,
        /// N/n ratio for this single model.
        #[arg(long, default_value_t = 4.0)]
        width_over_n: f64,
        #[arg(long, default_value = "relu")]
        activation: Activation,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long, default_value_t = 0.0)]
        s: f64,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long, default_value_t = 20000)]
        n_test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
        #[arg(long, default_value = "rf_train.json")]
        out: String,
    },
    /// Monte Carlo in-distribution risk over an N/n grid.
    Risk {
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long, default_value = "rf_risk.csv")]
        out: String,
    },
    /// Targeted/independent mean-shift inflation curves (Monte Carlo).
    ShiftCurve {
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long, default_value = "rf_shift_curve.csv")]
        out: String,
    },
    /// Sensitivity between independently featurized predictors (Monte Carlo).
    SensitivityCurve {
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long, default_value = "rf_sensitivity_curve.csv")]
        out: String,
    },
    /// Analytic curves on the same grid/schema as the Monte Carlo commands.
    TheoryCurve {
        /// Which analytic family to emit.
        #[arg(long, value_enum)]
        metric: TheoryMetricArg,
        /// zeta = mu1/mu_star; "auto" derives it from --activation.
        #[arg(long, default_value = "auto")]
        zeta: String,
        #[arg(long, default_value = "relu")]
        activation: Activation,
        #[arg(long, default_value_t = 5.0)]
        psi2: f64,
        /// Comma-separated psi1 grid (width/d).
        #[arg(long, value_delimiter = ',', default_value = "1.25,2.5,5.0,7.5,10.0,15.0,20.0,30.0,40.0")]
        psi1_grid: Vec<f64>,
        /// lambda/mu_star^2 (0 = ridgeless limit path).
        #[arg(long, default_value_t = 0.0)]
        lambda_bar: f64,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long, default_value_t = 0.0)]
        s: f64,
        #[arg(long, default_value_t = 2.6)]
        delta: f64,
        /// Alternative reading of the G1 polynomial (comparison only).
        #[arg(long)]
        g1_constant_outside: bool,
        #[arg(long, default_value = "rf_theory_curve.csv")]
        out: String,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum TheoryMetricArg {
    Risk,
    Sensitivity,
    Shift,
}

impl From<TheoryMetricArg> for TheoryMetric {
    fn from(m: TheoryMetricArg) -> Self {
        match m {
            TheoryMetricArg::Risk => TheoryMetric::Risk,
            TheoryMetricArg::Sensitivity => TheoryMetric::Sensitivity,
            TheoryMetricArg::Shift => TheoryMetric::Shift,
        }
    }
}

fn write_curve_csv(path: &Path, points: &[CurvePoint]) -> Result<(), CliError> {
    write_csv(
        path,
        &["n_over_d", "width_over_n", "metric", "mean", "mc_stderr", "replicates"],
        points.iter().map(|p| {
            vec![
                fmt_f64(p.n_over_d),
                fmt_f64(p.width_over_n),
                p.metric.clone(),
                fmt_f64(p.mean),
                fmt_f64(p.mc_stderr),
                p.replicates.to_string(),
            ]
        }),
    )
}

fn curve_outcome(
    out_dir: &Path,
    out: &str,
    seed: Option<u64>,
    config: serde_json::Value,
    points: &[CurvePoint],
) -> Result<RunOutcome, CliError> {
    let path = out_dir.join(out);
    write_curve_csv(&path, points)?;
    Ok(RunOutcome {
        manifest_name: format!("{}.manifest.json", out.strip_suffix(".csv").unwrap_or(out)),
        master_seed: seed,
        config,
        outputs: vec![path],
    })
}

pub fn run(cmd: &RfCmd, out_dir: &Path) -> Result<RunOutcome, CliError> {
    match cmd {
        RfCmd::Train { d, n_over_d, width_over_n, activation, r, s, lambda, n_test, seed, json, out } => {
            let n = (n_over_d * *d as f64).round() as usize;
            let width = (width_over_n * n as f64).round() as usize;
            let config = RfConfig {
                d: *d,
                n,
                width,
                r: *r,
                s: *s,
                lambda: *lambda,
                activation: *activation,
            };
            let mut rng_data = derive_rng(*seed, "rf.data", 0);
            let mut rng_w = derive_rng(*seed, "rf.w", 0);
            let mut rng_eval = derive_rng(*seed, "rf.eval", 0);
            let data = sample_dataset(&config, &mut rng_data)?;
            let pred = train_predictor(&config, &data, &mut rng_w)?;
            let risk = estimate_risk(&pred, &data.beta0.view(), config.s, *n_test, &mut rng_eval)?;
            let train_pred = underlab_core::rf::empirical::predict(&pred, &data.x.view());
            let train_mse = train_pred
                .iter()
                .zip(data.y.iter())
                .map(|(f, y)| (f - y) * (f - y))
                .sum::<f64>()
                / n as f64;
            let report = serde_json::json!({
                "d": d, "n": n, "width": width,
                "psi1": config.psi1(), "psi2": config.psi2(),
                "activation": activation.to_string(),
                "r": r, "s": s, "lambda": lambda, "seed": seed,
                "moments": pred.moments,
                "theta_norm": pred.theta.dot(&pred.theta).sqrt(),
                "train_mse": train_mse,
                "risk_mc": risk.mean,
                "risk_mc_stderr": risk.stderr,
            });
            if *json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report"));
            } else {
                println!(
                    "trained d={d} n={n} N={width}: train mse {train_mse:.3e}, risk {:.4} +- {:.4}",
                    risk.mean, risk.stderr
                );
            }
            let path = out_dir.join(out);
            write_json(&path, &report)?;
            Ok(RunOutcome {
                manifest_name: format!("{}.manifest.json", out.strip_suffix(".json").unwrap_or(out)),
                master_seed: Some(*seed),
                config: report,
                outputs: vec![path],
            })
        }
        RfCmd::Risk { sweep, out } => {
            let points = risk_curve(&sweep.sweep())?;
            curve_outcome(out_dir, out, Some(sweep.seed), serde_json::to_value(sweep).unwrap(), &points)
        }
        RfCmd::ShiftCurve { sweep, out } => {
            let points = shift_curve(&sweep.sweep())?;
            curve_outcome(out_dir, out, Some(sweep.seed), serde_json::to_value(sweep).unwrap(), &points)
        }
        RfCmd::SensitivityCurve { sweep, out } => {
            let points = sensitivity_curve(&sweep.sweep())?;
            curve_outcome(out_dir, out, Some(sweep.seed), serde_json::to_value(sweep).unwrap(), &points)
        }
        RfCmd::TheoryCurve {
            metric,
            zeta,
            activation,
            psi2,
            psi1_grid,
            lambda_bar,
            r,
            s,
            delta,
            g1_constant_outside,
            out,
        } => {
            let zeta_value = if zeta == "auto" {
                None
            } else {
                Some(zeta.parse::<f64>().map_err(|_| {
                    CliError::Usage(format!("--zeta must be 'auto' or a number, got '{zeta}'"))
                })?)
            };
            // sanity-check auto mode early so degenerate activations fail clearly
            if zeta_value.is_none() {
                activation_moments(*activation)?;
            }
            let sweep = TheorySweep {
                zeta: zeta_value,
                activation: *activation,
                n_over_d: *psi2,
                width_over_n_grid: psi1_grid.iter().map(|p1| p1 / psi2).collect(),
                lambda_bar: *lambda_bar,
                r: *r,
                s: *s,
                delta: *delta,
                g1_convention: if *g1_constant_outside {
                    G1Convention::ConstantOutside
                } else {
                    G1Convention::ClosedAtEnd
                },
            };
            let points = theory_curve(&sweep, (*metric).into())?;
            curve_outcome(out_dir, out, None, serde_json::to_value(&sweep).unwrap(), &points)
        }
    }
}
