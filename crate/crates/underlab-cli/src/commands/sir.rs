//! `underlab sir {simulate, fit, ensemble}`.
//!
//! Scenario constants live in a JSON config (defaults embedded from
//! `configs/sir_default.json`); flags override config fields, config
//! overrides the built-in defaults.

use clap::{Args, Subcommand};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use underlab_core::rng::derive_rng;
use underlab_core::sir::{
    fit_sir, forecast_ensemble, growth_rate, simulate_sir, SirFitConfig, SirParams, SirScenario,
};

use crate::output::{fmt_f64, write_csv, write_json};
use crate::{CliError, RunOutcome};

const DEFAULT_CONFIG: &str = include_str!("../../../../configs/sir_default.json");

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthConfig {
    pub beta: f64,
    pub dur: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_members: usize,
    pub d0_min: f64,
    pub d0_max: f64,
}

/// Full scenario file: generating truth, integrator grid, fit settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SirFileConfig {
    pub truth: TruthConfig,
    pub scenario: SirScenario,
    pub horizon: f64,
    pub noise_std: f64,
    pub fit: SirFitConfig,
    pub ensemble: EnsembleConfig,
}

fn load_config(path: Option<&Path>) -> Result<SirFileConfig, CliError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Io(p.display().to_string(), e))?,
        None => DEFAULT_CONFIG.to_string(),
    };
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("sir config: {e}")))
}

#[derive(Debug, Args)]
pub struct CommonOverrides {
    /// JSON scenario config; defaults to the embedded `configs/sir_default.json`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Transmission rate of the generating truth.
    #[arg(long)]
    beta: Option<f64>,
    /// Mean infectious duration of the generating truth.
    #[arg(long)]
    dur: Option<f64>,
    #[arg(long)]
    n_pop: Option<f64>,
    #[arg(long)]
    i0: Option<f64>,
    #[arg(long)]
    r0: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Full simulation/forecast horizon.
    #[arg(long)]
    t_max: Option<f64>,
    /// Gaussian observation noise std on infections (0 = noiseless).
    #[arg(long)]
    noise_std: Option<f64>,
}

impl CommonOverrides {
    fn apply(&self, cfg: &mut SirFileConfig) {
        if let Some(v) = self.beta {
            cfg.truth.beta = v;
        }
        if let Some(v) = self.dur {
            cfg.truth.dur = v;
        }
        if let Some(v) = self.n_pop {
            cfg.scenario.n_pop = v;
        }
        if let Some(v) = self.i0 {
            cfg.scenario.i0 = v;
        }
        if let Some(v) = self.r0 {
            cfg.scenario.r0 = v;
        }
        if let Some(v) = self.dt {
            cfg.scenario.dt = v;
        }
        if let Some(v) = self.t_max {
            cfg.horizon = v;
        }
        if let Some(v) = self.noise_std {
            cfg.noise_std = v;
        }
    }
}

#[derive(Debug, Args)]
pub struct FitOverrides {
    #[arg(long)]
    t_obs: Option<f64>,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Initial infectious duration for the descent.
    #[arg(long)]
    d0_init: Option<f64>,
    /// Initial beta; omit to derive it from the observed growth rate.
    #[arg(long)]
    beta_init: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
}

impl FitOverrides {
    fn apply(&self, fit: &mut SirFitConfig) {
        if let Some(v) = self.t_obs {
            fit.t_obs = v;
        }
        if let Some(v) = self.step_size {
            fit.step_size = v;
        }
        if let Some(v) = self.max_iters {
            fit.max_iters = v;
        }
        if let Some(v) = self.d0_init {
            fit.d0_init = v;
        }
        if let Some(v) = self.beta_init {
            fit.beta_init = Some(v);
        }
        if let Some(v) = self.tol {
            fit.tol = v;
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum SirCmd {
    /// Integrate the SIR system and write the trajectory CSV (t,S,I,R).
    Simulate {
        #[command(flatten)]
        common: CommonOverrides,
        /// Output CSV name.
        #[arg(long, default_value = "sir_trajectory.csv")]
        out: String,
    },
    /// Fit (beta, D) to observed infections by gradient descent.
    Fit {
        #[command(flatten)]
        common: CommonOverrides,
        #[command(flatten)]
        fit: FitOverrides,
        /// Observations CSV with columns t,I (defaults to generating them
        /// from the configured truth).
        #[arg(long)]
        observations: Option<PathBuf>,
        /// Master seed for observation noise.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print the JSON fit report to stdout as well.
        #[arg(long)]
        json: bool,
        #[arg(long, default_value = "sir_fit.json")]
        out: String,
    },
    /// One fit + forecast per D0 sample; CSV has a member_id column.
    Ensemble {
        #[command(flatten)]
        common: CommonOverrides,
        #[command(flatten)]
        fit: FitOverrides,
        /// Explicit comma-separated D0 samples (overrides the sampled grid).
        #[arg(long, value_delimiter = ',')]
        d0_samples: Option<Vec<f64>>,
        /// Number of members when sampling D0 log-uniformly.
        #[arg(long)]
        n_members: Option<usize>,
        #[arg(long)]
        d0_min: Option<f64>,
        #[arg(long)]
        d0_max: Option<f64>,
        /// Master seed (D0 draws and observation noise).
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "sir_ensemble.csv")]
        out: String,
    },
}

/// JSON fit report.
#[derive(Debug, Serialize)]
struct FitReport {
    beta: f64,
    dur: f64,
    growth_rate: f64,
    final_mse: f64,
    final_nmse: f64,
    converged: bool,
    iterations: usize,
}

fn fit_report(fit: &underlab_core::sir::SirFit) -> FitReport {
    FitReport {
        beta: fit.params.beta,
        dur: fit.params.dur,
        growth_rate: growth_rate(&fit.params),
        final_mse: fit.final_mse,
        final_nmse: fit.final_nmse,
        converged: fit.converged,
        iterations: fit.iterations,
    }
}

fn generate_observations(cfg: &SirFileConfig, seed: u64) -> Result<Vec<f64>, CliError> {
    let truth = SirParams::new(cfg.truth.beta, cfg.truth.dur, cfg.scenario.n_pop)?;
    let traj = simulate_sir(&truth, &cfg.scenario.init(), cfg.fit.t_obs, cfg.scenario.dt)?;
    let mut obs = traj.i;
    if cfg.noise_std > 0.0 {
        let mut rng = derive_rng(seed, "sir.obs_noise", 0);
        for v in obs.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *v += cfg.noise_std * g;
        }
    }
    Ok(obs)
}

fn read_observations(path: &Path, cfg: &SirFileConfig) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| CliError::Usage(format!("observations: {e}")))?.clone();
    let i_col = headers
        .iter()
        .position(|h| h == "I" || h == "i" || h == "infections")
        .ok_or_else(|| CliError::Usage("observations CSV needs an I column".into()))?;
    let mut obs = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| CliError::Usage(format!("observations: {e}")))?;
        let v: f64 = record[i_col]
            .parse()
            .map_err(|_| CliError::Usage(format!("observations: '{}' is not a number", &record[i_col])))?;
        obs.push(v);
    }
    let expected = (cfg.fit.t_obs / cfg.scenario.dt).round() as usize + 1;
    if obs.len() != expected {
        return Err(CliError::Usage(format!(
            "observations cover {} points but t_obs/dt implies {expected}",
            obs.len()
        )));
    }
    Ok(obs)
}

fn config_snapshot(cfg: &SirFileConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("serializable config")
}

pub fn run(cmd: &SirCmd, out_dir: &Path) -> Result<RunOutcome, CliError> {
    match cmd {
        SirCmd::Simulate { common, out } => {
            let mut cfg = load_config(common.config.as_deref())?;
            common.apply(&mut cfg);
            let params = SirParams::new(cfg.truth.beta, cfg.truth.dur, cfg.scenario.n_pop)?;
            let traj = simulate_sir(&params, &cfg.scenario.init(), cfg.horizon, cfg.scenario.dt)?;
            let path = out_dir.join(out);
            write_csv(
                &path,
                &["t", "S", "I", "R"],
                (0..traj.times.len()).map(|k| {
                    vec![fmt_f64(traj.times[k]), fmt_f64(traj.s[k]), fmt_f64(traj.i[k]), fmt_f64(traj.r[k])]
                }),
            )?;
            Ok(RunOutcome {
                manifest_name: manifest_name(out),
                master_seed: None,
                config: config_snapshot(&cfg),
                outputs: vec![path],
            })
        }
        SirCmd::Fit { common, fit, observations, seed, json, out } => {
            let mut cfg = load_config(common.config.as_deref())?;
            common.apply(&mut cfg);
            fit.apply(&mut cfg.fit);
            let obs = match observations {
                Some(path) => read_observations(path, &cfg)?,
                None => generate_observations(&cfg, *seed)?,
            };
            let result = fit_sir(&obs, &cfg.scenario, &cfg.fit)?;
            let report = fit_report(&result);
            if *json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report"));
            } else {
                println!(
                    "beta = {:.6}, D = {:.6}, growth rate = {:.6}, final mse = {:.6e}, converged = {}",
                    report.beta, report.dur, report.growth_rate, report.final_mse, report.converged
                );
            }
            let path = out_dir.join(out);
            write_json(&path, &report)?;
            Ok(RunOutcome {
                manifest_name: manifest_name(out),
                master_seed: Some(*seed),
                config: config_snapshot(&cfg),
                outputs: vec![path],
            })
        }
        SirCmd::Ensemble {
            common,
            fit,
            d0_samples,
            n_members,
            d0_min,
            d0_max,
            seed,
            out,
        } => {
            let mut cfg = load_config(common.config.as_deref())?;
            common.apply(&mut cfg);
            fit.apply(&mut cfg.fit);
            if let Some(v) = n_members {
                cfg.ensemble.n_members = *v;
            }
            if let Some(v) = d0_min {
                cfg.ensemble.d0_min = *v;
            }
            if let Some(v) = d0_max {
                cfg.ensemble.d0_max = *v;
            }
            let samples = match d0_samples {
                Some(list) => list.clone(),
                None => {
                    // log-uniform D0 draws, one derived stream per member
                    let (lo, hi) = (cfg.ensemble.d0_min.ln(), cfg.ensemble.d0_max.ln());
                    (0..cfg.ensemble.n_members)
                        .map(|m| {
                            let mut rng = derive_rng(*seed, "sir.d0", m as u64);
                            (lo + (hi - lo) * rng.gen::<f64>()).exp()
                        })
                        .collect()
                }
            };
            let obs = generate_observations(&cfg, *seed)?;
            let members = forecast_ensemble(&obs, &cfg.scenario, &cfg.fit, &samples, cfg.horizon);

            let mut rows = Vec::new();
            let mut summaries = Vec::new();
            for (idx, member) in members.iter().enumerate() {
                match member {
                    Ok(m) => {
                        let (peak_t, peak_i) = m.forecast.peak();
                        summaries.push(serde_json::json!({
                            "member_id": m.member_id,
                            "d0_init": m.d0_init,
                            "fit": fit_report(&m.fit),
                            "peak_time": peak_t,
                            "peak_infections": peak_i,
                        }));
                        for k in 0..m.forecast.times.len() {
                            rows.push(vec![
                                fmt_f64(m.forecast.times[k]),
                                fmt_f64(m.forecast.s[k]),
                                fmt_f64(m.forecast.i[k]),
                                fmt_f64(m.forecast.r[k]),
                                m.member_id.to_string(),
                            ]);
                        }
                    }
                    Err(e) => summaries.push(serde_json::json!({
                        "member_id": idx,
                        "d0_init": samples[idx],
                        "error": e.to_string(),
                    })),
                }
            }
            let csv_path = out_dir.join(out);
            write_csv(&csv_path, &["t", "S", "I", "R", "member_id"], rows)?;
            let summary_path = out_dir.join(format!("{}.summary.json", stem(out)));
            write_json(&summary_path, &summaries)?;
            Ok(RunOutcome {
                manifest_name: manifest_name(out),
                master_seed: Some(*seed),
                config: config_snapshot(&cfg),
                outputs: vec![csv_path, summary_path],
            })
        }
    }
}

fn stem(name: &str) -> &str {
    name.strip_suffix(".csv").or_else(|| name.strip_suffix(".json")).unwrap_or(name)
}

fn manifest_name(out: &str) -> String {
    format!("{}.manifest.json", stem(out))
}
