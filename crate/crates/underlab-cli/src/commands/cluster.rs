//! `underlab cluster demo`: the correlated-feature-cluster sweep.

use clap::Subcommand;
use std::path::{Path, PathBuf};
use underlab_core::cluster::{run_demo, DemoConfig};

use crate::output::{fmt_f64, write_csv};
use crate::{CliError, RunOutcome};

const DEFAULT_CONFIG: &str = include_str!("../../../../configs/cluster_default.json");

#[derive(Debug, Subcommand)]
pub enum ClusterCmd {
    /// Fit many representative sets and score them on train/iid/shifted data.
    Demo {
        /// JSON config; defaults to the embedded `configs/cluster_default.json`.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of random representative sets (the heuristic set is added on top).
        #[arg(long)]
        n_sets: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "cluster_demo.csv")]
        out: String,
    },
}

pub fn run(cmd: &ClusterCmd, out_dir: &Path) -> Result<RunOutcome, CliError> {
    match cmd {
        ClusterCmd::Demo { config, n_sets, seed, out } => {
            let text = match config {
                Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Io(p.display().to_string(), e))?,
                None => DEFAULT_CONFIG.to_string(),
            };
            let mut demo: DemoConfig =
                serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("cluster config: {e}")))?;
            if let Some(n) = n_sets {
                demo.n_sets = *n;
            }
            let results = run_demo(&demo, *seed)?;
            let path = out_dir.join(out);
            write_csv(
                &path,
                &["set_id", "is_heuristic", "nmse_train", "nmse_iid", "nmse_shift"],
                results.iter().map(|r| {
                    vec![
                        r.set_id.to_string(),
                        (r.is_heuristic as u8).to_string(),
                        fmt_f64(r.nmse_train),
                        fmt_f64(r.nmse_iid),
                        fmt_f64(r.nmse_shift),
                    ]
                }),
            )?;
            Ok(RunOutcome {
                manifest_name: format!("{}.manifest.json", out.strip_suffix(".csv").unwrap_or(out)),
                master_seed: Some(*seed),
                config: serde_json::to_value(&demo).expect("serializable config"),
                outputs: vec![path],
            })
        }
    }
}
