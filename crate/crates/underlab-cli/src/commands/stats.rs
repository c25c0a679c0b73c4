//! `underlab stats {f, spearman, permute, disagree, weat}`.
//!
//! Inputs are header-named CSVs (see `underlab_core::stats::io`); each
//! command writes a JSON report and prints either a one-line summary or the
//! full report with `--json`.

use clap::Subcommand;
use serde::Serialize;
use std::fs::File;
use std::path::{Path, PathBuf};
use underlab_core::stats::{
    self, disagreement, f_statistic, io, mean_pairwise_disagreement, permutation_variance_test,
    spearman, weat, EmbeddingSets,
};

use crate::output::write_json;
use crate::{CliError, RunOutcome};

#[derive(Debug, Subcommand)]
pub enum StatsCmd {
    /// One-way F statistic of a metric across groups.
    F {
        /// Ensemble table CSV: predictor_id, group, <metric columns>.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        metric: String,
        #[arg(long)]
        json: bool,
        #[arg(long, default_value = "stats_f.json")]
        out: String,
    },
    /// Spearman rank correlation between two metric columns.
    Spearman {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        x_metric: String,
        #[arg(long)]
        y_metric: String,
        #[arg(long)]
        json: bool,
        #[arg(long, default_value = "stats_spearman.json")]
        out: String,
    },
    /// One-sided permutation test for within-stratum accuracy variance.
    Permute {
        /// Outcomes CSV: example_id, stratum, <0/1 predictor columns>.
        #[arg(long)]
        outcomes: PathBuf,
        #[arg(long)]
        stratum: String,
        #[arg(long, default_value_t = 10000)]
        n_perm: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
        #[arg(long, default_value = "stats_permute.json")]
        out: String,
    },
    /// Pairwise disagreement between predictor label columns.
    Disagree {
        /// Labels CSV: example_id, <predictor columns> (integer labels).
        #[arg(long)]
        labels: PathBuf,
        /// Restrict to one pair, e.g. --pair p0,p1 (default: all pairs).
        #[arg(long)]
        pair: Option<String>,
        #[arg(long)]
        json: bool,
        #[arg(long, default_value = "stats_disagree.json")]
        out: String,
    },
    /// WEAT differential association score with a permutation p-value.
    Weat {
        /// Embeddings CSV: token, <float columns>.
        #[arg(long)]
        embeddings: PathBuf,
        /// Comma-separated token lists.
        #[arg(long)]
        target_x: String,
        #[arg(long)]
        target_y: String,
        #[arg(long)]
        attr_a: String,
        #[arg(long)]
        attr_b: String,
        #[arg(long, default_value_t = 10000)]
        n_perm: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
        #[arg(long, default_value = "stats_weat.json")]
        out: String,
    },
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::Io(path.display().to_string(), e))
}

fn finish<T: Serialize>(
    out_dir: &Path,
    out: &str,
    report: &T,
    json: bool,
    line: String,
    seed: Option<u64>,
    config: serde_json::Value,
) -> Result<RunOutcome, CliError> {
    if json {
        println!("{}", serde_json::to_string_pretty(report).expect("report"));
    } else {
        println!("{line}");
    }
    let path = out_dir.join(out);
    write_json(&path, report)?;
    Ok(RunOutcome {
        manifest_name: format!("{}.manifest.json", out.strip_suffix(".json").unwrap_or(out)),
        master_seed: seed,
        config,
        outputs: vec![path],
    })
}

/// Labels file: example_id plus one integer column per predictor.
fn read_labels(path: &Path) -> Result<(Vec<String>, Vec<Vec<i64>>), CliError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let headers = rdr.headers().map_err(|e| CliError::Usage(format!("labels: {e}")))?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 2 || cols[0] != "example_id" {
        return Err(CliError::Usage("labels CSV needs header: example_id, <predictor columns>".into()));
    }
    let ids: Vec<String> = cols[1..].iter().map(|s| s.to_string()).collect();
    let mut columns: Vec<Vec<i64>> = vec![Vec::new(); ids.len()];
    for record in rdr.records() {
        let record = record.map_err(|e| CliError::Usage(format!("labels: {e}")))?;
        for (p, field) in record.iter().skip(1).enumerate() {
            let v: i64 = field
                .parse()
                .map_err(|_| CliError::Usage(format!("labels: '{field}' is not an integer")))?;
            columns[p].push(v);
        }
    }
    Ok((ids, columns))
}

pub fn run(cmd: &StatsCmd, out_dir: &Path) -> Result<RunOutcome, CliError> {
    match cmd {
        StatsCmd::F { input, metric, json, out } => {
            let table = io::read_table(open(input)?)?;
            let result = f_statistic(&table, metric)?;
            if result.dropped_rows > 0 {
                eprintln!("warning: dropped {} rows with missing '{metric}' cells", result.dropped_rows);
            }
            let line = format!(
                "F({}, {}) = {:.4}, descriptive p = {:.3e}",
                result.df_between, result.df_within, result.f, result.p
            );
            finish(
                out_dir,
                out,
                &result,
                *json,
                line,
                None,
                serde_json::json!({"input": input.display().to_string(), "metric": metric}),
            )
        }
        StatsCmd::Spearman { input, x_metric, y_metric, json, out } => {
            let table = io::read_table(open(input)?)?;
            let x_col = table.metric(x_metric)?;
            let y_col = table.metric(y_metric)?;
            let mut dropped = 0usize;
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            for (x, y) in x_col.iter().zip(y_col) {
                match (x, y) {
                    (Some(x), Some(y)) => {
                        xs.push(*x);
                        ys.push(*y);
                    }
                    _ => dropped += 1,
                }
            }
            if dropped > 0 {
                eprintln!("warning: dropped {dropped} rows with missing cells");
            }
            let result = spearman(&xs, &ys)?;
            let line = format!(
                "Spearman rho = {:.4}, 95% CI ({:.4}, {:.4}), n = {}",
                result.rho, result.ci_low, result.ci_high, result.n
            );
            finish(
                out_dir,
                out,
                &result,
                *json,
                line,
                None,
                serde_json::json!({"input": input.display().to_string(), "x": x_metric, "y": y_metric}),
            )
        }
        StatsCmd::Permute { outcomes, stratum, n_perm, seed, json, out } => {
            let data = io::read_outcomes(open(outcomes)?)?;
            let result = permutation_variance_test(&data, stratum, *n_perm, *seed)?;
            let line = format!(
                "stratum '{stratum}': accuracy variance {:.6e}, one-sided p = {:.4}{}",
                result.observed,
                result.p,
                if result.exact { " (exact)" } else { "" }
            );
            finish(
                out_dir,
                out,
                &result,
                *json,
                line,
                Some(*seed),
                serde_json::json!({
                    "outcomes": outcomes.display().to_string(),
                    "stratum": stratum,
                    "n_perm": n_perm,
                }),
            )
        }
        StatsCmd::Disagree { labels, pair, json, out } => {
            let (ids, columns) = read_labels(labels)?;
            #[derive(Serialize)]
            struct PairRow {
                a: String,
                b: String,
                disagreement: f64,
            }
            #[derive(Serialize)]
            struct Report {
                pairs: Vec<PairRow>,
                mean: f64,
            }
            let report = match pair {
                Some(spec) => {
                    let (a, b) = spec
                        .split_once(',')
                        .ok_or_else(|| CliError::Usage("--pair expects 'a,b'".into()))?;
                    let find = |name: &str| {
                        ids.iter()
                            .position(|i| i == name.trim())
                            .ok_or_else(|| CliError::Usage(format!("predictor '{name}' not in labels file")))
                    };
                    let (ia, ib) = (find(a)?, find(b)?);
                    let d = disagreement(&columns[ia], &columns[ib])?;
                    Report {
                        pairs: vec![PairRow { a: ids[ia].clone(), b: ids[ib].clone(), disagreement: d }],
                        mean: d,
                    }
                }
                None => {
                    let mut pairs = Vec::new();
                    for i in 0..ids.len() {
                        for j in i + 1..ids.len() {
                            pairs.push(PairRow {
                                a: ids[i].clone(),
                                b: ids[j].clone(),
                                disagreement: disagreement(&columns[i], &columns[j])?,
                            });
                        }
                    }
                    let mean = mean_pairwise_disagreement(&columns)?;
                    Report { pairs, mean }
                }
            };
            let line = format!("mean pairwise disagreement = {:.4} over {} pair(s)", report.mean, report.pairs.len());
            finish(
                out_dir,
                out,
                &report,
                *json,
                line,
                None,
                serde_json::json!({"labels": labels.display().to_string()}),
            )
        }
        StatsCmd::Weat { embeddings, target_x, target_y, attr_a, attr_b, n_perm, seed, json, out } => {
            let emb = io::read_embeddings(open(embeddings)?)?;
            let sets = EmbeddingSets {
                target_x: io::lookup_tokens(&emb, target_x)?,
                target_y: io::lookup_tokens(&emb, target_y)?,
                attr_a: io::lookup_tokens(&emb, attr_a)?,
                attr_b: io::lookup_tokens(&emb, attr_b)?,
            };
            let result: stats::WeatResult = weat(&sets, *n_perm, *seed)?;
            let line = format!(
                "WEAT score = {:.4}, effect size = {:.4}, one-sided p = {:.4}{}",
                result.score,
                result.effect,
                result.p,
                if result.exact { " (exact)" } else { "" }
            );
            finish(
                out_dir,
                out,
                &result,
                *json,
                line,
                Some(*seed),
                serde_json::json!({
                    "embeddings": embeddings.display().to_string(),
                    "target_x": target_x, "target_y": target_y,
                    "attr_a": attr_a, "attr_b": attr_b,
                    "n_perm": n_perm,
                }),
            )
        }
    }
}
