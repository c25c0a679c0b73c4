//! Correlated-feature-cluster study: representative choice is harmless on
//! iid data and decisive under correlation shift.
//!
//! The population has `k` clusters of `m` exchangeable variants with
//! equicorrelation `rho_train` in the training domain and `rho_shift` in the
//! shifted domain; the outcome depends only on one causal variant per
//! cluster, identically in every domain. A model that selects one
//! representative per cluster rides proxy correlations: at high `rho_train`
//! all selections look equivalent in-domain, but the proxies decay to
//! `rho_shift` out of domain.
//!
//! Ridge fits over many representative sets reuse per-fold Gram matrices of
//! the full variant matrix, so each set costs one small SPD solve per fold
//! and lambda.

use crate::exec;
use crate::rng::derive_rng;
use ndarray::{Array1, Array2, Axis};
use ndarray_linalg::SolveC;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("invalid cluster config: {0}")]
    InvalidConfig(String),
    #[error("singular design after selection: {0}")]
    SingularDesign(String),
    #[error("heuristic split needs at least 2 rows, got {0}")]
    SplitTooSmall(usize),
}

/// Synthetic population layout and sampling parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterPopulationConfig {
    pub k_clusters: usize,
    pub m_per_cluster: usize,
    /// Within-cluster correlation in the training (and iid test) domain.
    pub rho_train: f64,
    /// Within-cluster correlation in the shifted domain.
    pub rho_shift: f64,
    /// Which variant in each cluster carries the true effect.
    pub causal_index: usize,
    /// Per-cluster coefficient on the causal variant.
    pub effect_sizes: Vec<f64>,
    pub n_train: usize,
    pub n_test: usize,
    pub n_shift: usize,
    pub noise_std: f64,
}

impl ClusterPopulationConfig {
    pub fn validate(&self) -> Result<(), ClusterError> {
        if self.k_clusters < 1 || self.m_per_cluster < 1 {
            return Err(ClusterError::InvalidConfig("need k_clusters >= 1 and m_per_cluster >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.rho_train) || !(0.0..1.0).contains(&self.rho_shift) {
            return Err(ClusterError::InvalidConfig(format!(
                "equicorrelation must lie in [0, 1) to stay positive semi-definite, got rho_train={}, rho_shift={}",
                self.rho_train, self.rho_shift
            )));
        }
        if self.rho_shift > self.rho_train {
            return Err(ClusterError::InvalidConfig(format!(
                "rho_shift = {} must not exceed rho_train = {}",
                self.rho_shift, self.rho_train
            )));
        }
        if self.causal_index >= self.m_per_cluster {
            return Err(ClusterError::InvalidConfig(format!(
                "causal_index = {} out of range for m_per_cluster = {}",
                self.causal_index, self.m_per_cluster
            )));
        }
        if self.effect_sizes.len() != self.k_clusters {
            return Err(ClusterError::InvalidConfig(format!(
                "effect_sizes has {} entries for {} clusters",
                self.effect_sizes.len(),
                self.k_clusters
            )));
        }
        if self.n_train < 10 || self.n_test < 2 || self.n_shift < 2 {
            return Err(ClusterError::InvalidConfig("sample counts too small".into()));
        }
        if self.noise_std < 0.0 {
            return Err(ClusterError::InvalidConfig("noise_std must be >= 0".into()));
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.k_clusters * self.m_per_cluster
    }

    /// Column index of variant `v` in cluster `c`.
    pub fn column(&self, cluster: usize, variant: usize) -> usize {
        cluster * self.m_per_cluster + variant
    }
}

/// A sampled feature/outcome dataset; columns are cluster-major.
#[derive(Debug, Clone)]
pub struct ClusterDataset {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
}

/// Train, iid test, and shifted test draws from one population.
#[derive(Debug, Clone)]
pub struct Population {
    pub train: ClusterDataset,
    pub iid_test: ClusterDataset,
    pub shifted_test: ClusterDataset,
}

fn sample_domain(
    config: &ClusterPopulationConfig,
    n: usize,
    rho: f64,
    rng: &mut impl Rng,
) -> ClusterDataset {
    let (k, m) = (config.k_clusters, config.m_per_cluster);
    let mut x = Array2::<f64>::zeros((n, k * m));
    let mut y = Array1::<f64>::zeros(n);
    let shared = rho.sqrt();
    let own = (1.0 - rho).sqrt();
    for e in 0..n {
        for c in 0..k {
            let z: f64 = rng.sample(StandardNormal);
            for v in 0..m {
                let xi: f64 = rng.sample(StandardNormal);
                x[(e, c * m + v)] = shared * z + own * xi;
            }
            y[e] += config.effect_sizes[c] * x[(e, c * m + config.causal_index)];
        }
        if config.noise_std > 0.0 {
            let g: f64 = rng.sample(StandardNormal);
            y[e] += config.noise_std * g;
        }
    }
    ClusterDataset { x, y }
}

/// Sample all three domains. The causal mechanism is shared; only the
/// within-cluster correlation differs between train/iid and shifted.
pub fn generate_population(
    config: &ClusterPopulationConfig,
    rng: &mut impl Rng,
) -> Result<Population, ClusterError> {
    config.validate()?;
    Ok(Population {
        train: sample_domain(config, config.n_train, config.rho_train, rng),
        iid_test: sample_domain(config, config.n_test, config.rho_train, rng),
        shifted_test: sample_domain(config, config.n_shift, config.rho_shift, rng),
    })
}

/// How to choose one representative per cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepresentativeMode {
    Random,
    /// Largest absolute marginal association with the outcome on a held-out
    /// split of the training set (stand-in for an index-variant heuristic).
    IndexHeuristic,
}

/// One representative variant per cluster.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepresentativeSet {
    pub choice: Vec<usize>,
    pub heuristic_flag: bool,
}

impl RepresentativeSet {
    pub fn columns(&self, config: &ClusterPopulationConfig) -> Vec<usize> {
        self.choice
            .iter()
            .enumerate()
            .map(|(c, &v)| config.column(c, v))
            .collect()
    }
}

/// Draw a representative set.
///
/// `Random` picks uniformly per cluster from `rng`. `IndexHeuristic` scores
/// each variant by `|cov(y, x)|` on the last `heuristic_split_frac` fraction
/// of the training rows and takes the per-cluster argmax.
pub fn sample_representatives(
    config: &ClusterPopulationConfig,
    mode: RepresentativeMode,
    train: &ClusterDataset,
    heuristic_split_frac: f64,
    rng: &mut impl Rng,
) -> Result<RepresentativeSet, ClusterError> {
    config.validate()?;
    match mode {
        RepresentativeMode::Random => Ok(RepresentativeSet {
            choice: (0..config.k_clusters).map(|_| rng.gen_range(0..config.m_per_cluster)).collect(),
            heuristic_flag: false,
        }),
        RepresentativeMode::IndexHeuristic => {
            let n = train.y.len();
            let split = ((heuristic_split_frac * n as f64).round() as usize).min(n);
            if split < 2 {
                return Err(ClusterError::SplitTooSmall(split));
            }
            let start = n - split;
            let xs = train.x.slice(ndarray::s![start.., ..]);
            let ys = train.y.slice(ndarray::s![start..]);
            let y_mean = ys.sum() / split as f64;
            let mut choice = Vec::with_capacity(config.k_clusters);
            for c in 0..config.k_clusters {
                let mut best = (0usize, f64::NEG_INFINITY);
                for v in 0..config.m_per_cluster {
                    let col = xs.column(config.column(c, v));
                    let x_mean = col.sum() / split as f64;
                    let cov: f64 = col
                        .iter()
                        .zip(ys.iter())
                        .map(|(x, y)| (x - x_mean) * (y - y_mean))
                        .sum::<f64>()
                        / split as f64;
                    if cov.abs() > best.1 {
                        best = (v, cov.abs());
                    }
                }
                choice.push(best.0);
            }
            Ok(RepresentativeSet { choice, heuristic_flag: true })
        }
    }
}

/// Cross-validated ridge over column subsets, with per-fold Gram matrices of
/// the full design precomputed once.
pub struct RidgeCvFitter {
    folds: usize,
    n: usize,
    gram: Array2<f64>,
    xty: Array1<f64>,
    col_sums: Array1<f64>,
    y_sum: f64,
    fold_gram: Vec<Array2<f64>>,
    fold_xty: Vec<Array1<f64>>,
    fold_col_sums: Vec<Array1<f64>>,
    fold_y_sum: Vec<f64>,
    fold_yy: Vec<f64>,
    fold_n: Vec<usize>,
}

/// A fitted ridge model on selected columns.
#[derive(Debug, Clone)]
pub struct FittedRidge {
    pub columns: Vec<usize>,
    pub weights: Array1<f64>,
    pub intercept: f64,
    pub lambda: f64,
}

impl RidgeCvFitter {
    /// Rows are assigned to folds round-robin (`row % folds`).
    pub fn new(train: &ClusterDataset, folds: usize) -> Result<Self, ClusterError> {
        let n = train.y.len();
        if folds < 2 || n < 2 * folds {
            return Err(ClusterError::InvalidConfig(format!(
                "need folds >= 2 and n >= 2*folds, got folds={folds}, n={n}"
            )));
        }
        let p = train.x.ncols();
        let gram = train.x.t().dot(&train.x);
        let xty = train.x.t().dot(&train.y);
        let col_sums = train.x.sum_axis(Axis(0));
        let y_sum = train.y.sum();

        let mut fold_gram = Vec::with_capacity(folds);
        let mut fold_xty = Vec::with_capacity(folds);
        let mut fold_col_sums = Vec::with_capacity(folds);
        let mut fold_y_sum = Vec::with_capacity(folds);
        let mut fold_yy = Vec::with_capacity(folds);
        let mut fold_n = Vec::with_capacity(folds);
        for f in 0..folds {
            let rows: Vec<usize> = (f..n).step_by(folds).collect();
            let xf = train.x.select(Axis(0), &rows);
            let yf = train.y.select(Axis(0), &rows);
            fold_gram.push(xf.t().dot(&xf));
            fold_xty.push(xf.t().dot(&yf));
            fold_col_sums.push(xf.sum_axis(Axis(0)));
            fold_y_sum.push(yf.sum());
            fold_yy.push(yf.dot(&yf));
            fold_n.push(rows.len());
        }
        let _ = p;
        Ok(Self {
            folds,
            n,
            gram,
            xty,
            col_sums,
            y_sum,
            fold_gram,
            fold_xty,
            fold_col_sums,
            fold_y_sum,
            fold_yy,
            fold_n,
        })
    }

    fn solve_centered(
        gram: &Array2<f64>,
        xty: &Array1<f64>,
        col_sums: &Array1<f64>,
        y_sum: f64,
        n: usize,
        cols: &[usize],
        lambda: f64,
    ) -> Result<(Array1<f64>, f64), ClusterError> {
        let k = cols.len();
        let nf = n as f64;
        let mu: Vec<f64> = cols.iter().map(|&c| col_sums[c] / nf).collect();
        let y_mean = y_sum / nf;
        let mut a = Array2::<f64>::zeros((k, k));
        for (i, &ci) in cols.iter().enumerate() {
            for (j, &cj) in cols.iter().enumerate() {
                a[(i, j)] = gram[(ci, cj)] / nf - mu[i] * mu[j];
            }
            a[(i, i)] += lambda;
        }
        let b = Array1::from_iter(cols.iter().enumerate().map(|(i, &c)| xty[c] / nf - mu[i] * y_mean));
        let w = a
            .solvec(&b)
            .map_err(|e| ClusterError::SingularDesign(format!("spd solve failed: {e}")))?;
        let intercept = y_mean - w.iter().zip(&mu).map(|(wi, m)| wi * m).sum::<f64>();
        Ok((w, intercept))
    }

    /// Pick lambda by k-fold CV over `lambda_grid` and refit on all rows.
    pub fn fit(&self, cols: &[usize], lambda_grid: &[f64]) -> Result<FittedRidge, ClusterError> {
        if lambda_grid.is_empty() || lambda_grid.iter().any(|&l| l <= 0.0) {
            return Err(ClusterError::InvalidConfig("lambda grid must be non-empty and positive".into()));
        }
        let mut best = (f64::INFINITY, lambda_grid[0]);
        for &lambda in lambda_grid {
            let mut sse = 0.0;
            for f in 0..self.folds {
                let ntr = self.n - self.fold_n[f];
                let gram = &self.gram - &self.fold_gram[f];
                let xty = &self.xty - &self.fold_xty[f];
                let col_sums = &self.col_sums - &self.fold_col_sums[f];
                let y_sum = self.y_sum - self.fold_y_sum[f];
                let (w, b) = Self::solve_centered(&gram, &xty, &col_sums, y_sum, ntr, cols, lambda)?;
                // validation SSE from fold moments
                let gf = &self.fold_gram[f];
                let cf = &self.fold_xty[f];
                let sf = &self.fold_col_sums[f];
                let mut wgw = 0.0;
                let mut wc = 0.0;
                let mut ws = 0.0;
                for (i, &ci) in cols.iter().enumerate() {
                    wc += w[i] * cf[ci];
                    ws += w[i] * sf[ci];
                    for (j, &cj) in cols.iter().enumerate() {
                        wgw += w[i] * gf[(ci, cj)] * w[j];
                    }
                }
                sse += self.fold_yy[f] - 2.0 * (wc + b * self.fold_y_sum[f])
                    + wgw
                    + 2.0 * b * ws
                    + self.fold_n[f] as f64 * b * b;
            }
            if sse < best.0 {
                best = (sse, lambda);
            }
        }
        let (w, intercept) =
            Self::solve_centered(&self.gram, &self.xty, &self.col_sums, self.y_sum, self.n, cols, best.1)?;
        Ok(FittedRidge { columns: cols.to_vec(), weights: w, intercept, lambda: best.1 })
    }
}

/// `MSE / Var(y_eval)` of a fitted model on an evaluation set.
pub fn nmse(model: &FittedRidge, eval: &ClusterDataset) -> f64 {
    let n = eval.y.len() as f64;
    let mut sse = 0.0;
    for (row, y) in eval.x.rows().into_iter().zip(eval.y.iter()) {
        let pred = model
            .columns
            .iter()
            .zip(model.weights.iter())
            .map(|(&c, w)| row[c] * w)
            .sum::<f64>()
            + model.intercept;
        sse += (y - pred) * (y - pred);
    }
    let y_mean = eval.y.sum() / n;
    let var = eval.y.iter().map(|y| (y - y_mean) * (y - y_mean)).sum::<f64>() / n;
    (sse / n) / var
}

/// NMSE of predicting the training mean (the empty feature set baseline).
pub fn nmse_intercept_only(train: &ClusterDataset, eval: &ClusterDataset) -> f64 {
    let mean = train.y.sum() / train.y.len() as f64;
    let n = eval.y.len() as f64;
    let sse: f64 = eval.y.iter().map(|y| (y - mean) * (y - mean)).sum();
    let y_mean = eval.y.sum() / n;
    let var = eval.y.iter().map(|y| (y - y_mean) * (y - y_mean)).sum::<f64>() / n;
    (sse / n) / var
}

/// Fit on selected representatives with CV-chosen lambda, then report NMSE on
/// each evaluation set.
pub fn fit_and_evaluate(
    train: &ClusterDataset,
    evals: &[&ClusterDataset],
    config: &ClusterPopulationConfig,
    representatives: &RepresentativeSet,
    lambda_grid: &[f64],
    cv_folds: usize,
) -> Result<Vec<f64>, ClusterError> {
    let fitter = RidgeCvFitter::new(train, cv_folds)?;
    let model = fitter.fit(&representatives.columns(config), lambda_grid)?;
    Ok(evals.iter().map(|e| nmse(&model, e)).collect())
}

/// Full demo configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemoConfig {
    pub population: ClusterPopulationConfig,
    pub n_sets: usize,
    pub heuristic_split_frac: f64,
    pub lambda_grid: Vec<f64>,
    pub cv_folds: usize,
}

/// One representative set's scores; rows of the demo output CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SetResult {
    pub set_id: usize,
    pub is_heuristic: bool,
    pub nmse_train: f64,
    pub nmse_iid: f64,
    pub nmse_shift: f64,
}

/// Run the sweep: `n_sets` random representative sets plus the heuristic set
/// (emitted last, `set_id = n_sets`).
pub fn run_demo(config: &DemoConfig, master_seed: u64) -> Result<Vec<SetResult>, ClusterError> {
    config.population.validate()?;
    if config.n_sets < 2 {
        return Err(ClusterError::InvalidConfig("need n_sets >= 2".into()));
    }
    let mut rng_pop = derive_rng(master_seed, "cluster.pop", 0);
    let pop = generate_population(&config.population, &mut rng_pop)?;
    let fitter = RidgeCvFitter::new(&pop.train, config.cv_folds)?;

    let evaluate = |set: &RepresentativeSet| -> Result<(f64, f64, f64), ClusterError> {
        let model = fitter.fit(&set.columns(&config.population), &config.lambda_grid)?;
        Ok((nmse(&model, &pop.train), nmse(&model, &pop.iid_test), nmse(&model, &pop.shifted_test)))
    };

    let mut results: Vec<SetResult> = exec::map_indexed(config.n_sets, |set_id| {
        let mut rng = derive_rng(master_seed, "cluster.set", set_id as u64);
        let set = sample_representatives(
            &config.population,
            RepresentativeMode::Random,
            &pop.train,
            config.heuristic_split_frac,
            &mut rng,
        )?;
        let (t, i, s) = evaluate(&set)?;
        Ok(SetResult { set_id, is_heuristic: false, nmse_train: t, nmse_iid: i, nmse_shift: s })
    })
    .into_iter()
    .collect::<Result<Vec<_>, ClusterError>>()?;

    let mut rng_h = derive_rng(master_seed, "cluster.heuristic", 0);
    let heuristic = sample_representatives(
        &config.population,
        RepresentativeMode::IndexHeuristic,
        &pop.train,
        config.heuristic_split_frac,
        &mut rng_h,
    )?;
    let (t, i, s) = evaluate(&heuristic)?;
    results.push(SetResult {
        set_id: config.n_sets,
        is_heuristic: true,
        nmse_train: t,
        nmse_iid: i,
        nmse_shift: s,
    });
    Ok(results)
}
