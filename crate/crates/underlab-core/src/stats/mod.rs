//! Stress-test protocol statistics for predictor ensembles.
//!
//! These are the descriptive statistics used to decide whether variation
//! across an ensemble of near-equivalent predictors is systematic: a one-way
//! F statistic across seed groups, Spearman rank correlation with a Fisher-z
//! interval, a one-sided permutation test for within-stratum accuracy
//! variance, pairwise disagreement, and the WEAT differential-association
//! score for embedding sets. P-values here are descriptive, not inferential.

pub mod io;

use crate::rng::derive_rng;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("unknown metric column '{0}'")]
    UnknownMetric(String),
    #[error("need at least 2 groups with at least 2 rows each, got {0}")]
    NotEnoughGroups(String),
    #[error("degenerate metric: all values identical, F is undefined")]
    DegenerateValues,
    #[error("need equal-length inputs with at least {min} points, got {got}")]
    TooFewPoints { min: usize, got: usize },
    #[error("input lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("constant input vector: ranks are undefined")]
    ConstantInput,
    #[error("stratum '{0}' matches no examples")]
    EmptyStratum(String),
    #[error("stratum '{0}' covers every example; shuffling would be a no-op")]
    StratumIsEverything(String),
    #[error("need n_perm >= 1000, got {0}")]
    TooFewPermutations(usize),
    #[error("embedding set {0} is empty")]
    EmptySet(&'static str),
    #[error("zero vector for token '{0}' cannot be normalized")]
    ZeroVector(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("csv: {0}")]
    Csv(String),
}

/// Predictor-by-metric table with a grouping label per row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleTable {
    pub predictor_ids: Vec<String>,
    pub groups: Vec<String>,
    pub metric_names: Vec<String>,
    /// `values[metric][row]`; `None` marks a missing cell.
    values: Vec<Vec<Option<f64>>>,
}

impl EnsembleTable {
    pub fn new(
        predictor_ids: Vec<String>,
        groups: Vec<String>,
        metric_names: Vec<String>,
        values: Vec<Vec<Option<f64>>>,
    ) -> Result<Self, StatsError> {
        assert_eq!(groups.len(), predictor_ids.len());
        for (name, col) in metric_names.iter().zip(&values) {
            assert_eq!(col.len(), predictor_ids.len());
            if col.iter().flatten().any(|v| !v.is_finite()) {
                return Err(StatsError::NonFinite(format!("metric '{name}'")));
            }
        }
        Ok(Self { predictor_ids, groups, metric_names, values })
    }

    pub fn metric(&self, name: &str) -> Result<&[Option<f64>], StatsError> {
        self.metric_names
            .iter()
            .position(|m| m == name)
            .map(|i| self.values[i].as_slice())
            .ok_or_else(|| StatsError::UnknownMetric(name.to_string()))
    }

    /// Rows of `(group, value)` for a metric, with missing cells dropped.
    /// The second element counts the dropped rows.
    pub fn metric_by_group(&self, name: &str) -> Result<(Vec<(&str, f64)>, usize), StatsError> {
        let col = self.metric(name)?;
        let mut rows = Vec::with_capacity(col.len());
        let mut dropped = 0;
        for (g, v) in self.groups.iter().zip(col) {
            match v {
                Some(v) => rows.push((g.as_str(), *v)),
                None => dropped += 1,
            }
        }
        Ok((rows, dropped))
    }
}

/// One-way ANOVA F result. The p-value is descriptive only.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FResult {
    pub f: f64,
    pub p: f64,
    pub df_between: usize,
    pub df_within: usize,
    /// Rows dropped because the metric cell was missing.
    pub dropped_rows: usize,
}

/// One-way F statistic `MSB / MSW` of a metric across groups.
///
/// `MSW = 0` with `MSB > 0` yields the `+infinity` sentinel (p = 0);
/// all-identical values are a degenerate error.
pub fn f_statistic(table: &EnsembleTable, metric: &str) -> Result<FResult, StatsError> {
    let (rows, dropped) = table.metric_by_group(metric)?;
    let mut by_group: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (g, v) in rows {
        by_group.entry(g).or_default().push(v);
    }
    let k = by_group.len();
    if k < 2 || by_group.values().any(|v| v.len() < 2) {
        let shape: Vec<String> = by_group.iter().map(|(g, v)| format!("{g}:{}", v.len())).collect();
        return Err(StatsError::NotEnoughGroups(shape.join(", ")));
    }
    let n: usize = by_group.values().map(|v| v.len()).sum();
    let grand = by_group.values().flatten().sum::<f64>() / n as f64;
    let ssb: f64 = by_group
        .values()
        .map(|v| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.len() as f64 * (m - grand) * (m - grand)
        })
        .sum();
    let ssw: f64 = by_group
        .values()
        .map(|v| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
        })
        .sum();
    let df_between = k - 1;
    let df_within = n - k;
    let msb = ssb / df_between as f64;
    let msw = ssw / df_within as f64;
    if msw == 0.0 {
        if msb == 0.0 {
            return Err(StatsError::DegenerateValues);
        }
        return Ok(FResult { f: f64::INFINITY, p: 0.0, df_between, df_within, dropped_rows: dropped });
    }
    let f = msb / msw;
    let dist = FisherSnedecor::new(df_between as f64, df_within as f64)
        .expect("valid degrees of freedom");
    Ok(FResult { f, p: 1.0 - dist.cdf(f), df_between, df_within, dropped_rows: dropped })
}

/// Spearman rank correlation with a 95% Fisher-z confidence interval.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpearmanResult {
    pub rho: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

/// Average ranks; ties get the mean of the rank positions they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation between two sequences (average-rank tie handling),
/// with the standard `1.96 / sqrt(n - 3)` interval on the z scale.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<SpearmanResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 4 {
        return Err(StatsError::TooFewPoints { min: 4, got: x.len() });
    }
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if constant(x) || constant(y) {
        return Err(StatsError::ConstantInput);
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        num += (a - mx) * (b - my);
        dx += (a - mx) * (a - mx);
        dy += (b - my) * (b - my);
    }
    if dx == 0.0 || dy == 0.0 {
        return Err(StatsError::ConstantInput);
    }
    let rho = num / (dx * dy).sqrt();
    let z = rho.atanh();
    let half_width = 1.959_963_984_540_054 / (n - 3.0).sqrt();
    Ok(SpearmanResult {
        rho,
        ci_low: (z - half_width).tanh(),
        ci_high: (z + half_width).tanh(),
        n: x.len(),
    })
}

/// Per-example correctness bits for each predictor, with a stratum label per
/// example. All predictors share the example index set by construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StratifiedOutcomes {
    pub predictor_ids: Vec<String>,
    /// `correct[predictor][example]`.
    pub correct: Vec<Vec<bool>>,
    pub stratum: Vec<String>,
}

impl StratifiedOutcomes {
    pub fn n_examples(&self) -> usize {
        self.stratum.len()
    }

    pub fn n_predictors(&self) -> usize {
        self.correct.len()
    }
}

/// Result of the one-sided permutation variance test.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PermutationResult {
    /// Variance across predictors of within-stratum accuracy.
    pub observed: f64,
    pub p: f64,
    /// Number of null draws; equals the full shuffle space when exact.
    pub n_null: usize,
    pub exact: bool,
}

/// Variance across predictors of accuracy over the examples in `members`.
fn stratum_variance(correct: &[Vec<bool>], members: &[usize]) -> f64 {
    let k = members.len() as f64;
    let accs: Vec<f64> = correct
        .iter()
        .map(|row| members.iter().filter(|&&e| row[e]).count() as f64 / k)
        .collect();
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / accs.len() as f64
}

fn binomial(n: usize, k: usize) -> Option<u64> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// One-sided permutation test: is the variance across predictors of
/// within-stratum accuracy larger than expected if stratum labels were
/// arbitrary?
///
/// The null shuffles the stratum labels across examples and recomputes the
/// statistic. The statistic depends only on which examples land in the
/// target stratum, so when the subset space `C(n, k)` fits within `n_perm`
/// the test enumerates it exactly (`p = #{null >= observed}/total`,
/// observed arrangement included); otherwise it samples `n_perm` shuffles
/// and reports the add-one estimate `p = (1 + #{null >= observed})/(1 + n_perm)`.
pub fn permutation_variance_test(
    outcomes: &StratifiedOutcomes,
    stratum_label: &str,
    n_perm: usize,
    master_seed: u64,
) -> Result<PermutationResult, StatsError> {
    if n_perm < 1000 {
        return Err(StatsError::TooFewPermutations(n_perm));
    }
    let n = outcomes.n_examples();
    let members: Vec<usize> = outcomes
        .stratum
        .iter()
        .enumerate()
        .filter(|(_, s)| s.as_str() == stratum_label)
        .map(|(e, _)| e)
        .collect();
    if members.is_empty() {
        return Err(StatsError::EmptyStratum(stratum_label.to_string()));
    }
    if members.len() == n {
        return Err(StatsError::StratumIsEverything(stratum_label.to_string()));
    }
    let observed = stratum_variance(&outcomes.correct, &members);
    let k = members.len();

    if let Some(total) = binomial(n, k).filter(|&t| t as usize <= n_perm) {
        // exact: enumerate all k-subsets
        let mut count = 0u64;
        let mut subset: Vec<usize> = (0..k).collect();
        loop {
            if stratum_variance(&outcomes.correct, &subset) >= observed {
                count += 1;
            }
            // next combination in lexicographic order
            let mut i = k;
            loop {
                if i == 0 {
                    return Ok(PermutationResult {
                        observed,
                        p: count as f64 / total as f64,
                        n_null: total as usize,
                        exact: true,
                    });
                }
                i -= 1;
                if subset[i] != i + n - k {
                    break;
                }
            }
            subset[i] += 1;
            for j in i + 1..k {
                subset[j] = subset[j - 1] + 1;
            }
        }
    }

    let mut rng = derive_rng(master_seed, "stats.permute", 0);
    let mut indices: Vec<usize> = (0..n).collect();
    let mut count = 0usize;
    for _ in 0..n_perm {
        indices.shuffle(&mut rng);
        if stratum_variance(&outcomes.correct, &indices[..k]) >= observed {
            count += 1;
        }
    }
    Ok(PermutationResult {
        observed,
        p: (1 + count) as f64 / (1 + n_perm) as f64,
        n_null: n_perm,
        exact: false,
    })
}

/// Fraction of positions where the two label sequences differ.
pub fn disagreement<T: PartialEq>(a: &[T], b: &[T]) -> Result<f64, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(StatsError::TooFewPoints { min: 1, got: 0 });
    }
    let differing = a.iter().zip(b).filter(|(x, y)| x != y).count();
    Ok(differing as f64 / a.len() as f64)
}

/// Mean disagreement over all unordered predictor pairs.
pub fn mean_pairwise_disagreement<T: PartialEq>(predictions: &[Vec<T>]) -> Result<f64, StatsError> {
    if predictions.len() < 2 {
        return Err(StatsError::TooFewPoints { min: 2, got: predictions.len() });
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..predictions.len() {
        for j in i + 1..predictions.len() {
            total += disagreement(&predictions[i], &predictions[j])?;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Target and attribute embedding sets for the WEAT score.
#[derive(Debug, Clone)]
pub struct EmbeddingSets {
    pub target_x: Vec<Vec<f64>>,
    pub target_y: Vec<Vec<f64>>,
    pub attr_a: Vec<Vec<f64>>,
    pub attr_b: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WeatResult {
    /// `s(X, Y, A, B) = sum_x s(x, A, B) - sum_y s(y, A, B)`.
    pub score: f64,
    /// Effect size: mean difference of `s(w, A, B)` over X vs Y, divided by
    /// the standard deviation of `s(w, A, B)` over `X ∪ Y`.
    pub effect: f64,
    /// One-sided permutation p over target-set reassignments.
    pub p: f64,
    pub exact: bool,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn weat_assoc(w: &[f64], attr_a: &[Vec<f64>], attr_b: &[Vec<f64>]) -> f64 {
    let ma = attr_a.iter().map(|a| cosine(w, a)).sum::<f64>() / attr_a.len() as f64;
    let mb = attr_b.iter().map(|b| cosine(w, b)).sum::<f64>() / attr_b.len() as f64;
    ma - mb
}

fn validate_set(name: &'static str, set: &[Vec<f64>]) -> Result<(), StatsError> {
    if set.is_empty() {
        return Err(StatsError::EmptySet(name));
    }
    for v in set {
        let norm_sq: f64 = v.iter().map(|x| x * x).sum();
        if norm_sq == 0.0 {
            return Err(StatsError::ZeroVector(name.to_string()));
        }
        if !norm_sq.is_finite() {
            return Err(StatsError::NonFinite(name.to_string()));
        }
    }
    Ok(())
}

/// WEAT differential association of target sets X, Y with attribute sets A, B.
///
/// The permutation p reassigns target-set membership (preserving set sizes),
/// one-sided on `score >= observed`; it enumerates the partition space
/// exactly when it fits within `n_perm`, else samples with the add-one rule.
pub fn weat(
    sets: &EmbeddingSets,
    n_perm: usize,
    master_seed: u64,
) -> Result<WeatResult, StatsError> {
    validate_set("target_x", &sets.target_x)?;
    validate_set("target_y", &sets.target_y)?;
    validate_set("attr_a", &sets.attr_a)?;
    validate_set("attr_b", &sets.attr_b)?;
    let dim = sets.target_x[0].len();
    let all_same = sets
        .target_x
        .iter()
        .chain(&sets.target_y)
        .chain(&sets.attr_a)
        .chain(&sets.attr_b)
        .all(|v| v.len() == dim);
    if !all_same {
        return Err(StatsError::LengthMismatch(dim, 0));
    }

    let assoc: Vec<f64> = sets
        .target_x
        .iter()
        .chain(&sets.target_y)
        .map(|w| weat_assoc(w, &sets.attr_a, &sets.attr_b))
        .collect();
    let nx = sets.target_x.len();
    let ny = sets.target_y.len();
    let score_of = |assoc: &[f64], x_idx: &[usize]| -> f64 {
        let in_x: Vec<bool> = {
            let mut m = vec![false; assoc.len()];
            for &i in x_idx {
                m[i] = true;
            }
            m
        };
        let sx: f64 = assoc.iter().zip(&in_x).filter(|(_, &b)| b).map(|(v, _)| v).sum();
        let sy: f64 = assoc.iter().zip(&in_x).filter(|(_, &b)| !b).map(|(v, _)| v).sum();
        sx - sy
    };
    let observed_idx: Vec<usize> = (0..nx).collect();
    let score = score_of(&assoc, &observed_idx);

    let mean_x = assoc[..nx].iter().sum::<f64>() / nx as f64;
    let mean_y = assoc[nx..].iter().sum::<f64>() / ny as f64;
    let all_mean = assoc.iter().sum::<f64>() / assoc.len() as f64;
    let sd = (assoc.iter().map(|v| (v - all_mean) * (v - all_mean)).sum::<f64>()
        / assoc.len() as f64)
        .sqrt();
    let effect = if sd == 0.0 { 0.0 } else { (mean_x - mean_y) / sd };

    let n = assoc.len();
    let (p, n_null, exact) = if let Some(total) = binomial(n, nx).filter(|&t| t as usize <= n_perm)
    {
        let mut count = 0u64;
        let mut subset: Vec<usize> = (0..nx).collect();
        'outer: loop {
            if score_of(&assoc, &subset) >= score {
                count += 1;
            }
            let mut i = nx;
            loop {
                if i == 0 {
                    break 'outer;
                }
                i -= 1;
                if subset[i] != i + n - nx {
                    break;
                }
            }
            subset[i] += 1;
            for j in i + 1..nx {
                subset[j] = subset[j - 1] + 1;
            }
        }
        (count as f64 / total as f64, total as usize, true)
    } else {
        let mut rng = derive_rng(master_seed, "stats.weat", 0);
        let mut indices: Vec<usize> = (0..n).collect();
        let mut count = 0usize;
        for _ in 0..n_perm {
            indices.shuffle(&mut rng);
            if score_of(&assoc, &indices[..nx]) >= score {
                count += 1;
            }
        }
        ((1 + count) as f64 / (1 + n_perm) as f64, n_perm, false)
    };
    let _ = n_null;
    Ok(WeatResult { score, effect, p, exact })
}

/// Kolmogorov–Smirnov distance of a sample to the uniform distribution on [0, 1].
pub fn ks_uniform(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite p-values"));
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let lo = x - i as f64 / n;
            let hi = (i + 1) as f64 / n - x;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}
