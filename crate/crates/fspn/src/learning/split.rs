//! Conditional splitting: choose one condition variable and one threshold,
//! cutting the region and the rows in two.

use super::rdc::cross_mean_rdc;
use super::{LearnConfig, SplitMethod};
use crate::data_io::DataMatrix;
use crate::error::{FspnError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A binary axis-aligned split: rows with `value <= threshold` go left.
/// For discrete variables the threshold is an integer lattice value.
#[derive(Debug, Clone)]
pub struct ConditionalSplit {
    pub variable: usize,
    pub threshold: f64,
    pub left_rows: Vec<u32>,
    pub right_rows: Vec<u32>,
}

/// Pick a split of the condition scope, or `None` when no variable can be
/// cut (all condition values identical); callers then fit a multi-leaf.
pub fn split_conditional(
    data: &DataMatrix,
    scope: &[usize],
    condition: &[usize],
    cfg: &LearnConfig,
) -> Result<Option<ConditionalSplit>> {
    if condition.is_empty() {
        return Err(FspnError::Usage("condition scope is empty".into()));
    }
    if data.n_rows() < 2 * cfg.min_instances {
        return Err(FspnError::Usage(format!(
            "splitting needs at least {} rows, got {}",
            2 * cfg.min_instances,
            data.n_rows()
        )));
    }
    Ok(split_conditional_view(
        data,
        &data.all_rows(),
        scope,
        condition,
        cfg,
        cfg.seed,
    ))
}

pub(crate) fn split_conditional_view(
    data: &DataMatrix,
    rows: &[u32],
    scope: &[usize],
    condition: &[usize],
    cfg: &LearnConfig,
    seed: u64,
) -> Option<ConditionalSplit> {
    match cfg.split_method {
        SplitMethod::Greedy => greedy_split(data, rows, scope, condition, cfg, seed),
        SplitMethod::GridKmeans => grid_kmeans_split(data, rows, condition, cfg, seed),
    }
}

fn observed_range(data: &DataMatrix, rows: &[u32], col: usize) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &r in rows {
        let v = data.get(r as usize, col);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

fn partition(data: &DataMatrix, rows: &[u32], col: usize, threshold: f64) -> (Vec<u32>, Vec<u32>) {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for &r in rows {
        if data.get(r as usize, col) <= threshold {
            left.push(r);
        } else {
            right.push(r);
        }
    }
    (left, right)
}

/// Pick the condition variable most correlated with the scope, try a fixed
/// number of random thresholds, and keep the one whose halves have the
/// smallest residual scope-condition correlation.
fn greedy_split(
    data: &DataMatrix,
    rows: &[u32],
    scope: &[usize],
    condition: &[usize],
    cfg: &LearnConfig,
    seed: u64,
) -> Option<ConditionalSplit> {
    let viable: Vec<usize> = condition
        .iter()
        .copied()
        .filter(|&c| {
            let (lo, hi) = observed_range(data, rows, c);
            hi > lo
        })
        .collect();
    if viable.is_empty() {
        return None;
    }
    // the split variable is the one most correlated with the scope
    let mut best_var = viable[0];
    let mut best_score = f64::NEG_INFINITY;
    for &c in &viable {
        let score = cross_mean_rdc(data, rows, scope, &[c], cfg);
        if score > best_score {
            best_score = score;
            best_var = c;
        }
    }
    let c = best_var;
    let discrete = data.variables()[c].is_discrete();
    let (lo, hi) = observed_range(data, rows, c);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut candidates: Vec<f64> = Vec::with_capacity(cfg.greedy_candidates);
    for _ in 0..cfg.greedy_candidates {
        if discrete {
            let lo_i = lo as i64;
            let hi_i = hi as i64;
            candidates.push(rng.gen_range(lo_i..hi_i) as f64);
        } else {
            candidates.push(lo + rng.gen::<f64>() * (hi - lo));
        }
    }
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();

    let n = rows.len() as f64;
    let mut best: Option<(f64, f64, Vec<u32>, Vec<u32>)> = None;
    for &v in &candidates {
        let (left, right) = partition(data, rows, c, v);
        if left.is_empty() || right.is_empty() {
            continue;
        }
        let sl = cross_mean_rdc(data, &left, scope, condition, cfg);
        let sr = cross_mean_rdc(data, &right, scope, condition, cfg);
        let residual = (left.len() as f64 * sl + right.len() as f64 * sr) / n;
        let better = match &best {
            None => true,
            Some((score, tv, _, _)) => residual < *score || (residual == *score && v < *tv),
        };
        if better {
            best = Some((residual, v, left, right));
        }
    }
    best.map(|(_, threshold, left_rows, right_rows)| ConditionalSplit {
        variable: c,
        threshold,
        left_rows,
        right_rows,
    })
}

/// Cluster the condition coordinates into two, take the midpoint between the
/// cluster boundaries along the center line, and cut on the single dimension
/// whose axis-aligned version of that boundary misclassifies the fewest rows.
fn grid_kmeans_split(
    data: &DataMatrix,
    rows: &[u32],
    condition: &[usize],
    _cfg: &LearnConfig,
    seed: u64,
) -> Option<ConditionalSplit> {
    let n = rows.len();
    let d = condition.len();
    let points = super::cluster::standardized_points(data, rows, condition);
    let labels = super::cluster::kmeans_labels(&points, n, d, 2.min(n), seed);
    let k = labels.iter().copied().max().unwrap_or(0) + 1;
    if k < 2 {
        return None;
    }
    // centers and radii in standardized space
    let mut centers = vec![vec![0.0f64; d]; 2];
    let mut counts = [0usize; 2];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for j in 0..d {
            centers[l][j] += points[i * d + j];
        }
    }
    for c in 0..2 {
        for j in 0..d {
            centers[c][j] /= counts[c] as f64;
        }
    }
    let mut radii = [0.0f64; 2];
    for (i, &l) in labels.iter().enumerate() {
        let dist: f64 = (0..d)
            .map(|j| (points[i * d + j] - centers[l][j]).powi(2))
            .sum::<f64>()
            .sqrt();
        radii[l] = radii[l].max(dist);
    }
    let axis: Vec<f64> = (0..d).map(|j| centers[1][j] - centers[0][j]).collect();
    let axis_norm: f64 = axis.iter().map(|v| v * v).sum::<f64>().sqrt();
    if axis_norm == 0.0 {
        return None;
    }
    // boundary points of the two clusters along the center line; the cut
    // point is their midpoint
    let mut boundary = vec![0.0f64; d];
    for j in 0..d {
        let u = axis[j] / axis_norm;
        let b1 = centers[0][j] + radii[0] * u;
        let b2 = centers[1][j] - radii[1] * u;
        boundary[j] = 0.5 * (b1 + b2);
    }

    let mut best: Option<(usize, usize, f64)> = None; // (misclassified, dim, threshold raw)
    for (j, &col) in condition.iter().enumerate() {
        // un-standardize the boundary coordinate
        let raw: Vec<f64> = rows.iter().map(|&r| data.get(r as usize, col)).collect();
        let mean: f64 = raw.iter().sum::<f64>() / n as f64;
        let sd = (raw.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
        if sd == 0.0 {
            continue;
        }
        let mut threshold = boundary[j] * sd + mean;
        if data.variables()[col].is_discrete() {
            threshold = threshold.floor();
        }
        let (lo, hi) = observed_range(data, rows, col);
        if threshold < lo || threshold >= hi {
            continue;
        }
        let mut mis_a = 0usize; // left ~ cluster 0
        let mut mis_b = 0usize; // left ~ cluster 1
        for (i, &v) in raw.iter().enumerate() {
            let left = v <= threshold;
            if left != (labels[i] == 0) {
                mis_a += 1;
            }
            if left != (labels[i] == 1) {
                mis_b += 1;
            }
        }
        let mis = mis_a.min(mis_b);
        let better = match &best {
            None => true,
            Some((m, dim, _)) => mis < *m || (mis == *m && col < condition[*dim]),
        };
        if better {
            best = Some((mis, j, threshold));
        }
    }
    let (_, dim, threshold) = best?;
    let col = condition[dim];
    let (left_rows, right_rows) = partition(data, rows, col, threshold);
    if left_rows.is_empty() || right_rows.is_empty() {
        return None;
    }
    Some(ConditionalSplit { variable: col, threshold, left_rows, right_rows })
}
