//! Row clustering for sum nodes: k-means with k-means++ seeding on
//! z-scored columns.

use crate::data_io::DataMatrix;
use crate::error::{FspnError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MAX_ITERS: usize = 100;
const REL_TOL: f64 = 1e-6;

/// Row partition with mixture weights `|cluster| / n`.
#[derive(Debug, Clone)]
pub struct Clustering {
    /// Row indices per cluster, empty clusters dropped.
    pub clusters: Vec<Vec<u32>>,
    pub weights: Vec<f64>,
}

/// Cluster all rows of a dataset over all columns.
pub fn cluster_rows(data: &DataMatrix, k: usize, seed: u64) -> Result<Clustering> {
    if k < 1 {
        return Err(FspnError::Usage("k must be at least 1".into()));
    }
    if data.n_rows() < k {
        return Err(FspnError::Usage(format!(
            "cannot form {k} clusters from {} rows",
            data.n_rows()
        )));
    }
    let cols: Vec<usize> = (0..data.n_cols()).collect();
    Ok(cluster_rows_view(data, &data.all_rows(), &cols, k, seed))
}

pub(crate) fn cluster_rows_view(
    data: &DataMatrix,
    rows: &[u32],
    cols: &[usize],
    k: usize,
    seed: u64,
) -> Clustering {
    let n = rows.len();
    let points = standardized_points(data, rows, cols);
    let labels = kmeans_labels(&points, n, cols.len(), k, seed);
    let k_eff = labels.iter().copied().max().map_or(1, |m| m + 1);
    let mut clusters: Vec<Vec<u32>> = vec![Vec::new(); k_eff];
    for (i, &label) in labels.iter().enumerate() {
        clusters[label].push(rows[i]);
    }
    clusters.retain(|c| !c.is_empty());
    let weights = clusters.iter().map(|c| c.len() as f64 / n as f64).collect();
    Clustering { clusters, weights }
}

/// Z-scored row-major point buffer; zero-variance columns contribute zeros.
pub(crate) fn standardized_points(data: &DataMatrix, rows: &[u32], cols: &[usize]) -> Vec<f64> {
    let n = rows.len();
    let d = cols.len();
    let mut points = vec![0.0; n * d];
    for (j, &col) in cols.iter().enumerate() {
        let mut mean = 0.0;
        for &r in rows {
            mean += data.get(r as usize, col);
        }
        mean /= n as f64;
        let mut var = 0.0;
        for &r in rows {
            let dlt = data.get(r as usize, col) - mean;
            var += dlt * dlt;
        }
        var /= n as f64;
        let sd = var.sqrt();
        if sd > 0.0 {
            for (i, &r) in rows.iter().enumerate() {
                points[i * d + j] = (data.get(r as usize, col) - mean) / sd;
            }
        }
    }
    points
}

fn dist2(points: &[f64], d: usize, i: usize, center: &[f64]) -> f64 {
    let row = &points[i * d..(i + 1) * d];
    row.iter()
        .zip(center)
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Lloyd iterations over k-means++ seeds; returns a label per point using
/// compacted cluster ids (empty clusters removed, order preserved).
pub(crate) fn kmeans_labels(points: &[f64], n: usize, d: usize, k: usize, seed: u64) -> Vec<usize> {
    let k = k.min(n).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // k-means++ seeding
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = rng.gen_range(0..n);
    centers.push(points[first * d..(first + 1) * d].to_vec());
    let mut best = vec![f64::INFINITY; n];
    while centers.len() < k {
        let latest = centers.last().unwrap();
        for i in 0..n {
            best[i] = best[i].min(dist2(points, d, i, latest));
        }
        let total: f64 = best.iter().sum();
        if total <= 0.0 {
            break; // remaining points coincide with a chosen center
        }
        let mut target = rng.gen::<f64>() * total;
        let mut chosen = n - 1;
        for (i, &w) in best.iter().enumerate() {
            target -= w;
            if target <= 0.0 {
                chosen = i;
                break;
            }
        }
        centers.push(points[chosen * d..(chosen + 1) * d].to_vec());
    }

    let k = centers.len();
    let mut labels = vec![0usize; n];
    let mut prev_inertia = f64::INFINITY;
    for _ in 0..MAX_ITERS {
        let mut inertia = 0.0;
        for i in 0..n {
            let mut best_c = 0;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let dd = dist2(points, d, i, center);
                if dd < best_d {
                    best_d = dd;
                    best_c = c;
                }
            }
            labels[i] = best_c;
            inertia += best_d;
        }
        let mut counts = vec![0usize; k];
        let mut sums = vec![vec![0.0; d]; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for j in 0..d {
                sums[labels[i]][j] += points[i * d + j];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..d {
                    centers[c][j] = sums[c][j] / counts[c] as f64;
                }
            }
        }
        if (prev_inertia - inertia).abs() <= REL_TOL * prev_inertia.max(1e-300) {
            break;
        }
        prev_inertia = inertia;
    }
    // compact labels so callers see contiguous cluster ids
    let mut remap = vec![usize::MAX; k];
    let mut next = 0;
    for &l in &labels {
        if remap[l] == usize::MAX {
            remap[l] = next;
            next += 1;
        }
    }
    labels.iter().map(|&l| remap[l]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VariableMeta;

    fn matrix_from_rows(rows: &[Vec<f64>]) -> DataMatrix {
        let m = rows[0].len();
        let variables = (0..m)
            .map(|i| VariableMeta::continuous(&format!("x{i}"), -100.0, 100.0))
            .collect();
        let labels = vec![None; m];
        let values = rows.iter().flatten().copied().collect();
        DataMatrix::from_parts(variables, labels, values).unwrap()
    }

    #[test]
    fn separated_blobs_recovered() {
        // two blobs at -10 and +10 with unit jitter, 500 rows each
        let mut rng = ChaCha8Rng::seed_from_u64(321);
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for i in 0..1000 {
            let c = if i < 500 { -10.0 } else { 10.0 };
            truth.push(i >= 500);
            rows.push(vec![
                c + rng.gen::<f64>() * 2.0 - 1.0,
                c + rng.gen::<f64>() * 2.0 - 1.0,
            ]);
        }
        let data = matrix_from_rows(&rows);
        let result = cluster_rows(&data, 2, 17).unwrap();
        assert_eq!(result.clusters.len(), 2);
        // agreement with the generating labels, up to cluster swap
        let in_first: Vec<bool> = {
            let mut marks = vec![false; 1000];
            for &r in &result.clusters[0] {
                marks[r as usize] = true;
            }
            marks
        };
        let agree = truth
            .iter()
            .zip(&in_first)
            .filter(|(t, f)| **t != **f)
            .count()
            .max(truth.iter().zip(&in_first).filter(|(t, f)| **t == **f).count());
        assert!(agree >= 990, "agreement {agree}/1000");
        let wsum: f64 = result.weights.iter().sum();
        assert!((wsum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_rows_collapse_to_one_cluster() {
        let rows: Vec<Vec<f64>> = (0..40).map(|_| vec![1.0, 2.0]).collect();
        let data = matrix_from_rows(&rows);
        let result = cluster_rows(&data, 2, 3).unwrap();
        assert_eq!(result.clusters.len(), 1);
        assert_eq!(result.weights, vec![1.0]);
    }

    #[test]
    fn weights_always_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for trial in 0..10 {
            let rows: Vec<Vec<f64>> = (0..50)
                .map(|_| vec![rng.gen::<f64>() * 4.0, rng.gen::<f64>()])
                .collect();
            let data = matrix_from_rows(&rows);
            let result = cluster_rows(&data, 3, trial).unwrap();
            let total: f64 = result.weights.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
