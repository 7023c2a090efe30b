//! MLE leaf fitting: smoothed histograms for discrete scopes, Gaussian
//! mixtures (EM, seeded) for continuous ones.

use super::cluster::{kmeans_labels, standardized_points};
use super::LearnConfig;
use crate::data_io::DataMatrix;
use crate::error::{FspnError, Result};
use crate::leaf::{
    GaussianMixture, Histogram, JointHistogram, JointStorage, LeafDistribution,
    MultiGaussianMixture, DENSE_LATTICE_LIMIT,
};
use crate::model::{VarDomain, VariableMeta};
use std::collections::BTreeMap;

const EM_MAX_ITERS: usize = 100;
const EM_REL_TOL: f64 = 1e-6;
/// Variance floor as a fraction of the squared domain width.
const VAR_FLOOR_FRAC: f64 = 1e-6;
/// Covariance ridge added at every M step.
const COV_RIDGE: f64 = 1e-6;

/// Fit a univariate leaf distribution for one variable.
pub fn fit_uni_leaf(
    values: &[f64],
    meta: &VariableMeta,
    cfg: &LearnConfig,
    seed: u64,
) -> Result<LeafDistribution> {
    if values.is_empty() {
        return Err(FspnError::Data("cannot fit a leaf on zero values".into()));
    }
    match meta.domain {
        VarDomain::Discrete { cardinality } => {
            let mut counts = vec![0u64; cardinality];
            for &v in values {
                let code = v.round() as i64;
                if code < 0 || code as usize >= cardinality {
                    return Err(FspnError::Data(format!(
                        "value {v} outside cardinality {cardinality} for {}",
                        meta.name
                    )));
                }
                counts[code as usize] += 1;
            }
            Ok(LeafDistribution::Histogram(Histogram::from_counts(
                &counts,
                cfg.smoothing_alpha,
            )))
        }
        VarDomain::Continuous { lo, hi } => {
            let gmm = em_univariate(values, cfg.gmm_components, lo, hi, seed)
                .map_err(FspnError::Data)?;
            Ok(LeafDistribution::GaussianMixture(gmm))
        }
    }
}

/// Fit a multivariate leaf over a scope: a joint histogram when every
/// variable is discrete, otherwise a full-covariance Gaussian mixture.
pub fn fit_multi_leaf(
    data: &DataMatrix,
    scope: &[usize],
    cfg: &LearnConfig,
    seed: u64,
) -> Result<LeafDistribution> {
    fit_multi_leaf_view(data, &data.all_rows(), scope, cfg, seed)
}

pub(crate) fn fit_multi_leaf_view(
    data: &DataMatrix,
    rows: &[u32],
    scope: &[usize],
    cfg: &LearnConfig,
    seed: u64,
) -> Result<LeafDistribution> {
    if rows.is_empty() || scope.is_empty() {
        return Err(FspnError::Data("cannot fit a leaf on empty data or scope".into()));
    }
    let metas: Vec<&VariableMeta> = scope.iter().map(|&v| &data.variables()[v]).collect();
    if metas.iter().all(|m| m.is_discrete()) {
        let dims: Vec<usize> = metas.iter().map(|m| m.cardinality().unwrap()).collect();
        fit_joint_histogram(data, rows, scope, &dims, cfg.smoothing_alpha)
    } else {
        let gmm = em_multivariate(data, rows, scope, &metas, cfg.gmm_components, seed)
            .map_err(FspnError::Data)?;
        Ok(LeafDistribution::MultiGaussianMixture(gmm))
    }
}

fn fit_joint_histogram(
    data: &DataMatrix,
    rows: &[u32],
    scope: &[usize],
    dims: &[usize],
    alpha: f64,
) -> Result<LeafDistribution> {
    let lattice: u128 = dims.iter().map(|&d| d as u128).product();
    let n = rows.len() as f64;
    if lattice <= DENSE_LATTICE_LIMIT as u128 {
        let mut counts = vec![0u64; lattice as usize];
        for &r in rows {
            let mut idx = 0usize;
            for (j, &col) in scope.iter().enumerate() {
                let v = data.get(r as usize, col).round() as usize;
                if v >= dims[j] {
                    return Err(FspnError::Data(format!(
                        "value {v} outside cardinality {} in column {col}",
                        dims[j]
                    )));
                }
                idx = idx * dims[j] + v;
            }
            counts[idx] += 1;
        }
        let denom = n + alpha * lattice as f64;
        let masses = counts.iter().map(|&c| (c as f64 + alpha) / denom).collect();
        Ok(LeafDistribution::JointHistogram(JointHistogram::dense(
            dims.to_vec(),
            masses,
        )))
    } else {
        // smooth over observed support plus one collective escape mass
        let mut counts: BTreeMap<Vec<u32>, u64> = BTreeMap::new();
        for &r in rows {
            let mut key = Vec::with_capacity(scope.len());
            for (j, &col) in scope.iter().enumerate() {
                let v = data.get(r as usize, col).round() as usize;
                if v >= dims[j] {
                    return Err(FspnError::Data(format!(
                        "value {v} outside cardinality {} in column {col}",
                        dims[j]
                    )));
                }
                key.push(v as u32);
            }
            *counts.entry(key).or_insert(0) += 1;
        }
        let t = counts.len() as f64;
        let denom = n + alpha * (t + 1.0);
        let entries = counts
            .into_iter()
            .map(|(k, c)| (k, (c as f64 + alpha) / denom))
            .collect();
        let escape = alpha / denom;
        Ok(LeafDistribution::JointHistogram(JointHistogram {
            dims: dims.to_vec(),
            storage: JointStorage::Sparse { entries, escape },
        }))
    }
}

fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn em_univariate(
    values: &[f64],
    components: usize,
    domain_lo: f64,
    domain_hi: f64,
    seed: u64,
) -> std::result::Result<GaussianMixture, String> {
    let n = values.len();
    let width = domain_hi - domain_lo;
    let sd_floor = (VAR_FLOOR_FRAC.sqrt() * width).max(1e-12);
    let mean: f64 = values.iter().sum::<f64>() / n as f64;
    let var: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let global_sd = var.sqrt().max(sd_floor);

    let mut distinct = values.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    let k = components.min(distinct.len()).max(1);
    if k == 1 {
        return GaussianMixture::new(vec![1.0], vec![mean], vec![global_sd], domain_lo, domain_hi);
    }

    // seed components from a 1-D k-means pass
    let labels = kmeans_labels(values, n, 1, k, seed);
    let k = labels.iter().copied().max().unwrap_or(0) + 1;
    let mut weights = vec![0.0f64; k];
    let mut means = vec![0.0f64; k];
    for (i, &l) in labels.iter().enumerate() {
        weights[l] += 1.0;
        means[l] += values[i];
    }
    for c in 0..k {
        means[c] /= weights[c];
    }
    let mut sds = vec![global_sd; k];
    for w in weights.iter_mut() {
        *w /= n as f64;
    }

    let mut prev_ll = f64::NEG_INFINITY;
    let mut resp = vec![0.0f64; n * k];
    for _ in 0..EM_MAX_ITERS {
        // E step in log space
        let mut ll = 0.0;
        for i in 0..n {
            let logs: Vec<f64> = (0..k)
                .map(|c| weights[c].ln() + log_normal_pdf(values[i], means[c], sds[c]))
                .collect();
            let norm = logsumexp(&logs);
            ll += norm;
            for c in 0..k {
                resp[i * k + c] = (logs[c] - norm).exp();
            }
        }
        // M step
        for c in 0..k {
            let rsum: f64 = (0..n).map(|i| resp[i * k + c]).sum();
            if rsum < 1e-12 {
                weights[c] = 1e-12;
                continue;
            }
            let mu: f64 = (0..n).map(|i| resp[i * k + c] * values[i]).sum::<f64>() / rsum;
            let var: f64 = (0..n)
                .map(|i| resp[i * k + c] * (values[i] - mu) * (values[i] - mu))
                .sum::<f64>()
                / rsum;
            weights[c] = rsum / n as f64;
            means[c] = mu;
            sds[c] = var.sqrt().max(sd_floor);
        }
        let wsum: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= wsum;
        }
        if (ll - prev_ll).abs() <= EM_REL_TOL * ll.abs().max(1.0) {
            break;
        }
        prev_ll = ll;
    }
    GaussianMixture::new(weights, means, sds, domain_lo, domain_hi)
}

fn log_normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

fn em_multivariate(
    data: &DataMatrix,
    rows: &[u32],
    scope: &[usize],
    metas: &[&VariableMeta],
    components: usize,
    seed: u64,
) -> std::result::Result<MultiGaussianMixture, String> {
    let n = rows.len();
    let d = scope.len();
    let points: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| scope.iter().map(|&c| data.get(r as usize, c)).collect())
        .collect();
    let k = components.min(n).max(1);

    // init from k-means labels on standardized coordinates
    let std_points = standardized_points(data, rows, scope);
    let labels = if k > 1 {
        kmeans_labels(&std_points, n, d, k, seed)
    } else {
        vec![0; n]
    };
    let k = labels.iter().copied().max().unwrap_or(0) + 1;

    let mut weights = vec![0.0f64; k];
    let mut means = vec![vec![0.0f64; d]; k];
    for (i, &l) in labels.iter().enumerate() {
        weights[l] += 1.0;
        for j in 0..d {
            means[l][j] += points[i][j];
        }
    }
    for c in 0..k {
        for j in 0..d {
            means[c][j] /= weights[c];
        }
    }
    let mut covs = vec![vec![vec![0.0f64; d]; d]; k];
    for (i, &l) in labels.iter().enumerate() {
        for a in 0..d {
            for b in 0..d {
                covs[l][a][b] += (points[i][a] - means[l][a]) * (points[i][b] - means[l][b]);
            }
        }
    }
    for c in 0..k {
        for a in 0..d {
            for b in 0..d {
                covs[c][a][b] /= weights[c];
            }
            covs[c][a][a] += COV_RIDGE;
        }
    }
    for w in weights.iter_mut() {
        *w /= n as f64;
    }

    let (domain_lo, domain_hi, discrete_dims) = domains_for(metas);
    let mut mixture = MultiGaussianMixture::new(
        weights.clone(),
        means.clone(),
        covs.clone(),
        domain_lo.clone(),
        domain_hi.clone(),
        discrete_dims.clone(),
    )?;
    if k == 1 {
        return Ok(mixture);
    }

    let mut prev_ll = f64::NEG_INFINITY;
    let mut resp = vec![0.0f64; n * k];
    for _ in 0..EM_MAX_ITERS {
        let log_comps: Vec<LogMvn> = (0..k)
            .map(|c| LogMvn::new(&means[c], &covs[c]))
            .collect::<std::result::Result<_, String>>()?;
        let mut ll = 0.0;
        for i in 0..n {
            let logs: Vec<f64> = (0..k)
                .map(|c| weights[c].ln() + log_comps[c].log_pdf(&points[i]))
                .collect();
            let norm = logsumexp(&logs);
            ll += norm;
            for c in 0..k {
                resp[i * k + c] = (logs[c] - norm).exp();
            }
        }
        for c in 0..k {
            let rsum: f64 = (0..n).map(|i| resp[i * k + c]).sum();
            if rsum < 1e-12 {
                continue;
            }
            for j in 0..d {
                means[c][j] = (0..n).map(|i| resp[i * k + c] * points[i][j]).sum::<f64>() / rsum;
            }
            for a in 0..d {
                for b in 0..d {
                    covs[c][a][b] = (0..n)
                        .map(|i| {
                            resp[i * k + c]
                                * (points[i][a] - means[c][a])
                                * (points[i][b] - means[c][b])
                        })
                        .sum::<f64>()
                        / rsum;
                }
                covs[c][a][a] += COV_RIDGE;
            }
            weights[c] = rsum / n as f64;
        }
        let wsum: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= wsum;
        }
        if (ll - prev_ll).abs() <= EM_REL_TOL * ll.abs().max(1.0) {
            break;
        }
        prev_ll = ll;
    }
    mixture = MultiGaussianMixture::new(weights, means, covs, domain_lo, domain_hi, discrete_dims)?;
    Ok(mixture)
}

fn domains_for(metas: &[&VariableMeta]) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    let mut lo = Vec::with_capacity(metas.len());
    let mut hi = Vec::with_capacity(metas.len());
    let mut disc = Vec::with_capacity(metas.len());
    for m in metas {
        let iv = m.full_interval();
        lo.push(iv.lo);
        hi.push(iv.hi);
        disc.push(m.is_discrete());
    }
    (lo, hi, disc)
}

struct LogMvn {
    mean: Vec<f64>,
    chol: nalgebra::DMatrix<f64>,
    log_norm: f64,
}

impl LogMvn {
    fn new(mean: &[f64], cov: &[Vec<f64>]) -> std::result::Result<Self, String> {
        let d = mean.len();
        let m = nalgebra::DMatrix::from_fn(d, d, |i, j| cov[i][j]);
        let mut jitter = 0.0;
        for attempt in 0..10 {
            let mut mm = m.clone();
            if attempt > 0 {
                for i in 0..d {
                    mm[(i, i)] += jitter;
                }
            }
            if let Some(c) = nalgebra::Cholesky::new(mm) {
                let l = c.l();
                let log_det: f64 = (0..d).map(|i| l[(i, i)].ln()).sum();
                let log_norm = -log_det - 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln();
                return Ok(Self { mean: mean.to_vec(), chol: l, log_norm });
            }
            jitter = if attempt == 0 { COV_RIDGE } else { jitter * 10.0 };
        }
        Err("EM covariance is not positive definite".into())
    }

    fn log_pdf(&self, x: &[f64]) -> f64 {
        let d = self.mean.len();
        // forward-substitute L y = (x - mean); quad form is |y|^2
        let mut y = vec![0.0; d];
        for i in 0..d {
            let mut s = x[i] - self.mean[i];
            for j in 0..i {
                s -= self.chol[(i, j)] * y[j];
            }
            y[i] = s / self.chol[(i, i)];
        }
        let quad: f64 = y.iter().map(|v| v * v).sum();
        -0.5 * quad + self.log_norm
    }
}
