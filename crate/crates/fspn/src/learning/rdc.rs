//! Randomized dependence coefficient: copula transform via empirical CDF
//! ranks, random sine features, largest canonical correlation, median over
//! a fixed set of seeds.

use super::{derive_seed, LearnConfig, PURPOSE_RDC};
use crate::data_io::DataMatrix;
use crate::error::{FspnError, Result};
use nalgebra::{Cholesky, DMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Pairwise dependence scores over a variable scope; symmetric with unit
/// diagonal, entries in [0, 1].
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    pub scope: Vec<usize>,
    scores: Vec<f64>,
}

impl CorrelationMatrix {
    /// Wrap precomputed scores (row-major over scope positions).
    pub fn from_scores(scope: Vec<usize>, scores: Vec<f64>) -> Result<Self> {
        let m = scope.len();
        if scores.len() != m * m {
            return Err(FspnError::Usage("correlation matrix has wrong shape".into()));
        }
        for i in 0..m {
            for j in 0..m {
                let v = scores[i * m + j];
                if !(0.0..=1.0).contains(&v) || (scores[j * m + i] - v).abs() > 1e-12 {
                    return Err(FspnError::Usage(
                        "correlation matrix must be symmetric with entries in [0,1]".into(),
                    ));
                }
            }
        }
        Ok(Self { scope, scores })
    }

    pub fn len(&self) -> usize {
        self.scope.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scope.is_empty()
    }

    /// Score by scope position.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.scores[i * self.scope.len() + j]
    }
}

/// Dependence score between two equal-length series.
///
/// Deterministic given `cfg.seed`, symmetric in its arguments, and 0 by
/// convention when either column is constant.
pub fn rdc(a: &[f64], b: &[f64], cfg: &LearnConfig) -> Result<f64> {
    if a.len() != b.len() {
        return Err(FspnError::Usage("rdc requires equal-length series".into()));
    }
    if a.len() < 2 {
        return Err(FspnError::Usage("rdc requires at least 2 observations".into()));
    }
    let ua = copula_transform(a);
    let ub = copula_transform(b);
    Ok(rdc_from_copulas(ua.as_deref(), ub.as_deref(), cfg))
}

/// All pairwise scores for a scope over the whole dataset.
pub fn correlation_matrix(
    data: &DataMatrix,
    scope: &[usize],
    cfg: &LearnConfig,
) -> Result<CorrelationMatrix> {
    if scope.len() < 2 {
        return Err(FspnError::Usage("correlation matrix needs at least 2 variables".into()));
    }
    if data.n_rows() < 2 {
        return Err(FspnError::Usage("correlation matrix needs at least 2 rows".into()));
    }
    Ok(correlation_matrix_view(data, &data.all_rows(), scope, cfg))
}

/// Row cap for dependence tests inside structure learning; a strided
/// deterministic subsample keeps scores stable while bounding the cost of
/// the O(pairs * seeds * n log n) evaluations.
const RDC_MAX_ROWS: usize = 10_000;

pub(crate) fn subsample_rows(rows: &[u32]) -> std::borrow::Cow<'_, [u32]> {
    if rows.len() <= RDC_MAX_ROWS {
        return std::borrow::Cow::Borrowed(rows);
    }
    let stride = rows.len().div_ceil(RDC_MAX_ROWS);
    std::borrow::Cow::Owned(rows.iter().copied().step_by(stride).collect())
}

pub(crate) fn correlation_matrix_view(
    data: &DataMatrix,
    rows: &[u32],
    scope: &[usize],
    cfg: &LearnConfig,
) -> CorrelationMatrix {
    let rows = subsample_rows(rows);
    let rows = rows.as_ref();
    let m = scope.len();
    let copulas: Vec<Option<Vec<f64>>> = scope
        .iter()
        .map(|&col| copula_transform(&data.gather(col, rows)))
        .collect();
    let mut scores = vec![0.0; m * m];
    for i in 0..m {
        scores[i * m + i] = 1.0;
        for j in i + 1..m {
            let s = rdc_from_copulas(copulas[i].as_deref(), copulas[j].as_deref(), cfg);
            scores[i * m + j] = s;
            scores[j * m + i] = s;
        }
    }
    CorrelationMatrix { scope: scope.to_vec(), scores }
}

/// Largest pairwise score between two column sets on a row subset.
pub(crate) fn cross_max_rdc(
    data: &DataMatrix,
    rows: &[u32],
    left: &[usize],
    right: &[usize],
    cfg: &LearnConfig,
) -> f64 {
    cross_rdc(data, rows, left, right, cfg).0
}

/// Mean pairwise score between two column sets on a row subset.
pub(crate) fn cross_mean_rdc(
    data: &DataMatrix,
    rows: &[u32],
    left: &[usize],
    right: &[usize],
    cfg: &LearnConfig,
) -> f64 {
    cross_rdc(data, rows, left, right, cfg).1
}

fn cross_rdc(
    data: &DataMatrix,
    rows: &[u32],
    left: &[usize],
    right: &[usize],
    cfg: &LearnConfig,
) -> (f64, f64) {
    let rows = subsample_rows(rows);
    let rows = rows.as_ref();
    let lc: Vec<Option<Vec<f64>>> = left
        .iter()
        .map(|&c| copula_transform(&data.gather(c, rows)))
        .collect();
    let rc: Vec<Option<Vec<f64>>> = right
        .iter()
        .map(|&c| copula_transform(&data.gather(c, rows)))
        .collect();
    let mut max = 0.0f64;
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for a in &lc {
        for b in &rc {
            let s = rdc_from_copulas(a.as_deref(), b.as_deref(), cfg);
            max = max.max(s);
            sum += s;
            count += 1;
        }
    }
    (max, if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Empirical CDF via average ranks (ties get the mean of their rank block);
/// `None` marks a constant column.
pub(crate) fn copula_transform(values: &[f64]) -> Option<Vec<f64>> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // 1-based average rank of the tie block [i, j]
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    let scale = 1.0 / n as f64;
    Some(ranks.into_iter().map(|r| r * scale).collect())
}

fn rdc_from_copulas(a: Option<&[f64]>, b: Option<&[f64]>, cfg: &LearnConfig) -> f64 {
    let (mut ua, mut ub) = match (a, b) {
        (Some(x), Some(y)) => (x, y),
        // constant column: no dependence information
        _ => return 0.0,
    };
    // canonical argument order makes the score bit-exactly symmetric
    if ua.iter().zip(ub).any(|(x, y)| x != y) {
        let flip = ua
            .iter()
            .zip(ub)
            .find_map(|(x, y)| x.partial_cmp(y).filter(|o| o.is_ne()))
            == Some(std::cmp::Ordering::Greater);
        if flip {
            std::mem::swap(&mut ua, &mut ub);
        }
    }
    let mut values = Vec::with_capacity(cfg.rdc_seeds);
    for s in 0..cfg.rdc_seeds {
        let seed = derive_seed(cfg.seed, PURPOSE_RDC, &[s as u32]);
        values.push(rdc_once(ua, ub, cfg, seed));
    }
    values.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

fn rdc_once(ua: &[f64], ub: &[f64], cfg: &LearnConfig, seed: u64) -> f64 {
    let k = cfg.rdc_features;
    let n = ua.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // One projection shared by both sides keeps the score exactly symmetric.
    let mut w = vec![0.0f64; 2 * k];
    for item in w.iter_mut() {
        *item = StandardNormal.sample(&mut rng);
    }
    let scale = cfg.rdc_scale / 2.0;
    let features = |u: &[f64]| -> DMatrix<f64> {
        DMatrix::from_fn(n, k, |i, j| (scale * (u[i] * w[j] + w[k + j])).sin())
    };
    let fa = features(ua);
    let fb = features(ub);
    largest_canonical_correlation(&fa, &fb)
}

fn center(m: &mut DMatrix<f64>) {
    let n = m.nrows() as f64;
    for j in 0..m.ncols() {
        let mean = m.column(j).sum() / n;
        for i in 0..m.nrows() {
            m[(i, j)] -= mean;
        }
    }
}

fn largest_canonical_correlation(fa: &DMatrix<f64>, fb: &DMatrix<f64>) -> f64 {
    let n = fa.nrows();
    let mut a = fa.clone();
    let mut b = fb.clone();
    center(&mut a);
    center(&mut b);
    let denom = (n - 1) as f64;
    let caa = a.transpose() * &a / denom;
    let cbb = b.transpose() * &b / denom;
    let cab = a.transpose() * &b / denom;
    let la = match ridge_cholesky(&caa) {
        Some(l) => l,
        None => return 0.0,
    };
    let lb = match ridge_cholesky(&cbb) {
        Some(l) => l,
        None => return 0.0,
    };
    // M = La^-1 Cab Lb^-T; largest singular value is the top correlation.
    let x = forward_solve(&la, &cab);
    let m = forward_solve(&lb, &x.transpose()).transpose();
    let svd = m.svd(false, false);
    svd.singular_values
        .iter()
        .fold(0.0f64, |acc, &s| acc.max(s))
        .clamp(0.0, 1.0)
}

fn ridge_cholesky(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let d = m.nrows();
    let trace: f64 = (0..d).map(|i| m[(i, i)]).sum();
    let mut ridge = (trace / d as f64).max(1e-300) * 1e-8;
    for _ in 0..8 {
        let mut r = m.clone();
        for i in 0..d {
            r[(i, i)] += ridge;
        }
        if let Some(c) = Cholesky::new(r) {
            return Some(c.l());
        }
        ridge *= 100.0;
    }
    None
}

/// Solve L X = B column-wise for lower-triangular L.
fn forward_solve(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut out = b.clone();
    for c in 0..b.ncols() {
        for i in 0..n {
            let mut s = out[(i, c)];
            for j in 0..i {
                s -= l[(i, j)] * out[(j, c)];
            }
            out[(i, c)] = s / l[(i, i)];
        }
    }
    out
}
