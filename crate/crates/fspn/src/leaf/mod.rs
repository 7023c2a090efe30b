//! Leaf distributions: range-mass evaluation and point densities.
//!
//! Discrete leaves are (joint) histograms; continuous leaves are Gaussian
//! mixtures truncated to the variable domains so that the full-domain mass
//! is exactly one.

mod gauss;

pub use gauss::{GaussianMixture, MultiGaussianMixture};

use crate::error::{FspnError, Result};
use crate::model::interval::Interval;
use serde::{Deserialize, Serialize};

/// Dense joint lattices beyond this size are stored sparsely.
pub const DENSE_LATTICE_LIMIT: u64 = 1_000_000;

/// Compensated summation; histogram masses must add up to 1 within 1e-9
/// even for million-cell lattices.
pub fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Univariate or multivariate distribution stored at a leaf node.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LeafDistribution {
    /// Univariate discrete masses over codes `0..d`.
    Histogram(Histogram),
    /// Univariate continuous mixture, truncated to the variable domain.
    GaussianMixture(GaussianMixture),
    /// Multivariate discrete masses over a joint lattice.
    JointHistogram(JointHistogram),
    /// Multivariate Gaussian mixture with full covariance, truncated to the
    /// domain box; discrete dimensions are treated as unit boxes.
    MultiGaussianMixture(MultiGaussianMixture),
}

impl LeafDistribution {
    pub fn dims(&self) -> usize {
        match self {
            Self::Histogram(_) | Self::GaussianMixture(_) => 1,
            Self::JointHistogram(h) => h.dims.len(),
            Self::MultiGaussianMixture(g) => g.dims(),
        }
    }

    /// Recompute derived quantities (truncation constants, Cholesky factors)
    /// after construction or deserialization.
    pub fn prepare(&mut self) -> std::result::Result<(), String> {
        match self {
            Self::Histogram(_) | Self::JointHistogram(_) => Ok(()),
            Self::GaussianMixture(g) => g.prepare(),
            Self::MultiGaussianMixture(g) => g.prepare(),
        }
    }

    /// Probability mass of an axis-aligned box given in scope order.
    ///
    /// Intervals must already be canonicalized for their variables (clipped
    /// to the domain, discrete ones snapped to closed integer bounds).
    pub fn mass(&self, bounds: &[Interval]) -> Result<f64> {
        if bounds.len() != self.dims() {
            return Err(FspnError::Model(format!(
                "leaf expects {} dims, event slice has {}",
                self.dims(),
                bounds.len()
            )));
        }
        if bounds.iter().any(|iv| iv.is_empty()) {
            return Ok(0.0);
        }
        let p = match self {
            Self::Histogram(h) => h.mass(&bounds[0]),
            Self::GaussianMixture(g) => g.mass(&bounds[0]),
            Self::JointHistogram(h) => h.mass(bounds),
            Self::MultiGaussianMixture(g) => g.mass(bounds),
        };
        if p.is_nan() {
            return Err(FspnError::Model("NaN in leaf evaluation".into()));
        }
        Ok(p.clamp(0.0, 1.0))
    }

    /// Point mass (discrete) or density (continuous) at a point in scope order.
    pub fn point(&self, point: &[f64]) -> Result<f64> {
        let p = match self {
            Self::Histogram(h) => h.point(point[0]),
            Self::GaussianMixture(g) => g.density(point[0]),
            Self::JointHistogram(h) => h.point(point),
            Self::MultiGaussianMixture(g) => g.point(point),
        };
        if p.is_nan() {
            return Err(FspnError::Model("NaN in leaf evaluation".into()));
        }
        Ok(p.max(0.0))
    }

    pub fn log_point(&self, point: &[f64]) -> Result<f64> {
        Ok(self.point(point)?.ln())
    }

    /// Number of stored distribution scalars (masses, weights, means,
    /// unique covariance entries).
    pub fn param_count(&self) -> usize {
        match self {
            Self::Histogram(h) => h.masses.len(),
            Self::GaussianMixture(g) => g.param_count(),
            Self::JointHistogram(h) => h.param_count(),
            Self::MultiGaussianMixture(g) => g.param_count(),
        }
    }

    /// Total mass over the full domain; should be 1 for a valid leaf.
    pub fn total_mass(&self) -> f64 {
        match self {
            Self::Histogram(h) => kahan_sum(h.masses.iter().copied()),
            Self::GaussianMixture(_) | Self::MultiGaussianMixture(_) => 1.0,
            Self::JointHistogram(h) => h.total_mass(),
        }
    }

    /// Structural soundness checks used by model validation.
    pub fn check(&self) -> Vec<String> {
        match self {
            Self::Histogram(h) => h.check(),
            Self::GaussianMixture(g) => g.check(),
            Self::JointHistogram(h) => h.check(),
            Self::MultiGaussianMixture(g) => g.check(),
        }
    }
}

/// Univariate discrete distribution over integer codes `0..masses.len()`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Histogram {
    pub masses: Vec<f64>,
}

impl Histogram {
    pub fn new(masses: Vec<f64>) -> Self {
        Self { masses }
    }

    /// MLE with Dirichlet smoothing: (count + alpha) / (n + alpha * d).
    pub fn from_counts(counts: &[u64], alpha: f64) -> Self {
        let n: u64 = counts.iter().sum();
        let d = counts.len() as f64;
        let denom = n as f64 + alpha * d;
        let masses = counts
            .iter()
            .map(|&c| (c as f64 + alpha) / denom)
            .collect();
        Self { masses }
    }

    fn mass(&self, iv: &Interval) -> f64 {
        let a = iv.lo as usize;
        let b = (iv.hi as usize).min(self.masses.len().saturating_sub(1));
        if a >= self.masses.len() {
            return 0.0;
        }
        kahan_sum(self.masses[a..=b].iter().copied())
    }

    fn point(&self, x: f64) -> f64 {
        let i = x.round() as i64;
        if i < 0 || i as usize >= self.masses.len() {
            0.0
        } else {
            self.masses[i as usize]
        }
    }

    fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.masses.is_empty() {
            out.push("histogram has no cells".into());
        }
        if self.masses.iter().any(|&m| !(m >= 0.0) || m.is_nan()) {
            out.push("histogram has a negative or NaN mass".into());
        }
        let total = kahan_sum(self.masses.iter().copied());
        if (total - 1.0).abs() > 1e-9 {
            out.push(format!("histogram masses sum {total:.12} != 1"));
        }
        out
    }
}

/// Storage for a multivariate discrete distribution.
///
/// Small lattices are dense row-major arrays. Large lattices keep only the
/// observed tuples plus one collective escape mass spread uniformly over the
/// unobserved remainder of the lattice.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "storage", rename_all = "snake_case")]
pub enum JointStorage {
    Dense { masses: Vec<f64> },
    Sparse {
        /// Sorted by tuple, one entry per observed value combination.
        entries: Vec<(Vec<u32>, f64)>,
        /// Total mass of all unobserved tuples combined.
        escape: f64,
    },
}

/// Multivariate discrete distribution over the lattice `0..dims[0] x ...`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointHistogram {
    pub dims: Vec<usize>,
    pub storage: JointStorage,
}

impl JointHistogram {
    pub fn dense(dims: Vec<usize>, masses: Vec<f64>) -> Self {
        Self { dims, storage: JointStorage::Dense { masses } }
    }

    pub fn lattice_size(&self) -> u128 {
        self.dims.iter().map(|&d| d as u128).product()
    }

    fn index(&self, tuple: &[usize]) -> usize {
        let mut idx = 0usize;
        for (i, &v) in tuple.iter().enumerate() {
            idx = idx * self.dims[i] + v;
        }
        idx
    }

    /// Number of lattice points inside the box.
    fn box_cells(&self, bounds: &[Interval]) -> f64 {
        bounds.iter().map(|iv| iv.hi - iv.lo + 1.0).product()
    }

    fn mass(&self, bounds: &[Interval]) -> f64 {
        match &self.storage {
            JointStorage::Dense { masses } => {
                let los: Vec<usize> = bounds.iter().map(|iv| iv.lo as usize).collect();
                let his: Vec<usize> = bounds
                    .iter()
                    .zip(&self.dims)
                    .map(|(iv, &d)| (iv.hi as usize).min(d - 1))
                    .collect();
                // odometer walk over the box
                let mut tuple = los.clone();
                let mut sum = 0.0;
                let mut comp = 0.0;
                'cells: loop {
                    let v = masses[self.index(&tuple)];
                    let y = v - comp;
                    let t = sum + y;
                    comp = (t - sum) - y;
                    sum = t;
                    let mut k = tuple.len();
                    loop {
                        if k == 0 {
                            break 'cells;
                        }
                        k -= 1;
                        if tuple[k] < his[k] {
                            tuple[k] += 1;
                            for j in k + 1..tuple.len() {
                                tuple[j] = los[j];
                            }
                            continue 'cells;
                        }
                    }
                }
                sum
            }
            JointStorage::Sparse { entries, escape } => {
                let in_box = |tuple: &[u32]| {
                    tuple
                        .iter()
                        .zip(bounds)
                        .all(|(&v, iv)| (v as f64) >= iv.lo && (v as f64) <= iv.hi)
                };
                let observed_mass = kahan_sum(
                    entries
                        .iter()
                        .filter(|(t, _)| in_box(t))
                        .map(|(_, m)| *m),
                );
                let observed_in_box = entries.iter().filter(|(t, _)| in_box(t)).count() as f64;
                let lattice = self.lattice_size() as f64;
                let unobserved_total = lattice - entries.len() as f64;
                if unobserved_total <= 0.0 {
                    return observed_mass;
                }
                let cells = self.box_cells(bounds);
                let unobserved_in_box = (cells - observed_in_box).max(0.0);
                observed_mass + escape * unobserved_in_box / unobserved_total
            }
        }
    }

    fn point(&self, point: &[f64]) -> f64 {
        let tuple: Vec<usize> = point.iter().map(|&x| x.round().max(0.0) as usize).collect();
        if tuple.iter().zip(&self.dims).any(|(&v, &d)| v >= d) {
            return 0.0;
        }
        match &self.storage {
            JointStorage::Dense { masses } => masses[self.index(&tuple)],
            JointStorage::Sparse { entries, escape } => {
                let key: Vec<u32> = tuple.iter().map(|&v| v as u32).collect();
                match entries.binary_search_by(|(t, _)| t.cmp(&key)) {
                    Ok(i) => entries[i].1,
                    Err(_) => {
                        let unobserved = self.lattice_size() as f64 - entries.len() as f64;
                        if unobserved <= 0.0 {
                            0.0
                        } else {
                            escape / unobserved
                        }
                    }
                }
            }
        }
    }

    fn total_mass(&self) -> f64 {
        match &self.storage {
            JointStorage::Dense { masses } => kahan_sum(masses.iter().copied()),
            JointStorage::Sparse { entries, escape } => {
                kahan_sum(entries.iter().map(|(_, m)| *m)) + escape
            }
        }
    }

    fn param_count(&self) -> usize {
        match &self.storage {
            JointStorage::Dense { masses } => masses.len(),
            JointStorage::Sparse { entries, .. } => entries.len() + 1,
        }
    }

    fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.dims.is_empty() || self.dims.iter().any(|&d| d == 0) {
            out.push("joint histogram has empty dims".into());
            return out;
        }
        match &self.storage {
            JointStorage::Dense { masses } => {
                if masses.len() as u128 != self.lattice_size() {
                    out.push(format!(
                        "dense joint histogram stores {} masses for a {} lattice",
                        masses.len(),
                        self.lattice_size()
                    ));
                }
                if masses.iter().any(|&m| !(m >= 0.0) || m.is_nan()) {
                    out.push("joint histogram has a negative or NaN mass".into());
                }
            }
            JointStorage::Sparse { entries, escape } => {
                if *escape < 0.0 || escape.is_nan() {
                    out.push("sparse joint histogram has invalid escape mass".into());
                }
                if entries.windows(2).any(|w| w[0].0 >= w[1].0) {
                    out.push("sparse joint histogram entries not sorted/unique".into());
                }
                if entries
                    .iter()
                    .any(|(t, m)| t.len() != self.dims.len() || !(*m >= 0.0))
                {
                    out.push("sparse joint histogram has a malformed entry".into());
                }
            }
        }
        let total = self.total_mass();
        if (total - 1.0).abs() > 1e-9 {
            out.push(format!("joint histogram masses sum {total:.12} != 1"));
        }
        out
    }
}
