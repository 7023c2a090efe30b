//! Structure learning: recursive decomposition with an RDC independence
//! oracle, correlated-variable grouping, row clustering, conditional
//! splitting, and MLE leaf fitting.

pub mod cluster;
pub mod fit;
pub mod rdc;
pub mod split;

pub use cluster::{cluster_rows, Clustering};
pub use fit::{fit_multi_leaf, fit_uni_leaf};
pub use rdc::{correlation_matrix, rdc, CorrelationMatrix};
pub use split::{split_conditional, ConditionalSplit};

use crate::data_io::DataMatrix;
use crate::error::{FspnError, Result};
use crate::model::interval::{Event, Interval};
use crate::model::{FspnModel, FspnNode};
use serde::{Deserialize, Serialize};

/// Region-partition strategy for split nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMethod {
    GridKmeans,
    Greedy,
}

impl std::str::FromStr for SplitMethod {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "grid_kmeans" => Ok(Self::GridKmeans),
            "greedy" => Ok(Self::Greedy),
            other => Err(format!("unknown split_method '{other}'")),
        }
    }
}

impl std::fmt::Display for SplitMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::GridKmeans => write!(f, "grid_kmeans"),
            Self::Greedy => write!(f, "greedy"),
        }
    }
}

/// Hyper-parameters of structure learning. `tau_high` may be infinite, which
/// disables factorize nodes entirely and degenerates the output to a
/// tree-shaped sum-product network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    /// Independence threshold: scores below it count as independent.
    pub tau_low: f64,
    /// High-correlation threshold: scores at or above it group variables.
    #[serde(with = "float_or_inf")]
    pub tau_high: f64,
    /// Leaf fallback once a node holds fewer rows than this.
    pub min_instances: usize,
    /// Clusters per sum node.
    pub sum_k: usize,
    /// Random sine features per RDC evaluation.
    pub rdc_features: usize,
    /// Projection scale of the RDC feature map.
    pub rdc_scale: f64,
    /// RDC is the median over this many seeded evaluations.
    pub rdc_seeds: usize,
    /// Dirichlet smoothing mass per histogram cell.
    pub smoothing_alpha: f64,
    /// Components per Gaussian-mixture leaf.
    pub gmm_components: usize,
    pub split_method: SplitMethod,
    /// Random thresholds tried by greedy splitting.
    pub greedy_candidates: usize,
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            tau_low: 0.3,
            tau_high: 0.7,
            min_instances: 100,
            sum_k: 2,
            rdc_features: 20,
            rdc_scale: 1.0 / 6.0,
            rdc_seeds: 5,
            smoothing_alpha: 0.1,
            gmm_components: 2,
            split_method: SplitMethod::Greedy,
            greedy_candidates: 10,
            max_depth: 30,
            seed: 0,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_low >= 0.0 && self.tau_low < self.tau_high) {
            return Err(FspnError::Usage("need 0 <= tau_low < tau_high".into()));
        }
        if self.tau_high.is_nan() {
            return Err(FspnError::Usage("tau_high must be a number or infinite".into()));
        }
        if self.min_instances < 1 || self.sum_k < 2 {
            return Err(FspnError::Usage("need min_instances >= 1 and sum_k >= 2".into()));
        }
        if self.rdc_features < 1 || self.rdc_seeds < 1 || self.gmm_components < 1 {
            return Err(FspnError::Usage("rdc/gmm counts must be >= 1".into()));
        }
        if self.greedy_candidates < 1 || self.max_depth < 1 {
            return Err(FspnError::Usage("greedy_candidates and max_depth must be >= 1".into()));
        }
        if !(self.rdc_scale > 0.0) {
            return Err(FspnError::Usage("rdc_scale must be positive".into()));
        }
        if !(self.smoothing_alpha >= 0.0) {
            return Err(FspnError::Usage("smoothing_alpha must be >= 0".into()));
        }
        Ok(())
    }

    /// Parse the flat `key=value` config file format; unknown keys are errors.
    pub fn from_key_value_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                FspnError::parse(format!("config line {}", lineno + 1), "expected key=value")
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |msg: &str| {
                FspnError::parse(format!("config line {}", lineno + 1), format!("{key}: {msg}"))
            };
            match key {
                "tau_low" => cfg.tau_low = value.parse().map_err(|_| bad("expected a number"))?,
                "tau_high" => {
                    cfg.tau_high = if value == "inf" {
                        f64::INFINITY
                    } else {
                        value.parse().map_err(|_| bad("expected a number or inf"))?
                    }
                }
                "min_instances" => {
                    cfg.min_instances = value.parse().map_err(|_| bad("expected a count"))?
                }
                "sum_k" => cfg.sum_k = value.parse().map_err(|_| bad("expected a count"))?,
                "rdc_features" => {
                    cfg.rdc_features = value.parse().map_err(|_| bad("expected a count"))?
                }
                "rdc_scale" => cfg.rdc_scale = value.parse().map_err(|_| bad("expected a number"))?,
                "rdc_seeds" => cfg.rdc_seeds = value.parse().map_err(|_| bad("expected a count"))?,
                "smoothing_alpha" => {
                    cfg.smoothing_alpha = value.parse().map_err(|_| bad("expected a number"))?
                }
                "gmm_components" => {
                    cfg.gmm_components = value.parse().map_err(|_| bad("expected a count"))?
                }
                "split_method" => {
                    cfg.split_method = value.parse().map_err(|e: String| bad(&e))?
                }
                "greedy_candidates" => {
                    cfg.greedy_candidates = value.parse().map_err(|_| bad("expected a count"))?
                }
                "max_depth" => cfg.max_depth = value.parse().map_err(|_| bad("expected a count"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("expected an integer"))?,
                other => {
                    return Err(FspnError::parse(
                        format!("config line {}", lineno + 1),
                        format!("unknown key '{other}'"),
                    ))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_key_value_text(&self) -> String {
        let tau_high = if self.tau_high.is_finite() {
            self.tau_high.to_string()
        } else {
            "inf".to_string()
        };
        format!(
            "tau_low={}\ntau_high={}\nmin_instances={}\nsum_k={}\nrdc_features={}\nrdc_scale={}\nrdc_seeds={}\nsmoothing_alpha={}\ngmm_components={}\nsplit_method={}\ngreedy_candidates={}\nmax_depth={}\nseed={}\n",
            self.tau_low,
            tau_high,
            self.min_instances,
            self.sum_k,
            self.rdc_features,
            self.rdc_scale,
            self.rdc_seeds,
            self.smoothing_alpha,
            self.gmm_components,
            self.split_method,
            self.greedy_candidates,
            self.max_depth,
            self.seed,
        )
    }
}

/// JSON cannot carry IEEE infinities; an infinite threshold is stored as "inf".
mod float_or_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum NumOrStr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match NumOrStr::deserialize(d)? {
            NumOrStr::Num(v) => Ok(v),
            NumOrStr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("bad float '{other}'"))),
            },
        }
    }
}

pub(crate) const PURPOSE_RDC: u32 = 1;
pub(crate) const PURPOSE_KMEANS: u32 = 2;
pub(crate) const PURPOSE_SPLIT: u32 = 3;
pub(crate) const PURPOSE_FIT: u32 = 4;

/// Per-node random streams derived from (master seed, purpose, node path);
/// sibling subtrees get independent, order-free streams.
pub(crate) fn derive_seed(master: u64, purpose: u32, path: &[u32]) -> u64 {
    let mut state = master ^ 0x9e37_79b9_7f4a_7c15;
    let mut mix = |v: u64| {
        state ^= v.wrapping_add(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(state << 6)
            .wrapping_add(state >> 2);
        state = state.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        state ^= state >> 27;
    };
    mix(purpose as u64);
    for &p in path {
        mix(p as u64 + 1);
    }
    state
}

/// Variables that belong to some connected component of the "highly
/// correlated" graph (edges with score >= tau_high) containing an edge.
pub fn group_correlated(corr: &CorrelationMatrix, tau_high: f64) -> Vec<usize> {
    let m = corr.len();
    let mut uf = UnionFind::new(m);
    let mut has_edge = vec![false; m];
    for i in 0..m {
        for j in i + 1..m {
            if corr.at(i, j) >= tau_high {
                uf.union(i, j);
                has_edge[i] = true;
                has_edge[j] = true;
            }
        }
    }
    let mut grouped_roots: Vec<usize> = (0..m).filter(|&i| has_edge[i]).map(|i| uf.find(i)).collect();
    grouped_roots.sort_unstable();
    grouped_roots.dedup();
    let mut out: Vec<usize> = (0..m)
        .filter(|&i| grouped_roots.binary_search(&uf.find(i)).is_ok())
        .map(|i| corr.scope[i])
        .collect();
    out.sort_unstable();
    out
}

/// Connected components under "dependent" edges (score > tau_low); a single
/// component means the scope is not product-decomposable.
pub fn partition_independent(corr: &CorrelationMatrix, tau_low: f64) -> Vec<Vec<usize>> {
    let m = corr.len();
    let mut uf = UnionFind::new(m);
    for i in 0..m {
        for j in i + 1..m {
            if corr.at(i, j) > tau_low {
                uf.union(i, j);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..m {
        groups.entry(uf.find(i)).or_default().push(corr.scope[i]);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    for g in out.iter_mut() {
        g.sort_unstable();
    }
    out.sort_by_key(|g| g[0]);
    out
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }
    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Learn an FSPN for the full joint distribution of a dataset.
pub fn learn_fspn(data: &DataMatrix, cfg: &LearnConfig) -> Result<FspnModel> {
    cfg.validate()?;
    if data.n_rows() == 0 {
        return Err(FspnError::Data("cannot learn from empty data".into()));
    }
    let learner = Learner { data, cfg };
    let scope: Vec<usize> = (0..data.n_cols()).collect();
    let rows = data.all_rows();
    let root = learner.joint(&rows, &scope, 1, &mut Vec::new())?;
    FspnModel::new(data.variables().to_vec(), root, Some(cfg.clone()))
}

struct Learner<'a> {
    data: &'a DataMatrix,
    cfg: &'a LearnConfig,
}

impl<'a> Learner<'a> {
    /// Joint-distribution recursion (condition scope empty).
    fn joint(&self, rows: &[u32], scope: &[usize], depth: usize, path: &mut Vec<u32>) -> Result<FspnNode> {
        if scope.len() == 1 {
            return self.uni_leaf(rows, scope[0], path);
        }
        if rows.len() < self.cfg.min_instances || depth >= self.cfg.max_depth {
            return self.naive_product(rows, scope, path);
        }
        let corr = rdc::correlation_matrix_view(self.data, rows, scope, self.cfg);
        let grouped = group_correlated(&corr, self.cfg.tau_high);
        if !grouped.is_empty() {
            let (w_scope, h_scope) = if grouped.len() == scope.len() {
                // everything is correlated: peel off the variable with the
                // least total correlation so Pr(W) stays non-degenerate
                let mut best = (f64::INFINITY, 0usize);
                for i in 0..scope.len() {
                    let total: f64 = (0..scope.len()).filter(|&j| j != i).map(|j| corr.at(i, j)).sum();
                    if total < best.0 {
                        best = (total, i);
                    }
                }
                let w = vec![scope[best.1]];
                let h: Vec<usize> = scope.iter().copied().filter(|v| *v != w[0]).collect();
                (w, h)
            } else {
                let h = grouped;
                let w: Vec<usize> = scope.iter().copied().filter(|v| !h.contains(v)).collect();
                (w, h)
            };
            path.push(0);
            let left = self.joint(rows, &w_scope, depth + 1, path)?;
            path.pop();
            path.push(1);
            let region = Event::full(self.data.variables());
            let right = self.conditional(rows, &h_scope, &w_scope, region, depth + 1, path)?;
            path.pop();
            return Ok(FspnNode::Factorize {
                w_scope,
                h_scope,
                left: Box::new(left),
                right: Box::new(right),
            });
        }
        let parts = partition_independent(&corr, self.cfg.tau_low);
        if parts.len() >= 2 {
            let mut children = Vec::with_capacity(parts.len());
            for (i, part) in parts.iter().enumerate() {
                path.push(i as u32);
                children.push(if part.len() == 1 {
                    self.uni_leaf(rows, part[0], path)?
                } else {
                    self.joint(rows, part, depth + 1, path)?
                });
                path.pop();
            }
            return Ok(FspnNode::Product { child_scopes: parts, children });
        }
        // dependent but not groupable: mixture over row clusters
        let seed = derive_seed(self.cfg.seed, PURPOSE_KMEANS, path);
        let clustering = cluster::cluster_rows_view(self.data, rows, scope, self.cfg.sum_k, seed);
        if clustering.clusters.len() < 2 {
            return self.naive_product(rows, scope, path);
        }
        let mut children = Vec::with_capacity(clustering.clusters.len());
        for (i, cluster) in clustering.clusters.iter().enumerate() {
            path.push(i as u32);
            children.push(self.joint(cluster, scope, depth + 1, path)?);
            path.pop();
        }
        Ok(FspnNode::Sum { weights: clustering.weights, children })
    }

    /// Conditional recursion inside a factorize right subtree.
    fn conditional(
        &self,
        rows: &[u32],
        scope: &[usize],
        condition: &[usize],
        region: Event,
        depth: usize,
        path: &mut Vec<u32>,
    ) -> Result<FspnNode> {
        let force_leaf = rows.len() < 2 * self.cfg.min_instances || depth >= self.cfg.max_depth;
        if !force_leaf {
            let dependence =
                rdc::cross_max_rdc(self.data, rows, scope, condition, self.cfg);
            if dependence >= self.cfg.tau_low {
                let seed = derive_seed(self.cfg.seed, PURPOSE_SPLIT, path);
                if let Some(split) = split::split_conditional_view(
                    self.data, rows, scope, condition, self.cfg, seed,
                ) {
                    let (left_region, right_region) = cut_region(
                        &region,
                        split.variable,
                        split.threshold,
                        self.data.variables()[split.variable].is_discrete(),
                    );
                    path.push(0);
                    let left = self.conditional(
                        &split.left_rows, scope, condition, left_region.clone(), depth + 1, path,
                    )?;
                    path.pop();
                    path.push(1);
                    let right = self.conditional(
                        &split.right_rows, scope, condition, right_region.clone(), depth + 1, path,
                    )?;
                    path.pop();
                    return Ok(FspnNode::Split {
                        regions: vec![left_region, right_region],
                        children: vec![left, right],
                    });
                }
                // no valid split: accept the approximation and fit a leaf
            }
        }
        let seed = derive_seed(self.cfg.seed, PURPOSE_FIT, path);
        let dist = fit::fit_multi_leaf_view(self.data, rows, scope, self.cfg, seed)?;
        Ok(FspnNode::MultiLeaf {
            scope: scope.to_vec(),
            condition_region: region,
            dist,
        })
    }

    fn uni_leaf(&self, rows: &[u32], variable: usize, path: &mut Vec<u32>) -> Result<FspnNode> {
        path.push(variable as u32);
        let seed = derive_seed(self.cfg.seed, PURPOSE_FIT, path);
        path.pop();
        let values = self.data.gather(variable, rows);
        let dist = fit::fit_uni_leaf(&values, &self.data.variables()[variable], self.cfg, seed)?;
        Ok(FspnNode::UniLeaf { variable, dist })
    }

    /// Leaf fallback for small or depth-capped nodes: independent univariate fits.
    fn naive_product(&self, rows: &[u32], scope: &[usize], path: &mut Vec<u32>) -> Result<FspnNode> {
        if scope.len() == 1 {
            return self.uni_leaf(rows, scope[0], path);
        }
        let mut children = Vec::with_capacity(scope.len());
        for &v in scope {
            children.push(self.uni_leaf(rows, v, path)?);
        }
        Ok(FspnNode::Product {
            child_scopes: scope.iter().map(|&v| vec![v]).collect(),
            children,
        })
    }
}

/// Cut a region at `threshold` on one variable: the left cell keeps values
/// `<= threshold`, the right cell gets the open remainder (next lattice
/// value onward for discrete variables).
pub(crate) fn cut_region(region: &Event, variable: usize, threshold: f64, discrete: bool) -> (Event, Event) {
    let iv = region.get(variable);
    let (left_iv, right_iv) = if discrete {
        let t = threshold.floor();
        (
            Interval::closed(iv.lo, t),
            Interval::closed(t + 1.0, iv.hi),
        )
    } else {
        (
            Interval::new(iv.lo, threshold, iv.lo_open, false),
            Interval::new(threshold, iv.hi, true, iv.hi_open),
        )
    };
    let mut left = region.clone();
    left.set(variable, left_iv);
    let mut right = region.clone();
    right.set(variable, right_iv);
    (left, right)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(scope: Vec<usize>, scores: &[(usize, usize, f64)]) -> CorrelationMatrix {
        let m = scope.len();
        let mut grid = vec![0.0; m * m];
        for i in 0..m {
            grid[i * m + i] = 1.0;
        }
        for &(i, j, v) in scores {
            grid[i * m + j] = v;
            grid[j * m + i] = v;
        }
        CorrelationMatrix::from_scores(scope, grid).unwrap()
    }

    #[test]
    fn grouping_threshold() {
        let corr = matrix(vec![0, 1, 2], &[(0, 1, 0.9), (0, 2, 0.1), (1, 2, 0.2)]);
        assert_eq!(group_correlated(&corr, 0.7), vec![0, 1]);
    }

    #[test]
    fn grouping_is_transitive() {
        let corr = matrix(vec![0, 1, 2], &[(0, 1, 0.8), (1, 2, 0.75), (0, 2, 0.2)]);
        assert_eq!(group_correlated(&corr, 0.7), vec![0, 1, 2]);
    }

    #[test]
    fn grouping_empty_below_threshold() {
        let corr = matrix(vec![0, 1, 2], &[(0, 1, 0.5), (1, 2, 0.6), (0, 2, 0.2)]);
        assert!(group_correlated(&corr, 0.7).is_empty());
    }

    #[test]
    fn grouping_invariant_under_reordering() {
        let corr_a = matrix(vec![3, 5, 9], &[(0, 1, 0.9), (1, 2, 0.8)]);
        let corr_b = matrix(vec![9, 3, 5], &[(1, 2, 0.9), (2, 0, 0.8)]);
        assert_eq!(group_correlated(&corr_a, 0.7), group_correlated(&corr_b, 0.7));
    }

    #[test]
    fn independence_partition() {
        let corr = matrix(vec![0, 1, 2], &[(0, 1, 0.8), (0, 2, 0.05), (1, 2, 0.05)]);
        assert_eq!(partition_independent(&corr, 0.3), vec![vec![0, 1], vec![2]]);
        let corr = matrix(vec![0, 1, 2], &[(0, 1, 0.05), (0, 2, 0.05), (1, 2, 0.05)]);
        assert_eq!(
            partition_independent(&corr, 0.3),
            vec![vec![0], vec![1], vec![2]]
        );
        let corr = matrix(vec![0, 1, 2], &[(0, 1, 0.5), (0, 2, 0.5), (1, 2, 0.5)]);
        assert_eq!(partition_independent(&corr, 0.3), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn config_key_value_roundtrip() {
        let mut cfg = LearnConfig::default();
        cfg.tau_high = f64::INFINITY;
        cfg.seed = 41;
        let text = cfg.to_key_value_text();
        let back = LearnConfig::from_key_value_text(&text).unwrap();
        assert_eq!(cfg, back);
        assert!(LearnConfig::from_key_value_text("nope=1\n").is_err());
    }

    #[test]
    fn config_json_handles_infinity() {
        let mut cfg = LearnConfig::default();
        cfg.tau_high = f64::INFINITY;
        let text = serde_json::to_string(&cfg).unwrap();
        let back: LearnConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn derived_seeds_differ_by_path_and_purpose() {
        let a = derive_seed(7, PURPOSE_KMEANS, &[0, 1]);
        let b = derive_seed(7, PURPOSE_KMEANS, &[1, 0]);
        let c = derive_seed(7, PURPOSE_FIT, &[0, 1]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(7, PURPOSE_KMEANS, &[0, 1]));
    }
}
