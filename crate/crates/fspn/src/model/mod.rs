//! The FSPN tree data model: typed nodes, variable metadata, structural
//! statistics, and the versioned on-disk format.

pub mod interval;
pub mod serial;
pub mod validate;

pub use interval::{Event, Interval, Region};
pub use serial::{deserialize, deserialize_lenient, serialize, FORMAT_VERSION};
pub use validate::{ValidationReport, Violation};

use crate::leaf::LeafDistribution;
use crate::learning::LearnConfig;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Variable kind and domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarDomain {
    /// Integer codes `0..cardinality`.
    Discrete { cardinality: usize },
    /// Closed real interval in source-column units.
    Continuous { lo: f64, hi: f64 },
}

/// Name and domain of one model variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableMeta {
    pub name: String,
    #[serde(flatten)]
    pub domain: VarDomain,
}

impl VariableMeta {
    pub fn discrete(name: &str, cardinality: usize) -> Self {
        Self { name: name.into(), domain: VarDomain::Discrete { cardinality } }
    }

    pub fn continuous(name: &str, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), domain: VarDomain::Continuous { lo, hi } }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.domain, VarDomain::Discrete { .. })
    }

    pub fn cardinality(&self) -> Option<usize> {
        match self.domain {
            VarDomain::Discrete { cardinality } => Some(cardinality),
            VarDomain::Continuous { .. } => None,
        }
    }

    pub fn full_interval(&self) -> Interval {
        match self.domain {
            VarDomain::Discrete { cardinality } => {
                Interval::closed(0.0, cardinality.saturating_sub(1) as f64)
            }
            VarDomain::Continuous { lo, hi } => Interval::closed(lo, hi),
        }
    }

    pub fn check(&self) -> Option<String> {
        match self.domain {
            VarDomain::Discrete { cardinality } if cardinality < 1 => {
                Some(format!("variable {}: discrete cardinality must be >= 1", self.name))
            }
            VarDomain::Continuous { lo, hi } if !(lo < hi) => {
                Some(format!("variable {}: continuous domain needs lo < hi", self.name))
            }
            _ => None,
        }
    }
}

/// One node of the FSPN tree.
///
/// `Factorize`, `Sum`, `Product` and `UniLeaf` represent joint distributions;
/// `Split` and `MultiLeaf` represent conditional distributions and appear only
/// inside the right subtree of a factorize node.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FspnNode {
    Factorize {
        /// Weakly correlated remainder; modeled by `left` as Pr(W).
        w_scope: Vec<usize>,
        /// Highly correlated group; modeled by `right` as Pr(H | W).
        h_scope: Vec<usize>,
        left: Box<FspnNode>,
        right: Box<FspnNode>,
    },
    Sum {
        weights: Vec<f64>,
        children: Vec<FspnNode>,
    },
    Product {
        child_scopes: Vec<Vec<usize>>,
        children: Vec<FspnNode>,
    },
    Split {
        /// Axis-aligned cells tiling the parent condition region.
        regions: Vec<Region>,
        children: Vec<FspnNode>,
    },
    UniLeaf {
        variable: usize,
        dist: LeafDistribution,
    },
    MultiLeaf {
        scope: Vec<usize>,
        condition_region: Region,
        dist: LeafDistribution,
    },
}

impl FspnNode {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Factorize { .. } => "factorize",
            Self::Sum { .. } => "sum",
            Self::Product { .. } => "product",
            Self::Split { .. } => "split",
            Self::UniLeaf { .. } => "uni_leaf",
            Self::MultiLeaf { .. } => "multi_leaf",
        }
    }

    /// Scope derived from the tree structure, ignoring consistency issues
    /// (validation reports those).
    pub fn scope(&self) -> BTreeSet<usize> {
        match self {
            Self::Factorize { w_scope, h_scope, .. } => {
                w_scope.iter().chain(h_scope).copied().collect()
            }
            Self::Sum { children, .. } => {
                children.first().map(|c| c.scope()).unwrap_or_default()
            }
            Self::Product { child_scopes, .. } => {
                child_scopes.iter().flatten().copied().collect()
            }
            Self::Split { children, .. } => {
                children.first().map(|c| c.scope()).unwrap_or_default()
            }
            Self::UniLeaf { variable, .. } => std::iter::once(*variable).collect(),
            Self::MultiLeaf { scope, .. } => scope.iter().copied().collect(),
        }
    }

    pub fn children(&self) -> &[FspnNode] {
        match self {
            Self::Sum { children, .. }
            | Self::Product { children, .. }
            | Self::Split { children, .. } => children,
            Self::Factorize { .. } | Self::UniLeaf { .. } | Self::MultiLeaf { .. } => &[],
        }
    }

    /// Apply `f` to every node in depth-first order.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a FspnNode)) {
        f(self);
        match self {
            Self::Factorize { left, right, .. } => {
                left.visit(f);
                right.visit(f);
            }
            _ => {
                for c in self.children() {
                    c.visit(f);
                }
            }
        }
    }

    fn visit_mut(&mut self, f: &mut impl FnMut(&mut FspnNode)) {
        f(self);
        match self {
            Self::Factorize { left, right, .. } => {
                left.visit_mut(f);
                right.visit_mut(f);
            }
            Self::Sum { children, .. }
            | Self::Product { children, .. }
            | Self::Split { children, .. } => {
                for c in children {
                    c.visit_mut(f);
                }
            }
            _ => {}
        }
    }
}

/// The learned or compiled artifact: variable metadata plus a rooted tree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FspnModel {
    pub format_version: u64,
    pub variables: Vec<VariableMeta>,
    pub learn_config: Option<LearnConfig>,
    pub root: FspnNode,
}

impl FspnModel {
    /// Build a model, preparing leaf caches and enforcing all structural
    /// invariants. Fails with the full validation report if any is violated.
    pub fn new(
        variables: Vec<VariableMeta>,
        root: FspnNode,
        learn_config: Option<LearnConfig>,
    ) -> crate::error::Result<Self> {
        let model = Self::new_unchecked(variables, root, learn_config);
        let report = model.validate();
        if report.is_valid() {
            Ok(model)
        } else {
            Err(crate::error::FspnError::Invalid(report))
        }
    }

    /// Build without validating; leaf caches are still prepared best-effort.
    /// Intended for tests and for loading models one wants to inspect.
    pub fn new_unchecked(
        variables: Vec<VariableMeta>,
        root: FspnNode,
        learn_config: Option<LearnConfig>,
    ) -> Self {
        let mut model = Self {
            format_version: serial::FORMAT_VERSION,
            variables,
            learn_config,
            root,
        };
        let _ = model.prepare_leaves();
        model
    }

    /// Recompute derived leaf quantities; returns one message per leaf whose
    /// preparation failed.
    pub fn prepare_leaves(&mut self) -> Vec<String> {
        let mut errors = Vec::new();
        self.root.visit_mut(&mut |node| {
            let dist = match node {
                FspnNode::UniLeaf { dist, .. } => dist,
                FspnNode::MultiLeaf { dist, .. } => dist,
                _ => return,
            };
            if let Err(e) = dist.prepare() {
                errors.push(e);
            }
        });
        errors
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    /// Structural statistics computed by one traversal.
    pub fn stats(&self) -> ModelStats {
        let mut s = ModelStats::default();
        fn walk(node: &FspnNode, depth: usize, s: &mut ModelStats) {
            s.n_nodes += 1;
            s.depth = s.depth.max(depth);
            match node {
                FspnNode::Factorize { left, right, .. } => {
                    s.n_factorize += 1;
                    walk(left, depth + 1, s);
                    walk(right, depth + 1, s);
                }
                FspnNode::Sum { weights, children } => {
                    s.n_sum += 1;
                    s.n_params += weights.len();
                    for c in children {
                        walk(c, depth + 1, s);
                    }
                }
                FspnNode::Product { children, .. } => {
                    s.n_product += 1;
                    for c in children {
                        walk(c, depth + 1, s);
                    }
                }
                FspnNode::Split { regions, children } => {
                    s.n_split += 1;
                    s.n_bound_params += 2 * regions.len() * regions.first().map_or(0, |r| r.n_vars());
                    for c in children {
                        walk(c, depth + 1, s);
                    }
                }
                FspnNode::UniLeaf { dist, .. } => {
                    s.n_unileaf += 1;
                    s.n_params += dist.param_count();
                }
                FspnNode::MultiLeaf { dist, condition_region, .. } => {
                    s.n_multileaf += 1;
                    s.n_params += dist.param_count();
                    s.n_bound_params += 2 * condition_region.n_vars();
                }
            }
        }
        walk(&self.root, 1, &mut s);
        s
    }
}

/// Node and parameter counts for a model.
///
/// `n_params` counts distribution scalars (leaf parameters plus sum weights);
/// structural interval bounds are tallied separately in `n_bound_params` so
/// the distribution storage can be compared against tabular baselines.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelStats {
    pub n_nodes: usize,
    pub n_factorize: usize,
    pub n_sum: usize,
    pub n_product: usize,
    pub n_split: usize,
    pub n_unileaf: usize,
    pub n_multileaf: usize,
    pub n_params: usize,
    pub n_bound_params: usize,
    pub depth: usize,
}
