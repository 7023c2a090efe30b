//! Structural validation of FSPN models.
//!
//! Malformed input is reported, not thrown: `validate` walks the whole tree
//! and returns every violated invariant with the path of the offending node.

use crate::leaf::LeafDistribution;
use crate::model::interval::Event;
use crate::model::{FspnModel, FspnNode, VarDomain, VariableMeta};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

/// A single violated invariant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

/// Every violation found in one validation pass; empty means valid.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn push(&mut self, path: &str, message: impl Into<String>) {
        self.violations.push(Violation { path: path.to_string(), message: message.into() });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for v in &self.violations {
            writeln!(f, "  {}: {}", v.path, v.message)?;
        }
        Ok(())
    }
}

const WEIGHT_SUM_TOL: f64 = 1e-9;
const TILE_TOL: f64 = 1e-9;

impl FspnModel {
    /// Check every structural invariant; an empty report means the model is valid.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        for meta in &self.variables {
            if let Some(msg) = meta.check() {
                report.push("variables", msg);
            }
        }
        if self.variables.is_empty() {
            report.push("variables", "model has no variables");
            return report;
        }
        let ctx = Ctx { vars: &self.variables, report: &mut report };
        let mut ctx = ctx;
        if matches!(self.root, FspnNode::Split { .. } | FspnNode::MultiLeaf { .. }) {
            ctx.report.push("root", "root must represent a joint distribution");
        } else if let Some(scope) = ctx.check_dist(&self.root, "root") {
            let all: BTreeSet<usize> = (0..self.variables.len()).collect();
            if scope != all {
                ctx.report.push(
                    "root",
                    format!("root scope {:?} does not cover all {} variables", scope, all.len()),
                );
            }
        }
        report
    }
}

struct Ctx<'a> {
    vars: &'a [VariableMeta],
    report: &'a mut ValidationReport,
}

impl<'a> Ctx<'a> {
    fn check_scope_vec(&mut self, scope: &[usize], path: &str, what: &str) -> bool {
        if scope.is_empty() {
            self.report.push(path, format!("{what} scope is empty"));
            return false;
        }
        if scope.windows(2).any(|w| w[0] >= w[1]) {
            self.report.push(path, format!("{what} scope is not sorted and unique"));
            return false;
        }
        if scope.iter().any(|&v| v >= self.vars.len()) {
            self.report.push(path, format!("{what} scope references an unknown variable"));
            return false;
        }
        true
    }

    /// Validate a joint-distribution node and return its derived scope.
    fn check_dist(&mut self, node: &FspnNode, path: &str) -> Option<BTreeSet<usize>> {
        match node {
            FspnNode::UniLeaf { variable, dist } => {
                if *variable >= self.vars.len() {
                    self.report.push(path, "uni-leaf references an unknown variable");
                    return None;
                }
                self.check_uni_dist(dist, &self.vars[*variable].clone(), path);
                Some(std::iter::once(*variable).collect())
            }
            FspnNode::Sum { weights, children } => {
                if children.is_empty() {
                    self.report.push(path, "sum node has no children");
                    return None;
                }
                if weights.len() != children.len() {
                    self.report.push(
                        path,
                        format!("sum node has {} weights for {} children", weights.len(), children.len()),
                    );
                }
                if weights.iter().any(|&w| !(w > 0.0)) {
                    self.report.push(path, "sum weights must be positive");
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > WEIGHT_SUM_TOL {
                    self.report.push(path, format!("weights sum {total:.12} != 1"));
                }
                let mut scope: Option<BTreeSet<usize>> = None;
                for (i, c) in children.iter().enumerate() {
                    let child_path = format!("{path}/child[{i}]");
                    if let Some(s) = self.check_dist(c, &child_path) {
                        match &scope {
                            None => scope = Some(s),
                            Some(prev) if *prev != s => {
                                self.report.push(&child_path, "sum children must share the parent scope");
                            }
                            _ => {}
                        }
                    }
                }
                scope
            }
            FspnNode::Product { child_scopes, children } => {
                if children.is_empty() {
                    self.report.push(path, "product node has no children");
                    return None;
                }
                if child_scopes.len() != children.len() {
                    self.report.push(path, "product child_scopes count mismatch");
                }
                let mut union: BTreeSet<usize> = BTreeSet::new();
                let mut total = 0usize;
                for (i, c) in children.iter().enumerate() {
                    let child_path = format!("{path}/child[{i}]");
                    let declared: Option<BTreeSet<usize>> = child_scopes
                        .get(i)
                        .map(|s| s.iter().copied().collect());
                    if let Some(s) = self.check_dist(c, &child_path) {
                        if let Some(decl) = &declared {
                            if *decl != s {
                                self.report.push(
                                    &child_path,
                                    "product child scope differs from declared child_scopes entry",
                                );
                            }
                        }
                        total += s.len();
                        union.extend(&s);
                    }
                }
                if union.len() != total {
                    self.report.push(path, "product child scopes are not pairwise disjoint");
                }
                Some(union)
            }
            FspnNode::Factorize { w_scope, h_scope, left, right } => {
                let h_ok = self.check_scope_vec(h_scope, path, "factorize h");
                let w_ok = self.check_scope_vec(w_scope, path, "factorize w");
                if h_ok && w_ok {
                    let h: BTreeSet<usize> = h_scope.iter().copied().collect();
                    let w: BTreeSet<usize> = w_scope.iter().copied().collect();
                    if !h.is_disjoint(&w) {
                        self.report.push(path, "factorize h and w scopes overlap");
                    }
                }
                let left_path = format!("{path}/left");
                if let Some(ls) = self.check_dist(left, &left_path) {
                    let w: BTreeSet<usize> = w_scope.iter().copied().collect();
                    if ls != w {
                        self.report.push(&left_path, "left child scope must equal w_scope");
                    }
                }
                let right_path = format!("{path}/right");
                let region = Event::full(self.vars);
                self.check_cond(right, &right_path, h_scope, w_scope, &region);
                Some(w_scope.iter().chain(h_scope).copied().collect())
            }
            FspnNode::Split { .. } | FspnNode::MultiLeaf { .. } => {
                self.report.push(
                    path,
                    format!("{} node outside a factorize right subtree", node.kind_name()),
                );
                None
            }
        }
    }

    /// Validate a conditional node (right subtree of a factorize).
    fn check_cond(
        &mut self,
        node: &FspnNode,
        path: &str,
        h_scope: &[usize],
        cond_scope: &[usize],
        region: &Event,
    ) {
        match node {
            FspnNode::Split { regions, children } => {
                if children.is_empty() {
                    self.report.push(path, "split node has no children");
                    return;
                }
                if regions.len() != children.len() {
                    self.report.push(path, "split regions count mismatch");
                    return;
                }
                for (i, r) in regions.iter().enumerate() {
                    if r.n_vars() != self.vars.len() {
                        self.report.push(
                            &format!("{path}/region[{i}]"),
                            "region must carry one interval per model variable",
                        );
                        return;
                    }
                    for (v, iv) in r.intervals.iter().enumerate() {
                        if cond_scope.contains(&v) {
                            if !iv.subset_of(region.get(v)) {
                                self.report.push(
                                    &format!("{path}/region[{i}]"),
                                    format!("interval for variable {v} escapes the parent region"),
                                );
                            }
                            if self.vars[v].is_discrete() && *iv != iv.normalize_discrete() {
                                self.report.push(
                                    &format!("{path}/region[{i}]"),
                                    format!("interval for discrete variable {v} is not normalized"),
                                );
                            }
                        } else if *iv != self.vars[v].full_interval() {
                            self.report.push(
                                &format!("{path}/region[{i}]"),
                                format!("variable {v} outside the condition scope must stay full-domain"),
                            );
                        }
                    }
                }
                for i in 0..regions.len() {
                    for j in i + 1..regions.len() {
                        if !regions[i].disjoint_on(&regions[j], cond_scope, self.vars) {
                            self.report.push(path, format!("regions not disjoint ({i} vs {j})"));
                        }
                    }
                }
                let parent_measure = region.measure_on(cond_scope, self.vars);
                let child_measure: f64 =
                    regions.iter().map(|r| r.measure_on(cond_scope, self.vars)).sum();
                if (child_measure - parent_measure).abs()
                    > TILE_TOL * parent_measure.max(1.0)
                {
                    self.report.push(
                        path,
                        format!(
                            "regions do not tile the parent (child measure {child_measure}, parent {parent_measure})"
                        ),
                    );
                }
                for (i, (r, c)) in regions.iter().zip(children).enumerate() {
                    self.check_cond(c, &format!("{path}/child[{i}]"), h_scope, cond_scope, r);
                }
            }
            FspnNode::MultiLeaf { scope, condition_region, dist } => {
                if !self.check_scope_vec(scope, path, "multi-leaf") {
                    return;
                }
                if scope != h_scope {
                    self.report.push(path, "multi-leaf scope must equal the factorize h_scope");
                }
                if condition_region != region {
                    self.report.push(path, "multi-leaf condition region differs from its split cell");
                }
                self.check_multi_dist(dist, scope, path);
            }
            other => {
                self.report.push(
                    path,
                    format!(
                        "{} node cannot appear inside a factorize right subtree",
                        other.kind_name()
                    ),
                );
            }
        }
    }

    fn check_uni_dist(&mut self, dist: &LeafDistribution, meta: &VariableMeta, path: &str) {
        for msg in dist.check() {
            self.report.push(path, msg);
        }
        match (dist, &meta.domain) {
            (LeafDistribution::Histogram(h), VarDomain::Discrete { cardinality }) => {
                if h.masses.len() != *cardinality {
                    self.report.push(
                        path,
                        format!(
                            "histogram has {} cells for cardinality {}",
                            h.masses.len(),
                            cardinality
                        ),
                    );
                }
            }
            (LeafDistribution::GaussianMixture(g), VarDomain::Continuous { lo, hi }) => {
                if (g.domain_lo - lo).abs() > 1e-9 || (g.domain_hi - hi).abs() > 1e-9 {
                    self.report.push(path, "gaussian mixture domain differs from the variable domain");
                }
            }
            (LeafDistribution::Histogram(_), VarDomain::Continuous { .. }) => {
                self.report.push(path, "histogram leaf on a continuous variable");
            }
            (LeafDistribution::GaussianMixture(_), VarDomain::Discrete { .. }) => {
                self.report.push(path, "gaussian mixture leaf on a discrete variable");
            }
            _ => {
                self.report.push(path, "uni-leaf holds a multivariate distribution");
            }
        }
    }

    fn check_multi_dist(&mut self, dist: &LeafDistribution, scope: &[usize], path: &str) {
        for msg in dist.check() {
            self.report.push(path, msg);
        }
        if dist.dims() != scope.len() {
            self.report.push(
                path,
                format!("multi-leaf distribution has {} dims for scope size {}", dist.dims(), scope.len()),
            );
            return;
        }
        match dist {
            LeafDistribution::JointHistogram(h) => {
                for (i, &v) in scope.iter().enumerate() {
                    match self.vars[v].cardinality() {
                        Some(card) if h.dims[i] == card => {}
                        Some(card) => self.report.push(
                            path,
                            format!("joint histogram dim {i} has {} cells for cardinality {card}", h.dims[i]),
                        ),
                        None => self.report.push(
                            path,
                            format!("joint histogram covers continuous variable {v}"),
                        ),
                    }
                }
            }
            LeafDistribution::MultiGaussianMixture(g) => {
                for (i, &v) in scope.iter().enumerate() {
                    let full = self.vars[v].full_interval();
                    if (g.domain_lo[i] - full.lo).abs() > 1e-9
                        || (g.domain_hi[i] - full.hi).abs() > 1e-9
                    {
                        self.report.push(
                            path,
                            format!("mixture domain for dim {i} differs from variable {v}'s domain"),
                        );
                    }
                    if g.discrete_dims[i] != self.vars[v].is_discrete() {
                        self.report.push(
                            path,
                            format!("mixture dim {i} kind differs from variable {v}'s kind"),
                        );
                    }
                }
            }
            _ => {
                self.report.push(path, "multi-leaf holds a univariate distribution");
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leaf::{Histogram, JointHistogram, LeafDistribution};
    use crate::model::interval::Interval;
    use crate::model::{FspnModel, FspnNode, VariableMeta};

    fn two_var_sum(weights: Vec<f64>) -> FspnModel {
        let vars = vec![VariableMeta::discrete("a", 2), VariableMeta::discrete("b", 2)];
        let mk_child = || FspnNode::Product {
            child_scopes: vec![vec![0], vec![1]],
            children: vec![
                FspnNode::UniLeaf {
                    variable: 0,
                    dist: LeafDistribution::Histogram(Histogram::new(vec![0.5, 0.5])),
                },
                FspnNode::UniLeaf {
                    variable: 1,
                    dist: LeafDistribution::Histogram(Histogram::new(vec![0.5, 0.5])),
                },
            ],
        };
        let root = FspnNode::Sum {
            weights,
            children: vec![mk_child(), mk_child()],
        };
        FspnModel::new_unchecked(vars, root, None)
    }

    #[test]
    fn sum_weights_ok() {
        let report = two_var_sum(vec![0.3, 0.7]).validate();
        assert!(report.is_valid(), "{report}");
    }

    #[test]
    fn sum_weights_not_normalized() {
        let report = two_var_sum(vec![0.3, 0.6]).validate();
        assert!(!report.is_valid());
        assert!(
            report.violations.iter().any(|v| v.message.contains("sum 0.9")),
            "{report}"
        );
    }

    #[test]
    fn overlapping_split_regions_reported() {
        // one discrete condition variable with overlapping cells [0,5] and [4,9]
        let vars = vec![VariableMeta::discrete("x3", 10), VariableMeta::discrete("h", 2)];
        let full = Event::full(&vars);
        let mut r1 = full.clone();
        r1.set(0, Interval::closed(0.0, 5.0));
        let mut r2 = full.clone();
        r2.set(0, Interval::closed(4.0, 9.0));
        let leaf = |region: Event| FspnNode::MultiLeaf {
            scope: vec![1],
            condition_region: region,
            dist: LeafDistribution::JointHistogram(JointHistogram::dense(vec![2], vec![0.5, 0.5])),
        };
        let root = FspnNode::Factorize {
            w_scope: vec![0],
            h_scope: vec![1],
            left: Box::new(FspnNode::UniLeaf {
                variable: 0,
                dist: LeafDistribution::Histogram(Histogram::new(vec![0.1; 10])),
            }),
            right: Box::new(FspnNode::Split {
                regions: vec![r1.clone(), r2.clone()],
                children: vec![leaf(r1), leaf(r2)],
            }),
        };
        let report = FspnModel::new_unchecked(vars, root, None).validate();
        assert!(
            report.violations.iter().any(|v| v.message.contains("not disjoint")),
            "{report}"
        );
    }
}
