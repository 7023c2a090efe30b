//! Compiling discrete Bayesian networks into equivalent FSPNs, plus the
//! exact chain-rule joint used to verify the compiler.
//!
//! The construction is bottom-up over sinks: a parentless variable becomes a
//! uni-leaf; a sink with parents becomes a factorize node whose right child
//! is one split node with a point-region multi-leaf per CPT row; removing
//! the sink and recursing handles the rest, with product nodes over
//! disconnected components.

use crate::error::{FspnError, Result};
use crate::evalharness::{for_each_assignment, JointTable, JOINT_LATTICE_LIMIT};
use crate::leaf::{Histogram, JointHistogram, LeafDistribution};
use crate::model::interval::{Event, Interval};
use crate::model::{FspnModel, FspnNode, VariableMeta};
use std::collections::BTreeSet;

const CPT_ROW_TOL: f64 = 1e-9;

/// DAG of discrete variables with tabular conditional distributions.
///
/// `cpts[i]` holds one row per configuration of `parents[i]` (parents in
/// ascending variable order, first parent most significant), each row a
/// distribution over the values of variable `i`.
#[derive(Debug, Clone)]
pub struct BayesNet {
    pub variables: Vec<VariableMeta>,
    pub parents: Vec<Vec<usize>>,
    pub cpts: Vec<Vec<Vec<f64>>>,
}

impl BayesNet {
    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn cardinality(&self, var: usize) -> usize {
        self.variables[var].cardinality().unwrap_or(0)
    }

    /// Total number of stored CPT entries (the tabular model size).
    pub fn cpt_entry_count(&self) -> usize {
        self.cpts.iter().map(|rows| rows.iter().map(|r| r.len()).sum::<usize>()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        if n == 0 {
            return Err(FspnError::Data("bayes net has no variables".into()));
        }
        if self.parents.len() != n || self.cpts.len() != n {
            return Err(FspnError::Data("bayes net arrays have inconsistent lengths".into()));
        }
        for (i, meta) in self.variables.iter().enumerate() {
            if !meta.is_discrete() {
                return Err(FspnError::Data(format!("variable '{}' is not discrete", meta.name)));
            }
            if let Some(msg) = meta.check() {
                return Err(FspnError::Data(msg));
            }
            for &p in &self.parents[i] {
                if p >= n || p == i {
                    return Err(FspnError::Data(format!("variable {i} has an invalid parent {p}")));
                }
            }
            if self.parents[i].windows(2).any(|w| w[0] >= w[1]) {
                return Err(FspnError::Data(format!(
                    "parents of variable {i} must be sorted and unique"
                )));
            }
            let configs: usize = self.parents[i].iter().map(|&p| self.cardinality(p)).product();
            if self.cpts[i].len() != configs {
                return Err(FspnError::Data(format!(
                    "cpt of '{}' has {} rows, needs one per parent configuration ({configs})",
                    meta.name,
                    self.cpts[i].len()
                )));
            }
            for (r, row) in self.cpts[i].iter().enumerate() {
                if row.len() != self.cardinality(i) {
                    return Err(FspnError::Data(format!(
                        "cpt row {r} of '{}' has {} entries for cardinality {}",
                        meta.name,
                        row.len(),
                        self.cardinality(i)
                    )));
                }
                if row.iter().any(|&p| !(p >= 0.0) || p.is_nan()) {
                    return Err(FspnError::Data(format!(
                        "cpt row {r} of '{}' has a negative or NaN entry",
                        meta.name
                    )));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > CPT_ROW_TOL {
                    return Err(FspnError::Data(format!(
                        "cpt row {r} of '{}' sums to {total:.12}, expected 1",
                        meta.name
                    )));
                }
            }
        }
        self.topological_order()?;
        Ok(())
    }

    fn topological_order(&self) -> Result<Vec<usize>> {
        let n = self.n_vars();
        let mut indegree = vec![0usize; n];
        for i in 0..n {
            indegree[i] = self.parents[i].len();
        }
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            for &p in &self.parents[i] {
                children[p].push(i);
            }
        }
        let mut queue: BTreeSet<usize> =
            (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(&next) = queue.iter().next() {
            queue.remove(&next);
            order.push(next);
            for &c in &children[next] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    queue.insert(c);
                }
            }
        }
        if order.len() != n {
            return Err(FspnError::Data("bayes net contains a cycle".into()));
        }
        Ok(order)
    }

    fn cpt_row_index(&self, var: usize, assignment: &[usize]) -> usize {
        let mut idx = 0;
        for &p in &self.parents[var] {
            idx = idx * self.cardinality(p) + assignment[p];
        }
        idx
    }

    /// Parse the sectioned text format:
    ///
    /// ```text
    /// variables
    /// a 2
    /// b 3
    /// edges
    /// a b
    /// cpt a
    /// 0.4 0.6
    /// cpt b
    /// 0.1 0.7 0.2
    /// 0.3 0.3 0.4
    /// ```
    ///
    /// CPT rows follow parent configurations in lexicographic order over the
    /// parents sorted by variable index, first parent most significant.
    pub fn parse(text: &str) -> Result<Self> {
        #[derive(PartialEq)]
        enum Section {
            None,
            Variables,
            Edges,
            Cpt(usize),
        }
        let mut variables: Vec<VariableMeta> = Vec::new();
        let mut edges: Vec<(usize, usize)> = Vec::new();
        let mut cpt_rows: Vec<Vec<Vec<f64>>> = Vec::new();
        let mut section = Section::None;
        let find = |variables: &[VariableMeta], name: &str, lineno: usize| {
            variables
                .iter()
                .position(|v| v.name == name)
                .ok_or_else(|| {
                    FspnError::parse(format!("bn line {lineno}"), format!("unknown variable '{name}'"))
                })
        };
        for (lineno, raw) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line == "variables" {
                section = Section::Variables;
                continue;
            }
            if line == "edges" {
                section = Section::Edges;
                continue;
            }
            if let Some(name) = line.strip_prefix("cpt ") {
                let var = find(&variables, name.trim(), lineno)?;
                section = Section::Cpt(var);
                continue;
            }
            match section {
                Section::Variables => {
                    let mut parts = line.split_whitespace();
                    let name = parts.next().unwrap();
                    let card: usize = parts
                        .next()
                        .and_then(|c| c.parse().ok())
                        .ok_or_else(|| {
                            FspnError::parse(
                                format!("bn line {lineno}"),
                                "expected '<name> <cardinality>'",
                            )
                        })?;
                    if parts.next().is_some() {
                        return Err(FspnError::parse(
                            format!("bn line {lineno}"),
                            "expected '<name> <cardinality>'",
                        ));
                    }
                    variables.push(VariableMeta::discrete(name, card));
                    cpt_rows.push(Vec::new());
                }
                Section::Edges => {
                    let mut parts = line.split_whitespace();
                    let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next())
                    else {
                        return Err(FspnError::parse(
                            format!("bn line {lineno}"),
                            "expected '<parent> <child>'",
                        ));
                    };
                    edges.push((find(&variables, a, lineno)?, find(&variables, b, lineno)?));
                }
                Section::Cpt(var) => {
                    let row: Vec<f64> = line
                        .split_whitespace()
                        .map(|t| {
                            t.parse::<f64>().map_err(|_| {
                                FspnError::parse(
                                    format!("bn line {lineno}"),
                                    format!("bad probability '{t}'"),
                                )
                            })
                        })
                        .collect::<Result<_>>()?;
                    cpt_rows[var].push(row);
                }
                Section::None => {
                    return Err(FspnError::parse(
                        format!("bn line {lineno}"),
                        "content before any section header",
                    ))
                }
            }
        }
        let n = variables.len();
        let mut parents: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (p, c) in edges {
            parents[c].push(p);
        }
        for list in parents.iter_mut() {
            list.sort_unstable();
            list.dedup();
        }
        let bn = BayesNet { variables, parents, cpts: cpt_rows };
        bn.validate()?;
        Ok(bn)
    }
}

/// Compile a discrete BN into an equivalent FSPN. The output stores exactly
/// the CPT probabilities in its leaves, so its distribution-parameter count
/// never exceeds the CPT entry count.
pub fn bn_to_fspn(bn: &BayesNet) -> Result<FspnModel> {
    bn.validate()?;
    let active: BTreeSet<usize> = (0..bn.n_vars()).collect();
    let root = build(bn, &active)?;
    FspnModel::new(bn.variables.clone(), root, None)
}

fn build(bn: &BayesNet, active: &BTreeSet<usize>) -> Result<FspnNode> {
    let components = connected_components(bn, active);
    if components.len() > 1 {
        let mut child_scopes = Vec::with_capacity(components.len());
        let mut children = Vec::with_capacity(components.len());
        for comp in components {
            children.push(build(bn, &comp)?);
            child_scopes.push(comp.into_iter().collect());
        }
        return Ok(FspnNode::Product { child_scopes, children });
    }
    // lowest-index sink of the single component
    let sink = active
        .iter()
        .copied()
        .find(|&v| {
            active.iter().all(|&other| !bn.parents[other].contains(&v) || other == v)
        })
        .ok_or_else(|| FspnError::Data("bayes net contains a cycle".into()))?;
    let parents = &bn.parents[sink];
    if parents.is_empty() {
        debug_assert_eq!(active.len(), 1);
        return Ok(FspnNode::UniLeaf {
            variable: sink,
            dist: LeafDistribution::Histogram(Histogram::new(bn.cpts[sink][0].clone())),
        });
    }
    let w_scope: Vec<usize> = active.iter().copied().filter(|&v| v != sink).collect();
    let mut regions = Vec::with_capacity(bn.cpts[sink].len());
    let mut children = Vec::with_capacity(bn.cpts[sink].len());
    let parent_cards: Vec<usize> = parents.iter().map(|&p| bn.cardinality(p)).collect();
    for_each_assignment(&parent_cards, |config| {
        let mut region = Event::full(&bn.variables);
        for (k, &p) in parents.iter().enumerate() {
            region.set(p, Interval::point(config[k] as f64));
        }
        let row_idx = {
            let mut idx = 0;
            for (k, &v) in config.iter().enumerate() {
                idx = idx * parent_cards[k] + v;
            }
            idx
        };
        children.push(FspnNode::MultiLeaf {
            scope: vec![sink],
            condition_region: region.clone(),
            dist: LeafDistribution::JointHistogram(JointHistogram::dense(
                vec![bn.cardinality(sink)],
                bn.cpts[sink][row_idx].clone(),
            )),
        });
        regions.push(region);
    });
    let right = FspnNode::Split { regions, children };
    let mut remaining = active.clone();
    remaining.remove(&sink);
    let left = build(bn, &remaining)?;
    Ok(FspnNode::Factorize {
        w_scope,
        h_scope: vec![sink],
        left: Box::new(left),
        right: Box::new(right),
    })
}

fn connected_components(bn: &BayesNet, active: &BTreeSet<usize>) -> Vec<BTreeSet<usize>> {
    let mut unvisited: BTreeSet<usize> = active.clone();
    let mut components = Vec::new();
    while let Some(&start) = unvisited.iter().next() {
        let mut comp = BTreeSet::new();
        let mut stack = vec![start];
        unvisited.remove(&start);
        while let Some(v) = stack.pop() {
            comp.insert(v);
            let mut neighbors: Vec<usize> = bn.parents[v]
                .iter()
                .copied()
                .filter(|p| active.contains(p))
                .collect();
            for &other in active {
                if bn.parents[other].contains(&v) {
                    neighbors.push(other);
                }
            }
            for n in neighbors {
                if unvisited.remove(&n) {
                    stack.push(n);
                }
            }
        }
        components.push(comp);
    }
    components
}

/// Explicit joint table by the chain rule over the DAG.
pub fn bn_joint(bn: &BayesNet) -> Result<JointTable> {
    bn.validate()?;
    let dims: Vec<usize> = (0..bn.n_vars()).map(|v| bn.cardinality(v)).collect();
    let lattice: u128 = dims.iter().map(|&d| d as u128).product();
    if lattice > JOINT_LATTICE_LIMIT as u128 {
        return Err(FspnError::LatticeTooLarge { size: lattice, limit: JOINT_LATTICE_LIMIT });
    }
    let mut masses = Vec::with_capacity(lattice as usize);
    for_each_assignment(&dims, |assignment| {
        let mut p = 1.0;
        for v in 0..bn.n_vars() {
            let row = bn.cpt_row_index(v, assignment);
            p *= bn.cpts[v][row][assignment[v]];
        }
        masses.push(p);
    });
    JointTable::new(dims, masses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::point_mass;

    fn coin(name: &str, p1: f64) -> (VariableMeta, Vec<Vec<f64>>) {
        (VariableMeta::discrete(name, 2), vec![vec![1.0 - p1, p1]])
    }

    #[test]
    fn independent_coins_become_a_product() {
        let (va, cpt_a) = coin("a", 0.5);
        let (vb, cpt_b) = coin("b", 0.5);
        let bn = BayesNet {
            variables: vec![va, vb],
            parents: vec![vec![], vec![]],
            cpts: vec![cpt_a, cpt_b],
        };
        let model = bn_to_fspn(&bn).unwrap();
        match &model.root {
            FspnNode::Product { children, .. } => {
                assert_eq!(children.len(), 2);
                assert!(children.iter().all(|c| matches!(c, FspnNode::UniLeaf { .. })));
            }
            other => panic!("expected product, got {other:?}"),
        }
        let joint = bn_joint(&bn).unwrap();
        assert_eq!(joint.masses, vec![0.25, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn single_parentless_node_is_a_unileaf() {
        let (v, cpt) = coin("a", 0.3);
        let bn = BayesNet { variables: vec![v], parents: vec![vec![]], cpts: vec![cpt] };
        let model = bn_to_fspn(&bn).unwrap();
        assert!(matches!(model.root, FspnNode::UniLeaf { .. }));
    }

    #[test]
    fn chain_becomes_factorize_with_split() {
        // a -> b, Pr(a=1)=0.6, Pr(b=1|a=1)=0.9, Pr(b=1|a=0)=0.2
        let bn = BayesNet {
            variables: vec![VariableMeta::discrete("a", 2), VariableMeta::discrete("b", 2)],
            parents: vec![vec![], vec![0]],
            cpts: vec![
                vec![vec![0.4, 0.6]],
                vec![vec![0.8, 0.2], vec![0.1, 0.9]],
            ],
        };
        let model = bn_to_fspn(&bn).unwrap();
        match &model.root {
            FspnNode::Factorize { h_scope, right, .. } => {
                assert_eq!(h_scope, &vec![1]);
                match right.as_ref() {
                    FspnNode::Split { children, .. } => {
                        assert_eq!(children.len(), 2);
                        assert!(children
                            .iter()
                            .all(|c| matches!(c, FspnNode::MultiLeaf { .. })));
                    }
                    other => panic!("expected split, got {other:?}"),
                }
            }
            other => panic!("expected factorize, got {other:?}"),
        }
        // chain rule spot check: Pr(a=1, b=1) = 0.6 * 0.9
        let joint = bn_joint(&bn).unwrap();
        assert!((joint.masses[joint.index(&[1, 1])] - 0.54).abs() < 1e-15);
        let fspn = point_mass(&model, &[1.0, 1.0]).unwrap();
        assert!((fspn - 0.54).abs() < 1e-12);
        // CPT storage bound
        assert!(model.stats().n_params <= bn.cpt_entry_count());
    }

    #[test]
    fn three_chain_meets_the_storage_bound() {
        // a -> b -> c, all binary: 2 + 4 + 4 = 10 CPT entries
        let bn = BayesNet {
            variables: vec![
                VariableMeta::discrete("a", 2),
                VariableMeta::discrete("b", 2),
                VariableMeta::discrete("c", 2),
            ],
            parents: vec![vec![], vec![0], vec![1]],
            cpts: vec![
                vec![vec![0.7, 0.3]],
                vec![vec![0.6, 0.4], vec![0.2, 0.8]],
                vec![vec![0.9, 0.1], vec![0.5, 0.5]],
            ],
        };
        let model = bn_to_fspn(&bn).unwrap();
        assert_eq!(bn.cpt_entry_count(), 10);
        assert!(model.stats().n_params <= 10, "params {}", model.stats().n_params);
        let joint = bn_joint(&bn).unwrap();
        assert!((joint.total_mass() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn parser_roundtrip_and_errors() {
        let text = "\
# toy network
variables
a 2
b 3
edges
a b
cpt a
0.4 0.6
cpt b
0.1 0.7 0.2
0.3 0.3 0.4
";
        let bn = BayesNet::parse(text).unwrap();
        assert_eq!(bn.n_vars(), 2);
        assert_eq!(bn.parents[1], vec![0]);
        assert_eq!(bn.cpts[1].len(), 2);

        let bad_row = text.replace("0.3 0.3 0.4", "0.3 0.3 0.9");
        assert!(BayesNet::parse(&bad_row).is_err());

        let cyclic = "\
variables
a 2
b 2
edges
a b
b a
cpt a
0.5 0.5
0.5 0.5
cpt b
0.5 0.5
0.5 0.5
";
        let err = BayesNet::parse(cyclic).unwrap_err();
        assert!(err.to_string().contains("cycle"), "{err}");
    }
}
