//! Marginal, evidence-conditional, and log-likelihood inference.
//!
//! Events are axis-aligned hyper-rectangles. Evaluation is one recursive
//! pass: sums weight their children, products multiply scope-disjoint
//! children, and each factorize node partitions the event by the condition
//! regions of the multi-leaves in its right subtree, multiplying each
//! multi-leaf mass with the left subtree's probability of the matching
//! sub-event and summing the products in a fixed order.

use crate::data_io::DataMatrix;
use crate::error::{FspnError, Result};
use crate::leaf::LeafDistribution;
use crate::model::interval::{Event, Interval};
use crate::model::{FspnModel, FspnNode, VarDomain, VariableMeta};

/// Probability clamped to [0, 1]; tiny negative floating error becomes 0.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Probability(f64);

impl Probability {
    pub fn new(raw: f64) -> Self {
        Self(raw.clamp(0.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Borrowed view of one multi-leaf: its scope, condition region, and distribution.
#[derive(Debug, Clone, Copy)]
pub struct MultiLeafRef<'a> {
    pub scope: &'a [usize],
    pub region: &'a Event,
    pub dist: &'a LeafDistribution,
}

/// Event parts paired with the index of the multi-leaf owning each part.
#[derive(Debug, Clone)]
pub struct EventPartition {
    pub parts: Vec<(Event, usize)>,
}

/// All multi-leaves of a factorize right subtree, in depth-first order.
pub fn collect_multileaves(node: &FspnNode) -> Vec<MultiLeafRef<'_>> {
    let mut out = Vec::new();
    node.visit(&mut |n| {
        if let FspnNode::MultiLeaf { scope, condition_region, dist } = n {
            out.push(MultiLeafRef { scope, region: condition_region, dist });
        }
    });
    out
}

/// Intersect the event with every leaf's condition region, dropping empty
/// parts. Because the regions tile the condition space, the parts are
/// pairwise disjoint and cover the event.
pub fn partition_event_by_multileaves(
    event: &Event,
    leaves: &[MultiLeafRef<'_>],
) -> EventPartition {
    let mut parts = Vec::new();
    for (i, leaf) in leaves.iter().enumerate() {
        let part = event.intersect(leaf.region);
        if part.is_empty_anywhere() {
            continue;
        }
        parts.push((part, i));
    }
    EventPartition { parts }
}

/// Probability that the model's variables fall inside the event.
pub fn infer_marginal(model: &FspnModel, event: &Event) -> Result<Probability> {
    if event.n_vars() != model.n_vars() {
        return Err(FspnError::Usage(format!(
            "event has {} intervals for a {}-variable model",
            event.n_vars(),
            model.n_vars()
        )));
    }
    let canon = event.canonicalize(&model.variables);
    let p = eval_range(&model.root, &canon)?;
    if p.is_nan() {
        return Err(FspnError::Model("NaN in probability evaluation".into()));
    }
    Ok(Probability::new(p))
}

fn eval_range(node: &FspnNode, event: &Event) -> Result<f64> {
    match node {
        FspnNode::UniLeaf { variable, dist } => dist.mass(&[*event.get(*variable)]),
        FspnNode::Sum { weights, children } => {
            let mut acc = 0.0;
            for (w, child) in weights.iter().zip(children) {
                acc += w * eval_range(child, event)?;
            }
            Ok(acc)
        }
        FspnNode::Product { children, .. } => {
            let mut acc = 1.0;
            for child in children {
                acc *= eval_range(child, event)?;
                if acc == 0.0 {
                    break;
                }
            }
            Ok(acc)
        }
        FspnNode::Factorize { left, right, .. } => {
            let leaves = collect_multileaves(right);
            if leaves.is_empty() {
                return Err(FspnError::Model(
                    "factorize right subtree holds no multi-leaf".into(),
                ));
            }
            let partition = partition_event_by_multileaves(event, &leaves);
            let mut acc = 0.0;
            for (part, idx) in &partition.parts {
                let leaf = &leaves[*idx];
                let p = leaf.dist.mass(&part.gather(leaf.scope))?;
                if p == 0.0 {
                    continue;
                }
                let q = eval_range(left, part)?;
                acc += p * q;
            }
            Ok(acc)
        }
        FspnNode::Split { .. } | FspnNode::MultiLeaf { .. } => Err(FspnError::Model(
            "conditional node evaluated outside a factorize".into(),
        )),
    }
}

/// Conditional probability Pr(query | evidence); the two events must
/// constrain disjoint variable sets.
pub fn infer_evidence(model: &FspnModel, query: &Event, evidence: &Event) -> Result<Probability> {
    for (v, meta) in model.variables.iter().enumerate() {
        let full = meta.full_interval();
        let q_constrained = *query.get(v) != full;
        let e_constrained = *evidence.get(v) != full;
        if q_constrained && e_constrained {
            return Err(FspnError::Usage(format!(
                "query and evidence both constrain variable {}",
                meta.name
            )));
        }
    }
    let pe = infer_marginal(model, evidence)?.value();
    if pe < 1e-12 {
        return Err(FspnError::ZeroMassEvidence);
    }
    let joint = infer_marginal(model, &query.intersect(evidence))?.value();
    Ok(Probability::new(joint / pe))
}

/// Point mass/density of a full assignment, in linear space.
pub fn point_mass(model: &FspnModel, point: &[f64]) -> Result<f64> {
    if point.len() != model.n_vars() {
        return Err(FspnError::Usage("point dimension mismatch".into()));
    }
    eval_point(&model.root, point)
}

fn eval_point(node: &FspnNode, point: &[f64]) -> Result<f64> {
    match node {
        FspnNode::UniLeaf { variable, dist } => dist.point(&[point[*variable]]),
        FspnNode::Sum { weights, children } => {
            let mut acc = 0.0;
            for (w, child) in weights.iter().zip(children) {
                acc += w * eval_point(child, point)?;
            }
            Ok(acc)
        }
        FspnNode::Product { children, .. } => {
            let mut acc = 1.0;
            for child in children {
                acc *= eval_point(child, point)?;
                if acc == 0.0 {
                    break;
                }
            }
            Ok(acc)
        }
        FspnNode::Factorize { left, right, .. } => {
            let leaves = collect_multileaves(right);
            for leaf in &leaves {
                if region_contains(leaf.region, point) {
                    let coords: Vec<f64> = leaf.scope.iter().map(|&v| point[v]).collect();
                    let p = leaf.dist.point(&coords)?;
                    if p == 0.0 {
                        return Ok(0.0);
                    }
                    return Ok(p * eval_point(left, point)?);
                }
            }
            // regions tile the domain, so this only happens off-domain
            Ok(0.0)
        }
        FspnNode::Split { .. } | FspnNode::MultiLeaf { .. } => Err(FspnError::Model(
            "conditional node evaluated outside a factorize".into(),
        )),
    }
}

fn region_contains(region: &Event, point: &[f64]) -> bool {
    region.contains_point(point)
}

/// Natural-log point density of a full assignment; factors combine in log
/// space so long products of small masses keep precision.
pub fn log_point_density(model: &FspnModel, point: &[f64]) -> Result<f64> {
    if point.len() != model.n_vars() {
        return Err(FspnError::Usage("point dimension mismatch".into()));
    }
    eval_log_point(&model.root, point)
}

fn eval_log_point(node: &FspnNode, point: &[f64]) -> Result<f64> {
    match node {
        FspnNode::UniLeaf { variable, dist } => dist.log_point(&[point[*variable]]),
        FspnNode::Sum { weights, children } => {
            let mut terms = Vec::with_capacity(children.len());
            for (w, child) in weights.iter().zip(children) {
                terms.push(w.ln() + eval_log_point(child, point)?);
            }
            let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !max.is_finite() {
                return Ok(f64::NEG_INFINITY);
            }
            Ok(max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln())
        }
        FspnNode::Product { children, .. } => {
            let mut acc = 0.0;
            for child in children {
                acc += eval_log_point(child, point)?;
            }
            Ok(acc)
        }
        FspnNode::Factorize { left, right, .. } => {
            let leaves = collect_multileaves(right);
            for leaf in &leaves {
                if region_contains(leaf.region, point) {
                    let coords: Vec<f64> = leaf.scope.iter().map(|&v| point[v]).collect();
                    return Ok(leaf.dist.log_point(&coords)? + eval_log_point(left, point)?);
                }
            }
            Ok(f64::NEG_INFINITY)
        }
        FspnNode::Split { .. } | FspnNode::MultiLeaf { .. } => Err(FspnError::Model(
            "conditional node evaluated outside a factorize".into(),
        )),
    }
}

/// Per-row natural-log likelihood and its average over the dataset.
pub fn log_likelihood(model: &FspnModel, data: &DataMatrix) -> Result<(Vec<f64>, f64)> {
    check_columns(model, data.variables())?;
    let mut per_row = Vec::with_capacity(data.n_rows());
    for i in 0..data.n_rows() {
        per_row.push(log_point_density(model, data.row(i))?);
    }
    let avg = per_row.iter().sum::<f64>() / per_row.len().max(1) as f64;
    Ok((per_row, avg))
}

fn check_columns(model: &FspnModel, data_vars: &[VariableMeta]) -> Result<()> {
    if data_vars.len() != model.n_vars() {
        return Err(FspnError::Data(format!(
            "dataset has {} columns, model has {}",
            data_vars.len(),
            model.n_vars()
        )));
    }
    for (dv, mv) in data_vars.iter().zip(&model.variables) {
        if dv.name != mv.name {
            return Err(FspnError::Data(format!(
                "column '{}' does not match model variable '{}'",
                dv.name, mv.name
            )));
        }
        match (&dv.domain, &mv.domain) {
            (VarDomain::Discrete { cardinality: dc }, VarDomain::Discrete { cardinality: mc }) => {
                if dc > mc {
                    return Err(FspnError::Data(format!(
                        "column '{}' has cardinality {dc}, model allows {mc}",
                        dv.name
                    )));
                }
            }
            (VarDomain::Continuous { .. }, VarDomain::Continuous { .. }) => {}
            _ => {
                return Err(FspnError::Data(format!(
                    "column '{}' kind does not match the model",
                    dv.name
                )))
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Query text: one event per line, `var=value` or `var=lo..hi` tokens, a `(`
// before the low bound / `)` after the high bound marking open endpoints,
// omitted variables unconstrained. `query | evidence` asks for a
// conditional probability.
// ---------------------------------------------------------------------------

/// A parsed query line.
#[derive(Debug, Clone)]
pub enum Query {
    Marginal(Event),
    Conditional { query: Event, evidence: Event },
}

pub fn parse_query_line(line: &str, vars: &[VariableMeta]) -> Result<Query> {
    match line.split_once('|') {
        Some((q, e)) => Ok(Query::Conditional {
            query: parse_event_text(q, vars)?,
            evidence: parse_event_text(e, vars)?,
        }),
        None => Ok(Query::Marginal(parse_event_text(line, vars)?)),
    }
}

/// Parse a whitespace-separated list of `var=spec` tokens into an event.
pub fn parse_event_text(text: &str, vars: &[VariableMeta]) -> Result<Event> {
    let mut event = Event::full(vars);
    let mut seen = vec![false; vars.len()];
    for token in text.split_whitespace() {
        let (name, spec) = token.split_once('=').ok_or_else(|| {
            FspnError::parse("query", format!("token '{token}' is not var=value"))
        })?;
        let idx = vars
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| FspnError::parse("query", format!("unknown variable '{name}'")))?;
        if seen[idx] {
            return Err(FspnError::parse("query", format!("variable '{name}' constrained twice")));
        }
        seen[idx] = true;
        event.set(idx, parse_interval_spec(spec, name)?);
    }
    Ok(event)
}

fn parse_interval_spec(spec: &str, name: &str) -> Result<Interval> {
    let mut body = spec;
    let lo_open = body.starts_with('(');
    if lo_open {
        body = &body[1..];
    }
    let hi_open = body.ends_with(')');
    if hi_open {
        body = &body[..body.len() - 1];
    }
    let bad = |msg: String| FspnError::parse("query", format!("{name}: {msg}"));
    match body.split_once("..") {
        Some((lo, hi)) => {
            let lo: f64 = lo.parse().map_err(|_| bad(format!("bad lower bound '{lo}'")))?;
            let hi: f64 = hi.parse().map_err(|_| bad(format!("bad upper bound '{hi}'")))?;
            if lo > hi {
                return Err(bad(format!("empty range {lo}..{hi}")));
            }
            Ok(Interval::new(lo, hi, lo_open, hi_open))
        }
        None => {
            if lo_open || hi_open {
                return Err(bad("point values cannot have open marks".into()));
            }
            let v: f64 = body.parse().map_err(|_| bad(format!("bad value '{body}'")))?;
            Ok(Interval::point(v))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalharness::fixtures::worked_example_model;

    fn event(model: &FspnModel, constraints: &[(usize, Interval)]) -> Event {
        let mut e = Event::full(&model.variables);
        for (v, iv) in constraints {
            e.set(*v, *iv);
        }
        e
    }

    #[test]
    fn worked_example_total_and_parts() {
        let model = worked_example_model();
        // X1 in [1,7], X3 in [3,6]
        let e = event(&model, &[(0, Interval::closed(1.0, 7.0)), (2, Interval::closed(3.0, 6.0))]);
        let p = infer_marginal(&model, &e).unwrap().value();
        assert!((p - 0.171).abs() < 1e-12, "total {p}");
        // restriction to X3 in [3,5]
        let e1 = event(&model, &[(0, Interval::closed(1.0, 7.0)), (2, Interval::closed(3.0, 5.0))]);
        let p1 = infer_marginal(&model, &e1).unwrap().value();
        assert!((p1 - 0.051).abs() < 1e-12, "low part {p1}");
        // restriction to X3 in (5,6]
        let e2 = event(
            &model,
            &[(0, Interval::closed(1.0, 7.0)), (2, Interval::new(5.0, 6.0, true, false))],
        );
        let p2 = infer_marginal(&model, &e2).unwrap().value();
        assert!((p2 - 0.12).abs() < 1e-12, "high part {p2}");
    }

    #[test]
    fn worked_example_unconstrained_h_side() {
        // only X3 in [3,5]: the multi-leaf contributes its full mass 1
        let model = worked_example_model();
        let e = event(&model, &[(2, Interval::closed(3.0, 5.0))]);
        let p = infer_marginal(&model, &e).unwrap().value();
        assert!((p - 0.17).abs() < 1e-12, "{p}");
    }

    #[test]
    fn full_domain_is_one() {
        let model = worked_example_model();
        let e = Event::full(&model.variables);
        let p = infer_marginal(&model, &e).unwrap().value();
        assert!((p - 1.0).abs() < 1e-9, "{p}");
    }

    #[test]
    fn evidence_is_ratio_of_marginals() {
        let model = worked_example_model();
        let q = event(&model, &[(0, Interval::closed(1.0, 7.0))]);
        let ev = event(&model, &[(2, Interval::new(5.0, 6.0, true, false))]);
        let p = infer_evidence(&model, &q, &ev).unwrap().value();
        assert!((p - 0.4).abs() < 1e-12, "{p}");
        // conditioning on the sure event reproduces the marginal
        let full = Event::full(&model.variables);
        let pm = infer_evidence(&model, &q, &full).unwrap().value();
        let direct = infer_marginal(&model, &q).unwrap().value();
        assert!((pm - direct).abs() < 1e-15);
    }

    #[test]
    fn zero_mass_evidence_is_an_error() {
        let model = worked_example_model();
        // X3 = 10 has zero mass in every leaf histogram of the fixture
        let ev = event(&model, &[(2, Interval::point(10.0))]);
        let q = event(&model, &[(0, Interval::closed(1.0, 7.0))]);
        match infer_evidence(&model, &q, &ev) {
            Err(FspnError::ZeroMassEvidence) => {}
            other => panic!("expected zero-mass evidence error, got {other:?}"),
        }
    }

    #[test]
    fn partition_matches_the_worked_split() {
        let model = worked_example_model();
        let e = event(&model, &[(0, Interval::closed(1.0, 7.0)), (2, Interval::closed(3.0, 6.0))])
            .canonicalize(&model.variables);
        if let FspnNode::Factorize { right, .. } = &model.root {
            let leaves = collect_multileaves(right);
            assert_eq!(leaves.len(), 2);
            let parts = partition_event_by_multileaves(&e, &leaves);
            assert_eq!(parts.parts.len(), 2);
            // X3 in [3,5] against the [0,5] region
            assert_eq!(parts.parts[0].0.get(2), &Interval::closed(3.0, 5.0));
            // X3 in (5,6] against the (5,20] region, normalized to [6,6]
            assert_eq!(parts.parts[1].0.get(2), &Interval::closed(6.0, 6.0));

            // an event inside one region yields a single part equal to the event
            let inner = event(&model, &[(2, Interval::closed(1.0, 4.0))])
                .canonicalize(&model.variables);
            let single = partition_event_by_multileaves(&inner, &leaves);
            assert_eq!(single.parts.len(), 1);
            assert_eq!(single.parts[0].0, inner);

            // an event clipped to nothing contributes no parts
            let mut outside = Event::full(&model.variables);
            outside.set(2, Interval::empty());
            let none = partition_event_by_multileaves(&outside, &leaves);
            assert!(none.parts.is_empty());
        } else {
            panic!("fixture root must be a factorize node");
        }
    }

    #[test]
    fn query_grammar_parses_bounds_and_open_marks() {
        let model = worked_example_model();
        let e = parse_event_text("X1=1..7 X3=(5..6", &model.variables).unwrap();
        assert_eq!(e.get(0), &Interval::closed(1.0, 7.0));
        assert_eq!(e.get(2), &Interval::new(5.0, 6.0, true, false));
        assert_eq!(e.get(1), &model.variables[1].full_interval());
        let e = parse_event_text("X2=3..6)", &model.variables).unwrap();
        assert_eq!(e.get(1), &Interval::new(3.0, 6.0, false, true));
        let e = parse_event_text("X4=5", &model.variables).unwrap();
        assert_eq!(e.get(3), &Interval::point(5.0));
        assert!(parse_event_text("X9=1..2", &model.variables).is_err());
        assert!(parse_event_text("X1=2..1", &model.variables).is_err());
        assert!(parse_event_text("X1=1 X1=2", &model.variables).is_err());
        match parse_query_line("X1=1..7 | X3=(5..6", &model.variables).unwrap() {
            Query::Conditional { .. } => {}
            other => panic!("expected conditional, got {other:?}"),
        }
    }

    #[test]
    fn log_likelihood_uniform_leaves() {
        use crate::leaf::{Histogram, LeafDistribution};
        use crate::model::VariableMeta;
        // single uniform leaf over 4 values: every row scores ln(1/4)
        let model = FspnModel::new(
            vec![VariableMeta::discrete("a", 4)],
            FspnNode::UniLeaf {
                variable: 0,
                dist: LeafDistribution::Histogram(Histogram::new(vec![0.25; 4])),
            },
            None,
        )
        .unwrap();
        let data = crate::data_io::DataMatrix::from_parts(
            vec![VariableMeta::discrete("a", 4)],
            vec![None],
            vec![0.0, 3.0, 2.0],
        )
        .unwrap();
        let (rows, avg) = log_likelihood(&model, &data).unwrap();
        for r in rows {
            assert!((r - 0.25f64.ln()).abs() < 1e-12);
        }
        assert!((avg - 0.25f64.ln()).abs() < 1e-12);

        // product of two independent uniform binary leaves: ln(1/4) per row
        let vars = vec![VariableMeta::discrete("a", 2), VariableMeta::discrete("b", 2)];
        let model = FspnModel::new(
            vars.clone(),
            FspnNode::Product {
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
            },
            None,
        )
        .unwrap();
        let data = crate::data_io::DataMatrix::from_parts(
            vars,
            vec![None, None],
            vec![0.0, 1.0, 1.0, 0.0],
        )
        .unwrap();
        let (_, avg) = log_likelihood(&model, &data).unwrap();
        assert!((avg - 0.25f64.ln()).abs() < 1e-12);
    }
}
