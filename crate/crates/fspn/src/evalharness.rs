//! Brute-force oracles and metrics: explicit joint tables, exact range
//! probabilities, KL divergence, dataset dependence scores, and the
//! inference scaling benchmark.

use crate::data_io::DataMatrix;
use crate::error::{FspnError, Result};
use crate::inference::{infer_marginal, point_mass};
use crate::leaf::kahan_sum;
use crate::learning::{rdc, LearnConfig};
use crate::model::interval::{Event, Interval};
use crate::model::{FspnModel, VariableMeta};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Largest joint lattice the oracles will enumerate.
pub const JOINT_LATTICE_LIMIT: u64 = 1_000_000;

/// Dense table of Pr(x) over a discrete joint lattice.
#[derive(Debug, Clone)]
pub struct JointTable {
    pub dims: Vec<usize>,
    pub masses: Vec<f64>,
}

impl JointTable {
    pub fn new(dims: Vec<usize>, masses: Vec<f64>) -> Result<Self> {
        let lattice: u128 = dims.iter().map(|&d| d as u128).product();
        if lattice > JOINT_LATTICE_LIMIT as u128 {
            return Err(FspnError::LatticeTooLarge { size: lattice, limit: JOINT_LATTICE_LIMIT });
        }
        if masses.len() as u128 != lattice {
            return Err(FspnError::Usage("joint table mass count differs from lattice".into()));
        }
        Ok(Self { dims, masses })
    }

    pub fn index(&self, assignment: &[usize]) -> usize {
        let mut idx = 0;
        for (i, &v) in assignment.iter().enumerate() {
            idx = idx * self.dims[i] + v;
        }
        idx
    }

    pub fn total_mass(&self) -> f64 {
        kahan_sum(self.masses.iter().copied())
    }
}

/// Call `f` once per lattice assignment, in row-major order.
pub fn for_each_assignment(dims: &[usize], mut f: impl FnMut(&[usize])) {
    let mut tuple = vec![0usize; dims.len()];
    'outer: loop {
        f(&tuple);
        let mut k = dims.len();
        loop {
            if k == 0 {
                break 'outer;
            }
            k -= 1;
            tuple[k] += 1;
            if tuple[k] < dims[k] {
                continue 'outer;
            }
            tuple[k] = 0;
        }
    }
}

/// Exact MLE of the discrete joint: relative frequencies over the lattice.
pub fn empirical_joint(data: &DataMatrix) -> Result<JointTable> {
    let dims: Vec<usize> = data
        .variables()
        .iter()
        .map(|v| {
            v.cardinality()
                .ok_or_else(|| FspnError::Data(format!("column '{}' is continuous", v.name)))
        })
        .collect::<Result<_>>()?;
    let lattice: u128 = dims.iter().map(|&d| d as u128).product();
    if lattice > JOINT_LATTICE_LIMIT as u128 {
        return Err(FspnError::LatticeTooLarge { size: lattice, limit: JOINT_LATTICE_LIMIT });
    }
    let mut masses = vec![0.0f64; lattice as usize];
    let share = 1.0 / data.n_rows() as f64;
    let table = JointTable { dims: dims.clone(), masses: Vec::new() };
    for i in 0..data.n_rows() {
        let assignment: Vec<usize> = (0..data.n_cols())
            .map(|j| data.get(i, j).round() as usize)
            .collect();
        masses[table.index(&assignment)] += share;
    }
    JointTable::new(dims, masses)
}

/// Exact summation of table masses inside the event's box.
pub fn brute_force_marginal(joint: &JointTable, event: &Event) -> Result<f64> {
    if event.n_vars() != joint.dims.len() {
        return Err(FspnError::Usage("event does not match the joint table".into()));
    }
    let mut ranges = Vec::with_capacity(joint.dims.len());
    for (iv, &d) in event.intervals.iter().zip(&joint.dims) {
        let norm = iv
            .normalize_discrete()
            .intersect(&Interval::closed(0.0, (d - 1) as f64));
        if norm.is_empty() {
            return Ok(0.0);
        }
        ranges.push((norm.lo as usize, norm.hi as usize));
    }
    let mut tuple: Vec<usize> = ranges.iter().map(|r| r.0).collect();
    let mut sum = 0.0;
    let mut comp = 0.0;
    'outer: loop {
        let v = joint.masses[joint.index(&tuple)];
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        let mut k = tuple.len();
        loop {
            if k == 0 {
                break 'outer;
            }
            k -= 1;
            if tuple[k] < ranges[k].1 {
                tuple[k] += 1;
                for j in k + 1..tuple.len() {
                    tuple[j] = ranges[j].0;
                }
                continue 'outer;
            }
        }
    }
    Ok(sum)
}

/// Materialize a discrete model's joint by point queries over the lattice.
/// Deliberately shares no code with range inference, so the two can check
/// each other.
pub fn materialize_joint(model: &FspnModel) -> Result<JointTable> {
    let dims: Vec<usize> = model
        .variables
        .iter()
        .map(|v| {
            v.cardinality()
                .ok_or_else(|| FspnError::Data(format!("variable '{}' is continuous", v.name)))
        })
        .collect::<Result<_>>()?;
    let lattice: u128 = dims.iter().map(|&d| d as u128).product();
    if lattice > JOINT_LATTICE_LIMIT as u128 {
        return Err(FspnError::LatticeTooLarge { size: lattice, limit: JOINT_LATTICE_LIMIT });
    }
    let mut masses = Vec::with_capacity(lattice as usize);
    let mut failure = None;
    for_each_assignment(&dims, |assignment| {
        if failure.is_some() {
            return;
        }
        let point: Vec<f64> = assignment.iter().map(|&v| v as f64).collect();
        match point_mass(model, &point) {
            Ok(p) => masses.push(p),
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    JointTable::new(dims, masses)
}

/// KL(p || model) over the lattice; +inf when the model misses support,
/// `0 ln 0 = 0` by convention.
pub fn kl_divergence(truth: &JointTable, model: &FspnModel) -> Result<f64> {
    if model.n_vars() != truth.dims.len() {
        return Err(FspnError::Usage("model does not match the joint table".into()));
    }
    let mut terms = Vec::with_capacity(truth.masses.len());
    let mut failure = None;
    let mut infinite = false;
    for_each_assignment(&truth.dims, |assignment| {
        if failure.is_some() || infinite {
            return;
        }
        let p = truth.masses[truth.index(assignment)];
        if p <= 0.0 {
            return;
        }
        let point: Vec<f64> = assignment.iter().map(|&v| v as f64).collect();
        match point_mass(model, &point) {
            Ok(q) if q <= 0.0 => infinite = true,
            Ok(q) => terms.push(p * (p / q).ln()),
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    if infinite {
        return Ok(f64::INFINITY);
    }
    Ok(kahan_sum(terms))
}

/// Mean pairwise dependence over all unordered column pairs.
pub fn avg_rdc_score(data: &DataMatrix, cfg: &LearnConfig) -> Result<f64> {
    let m = data.n_cols();
    if m < 2 {
        return Err(FspnError::Usage("average dependence needs at least 2 columns".into()));
    }
    let scope: Vec<usize> = (0..m).collect();
    let corr = rdc::correlation_matrix(data, &scope, cfg)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..m {
        for j in i + 1..m {
            sum += corr.at(i, j);
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

/// One measured size of the scaling benchmark.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingRow {
    pub target_nodes: usize,
    pub actual_nodes: usize,
    pub median_latency_ns: f64,
}

/// Latency-vs-size table plus the fitted log-log slope.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    pub slope: Option<f64>,
    pub r_squared: Option<f64>,
}

/// Synthesize valid random models of roughly the requested node counts and
/// time marginal inference over random events. Per event: 5 warm-up calls,
/// then the median of 30 timed repetitions; a size's latency is the median
/// over its events.
pub fn scaling_benchmark(
    sizes: &[usize],
    events_per_size: usize,
    seed: u64,
) -> Result<ScalingReport> {
    if sizes.is_empty() || events_per_size == 0 {
        return Err(FspnError::Usage("need at least one size and one event".into()));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(FspnError::Usage("sizes must be strictly ascending".into()));
    }
    use rand::{Rng, SeedableRng};
    let mut rows = Vec::with_capacity(sizes.len());
    for (i, &target) in sizes.iter().enumerate() {
        let opts = randmodel::RandomModelOptions {
            n_vars: 8,
            max_cardinality: 4,
            continuous_fraction: 0.0,
            target_nodes: target,
        };
        let model = randmodel::random_model(seed.wrapping_add(i as u64), &opts)?;
        let actual = model.stats().n_nodes;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed ^ i as u64);
        let mut medians = Vec::with_capacity(events_per_size);
        for _ in 0..events_per_size {
            let event = randmodel::random_event(&model.variables, &mut rng);
            for _ in 0..5 {
                let _ = infer_marginal(&model, &event)?;
            }
            let mut reps = Vec::with_capacity(30);
            for _ in 0..30 {
                let start = Instant::now();
                let _ = infer_marginal(&model, &event)?;
                reps.push(start.elapsed().as_nanos() as f64);
            }
            reps.sort_by(|a, b| a.partial_cmp(b).unwrap());
            medians.push(reps[reps.len() / 2]);
        }
        medians.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = medians[medians.len() / 2];
        let _ = rng.gen::<u64>();
        rows.push(ScalingRow { target_nodes: target, actual_nodes: actual, median_latency_ns: median });
    }
    let (slope, r_squared) = fit_loglog(&rows);
    Ok(ScalingReport { rows, slope, r_squared })
}

fn fit_loglog(rows: &[ScalingRow]) -> (Option<f64>, Option<f64>) {
    if rows.len() < 2 {
        return (None, None);
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.actual_nodes as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.median_latency_ns.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return (None, None);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    (Some(slope), Some(r2))
}

/// Random valid-model synthesis for benchmarks and normalization suites.
pub mod randmodel {
    use super::*;
    use crate::leaf::{
        GaussianMixture, Histogram, JointHistogram, LeafDistribution, MultiGaussianMixture,
    };
    use crate::model::{FspnNode, VarDomain};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[derive(Debug, Clone)]
    pub struct RandomModelOptions {
        pub n_vars: usize,
        pub max_cardinality: usize,
        /// Fraction of variables given continuous domains.
        pub continuous_fraction: f64,
        pub target_nodes: usize,
    }

    impl Default for RandomModelOptions {
        fn default() -> Self {
            Self { n_vars: 6, max_cardinality: 4, continuous_fraction: 0.0, target_nodes: 40 }
        }
    }

    /// Build a random structurally valid model of roughly `target_nodes`.
    ///
    /// Large models are mixtures of independently random blocks of roughly
    /// one hundred nodes each, so the per-node evaluation cost profile does
    /// not drift with model size.
    pub fn random_model(seed: u64, opts: &RandomModelOptions) -> Result<FspnModel> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vars: Vec<VariableMeta> = (0..opts.n_vars)
            .map(|i| {
                if rng.gen::<f64>() < opts.continuous_fraction {
                    VariableMeta::continuous(&format!("X{i}"), 0.0, 10.0)
                } else {
                    let card = rng.gen_range(2..=opts.max_cardinality.max(2));
                    VariableMeta::discrete(&format!("X{i}"), card)
                }
            })
            .collect();
        let scope: Vec<usize> = (0..opts.n_vars).collect();
        let mut gen = Gen { rng, vars: vars.clone() };
        const BLOCK_BUDGET: usize = 100;
        let root = if opts.target_nodes <= (3 * BLOCK_BUDGET) / 2 {
            gen.joint(&scope, opts.target_nodes, true, 0, 0)
        } else {
            let k = (opts.target_nodes / (BLOCK_BUDGET + 5)).max(2);
            let mut weights: Vec<f64> = (0..k).map(|_| gen.rng.gen::<f64>() + 0.05).collect();
            let total: f64 = weights.iter().sum();
            for w in weights.iter_mut() {
                *w /= total;
            }
            let children = (0..k)
                .map(|_| gen.joint(&scope, BLOCK_BUDGET, true, 0, 0))
                .collect();
            FspnNode::Sum { weights, children }
        };
        FspnModel::new(vars, root, None)
    }

    /// Random axis-aligned event: each variable is constrained to a random
    /// sub-range with probability 1/2.
    pub fn random_event(vars: &[VariableMeta], rng: &mut ChaCha8Rng) -> Event {
        let mut event = Event::full(vars);
        for (i, meta) in vars.iter().enumerate() {
            if rng.gen::<f64>() >= 0.5 {
                continue;
            }
            match meta.domain {
                VarDomain::Discrete { cardinality } => {
                    let a = rng.gen_range(0..cardinality);
                    let b = rng.gen_range(0..cardinality);
                    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                    event.set(i, Interval::closed(lo as f64, hi as f64));
                }
                VarDomain::Continuous { lo, hi } => {
                    let a = lo + rng.gen::<f64>() * (hi - lo);
                    let b = lo + rng.gen::<f64>() * (hi - lo);
                    let (mut l, mut h) = if a <= b { (a, b) } else { (b, a) };
                    if l == h {
                        h = hi.min(h + 1e-6);
                        l = lo.max(l - 1e-6);
                    }
                    event.set(i, Interval::new(l, h, rng.gen(), rng.gen()));
                }
            }
        }
        event
    }

    struct Gen {
        rng: ChaCha8Rng,
        vars: Vec<VariableMeta>,
    }

    impl Gen {
        /// `cut_free` is true while no ancestor factorize can slice this
        /// subtree's events; only then may a multivariate Gaussian leaf be
        /// used, keeping full-domain normalization exact under quadrature.
        /// `fact_chain` counts factorize ancestors, bounding the event
        /// partition blow-up so inference cost stays proportional to size.
        fn joint(
            &mut self,
            scope: &[usize],
            budget: usize,
            cut_free: bool,
            fact_chain: usize,
            depth: usize,
        ) -> FspnNode {
            if scope.len() == 1 {
                return self.uni_leaf(scope[0]);
            }
            let min_cost = scope.len() + 1;
            if budget <= min_cost + 2 || depth > 60 {
                return self.naive_product(scope);
            }
            // factorize subtrees get bounded budgets so the event-partition
            // re-evaluation of the left side stays a local constant cost
            let can_fact = fact_chain < 2
                && (20..=150).contains(&budget)
                && self.factorize_possible(scope, cut_free);
            let roll = self.rng.gen::<f64>();
            // the first eligible node on any path always factorizes, keeping
            // the cost profile of every ~100-node block alike
            if can_fact && (fact_chain == 0 || roll < 0.35) {
                return self.factorize(scope, budget, cut_free, fact_chain, depth);
            }
            if scope.len() >= 2 && budget >= 3 * min_cost && roll > 0.85 {
                let parts = self.random_partition(scope);
                let children = parts
                    .iter()
                    .map(|p| {
                        let share = ((budget - 1) * p.len() / scope.len()).max(p.len() + 1);
                        self.joint(p, share, cut_free, fact_chain, depth + 1)
                    })
                    .collect();
                return FspnNode::Product { child_scopes: parts, children };
            }
            // scope-preserving sums carry the bulk of the node budget
            let k = ((budget - 1) / min_cost).clamp(2, 6);
            let mut weights: Vec<f64> = (0..k).map(|_| self.rng.gen::<f64>() + 0.05).collect();
            let total: f64 = weights.iter().sum();
            for w in weights.iter_mut() {
                *w /= total;
            }
            let child_budget = (budget - 1) / k;
            let children = (0..k)
                .map(|_| self.joint(scope, child_budget, cut_free, fact_chain, depth + 1))
                .collect();
            FspnNode::Sum { weights, children }
        }

        fn factorize_possible(&self, scope: &[usize], cut_free: bool) -> bool {
            if scope.len() < 2 {
                return false;
            }
            if cut_free {
                return true;
            }
            // below the top, multi-leaves must be discrete
            scope.iter().filter(|&&v| self.vars[v].is_discrete()).count() >= 1
                && scope.len() >= 2
        }

        fn factorize(
            &mut self,
            scope: &[usize],
            budget: usize,
            cut_free: bool,
            fact_chain: usize,
            depth: usize,
        ) -> FspnNode {
            // pick h: any subset at the top, discrete-only below
            let candidates: Vec<usize> = if cut_free {
                scope.to_vec()
            } else {
                scope.iter().copied().filter(|&v| self.vars[v].is_discrete()).collect()
            };
            let max_h = candidates.len().min(scope.len() - 1).min(3);
            if max_h == 0 {
                return self.naive_product(scope);
            }
            let h_size = self.rng.gen_range(1..=max_h);
            let mut pool = candidates;
            let mut h_scope = Vec::with_capacity(h_size);
            for _ in 0..h_size {
                let idx = self.rng.gen_range(0..pool.len());
                h_scope.push(pool.swap_remove(idx));
            }
            h_scope.sort_unstable();
            let w_scope: Vec<usize> =
                scope.iter().copied().filter(|v| !h_scope.contains(v)).collect();
            let right_budget = (budget / 3).clamp(2, 40);
            let split_depth = self.split_depth_for(right_budget);
            let region = Event::full(&self.vars);
            let right = self.split_tree(&h_scope, &w_scope, region, split_depth, cut_free);
            let left_budget = budget.saturating_sub(right_budget).max(w_scope.len() + 1);
            let left = self.joint(&w_scope, left_budget, false, fact_chain + 1, depth + 1);
            FspnNode::Factorize {
                w_scope,
                h_scope,
                left: Box::new(left),
                right: Box::new(right),
            }
        }

        fn split_depth_for(&mut self, budget: usize) -> usize {
            let mut depth = self.rng.gen_range(0..=2usize);
            while (1usize << (depth + 2)) < budget && depth < 3 {
                depth += 1;
            }
            depth
        }

        fn split_tree(
            &mut self,
            h_scope: &[usize],
            cond: &[usize],
            region: Event,
            depth: usize,
            cut_free: bool,
        ) -> FspnNode {
            if depth > 0 {
                if let Some((var, threshold, discrete)) = self.pick_cut(cond, &region) {
                    let (left_region, right_region) =
                        crate::learning::cut_region(&region, var, threshold, discrete);
                    let left =
                        self.split_tree(h_scope, cond, left_region.clone(), depth - 1, cut_free);
                    let right =
                        self.split_tree(h_scope, cond, right_region.clone(), depth - 1, cut_free);
                    return FspnNode::Split {
                        regions: vec![left_region, right_region],
                        children: vec![left, right],
                    };
                }
            }
            FspnNode::MultiLeaf {
                scope: h_scope.to_vec(),
                condition_region: region,
                dist: self.random_multi_dist(h_scope),
            }
        }

        fn pick_cut(&mut self, cond: &[usize], region: &Event) -> Option<(usize, f64, bool)> {
            let mut order: Vec<usize> = cond.to_vec();
            for i in (1..order.len()).rev() {
                let j = self.rng.gen_range(0..=i);
                order.swap(i, j);
            }
            for var in order {
                let iv = region.get(var);
                match self.vars[var].domain {
                    VarDomain::Discrete { .. } => {
                        if iv.hi - iv.lo >= 1.0 {
                            let lo = iv.lo as i64;
                            let hi = iv.hi as i64;
                            let t = self.rng.gen_range(lo..hi) as f64;
                            return Some((var, t, true));
                        }
                    }
                    VarDomain::Continuous { .. } => {
                        if iv.hi > iv.lo {
                            let t = iv.lo + (0.25 + 0.5 * self.rng.gen::<f64>()) * (iv.hi - iv.lo);
                            return Some((var, t, false));
                        }
                    }
                }
            }
            None
        }

        fn random_masses(&mut self, n: usize) -> Vec<f64> {
            let mut masses: Vec<f64> = (0..n).map(|_| self.rng.gen::<f64>() + 1e-3).collect();
            let total: f64 = masses.iter().sum();
            for m in masses.iter_mut() {
                *m /= total;
            }
            masses
        }

        fn uni_leaf(&mut self, var: usize) -> FspnNode {
            let dist = match self.vars[var].domain {
                VarDomain::Discrete { cardinality } => {
                    LeafDistribution::Histogram(Histogram::new(self.random_masses(cardinality)))
                }
                VarDomain::Continuous { lo, hi } => {
                    let k = self.rng.gen_range(1..=2usize);
                    let mut weights = self.random_masses(k);
                    let total: f64 = weights.iter().sum();
                    for w in weights.iter_mut() {
                        *w /= total;
                    }
                    let means = (0..k).map(|_| lo + self.rng.gen::<f64>() * (hi - lo)).collect();
                    let sds = (0..k)
                        .map(|_| (0.05 + self.rng.gen::<f64>() * 0.2) * (hi - lo))
                        .collect();
                    LeafDistribution::GaussianMixture(
                        GaussianMixture::new(weights, means, sds, lo, hi)
                            .expect("random mixture is well-formed"),
                    )
                }
            };
            FspnNode::UniLeaf { variable: var, dist }
        }

        fn naive_product(&mut self, scope: &[usize]) -> FspnNode {
            if scope.len() == 1 {
                return self.uni_leaf(scope[0]);
            }
            FspnNode::Product {
                child_scopes: scope.iter().map(|&v| vec![v]).collect(),
                children: scope.iter().map(|&v| self.uni_leaf(v)).collect(),
            }
        }

        fn random_partition(&mut self, scope: &[usize]) -> Vec<Vec<usize>> {
            let mut pool = scope.to_vec();
            for i in (1..pool.len()).rev() {
                let j = self.rng.gen_range(0..=i);
                pool.swap(i, j);
            }
            let parts = self.rng.gen_range(2..=pool.len().min(3));
            let mut out: Vec<Vec<usize>> = vec![Vec::new(); parts];
            for (i, v) in pool.into_iter().enumerate() {
                out[i % parts].push(v);
            }
            for p in out.iter_mut() {
                p.sort_unstable();
            }
            out.sort_by_key(|p| p[0]);
            out
        }

        fn random_multi_dist(&mut self, scope: &[usize]) -> LeafDistribution {
            let all_discrete = scope.iter().all(|&v| self.vars[v].is_discrete());
            if all_discrete {
                let dims: Vec<usize> =
                    scope.iter().map(|&v| self.vars[v].cardinality().unwrap()).collect();
                let lattice: usize = dims.iter().product();
                LeafDistribution::JointHistogram(JointHistogram::dense(
                    dims,
                    self.random_masses(lattice),
                ))
            } else {
                let d = scope.len();
                let k = 2;
                let weights = self.random_masses(k);
                let mut means = Vec::with_capacity(k);
                let mut covs = Vec::with_capacity(k);
                let mut lo = Vec::with_capacity(d);
                let mut hi = Vec::with_capacity(d);
                let mut disc = Vec::with_capacity(d);
                for &v in scope {
                    let iv = self.vars[v].full_interval();
                    lo.push(iv.lo);
                    hi.push(iv.hi);
                    disc.push(self.vars[v].is_discrete());
                }
                for _ in 0..k {
                    let mean: Vec<f64> = (0..d)
                        .map(|j| lo[j] + self.rng.gen::<f64>() * (hi[j] - lo[j]))
                        .collect();
                    // random SPD covariance: A A^T plus a diagonal bump
                    let mut a = vec![vec![0.0f64; d]; d];
                    for row in a.iter_mut() {
                        for cell in row.iter_mut() {
                            *cell = self.rng.gen::<f64>() - 0.5;
                        }
                    }
                    let mut cov = vec![vec![0.0f64; d]; d];
                    for i in 0..d {
                        for j in 0..d {
                            let dot: f64 = (0..d).map(|t| a[i][t] * a[j][t]).sum();
                            cov[i][j] = dot * (hi[i] - lo[i]) * (hi[j] - lo[j]) * 0.02;
                        }
                        cov[i][i] += 0.05 * (hi[i] - lo[i]) * (hi[i] - lo[i]) * 0.02 + 0.01;
                    }
                    means.push(mean);
                    covs.push(cov);
                }
                LeafDistribution::MultiGaussianMixture(
                    MultiGaussianMixture::new(weights, means, covs, lo, hi, disc)
                        .expect("random covariance is positive definite"),
                )
            }
        }
    }
}

/// Hand-built reference models used across tests and documentation.
pub mod fixtures {
    use super::*;
    use crate::leaf::{Histogram, JointHistogram, LeafDistribution};
    use crate::model::FspnNode;

    fn hist(card: usize, entries: &[(usize, f64)]) -> LeafDistribution {
        let mut masses = vec![0.0; card];
        for &(i, m) in entries {
            masses[i] = m;
        }
        LeafDistribution::Histogram(Histogram::new(masses))
    }

    fn joint(dims: &[usize], entries: &[(&[usize], f64)]) -> LeafDistribution {
        let lattice: usize = dims.iter().product();
        let mut masses = vec![0.0; lattice];
        for (tuple, m) in entries {
            let mut idx = 0;
            for (i, &v) in tuple.iter().enumerate() {
                idx = idx * dims[i] + v;
            }
            masses[idx] = *m;
        }
        LeafDistribution::JointHistogram(JointHistogram::dense(dims.to_vec(), masses))
    }

    /// Four integer variables on [0, 20]. The root factorizes the highly
    /// correlated pair (X1, X2) away from (X3, X4); the left side is a
    /// 0.3/0.7 mixture of products over X3 and X4, and the right side splits
    /// on X3 <= 5 with one bivariate leaf per cell. Numbers are chosen so
    /// that Pr(X1 in [1,7], X3 in [3,6]) = 0.051 + 0.12 = 0.171.
    pub fn worked_example_model() -> FspnModel {
        let vars: Vec<VariableMeta> = (1..=4)
            .map(|i| VariableMeta::discrete(&format!("X{i}"), 21))
            .collect();
        let x4_point = || hist(21, &[(0, 1.0)]);
        let low_product = FspnNode::Product {
            child_scopes: vec![vec![2], vec![3]],
            children: vec![
                FspnNode::UniLeaf { variable: 2, dist: hist(21, &[(0, 0.6), (3, 0.1), (6, 0.3)]) },
                FspnNode::UniLeaf { variable: 3, dist: x4_point() },
            ],
        };
        let high_product = FspnNode::Product {
            child_scopes: vec![vec![2], vec![3]],
            children: vec![
                FspnNode::UniLeaf { variable: 2, dist: hist(21, &[(0, 0.5), (3, 0.2), (6, 0.3)]) },
                FspnNode::UniLeaf { variable: 3, dist: x4_point() },
            ],
        };
        let left = FspnNode::Sum {
            weights: vec![0.3, 0.7],
            children: vec![low_product, high_product],
        };
        let mut low_region = Event::full(&vars);
        low_region.set(2, Interval::closed(0.0, 5.0));
        let mut high_region = Event::full(&vars);
        high_region.set(2, Interval::closed(6.0, 20.0));
        let dims = [21usize, 21usize];
        let low_leaf = FspnNode::MultiLeaf {
            scope: vec![0, 1],
            condition_region: low_region.clone(),
            dist: joint(&dims, &[(&[1, 0], 0.3), (&[0, 0], 0.7)]),
        };
        let high_leaf = FspnNode::MultiLeaf {
            scope: vec![0, 1],
            condition_region: high_region.clone(),
            dist: joint(&dims, &[(&[1, 0], 0.4), (&[0, 0], 0.6)]),
        };
        let right = FspnNode::Split {
            regions: vec![low_region, high_region],
            children: vec![low_leaf, high_leaf],
        };
        let root = FspnNode::Factorize {
            w_scope: vec![2, 3],
            h_scope: vec![0, 1],
            left: Box::new(left),
            right: Box::new(right),
        };
        FspnModel::new(vars, root, None).expect("worked example is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FspnNode;

    #[test]
    fn empirical_joint_counts() {
        let vars = vec![VariableMeta::discrete("a", 2), VariableMeta::discrete("b", 2)];
        let data = DataMatrix::from_parts(
            vars,
            vec![None, None],
            vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0],
        )
        .unwrap();
        let joint = empirical_joint(&data).unwrap();
        assert_eq!(joint.masses, vec![0.5, 0.25, 0.0, 0.25]);
        assert!((joint.total_mass() - 1.0).abs() < 1e-12);

        let single = DataMatrix::from_parts(
            vec![VariableMeta::discrete("a", 3)],
            vec![None],
            vec![2.0],
        )
        .unwrap();
        let joint = empirical_joint(&single).unwrap();
        assert_eq!(joint.masses, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn brute_force_box_sums() {
        let joint = JointTable::new(vec![2, 2], vec![0.5, 0.25, 0.0, 0.25]).unwrap();
        let vars = vec![VariableMeta::discrete("a", 2), VariableMeta::discrete("b", 2)];
        let full = Event::full(&vars);
        assert_eq!(brute_force_marginal(&joint, &full).unwrap(), 1.0);
        let mut a0 = Event::full(&vars);
        a0.set(0, Interval::point(0.0));
        assert_eq!(brute_force_marginal(&joint, &a0).unwrap(), 0.75);
        let mut empty = Event::full(&vars);
        empty.set(0, Interval::empty());
        assert_eq!(brute_force_marginal(&joint, &empty).unwrap(), 0.0);
    }

    #[test]
    fn kl_identity_and_closed_form() {
        // a model reproducing the table exactly has zero divergence
        let model = fixtures::worked_example_model();
        let joint = materialize_joint(&model).unwrap();
        assert!((joint.total_mass() - 1.0).abs() < 1e-9);
        let kl = kl_divergence(&joint, &model).unwrap();
        assert!(kl.abs() < 1e-9, "kl {kl}");

        // p = (0.5, 0.5) against q = (0.25, 0.75)
        let p = JointTable::new(vec![2], vec![0.5, 0.5]).unwrap();
        let q = FspnModel::new(
            vec![VariableMeta::discrete("a", 2)],
            FspnNode::UniLeaf {
                variable: 0,
                dist: crate::leaf::LeafDistribution::Histogram(crate::leaf::Histogram::new(vec![
                    0.25, 0.75,
                ])),
            },
            None,
        )
        .unwrap();
        let kl = kl_divergence(&p, &q).unwrap();
        let expect = 0.5 * (0.5f64 / 0.25).ln() + 0.5 * (0.5f64 / 0.75).ln();
        assert!((kl - expect).abs() < 1e-12, "kl {kl} vs {expect}");
        assert!((expect - 0.14384).abs() < 1e-4);

        // missing support flags +inf
        let q0 = FspnModel::new(
            vec![VariableMeta::discrete("a", 2)],
            FspnNode::UniLeaf {
                variable: 0,
                dist: crate::leaf::LeafDistribution::Histogram(crate::leaf::Histogram::new(vec![
                    1.0, 0.0,
                ])),
            },
            None,
        )
        .unwrap();
        assert_eq!(kl_divergence(&p, &q0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn random_models_validate_and_normalize() {
        for seed in 0..20u64 {
            let opts = randmodel::RandomModelOptions {
                n_vars: 6,
                max_cardinality: 4,
                continuous_fraction: if seed % 2 == 0 { 0.0 } else { 0.4 },
                target_nodes: 60,
            };
            let model = randmodel::random_model(seed, &opts).unwrap();
            let p = infer_marginal(&model, &Event::full(&model.variables)).unwrap().value();
            assert!((p - 1.0).abs() < 1e-9, "seed {seed}: full-domain mass {p}");
        }
    }

    #[test]
    fn worked_example_statistics() {
        let model = fixtures::worked_example_model();
        let stats = model.stats();
        assert_eq!(stats.n_nodes, 11);
        assert_eq!(stats.n_factorize, 1);
        assert_eq!(stats.n_multileaf, 2);
        assert_eq!(stats.n_sum, 1);
        assert_eq!(stats.n_split, 1);
        assert_eq!(stats.n_product, 2);
        assert_eq!(stats.n_unileaf, 4);
    }

    #[test]
    fn single_unileaf_stats() {
        let model = FspnModel::new(
            vec![VariableMeta::discrete("a", 3)],
            FspnNode::UniLeaf {
                variable: 0,
                dist: crate::leaf::LeafDistribution::Histogram(crate::leaf::Histogram::new(vec![
                    0.2, 0.3, 0.5,
                ])),
            },
            None,
        )
        .unwrap();
        let stats = model.stats();
        assert_eq!(stats.n_nodes, 1);
        assert_eq!(stats.n_factorize, 0);
        assert_eq!(stats.depth, 1);
        assert_eq!(stats.n_params, 3);
    }

    #[test]
    fn benchmark_rows_match_sizes() {
        let report = scaling_benchmark(&[30, 80], 5, 11).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report.slope.is_some());
        let single = scaling_benchmark(&[30], 3, 11).unwrap();
        assert!(single.slope.is_none());
        assert_eq!(single.rows.len(), 1);
    }
}
