//! Property suites over randomized models: normalization, additivity,
//! monotonicity, oracle equivalence, serialization stability, and the
//! structural shapes structure learning is expected to produce.

mod common;

use fspn::compile::{bn_joint, bn_to_fspn};
use fspn::data_io::{generate_synthetic, SyntheticSpec};
use fspn::evalharness::{
    avg_rdc_score, brute_force_marginal, materialize_joint, randmodel,
};
use fspn::inference::{infer_evidence, infer_marginal, log_point_density};
use fspn::learning::{learn_fspn, LearnConfig};
use fspn::model::interval::{Event, Interval};
use fspn::model::{deserialize, serialize, FspnModel, FspnNode, VarDomain};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_models(n: usize, continuous: bool) -> Vec<FspnModel> {
    (0..n as u64)
        .map(|seed| {
            let opts = randmodel::RandomModelOptions {
                n_vars: 5 + (seed as usize % 3),
                max_cardinality: 4,
                continuous_fraction: if continuous && seed % 2 == 1 { 0.4 } else { 0.0 },
                target_nodes: 40 + (seed as usize % 4) * 30,
            };
            randmodel::random_model(seed, &opts).expect("random model is valid")
        })
        .collect()
}

#[test]
fn normalization_over_random_models() {
    for (i, model) in random_models(40, true).iter().enumerate() {
        let p = infer_marginal(model, &Event::full(&model.variables)).unwrap().value();
        assert!((p - 1.0).abs() <= 1e-9, "model {i}: full-domain mass {p}");
    }
}

#[test]
fn additivity_under_single_variable_splits() {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    for (i, model) in random_models(15, false).iter().enumerate() {
        for _ in 0..20 {
            let event = randmodel::random_event(&model.variables, &mut rng)
                .canonicalize(&model.variables);
            // pick a variable whose interval spans at least two lattice points
            let candidates: Vec<usize> = (0..model.n_vars())
                .filter(|&v| {
                    let iv = event.get(v);
                    !iv.is_empty() && iv.hi - iv.lo >= 1.0
                })
                .collect();
            let Some(&var) = candidates.first() else { continue };
            let iv = event.get(var);
            let cut = (iv.lo + ((iv.hi - iv.lo) / 2.0).floor()).min(iv.hi - 1.0);
            let mut low = event.clone();
            low.set(var, Interval::closed(iv.lo, cut));
            let mut high = event.clone();
            high.set(var, Interval::closed(cut + 1.0, iv.hi));
            let total = infer_marginal(model, &event).unwrap().value();
            let a = infer_marginal(model, &low).unwrap().value();
            let b = infer_marginal(model, &high).unwrap().value();
            assert!(
                (total - (a + b)).abs() <= 1e-9,
                "model {i} var {var}: {total} vs {a} + {b}"
            );
        }
    }
}

#[test]
fn monotonicity_under_event_growth() {
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    for model in random_models(15, false) {
        for _ in 0..20 {
            let event = randmodel::random_event(&model.variables, &mut rng)
                .canonicalize(&model.variables);
            // grow the event back toward the full domain one variable at a time
            let mut grown = event.clone();
            let mut p_prev = infer_marginal(&model, &grown).unwrap().value();
            for v in 0..model.n_vars() {
                grown.set(v, model.variables[v].full_interval());
                let p = infer_marginal(&model, &grown).unwrap().value();
                assert!(p_prev <= p + 1e-9, "shrunken event more probable: {p_prev} > {p}");
                p_prev = p;
            }
        }
    }
}

#[test]
fn range_inference_matches_materialized_joint() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut checked = 0usize;
    for model in random_models(12, false) {
        let joint = materialize_joint(&model).unwrap();
        assert!((joint.total_mass() - 1.0).abs() < 1e-9);
        for _ in 0..60 {
            let event = randmodel::random_event(&model.variables, &mut rng)
                .canonicalize(&model.variables);
            let fast = infer_marginal(&model, &event).unwrap().value();
            let slow = brute_force_marginal(&joint, &event).unwrap();
            assert!((fast - slow).abs() <= 1e-9, "{fast} vs {slow}");
            checked += 1;
        }
    }
    assert!(checked >= 500, "covered {checked} events");
}

#[test]
fn serialization_preserves_probabilities_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    for model in random_models(10, true) {
        let text = serialize(&model);
        let back = deserialize(&text).unwrap();
        assert_eq!(serialize(&back), text, "roundtrip must be byte-stable");
        assert_eq!(model.stats(), back.stats());
        for _ in 0..25 {
            let event = randmodel::random_event(&model.variables, &mut rng);
            let a = infer_marginal(&model, &event).unwrap().value();
            let b = infer_marginal(&back, &event).unwrap().value();
            assert_eq!(a.to_bits(), b.to_bits(), "{a} vs {b}");
        }
    }
}

#[test]
fn compiled_bns_match_their_joints() {
    let mut rng = ChaCha8Rng::seed_from_u64(515);
    for seed in 0..25u64 {
        let bn = common::random_binary_bn(seed, 8);
        let model = bn_to_fspn(&bn).unwrap();
        let joint = bn_joint(&bn).unwrap();
        for _ in 0..40 {
            let event = randmodel::random_event(&model.variables, &mut rng)
                .canonicalize(&model.variables);
            let got = infer_marginal(&model, &event).unwrap().value();
            let want = brute_force_marginal(&joint, &event).unwrap();
            assert!((got - want).abs() <= 1e-9, "seed {seed}: {got} vs {want}");
        }
    }
}

fn synthetic(seed: u64, n_vars: usize, sizes: Vec<usize>, groups: Vec<Vec<usize>>, noise: f64, rows: usize) -> fspn::data_io::DataMatrix {
    generate_synthetic(&SyntheticSpec {
        n_rows: rows,
        n_vars,
        domain_sizes: sizes,
        group_structure: groups,
        noise_level: noise,
        seed,
    })
    .unwrap()
}

#[test]
fn learning_shapes_independent_columns() {
    // three mutually independent discrete columns: a product of uni-leaves
    let data = synthetic(5, 3, vec![4, 3, 5], vec![], 1.0, 10_000);
    let model = learn_fspn(&data, &LearnConfig::default()).unwrap();
    match &model.root {
        FspnNode::Product { children, .. } => {
            assert_eq!(children.len(), 3);
            assert!(children.iter().all(|c| matches!(c, FspnNode::UniLeaf { .. })));
        }
        other => panic!("expected a product root, got {}", other.kind_name()),
    }
    let stats = model.stats();
    assert_eq!(stats.n_factorize, 0);
    assert_eq!(stats.n_sum, 0);
}

#[test]
fn learning_shapes_correlated_pair() {
    // X1 is a near-copy of X0: the pair must be factorized out
    let data = synthetic(6, 3, vec![4, 4, 3], vec![vec![0, 1]], 0.01, 10_000);
    let model = learn_fspn(&data, &LearnConfig::default()).unwrap();
    match &model.root {
        FspnNode::Factorize { h_scope, .. } => {
            assert!(h_scope.contains(&0) && h_scope.contains(&1), "h = {h_scope:?}");
        }
        other => panic!("expected a factorize root, got {}", other.kind_name()),
    }
}

#[test]
fn infinite_threshold_disables_factorize() {
    // strongly dependent data, but tau_high = inf forbids factorize nodes
    let data = synthetic(7, 4, vec![4, 4, 4, 4], vec![vec![0, 1, 2, 3]], 0.05, 5_000);
    let mut cfg = LearnConfig::default();
    cfg.tau_high = f64::INFINITY;
    let model = learn_fspn(&data, &cfg).unwrap();
    let stats = model.stats();
    assert_eq!(stats.n_factorize, 0, "degenerate tree must not factorize");
    assert_eq!(stats.n_multileaf, 0);
    assert!(stats.n_sum > 0, "dependent data should still cluster");
    let p = infer_marginal(&model, &Event::full(&model.variables)).unwrap().value();
    assert!((p - 1.0).abs() < 1e-9);
}

#[test]
fn learned_models_validate_and_normalize() {
    for seed in 0..10u64 {
        let groups = if seed % 2 == 0 { vec![vec![0usize, 1]] } else { vec![] };
        let data = synthetic(seed, 4, vec![3, 3, 4, 2], groups, 0.2 + 0.07 * seed as f64, 2_000);
        let mut cfg = LearnConfig::default();
        cfg.min_instances = 50;
        cfg.seed = seed;
        let model = learn_fspn(&data, &cfg).unwrap();
        assert!(model.validate().is_valid());
        let p = infer_marginal(&model, &Event::full(&model.variables)).unwrap().value();
        assert!((p - 1.0).abs() <= 1e-9, "seed {seed}: {p}");
        // every sum node's weights add to one
        model.root.visit(&mut |node| {
            if let FspnNode::Sum { weights, .. } = node {
                let total: f64 = weights.iter().sum();
                assert!((total - 1.0).abs() <= 1e-12, "sum weights {total}");
            }
        });
    }
}

#[test]
fn learning_is_deterministic() {
    let data = synthetic(11, 4, vec![4, 4, 3, 3], vec![vec![0, 1]], 0.15, 3_000);
    let mut cfg = LearnConfig::default();
    cfg.seed = 9;
    let a = serialize(&learn_fspn(&data, &cfg).unwrap());
    let b = serialize(&learn_fspn(&data, &cfg).unwrap());
    assert_eq!(a, b);
}

#[test]
fn conditional_identity_on_learned_model() {
    let data = synthetic(13, 4, vec![4, 3, 3, 4], vec![vec![0, 1]], 0.1, 4_000);
    let model = learn_fspn(&data, &LearnConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let full = Event::full(&model.variables);
    for _ in 0..25 {
        let query = randmodel::random_event(&model.variables, &mut rng);
        let direct = infer_marginal(&model, &query).unwrap().value();
        let conditioned = infer_evidence(&model, &query, &full).unwrap().value();
        assert!((direct - conditioned).abs() < 1e-12);
    }
}

#[test]
fn smoothing_keeps_unseen_values_finite() {
    // value 3 of the first column never occurs; alpha = 1 keeps it positive
    let data = synthetic(17, 2, vec![4, 3], vec![], 1.0, 500);
    let mut constrained_rows = Vec::new();
    for i in 0..data.n_rows() {
        if data.get(i, 0) < 3.0 {
            constrained_rows.push(data.row(i).to_vec());
        }
    }
    let values: Vec<f64> = constrained_rows.concat();
    let filtered = fspn::data_io::DataMatrix::from_parts(
        data.variables().to_vec(),
        data.labels().to_vec(),
        values,
    )
    .unwrap();
    let mut cfg = LearnConfig::default();
    cfg.smoothing_alpha = 1.0;
    let model = learn_fspn(&filtered, &cfg).unwrap();
    let ll = log_point_density(&model, &[3.0, 0.0]).unwrap();
    assert!(ll.is_finite(), "smoothed model must cover unseen values, got {ll}");

    let mut cfg0 = LearnConfig::default();
    cfg0.smoothing_alpha = 0.0;
    let model0 = learn_fspn(&filtered, &cfg0).unwrap();
    let ll0 = log_point_density(&model0, &[3.0, 0.0]).unwrap();
    assert_eq!(ll0, f64::NEG_INFINITY, "unsmoothed model assigns zero mass");
}

#[test]
fn dependence_knob_is_monotone() {
    let cfg = LearnConfig::default();
    let mut previous = f64::INFINITY;
    let mut scores = Vec::new();
    for noise in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let data = synthetic(77, 6, vec![5, 6, 4, 5, 6, 4], vec![(0..6).collect()], noise, 20_000);
        let score = avg_rdc_score(&data, &cfg).unwrap();
        assert!(score <= previous + 1e-9, "dependence must not rise with noise: {scores:?} then {score}");
        previous = score;
        scores.push(score);
    }
    // frozen-seed regression values at the extremes
    assert!(scores[0] > 0.9, "noise 0 score {}", scores[0]);
    assert!(*scores.last().unwrap() < 0.15, "noise 1 score {}", scores.last().unwrap());
}

#[test]
fn continuous_learning_round_trips() {
    // mixed discrete + continuous data with an independent continuous column
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let n = 2_000;
    let mut values = Vec::with_capacity(n * 3);
    for _ in 0..n {
        let a = rng.gen_range(0..3) as f64;
        let x = a * 2.0 + rng.gen::<f64>();
        let y: f64 = rng.gen::<f64>() * 4.0 - 2.0;
        values.extend_from_slice(&[a, x, y]);
    }
    let vars = vec![
        fspn::VariableMeta::discrete("a", 3),
        fspn::VariableMeta::continuous("x", -0.5, 7.5),
        fspn::VariableMeta::continuous("y", -2.5, 2.5),
    ];
    let data = fspn::data_io::DataMatrix::from_parts(vars, vec![None, None, None], values).unwrap();
    let mut cfg = LearnConfig::default();
    cfg.min_instances = 200;
    let model = learn_fspn(&data, &cfg).unwrap();
    assert!(model.validate().is_valid());
    let p = infer_marginal(&model, &Event::full(&model.variables)).unwrap().value();
    assert!((p - 1.0).abs() <= 1e-9, "full mass {p}");
    let text = serialize(&model);
    let back = deserialize(&text).unwrap();
    assert_eq!(serialize(&back), text);
    // continuous variables got continuous leaves
    let mut saw_continuous_leaf = false;
    model.root.visit(&mut |node| {
        if let FspnNode::UniLeaf { variable, dist } = node {
            if matches!(model.variables[*variable].domain, VarDomain::Continuous { .. }) {
                saw_continuous_leaf = true;
                assert!(matches!(
                    dist,
                    fspn::leaf::LeafDistribution::GaussianMixture(_)
                ));
            }
        }
    });
    assert!(saw_continuous_leaf);
}
