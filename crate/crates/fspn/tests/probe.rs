//! Scratch calibration probes (run manually, removed before release).

use fspn::data_io::{generate_synthetic, SyntheticSpec};
use fspn::evalharness::{avg_rdc_score, brute_force_marginal, empirical_joint, kl_divergence, randmodel};
use fspn::inference::infer_marginal;
use fspn::learning::{learn_fspn, LearnConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
#[ignore]
fn probe_oracle_closeness() {
    for (alpha, min_inst, sum_k, tau_low) in [
        (0.1, 100, 2, 0.15),
        (0.01, 50, 2, 0.15),
        (0.01, 50, 2, 0.1),
        (0.01, 25, 4, 0.1),
    ] {
        let mut worst_linf = 0.0f64;
        let mut worst_mae = 0.0f64;
        for ds in 0..20u64 {
            let n_vars = 3 + (ds as usize % 4); // 3..6
            let sizes: Vec<usize> = (0..n_vars).map(|i| 2 + (i + ds as usize) % 4).collect();
            let groups: Vec<Vec<usize>> = match ds % 4 {
                0 => vec![],
                1 => vec![(0..n_vars).collect()],
                2 => vec![(0..n_vars / 2).collect()],
                _ => vec![vec![0, 1]],
            };
            let spec = SyntheticSpec {
                n_rows: 10_000,
                n_vars,
                domain_sizes: sizes,
                group_structure: groups,
                noise_level: 0.1 + 0.8 * ((ds % 5) as f64 / 4.0),
                seed: 1000 + ds,
            };
            let data = generate_synthetic(&spec).unwrap();
            let mut cfg = LearnConfig::default();
            cfg.smoothing_alpha = alpha;
            cfg.min_instances = min_inst;
            cfg.sum_k = sum_k;
            cfg.tau_low = tau_low;
            cfg.seed = ds;
            let model = learn_fspn(&data, &cfg).unwrap();
            let truth = empirical_joint(&data).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(ds ^ 0xabc);
            let mut sum_err = 0.0;
            let mut max_err = 0.0f64;
            for _ in 0..200 {
                let event = randmodel::random_event(&model.variables, &mut rng);
                let got = infer_marginal(&model, &event).unwrap().value();
                let want = brute_force_marginal(&truth, &event.canonicalize(&model.variables)).unwrap();
                let err = (got - want).abs();
                sum_err += err;
                max_err = max_err.max(err);
            }
            let mae = sum_err / 200.0;
            if max_err > 0.04 {
                println!(
                    "  ds={ds} noise={:.2} groups={} mae={mae:.5} linf={max_err:.5}",
                    spec.noise_level,
                    spec.group_structure.len()
                );
            }
            worst_mae = worst_mae.max(mae);
            worst_linf = worst_linf.max(max_err);
        }
        println!(
            "alpha={alpha} min_inst={min_inst} sum_k={sum_k} tau_low={tau_low}: worst MAE={worst_mae:.5} worst Linf={worst_linf:.5}"
        );
    }
}

#[test]
#[ignore]
fn probe_kl_trend() {
    for seed in [101u64, 202, 303] {
        let spec = SyntheticSpec {
            n_rows: 50_000,
            n_vars: 10,
            domain_sizes: vec![4, 4, 4, 4, 4, 4, 4, 4, 4, 3],
            group_structure: vec![(0..10).collect()],
            noise_level: 0.05,
            seed,
        };
        let data = generate_synthetic(&spec).unwrap();
        let cfg_score = LearnConfig::default();
        let score = avg_rdc_score(&data, &cfg_score).unwrap();

        let mut cfg = LearnConfig::default();
        cfg.smoothing_alpha = 0.0001;
        cfg.seed = seed;
        let t0 = std::time::Instant::now();
        let fspn = learn_fspn(&data, &cfg).unwrap();
        let t_fspn = t0.elapsed().as_secs_f64();

        let mut cfg_spn = cfg.clone();
        cfg_spn.tau_high = f64::INFINITY;
        let t0 = std::time::Instant::now();
        let spn = learn_fspn(&data, &cfg_spn).unwrap();
        let t_spn = t0.elapsed().as_secs_f64();

        let truth = empirical_joint(&data).unwrap();
        let kl_fspn = kl_divergence(&truth, &fspn).unwrap();
        let kl_spn = kl_divergence(&truth, &spn).unwrap();
        let sf = fspn.stats();
        let ss = spn.stats();
        println!(
            "seed={seed}: rdc={score:.3} kl_fspn={kl_fspn:.5} ({}n {:.1}s f={}) kl_spn={kl_spn:.5} ({}n {:.1}s) ratio={:.3}",
            sf.n_nodes, t_fspn, sf.n_factorize, ss.n_nodes, t_spn, kl_fspn / kl_spn
        );
    }
}

#[test]
#[ignore]
fn probe_scaling() {
    let report = fspn::evalharness::scaling_benchmark(&[100, 1000, 10000], 100, 33).unwrap();
    for row in &report.rows {
        println!(
            "target={} actual={} median={}ns",
            row.target_nodes, row.actual_nodes, row.median_latency_ns
        );
    }
    println!("slope={:?} r2={:?}", report.slope, report.r_squared);
}

#[test]
#[ignore]
fn probe_synth_rdc_knob() {
    let cfg = LearnConfig::default();
    for noise in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let spec = SyntheticSpec {
            n_rows: 20_000,
            n_vars: 6,
            domain_sizes: vec![5, 6, 4, 5, 6, 4],
            group_structure: vec![(0..6).collect()],
            noise_level: noise,
            seed: 77,
        };
        let data = generate_synthetic(&spec).unwrap();
        let score = avg_rdc_score(&data, &cfg).unwrap();
        println!("noise={noise}: avg_rdc={score:.6}");
    }
}

#[test]
#[ignore]
fn probe_learned_structures() {
    // 3 mutually independent discrete columns
    let spec = SyntheticSpec {
        n_rows: 10_000,
        n_vars: 3,
        domain_sizes: vec![4, 3, 5],
        group_structure: vec![],
        noise_level: 1.0,
        seed: 5,
    };
    let data = generate_synthetic(&spec).unwrap();
    let cfg = LearnConfig::default();
    let model = learn_fspn(&data, &cfg).unwrap();
    println!("independent root: {}", model.root.kind_name());
    let s = model.stats();
    println!("  nodes={} unileaf={} factorize={}", s.n_nodes, s.n_unileaf, s.n_factorize);

    // X1 with X2 a near-copy
    let spec = SyntheticSpec {
        n_rows: 10_000,
        n_vars: 3,
        domain_sizes: vec![4, 4, 3],
        group_structure: vec![vec![0, 1]],
        noise_level: 0.01,
        seed: 6,
    };
    let data = generate_synthetic(&spec).unwrap();
    let model = learn_fspn(&data, &cfg).unwrap();
    println!("copy root: {}", model.root.kind_name());
    if let fspn::FspnNode::Factorize { h_scope, .. } = &model.root {
        println!("  h_scope={h_scope:?}");
    }
}

#[test]
#[ignore]
fn probe_roundtrip_diff() {
    use fspn::model::{deserialize, serialize};
    for seed in 0..10u64 {
        let opts = randmodel::RandomModelOptions {
            n_vars: 5 + (seed as usize % 3),
            max_cardinality: 4,
            continuous_fraction: if seed % 2 == 1 { 0.4 } else { 0.0 },
            target_nodes: 40 + (seed as usize % 4) * 30,
        };
        let model = randmodel::random_model(seed, &opts).unwrap();
        let a = serialize(&model);
        let b = serialize(&deserialize(&a).unwrap());
        if a != b {
            let pos = a.bytes().zip(b.bytes()).position(|(x, y)| x != y).unwrap_or(a.len().min(b.len()));
            let lo = pos.saturating_sub(120);
            println!("seed {seed} differs at byte {pos}:");
            println!("  A: ...{}", &a[lo..(pos + 80).min(a.len())]);
            println!("  B: ...{}", &b[lo..(pos + 80).min(b.len())]);
            break;
        }
    }
}
