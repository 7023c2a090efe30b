//! Helpers shared by the integration suites.

use fspn::compile::BayesNet;
use fspn::model::VariableMeta;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random DAG of binary variables with random CPTs; at most `max_nodes`
/// nodes and at most 3 parents each.
pub fn random_binary_bn(seed: u64, max_nodes: usize) -> BayesNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_nodes.max(2));
    let variables: Vec<VariableMeta> = (0..n)
        .map(|i| VariableMeta::discrete(&format!("N{i}"), 2))
        .collect();
    let mut parents: Vec<Vec<usize>> = vec![Vec::new(); n];
    for child in 1..n {
        for parent in 0..child {
            if parents[child].len() >= 3 {
                break;
            }
            if rng.gen::<f64>() < 0.35 {
                parents[child].push(parent);
            }
        }
    }
    let mut cpts = Vec::with_capacity(n);
    for i in 0..n {
        let rows = 1usize << parents[i].len();
        let mut table = Vec::with_capacity(rows);
        for _ in 0..rows {
            let p: f64 = 0.05 + 0.9 * rng.gen::<f64>();
            table.push(vec![1.0 - p, p]);
        }
        cpts.push(table);
    }
    let bn = BayesNet { variables, parents, cpts };
    bn.validate().expect("generated BN is valid");
    bn
}
