mod common;

use std::sync::Arc;

use gibbslab::model::{build_model, params};
use gibbslab::partition::{log_z_exact, log_z_mc, logz_bounds, Instance};
use gibbslab::{ExtReal, SeedStream};
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn adding_an_edge_gains_at_most_log_j_max(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let model = common::random_zoo_model(&mut rng);
        let inst = common::random_instance(&mut rng, model, 5);
        let edge: Vec<usize> = (0..inst.model.arity()).map(|_| rng.random_range(0..inst.n_nodes())).collect();
        let table = inst.model.edge_pot.law.sample(&mut rng);
        let table_max = table.max();
        let grown = inst.with_edge(&edge, table).unwrap();
        let before = log_z_exact(&inst).unwrap();
        let after = log_z_exact(&grown).unwrap();
        if let (ExtReal::Finite(b), ExtReal::Finite(a)) = (before, after) {
            prop_assert!(a - b <= inst.model.soft.j_max.ln() + 1e-9, "gain {} vs log J_max {}", a - b, inst.model.soft.j_max.ln());
            if table_max <= 1.0 {
                prop_assert!(a <= b + 1e-12);
            }
        } else {
            prop_assert!(after <= before);
        }
    }

    #[test]
    fn exact_value_sits_inside_bounds(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let model = common::random_zoo_model(&mut rng);
        let inst = common::random_instance(&mut rng, model, 6);
        let (lo, hi) = logz_bounds(&inst);
        let z = log_z_exact(&inst).unwrap().to_float();
        prop_assert!(lo - 1e-9 <= z && z <= hi + 1e-9, "{lo} <= {z} <= {hi}");
    }
}

#[test]
fn monte_carlo_tracks_exact_value() {
    let mut rng = common::rng(41);
    let mut hits = 0;
    for _ in 0..20 {
        let model = common::random_zoo_model(&mut rng);
        let inst = common::random_instance(&mut rng, model, 6);
        let exact = log_z_exact(&inst).unwrap();
        let Ok(est) = log_z_mc(&inst, 50_000, SeedStream::new(rng.random())) else {
            continue;
        };
        let exact = exact.to_float();
        if (est.log_z - exact).abs() <= 4.0 * est.std_error + 1e-12 {
            hits += 1;
        }
    }
    assert!(hits >= 18, "only {hits}/20 estimates within 4 SE");
}

#[test]
fn independent_set_single_edge_mc() {
    let model = Arc::new(build_model("independent_set", &params([("lambda", 1.0)])).unwrap());
    let inst = Instance::draw(model, common::graph(2, 2, vec![vec![0, 1]]), SeedStream::new(1)).unwrap();
    let est = log_z_mc(&inst, 1_000_000, SeedStream::new(2)).unwrap();
    assert!((est.log_z - 3f64.ln()).abs() <= 3.0 * est.std_error, "{est:?}");
}
