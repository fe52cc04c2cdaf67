#![allow(dead_code)]

use std::sync::Arc;

use gibbslab::graph::{sample_uniform_edges, Hypergraph};
use gibbslab::model::{build_model, params, ModelSpec, NodeTable, SpinDomain};
use gibbslab::partition::Instance;
use gibbslab::SeedStream;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

/// One of the six discrete zoo models with random parameters.
pub fn random_zoo_model(rng: &mut ChaCha8Rng) -> ModelSpec {
    let u = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| rng.random_range(lo..hi);
    match rng.random_range(0..6) {
        0 => build_model("independent_set", &params([("lambda", u(rng, 0.2, 3.0))])),
        1 => {
            let q = rng.random_range(2..4) as f64;
            build_model("potts", &params([("q", q), ("beta", u(rng, 0.0, 2.0))]))
        }
        2 => build_model("ising", &params([("beta", u(rng, -2.0, 2.0)), ("h", u(rng, 0.2, 3.0))])),
        3 => {
            let k = rng.random_range(2..4) as f64;
            build_model("viana_bray", &params([("k", k), ("beta", u(rng, 0.1, 1.5)), ("h", u(rng, 0.3, 2.0))]))
        }
        4 => {
            let k = rng.random_range(2..5) as f64;
            build_model("xor", &params([("k", k), ("beta", u(rng, 0.1, 1.5))]))
        }
        _ => {
            let k = rng.random_range(2..4) as f64;
            build_model("ksat", &params([("k", k), ("beta", u(rng, 0.0, 2.0))]))
        }
    }
    .expect("valid zoo parameters")
}

/// A random instance of `model` on `1..=n_max` nodes with up to `2N` edges.
pub fn random_instance(rng: &mut ChaCha8Rng, model: ModelSpec, n_max: usize) -> Instance {
    let n = rng.random_range(1..=n_max);
    let edges = rng.random_range(0..=2 * n);
    let k = model.arity();
    let graph = sample_uniform_edges(n, k, edges, SeedStream::new(rng.random())).unwrap();
    Instance::draw(Arc::new(model), graph, SeedStream::new(rng.random())).unwrap()
}

/// `Z` by plain recursion over assignments with exact rational arithmetic.
pub fn naive_z(instance: &Instance) -> BigRational {
    let model = &instance.model;
    let q = model.states();
    let measure: Vec<f64> = (0..q)
        .map(|s| match &model.domain {
            SpinDomain::Discrete { .. } => 1.0,
            other => other.cell(s).len(),
        })
        .collect();
    let rat = |x: f64| BigRational::from_float(x).expect("finite");
    fn go(
        instance: &Instance,
        sigma: &mut Vec<usize>,
        q: usize,
        measure: &[f64],
        rat: &dyn Fn(f64) -> BigRational,
    ) -> BigRational {
        if sigma.len() == instance.n_nodes() {
            let mut w = BigRational::one();
            for (u, &s) in sigma.iter().enumerate() {
                w *= rat(instance.potentials.nodes[u].get(s)) * rat(measure[s]);
            }
            for (e, nodes) in instance.graph.edges().enumerate() {
                let tuple: Vec<usize> = nodes.iter().map(|&u| sigma[u]).collect();
                w *= rat(instance.potentials.edges[e].get(&tuple));
            }
            return w;
        }
        let mut total = BigRational::zero();
        for s in 0..q {
            sigma.push(s);
            total += go(instance, sigma, q, measure, rat);
            sigma.pop();
        }
        total
    }
    go(instance, &mut Vec::new(), q, &measure, &rat)
}

/// Natural log of a positive rational, accurate far beyond f64 range.
pub fn ln_rational(x: &BigRational) -> f64 {
    let bits = |v: &BigInt| v.bits() as i64;
    let shift_num = bits(x.numer()) - 60;
    let shift_den = bits(x.denom()) - 60;
    let num = (x.numer() >> shift_num.max(0) as usize).to_f64().unwrap();
    let den = (x.denom() >> shift_den.max(0) as usize).to_f64().unwrap();
    num.ln() - den.ln() + (shift_num.max(0) - shift_den.max(0)) as f64 * std::f64::consts::LN_2
}

/// A node table admissible under the model's soft-state constants: total
/// mass in `[ρ_min, ρ_max]` with at least `ρ_min` on the soft states.
pub fn admissible_node_table(rng: &mut ChaCha8Rng, model: &ModelSpec) -> NodeTable {
    let q = model.states();
    let soft = &model.soft;
    let soft_states: Vec<usize> = (0..q).filter(|&s| (s as f64) < soft.kappa).collect();
    let total = rng.random_range(soft.rho_min..=soft.rho_max);
    let share = if soft_states.len() == q {
        1.0
    } else {
        rng.random_range((soft.rho_min / total).min(1.0)..=1.0)
    };
    let mut values = vec![0.0; q];
    let spread = |rng: &mut ChaCha8Rng, states: &[usize], mass: f64, values: &mut [f64]| {
        let w: Vec<f64> = states.iter().map(|_| rng.random_range(0.05..1.0)).collect();
        let sum: f64 = w.iter().sum();
        for (&s, wi) in states.iter().zip(w) {
            values[s] = mass * wi / sum;
        }
    };
    spread(rng, &soft_states, share * total, &mut values);
    let hard: Vec<usize> = (0..q).filter(|s| !soft_states.contains(s)).collect();
    if !hard.is_empty() {
        spread(rng, &hard, (1.0 - share) * total, &mut values);
    }
    NodeTable::new(values)
}

pub fn graph(n: usize, k: usize, edges: Vec<Vec<usize>>) -> Hypergraph {
    Hypergraph::new(n, k, edges).unwrap()
}
