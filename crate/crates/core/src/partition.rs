//! Homomorphism weights, log-partition functions and the deterministic
//! log-Z bounds.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{degree_stats, Hypergraph};
use crate::model::{draw_potentials, ModelSpec, Potentials};
use crate::scalar::{ExtReal, LogSumExp};
use crate::seed::SeedStream;
use crate::LogZ;

/// Default cap on the number of enumerated assignments.
pub const DEFAULT_STATE_CAP: u128 = 1 << 24;

const CHUNK: u64 = 1 << 12;
const MC_SHARD: usize = 1 << 13;

/// A graph with attached potential draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub model: Arc<ModelSpec>,
    pub graph: Hypergraph,
    pub potentials: Potentials,
}

impl Instance {
    pub fn new(model: Arc<ModelSpec>, graph: Hypergraph, potentials: Potentials) -> Result<Self> {
        if graph.arity() != model.arity() {
            return Err(Error::ArityMismatch {
                expected: model.arity(),
                actual: graph.arity(),
            });
        }
        if potentials.nodes.len() != graph.n_nodes() || potentials.edges.len() != graph.n_edges() {
            return Err(Error::ShapeMismatch(format!(
                "{} node and {} edge draws for a graph with {} nodes and {} edges",
                potentials.nodes.len(),
                potentials.edges.len(),
                graph.n_nodes(),
                graph.n_edges()
            )));
        }
        let states = model.states();
        if potentials.nodes.iter().any(|h| h.states() != states)
            || potentials
                .edges
                .iter()
                .any(|j| j.states != states || j.arity != model.arity())
        {
            return Err(Error::ShapeMismatch("potential table does not match the spin domain".into()));
        }
        Ok(Instance {
            model,
            graph,
            potentials,
        })
    }

    /// Draws potentials for `graph` from the model laws.
    pub fn draw(model: Arc<ModelSpec>, graph: Hypergraph, seed: SeedStream) -> Result<Self> {
        let potentials = draw_potentials(&model, &graph, seed)?;
        Instance::new(model, graph, potentials)
    }

    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }

    pub fn n_edges(&self) -> usize {
        self.graph.n_edges()
    }

    pub fn states(&self) -> usize {
        self.model.states()
    }

    /// Adds an edge with the given potential.
    pub fn with_edge(&self, edge: &[usize], potential: crate::model::EdgeTable) -> Result<Self> {
        let graph = self.graph.with_edge(edge)?;
        let mut potentials = self.potentials.clone();
        potentials.edges.push(potential);
        Instance::new(self.model.clone(), graph, potentials)
    }
}

/// A spin assignment given as state indices (colors or cells).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment(pub Vec<usize>);

fn ln_or_sentinel(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// `log H(σ) = Σ_u log h_u(σ_u) + Σ_e log J_e(σ|_e)`.
pub fn weight(instance: &Instance, assignment: &Assignment) -> Result<LogZ> {
    let sigma = &assignment.0;
    if sigma.len() != instance.n_nodes() || sigma.iter().any(|&s| s >= instance.states()) {
        return Err(Error::param("assignment", "length or state out of range"));
    }
    let nodes = instance
        .potentials
        .nodes
        .iter()
        .zip(sigma)
        .map(|(h, &s)| ExtReal::ln_of(h.get(s)));
    let mut tuple = vec![0; instance.graph.arity()];
    let edges = instance
        .graph
        .edges()
        .zip(&instance.potentials.edges)
        .map(|(e, j)| {
            for (slot, &u) in tuple.iter_mut().zip(e) {
                *slot = sigma[u];
            }
            ExtReal::ln_of(j.get(&tuple))
        })
        .collect::<Vec<_>>();
    Ok(nodes.chain(edges).sum())
}

/// Log tables of an instance, laid out for the enumeration loop.
struct Compiled {
    n: usize,
    states: usize,
    arity: usize,
    /// `log(h_u(s) · measure(s))`, `n × states`.
    node_log: Vec<f64>,
    /// Distinct edge tables in log form.
    tables: Vec<Vec<f64>>,
    /// Per edge: table index and node list.
    edge_table: Vec<usize>,
    edge_nodes: Vec<usize>,
}

impl Compiled {
    fn new(inst: &Instance) -> Self {
        let measures = inst.model.domain.measures();
        let states = inst.states();
        let node_log = inst
            .potentials
            .nodes
            .iter()
            .flat_map(|h| (0..states).map(|s| ln_or_sentinel(h.get(s) * measures[s])).collect::<Vec<_>>())
            .collect();
        let mut seen: HashMap<*const f64, usize> = HashMap::new();
        let mut tables = Vec::new();
        let edge_table = inst
            .potentials
            .edges
            .iter()
            .map(|j| {
                *seen.entry(j.values.as_ptr()).or_insert_with(|| {
                    tables.push(j.values.iter().map(|&v| ln_or_sentinel(v)).collect());
                    tables.len() - 1
                })
            })
            .collect();
        Compiled {
            n: inst.n_nodes(),
            states,
            arity: inst.graph.arity(),
            node_log,
            tables,
            edge_table,
            edge_nodes: inst.graph.edges().flatten().copied().collect(),
        }
    }

    #[inline]
    fn log_weight(&self, sigma: &[usize]) -> f64 {
        let mut acc = 0.0;
        for (u, &s) in sigma.iter().enumerate() {
            let v = self.node_log[u * self.states + s];
            if v == f64::NEG_INFINITY {
                return v;
            }
            acc += v;
        }
        acc + self.edge_log_weight(sigma)
    }

    #[inline]
    fn edge_log_weight(&self, sigma: &[usize]) -> f64 {
        let mut acc = 0.0;
        for (e, nodes) in self.edge_nodes.chunks_exact(self.arity).enumerate() {
            let idx = nodes.iter().fold(0, |i, &u| i * self.states + sigma[u]);
            let v = self.tables[self.edge_table[e]][idx];
            if v == f64::NEG_INFINITY {
                return v;
            }
            acc += v;
        }
        acc
    }

    fn chunk(&self, start: u64, len: u64) -> LogSumExp<f64> {
        let mut sigma = vec![0usize; self.n];
        let mut rest = start;
        for slot in sigma.iter_mut().rev() {
            *slot = (rest % self.states as u64) as usize;
            rest /= self.states as u64;
        }
        let mut acc = LogSumExp::new();
        for _ in 0..len {
            let w = self.log_weight(&sigma);
            if w != f64::NEG_INFINITY {
                acc.push(w);
            }
            for slot in sigma.iter_mut().rev() {
                *slot += 1;
                if *slot < self.states {
                    break;
                }
                *slot = 0;
            }
        }
        acc
    }
}

/// Options for [`log_z_exact_with`].
#[derive(Clone, Copy, Debug)]
pub struct ExactOptions {
    pub max_states: u128,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions {
            max_states: DEFAULT_STATE_CAP,
        }
    }
}

/// Number of assignments `states^N`.
pub fn state_space(states: usize, n: usize) -> u128 {
    (states as u128).checked_pow(n as u32).unwrap_or(u128::MAX)
}

/// `log Z` by enumerating every assignment, with the default cap.
pub fn log_z_exact(instance: &Instance) -> Result<LogZ> {
    log_z_exact_with(instance, &ExactOptions::default())
}

/// `log Z` by enumeration. Continuous cells contribute value × length.
///
/// Assignments are split into fixed-size chunks reduced in index order, so
/// the result does not depend on the number of worker threads.
pub fn log_z_exact_with(instance: &Instance, opts: &ExactOptions) -> Result<LogZ> {
    let total = state_space(instance.states(), instance.n_nodes());
    if total > opts.max_states {
        return Err(Error::StateCapExceeded {
            states: total,
            cap: opts.max_states,
        });
    }
    let compiled = Compiled::new(instance);
    let total = total as u64;
    let acc = if total <= CHUNK {
        compiled.chunk(0, total)
    } else {
        let parts: Vec<LogSumExp<f64>> = (0..total.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let start = c * CHUNK;
                compiled.chunk(start, CHUNK.min(total - start))
            })
            .collect();
        parts.iter().fold(LogSumExp::new(), |mut a, p| {
            a.merge(p);
            a
        })
    };
    Ok(acc.value())
}

/// Importance-sampling estimate of `log Z` with its delta-method standard
/// error on the log scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub log_z: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Draws `σ_u` independently with probability ∝ `h_u · measure` and
/// averages `∏_e J_e(σ|_e)`; `log Z = Σ_u log ∫h_u + log(mean)`.
///
/// Samples are generated in fixed shards with their own substreams.
pub fn log_z_mc(instance: &Instance, samples: usize, seed: SeedStream) -> Result<McEstimate> {
    if samples == 0 {
        return Err(Error::param("samples", "must be positive"));
    }
    let states = instance.states();
    let measures = instance.model.domain.measures();
    let mut log_norm = 0.0;
    let mut cumulative = Vec::with_capacity(instance.n_nodes());
    for h in &instance.potentials.nodes {
        let mass: Vec<f64> = (0..states).map(|s| h.get(s) * measures[s]).collect();
        let total: f64 = mass.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::param("h", "node potential must have finite positive mass"));
        }
        log_norm += total.ln();
        let mut acc = 0.0;
        cumulative.push(
            mass.iter()
                .map(|m| {
                    acc += m / total;
                    acc
                })
                .collect::<Vec<f64>>(),
        );
    }
    let compiled = Compiled::new(instance);
    let shards = samples.div_ceil(MC_SHARD);
    let logs: Vec<Vec<f64>> = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let len = MC_SHARD.min(samples - shard * MC_SHARD);
            let mut rng = seed.child(shard as u64).rng();
            let mut sigma = vec![0usize; instance.n_nodes()];
            (0..len)
                .map(|_| {
                    for (slot, cdf) in sigma.iter_mut().zip(&cumulative) {
                        let u: f64 = rng.random();
                        *slot = cdf.iter().position(|&c| u < c).unwrap_or(states - 1);
                    }
                    compiled.edge_log_weight(&sigma)
                })
                .collect()
        })
        .collect();
    let logs: Vec<f64> = logs.into_iter().flatten().collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        let m = instance.n_edges() as f64;
        return Err(Error::AllSamplesZero {
            samples,
            log_upper_95: log_norm + m * instance.model.soft.j_max.ln() + (3.0 / samples as f64).ln(),
        });
    }
    let n = samples as f64;
    let scaled: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let mean = scaled.iter().sum::<f64>() / n;
    let var = if samples > 1 {
        scaled.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(McEstimate {
        log_z: log_norm + top + mean.ln(),
        std_error: (var / n).sqrt() / mean,
        samples,
    })
}

/// `((M+N) log ρ_min, (M+N) log ρ_max)`.
pub fn logz_bounds(instance: &Instance) -> (f64, f64) {
    let size = (instance.n_edges() + instance.n_nodes()) as f64;
    let soft = &instance.model.soft;
    (size * soft.rho_min.ln(), size * soft.rho_max.ln())
}

/// Largest change of `log Z` when the potential of `node` is replaced:
/// `2 (1 + deg(u)) (log ρ_max − log ρ_min)`, degree counted with multiplicity.
pub fn node_change_bound(instance: &Instance, node: usize) -> Result<f64> {
    if node >= instance.n_nodes() {
        return Err(Error::param("node", "out of range"));
    }
    let degree = degree_stats(&instance.graph).node_degrees[node];
    Ok(2.0 * (1 + degree) as f64 * instance.model.soft.log_spread())
}

/// Largest change of `log Z` caused by edge `edge` of the instance:
/// `(2K + 2|N(e)| + 1)(log ρ_max − log ρ_min)`, with the neighbourhood
/// taken in the graph that contains the edge.
pub fn edge_change_bound(instance: &Instance, edge: usize) -> Result<f64> {
    if edge >= instance.n_edges() {
        return Err(Error::param("edge", "out of range"));
    }
    let stats = degree_stats(&instance.graph);
    let k = instance.graph.arity();
    let hood = stats.edge_neighborhoods[edge];
    Ok((2 * k + 2 * hood + 1) as f64 * instance.model.soft.log_spread())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Mc,
}

/// One `logz` result row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogZRow {
    pub logz: LogZ,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
    pub method: Method,
    pub seed: u64,
}
