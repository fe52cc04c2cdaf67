//! Seeded experiment drivers and their JSON-lines records.
//!
//! Every experiment is a pure function of its configuration: per-sample
//! randomness comes from [`SeedStream`] children indexed by sample number,
//! so results do not depend on the number of worker threads, and a stored
//! [`ExperimentRecord`] can be re-run with [`replay`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, Discrete};

use crate::convexity::{certify_model, Verdict as PsdVerdict};
use crate::error::{Error, Result};
use crate::graph::{sample_er, sample_interpolated, sample_uniform_edges, Density, InterpolationPoint};
use crate::model::{build_model, for_each_tuple, ModelKind, ModelSpec, Params};
use crate::partition::{log_z_exact, Instance};
use crate::scalar::JsonF64;
use crate::seed::{tags, SeedStream};

/// Sample mean of `log Z` with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub seed: u64,
}

/// Which random graph each sample is drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ensemble {
    Er,
    Interpolated(InterpolationPoint),
}

/// Instance number `index` of a seeded sequence: the graph comes from the
/// `GRAPH` child of the sample stream, the potentials from the sample
/// stream itself.
pub fn sample_instance(
    model: &Arc<ModelSpec>,
    n: usize,
    c: &Density,
    ensemble: Ensemble,
    seed: SeedStream,
    index: usize,
) -> Result<Instance> {
    let stream = seed.child(tags::SAMPLES).child(index as u64);
    let k = model.arity();
    let graph = match ensemble {
        Ensemble::Er => sample_er(n, c, k, stream.child(tags::GRAPH))?,
        Ensemble::Interpolated(point) => sample_interpolated(n, c, k, point, stream.child(tags::GRAPH))?,
    };
    Instance::draw(model.clone(), graph, stream)
}

fn finite_log_z(instance: &Instance) -> Result<f64> {
    log_z_exact(instance)?.finite().ok_or(Error::ZeroPartition)
}

/// Exact `log Z` of each of `samples` seeded instances, in sample order.
pub fn logz_samples(
    model: &Arc<ModelSpec>,
    n: usize,
    c: &Density,
    ensemble: Ensemble,
    samples: usize,
    seed: SeedStream,
) -> Result<Vec<f64>> {
    (0..samples)
        .into_par_iter()
        .map(|i| finite_log_z(&sample_instance(model, n, c, ensemble, seed, i)?))
        .collect()
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    if let Some(&first) = xs.first() {
        if xs.iter().all(|&x| x == first) {
            return (first, 0.0);
        }
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn sample_std(xs: &[f64]) -> f64 {
    let (_, se) = mean_and_se(xs);
    se * (xs.len() as f64).sqrt()
}

/// Estimates `E log Z` over i.i.d. draws of graph and potentials. The same
/// seed at different interpolation points gives coupled estimates.
pub fn estimate_mean_logz(
    model: &Arc<ModelSpec>,
    n: usize,
    c: &Density,
    ensemble: Ensemble,
    samples: usize,
    seed: SeedStream,
) -> Result<MeanEstimate> {
    if samples < 2 {
        return Err(Error::param("samples", "need at least 2"));
    }
    let xs = logz_samples(model, n, c, ensemble, samples, seed)?;
    let (mean, std_error) = mean_and_se(&xs);
    Ok(MeanEstimate {
        mean,
        std_error,
        n_samples: samples,
        seed: seed.key(),
    })
}

/// Whether the convexity hypothesis is known to hold for the model: the
/// zoo models in their certified regimes, or a pairwise deterministic
/// kernel with a PSD certificate.
pub fn is_certified(model: &ModelSpec) -> bool {
    let real = |name: &str| match model.params.get(name) {
        Some(crate::model::ParamValue::Number(v)) => Some(*v),
        _ => None,
    };
    match model.kind {
        ModelKind::IndependentSet | ModelKind::Ksat | ModelKind::GaussianPartition => true,
        ModelKind::Potts => real("beta").is_some_and(|b| b >= 0.0),
        ModelKind::Ising => real("beta").is_some_and(|b| b <= 0.0),
        ModelKind::VianaBray | ModelKind::Xor => model.arity().is_multiple_of(2),
        ModelKind::Custom => {
            certify_model(model).is_ok_and(|c| matches!(c.verdict, PsdVerdict::PsdForAlpha(_)))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    ReportOnly,
}

/// One experiment run: its flattened parameters, named results and verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub experiment: String,
    pub params: BTreeMap<String, Value>,
    pub results: BTreeMap<String, JsonF64>,
    pub verdict: Verdict,
    pub timestamp: String,
}

impl ExperimentRecord {
    fn new(experiment: &Experiment, results: BTreeMap<String, f64>, verdict: Verdict) -> Result<Self> {
        Ok(ExperimentRecord {
            experiment: experiment.name().to_string(),
            params: experiment.params()?,
            results: results.into_iter().map(|(k, v)| (k, JsonF64(v))).collect(),
            verdict,
            timestamp: humantime::format_rfc3339_seconds(std::time::SystemTime::now()).to_string(),
        })
    }

    pub fn result(&self, key: &str) -> Option<f64> {
        self.results.get(key).map(|v| v.0)
    }

    /// True when both records carry the same result keys with bit-identical
    /// values.
    pub fn same_results(&self, other: &ExperimentRecord) -> bool {
        self.results.len() == other.results.len()
            && self
                .results
                .iter()
                .zip(&other.results)
                .all(|((ka, a), (kb, b))| ka == kb && a.0.to_bits() == b.0.to_bits())
    }
}

/// A model by name and parameters, as stored in configurations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRef {
    pub name: String,
    #[serde(default)]
    pub params: Params,
}

impl ModelRef {
    pub fn new(name: &str, params: Params) -> Self {
        ModelRef {
            name: name.to_string(),
            params,
        }
    }

    pub fn build(&self) -> Result<Arc<ModelSpec>> {
        build_model(&self.name, &self.params).map(Arc::new)
    }
}

fn three() -> f64 {
    3.0
}

fn yes() -> bool {
    true
}

fn default_slope() -> f64 {
    -0.3
}

fn default_significance() -> f64 {
    1e-3
}

/// `E log Z` along the interpolation path, `t = 0..⌊cN⌋`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolationConfig {
    pub model: ModelRef,
    pub n: usize,
    pub n1: usize,
    pub c: Density,
    pub samples: usize,
    pub seed: u64,
    #[serde(default = "yes")]
    pub coupled: bool,
    #[serde(default = "three")]
    pub threshold_se: f64,
    /// Run an uncertified model anyway, with a report-only verdict.
    #[serde(default)]
    pub force: bool,
}

/// Exact comparison of the two sides of the replica moment inequality on a
/// random base instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentsConfig {
    pub model: ModelRef,
    pub n: usize,
    pub n1: usize,
    pub r: usize,
    /// Defaults to the model's convexity constant.
    #[serde(default)]
    pub alpha: Option<f64>,
    pub base_edges: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationConfig {
    pub model: ModelRef,
    pub n_list: Vec<usize>,
    pub c: Density,
    pub samples: usize,
    pub seed: u64,
    #[serde(default = "default_slope")]
    pub max_slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub model: ModelRef,
    pub n_list: Vec<usize>,
    pub c: Density,
    pub samples: usize,
    pub seed: u64,
}

/// End of the interpolation path against independent block estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub model: ModelRef,
    pub n: usize,
    pub n1: usize,
    pub c: Density,
    pub samples: usize,
    pub seed: u64,
    #[serde(default = "three")]
    pub threshold_se: f64,
    #[serde(default = "default_significance")]
    pub significance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Experiment {
    Interpolation(InterpolationConfig),
    Moments(MomentsConfig),
    Concentration(ConcentrationConfig),
    Convergence(ConvergenceConfig),
    Endpoint(EndpointConfig),
}

fn flatten<T: Serialize>(config: &T) -> Result<BTreeMap<String, Value>> {
    let Value::Object(map) = serde_json::to_value(config)? else {
        return Err(Error::InvalidRecord("configuration is not an object".into()));
    };
    let mut out = BTreeMap::new();
    for (key, value) in map {
        if key == "model" {
            let model: ModelRef = serde_json::from_value(value)?;
            out.insert("model".to_string(), Value::String(model.name));
            for (name, v) in model.params {
                out.insert(format!("model.{name}"), serde_json::to_value(v)?);
            }
        } else if !value.is_null() {
            out.insert(key, value);
        }
    }
    Ok(out)
}

fn unflatten<T: DeserializeOwned>(params: &BTreeMap<String, Value>) -> Result<T> {
    let mut map = serde_json::Map::new();
    let mut model_params = serde_json::Map::new();
    let mut name = None;
    for (key, value) in params {
        if key == "model" {
            name = Some(value.clone());
        } else if let Some(p) = key.strip_prefix("model.") {
            model_params.insert(p.to_string(), value.clone());
        } else {
            map.insert(key.clone(), value.clone());
        }
    }
    let name = name.ok_or_else(|| Error::InvalidRecord("missing model".into()))?;
    map.insert(
        "model".into(),
        serde_json::json!({ "name": name, "params": Value::Object(model_params) }),
    );
    Ok(serde_json::from_value(Value::Object(map))?)
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Interpolation(_) => "interpolation",
            Experiment::Moments(_) => "moments",
            Experiment::Concentration(_) => "concentration",
            Experiment::Convergence(_) => "convergence",
            Experiment::Endpoint(_) => "endpoint",
        }
    }

    /// Flattened parameters; model parameters appear as `model.<name>`.
    pub fn params(&self) -> Result<BTreeMap<String, Value>> {
        match self {
            Experiment::Interpolation(c) => flatten(c),
            Experiment::Moments(c) => flatten(c),
            Experiment::Concentration(c) => flatten(c),
            Experiment::Convergence(c) => flatten(c),
            Experiment::Endpoint(c) => flatten(c),
        }
    }

    pub fn from_params(name: &str, params: &BTreeMap<String, Value>) -> Result<Self> {
        Ok(match name {
            "interpolation" => Experiment::Interpolation(unflatten(params)?),
            "moments" => Experiment::Moments(unflatten(params)?),
            "concentration" => Experiment::Concentration(unflatten(params)?),
            "convergence" => Experiment::Convergence(unflatten(params)?),
            "endpoint" => Experiment::Endpoint(unflatten(params)?),
            other => return Err(Error::InvalidRecord(format!("unknown experiment {other:?}"))),
        })
    }

    pub fn run(&self) -> Result<ExperimentRecord> {
        match self {
            Experiment::Interpolation(c) => interpolation_monotonicity(c),
            Experiment::Moments(c) => moments_experiment(c),
            Experiment::Concentration(c) => concentration_experiment(c),
            Experiment::Convergence(c) => convergence_experiment(c),
            Experiment::Endpoint(c) => endpoint_experiment(c),
        }
    }
}

/// Re-runs the experiment described by a record.
pub fn replay(record: &ExperimentRecord) -> Result<ExperimentRecord> {
    Experiment::from_params(&record.experiment, &record.params)?.run()
}

fn paired_se(a: &[f64], b: &[f64], coupled: bool) -> f64 {
    if coupled {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        mean_and_se(&d).1
    } else {
        mean_and_se(a).1.hypot(mean_and_se(b).1)
    }
}

fn check_split(n: usize, n1: usize) -> Result<()> {
    if n1 == 0 || n1 >= n {
        return Err(Error::param("n1", "need 1 <= n1 < n"));
    }
    Ok(())
}

/// Estimates `E log Z(G(N,c,t))` at every step and checks that it does not
/// increase: each consecutive difference and the start-to-end difference
/// must be at least `−threshold_se` standard errors.
pub fn interpolation_monotonicity(cfg: &InterpolationConfig) -> Result<ExperimentRecord> {
    let model = cfg.model.build()?;
    let certified = is_certified(&model);
    if !certified && !cfg.force {
        return Err(Error::NotCertified(cfg.model.name.clone()));
    }
    check_split(cfg.n, cfg.n1)?;
    if cfg.samples < 2 {
        return Err(Error::param("samples", "need at least 2"));
    }
    let m = cfg.c.edge_count(cfg.n);
    let base = SeedStream::new(cfg.seed);
    let mut series = Vec::with_capacity(m + 1);
    for t in 0..=m {
        let point = InterpolationPoint::at_step(t, cfg.n1, cfg.n - cfg.n1, m)?;
        let seed = if cfg.coupled { base } else { base.child(tags::AUX).child(t as u64) };
        series.push(logz_samples(&model, cfg.n, &cfg.c, Ensemble::Interpolated(point), cfg.samples, seed)?);
    }
    let mut results = BTreeMap::new();
    let means: Vec<f64> = series.iter().map(|xs| mean_and_se(xs).0).collect();
    for (t, xs) in series.iter().enumerate() {
        let (mean, se) = mean_and_se(xs);
        results.insert(format!("mean_t{t}"), mean);
        results.insert(format!("se_t{t}"), se);
    }
    let mut pass = true;
    let mut worst = f64::INFINITY;
    for t in 0..m {
        let diff = means[t] - means[t + 1];
        let se = paired_se(&series[t], &series[t + 1], cfg.coupled);
        results.insert(format!("diff_t{t}"), diff);
        results.insert(format!("diff_se_t{t}"), se);
        pass &= diff >= -cfg.threshold_se * se;
        if se > 0.0 {
            worst = worst.min(diff / se);
        }
    }
    if worst.is_finite() {
        results.insert("min_gap_ratio".into(), worst);
    }
    let endpoint = means[0] - means[m];
    let endpoint_se = paired_se(&series[0], &series[m], cfg.coupled);
    results.insert("endpoint_diff".into(), endpoint);
    results.insert("endpoint_se".into(), endpoint_se);
    pass &= endpoint >= -cfg.threshold_se * endpoint_se;
    let verdict = match (certified, pass) {
        (false, _) => Verdict::ReportOnly,
        (true, true) => Verdict::Pass,
        (true, false) => Verdict::Fail,
    };
    ExperimentRecord::new(&Experiment::Interpolation(cfg.clone()), results, verdict)
}

/// Exact values of both sides of the replica moment inequality.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentReport {
    /// `E[(αZ(G₀) − Z(G₀+e))^r]`, `e` uniform over all `N^K` tuples.
    pub left: BigRational,
    /// `Σ_j (N_j/N) E[(αZ(G₀) − Z(G₀+e))^r]`, `e` uniform over block `j`.
    pub right: BigRational,
    /// `αZ(G₀) ≥ Z(G₀+e)` for every placement and every kernel draw.
    pub alpha_dominates: bool,
    pub passed: bool,
}

fn rational(x: f64) -> Result<BigRational> {
    BigRational::from_float(x).ok_or_else(|| Error::param("potential", format!("{x} is not finite")))
}

/// Computes both sides of `E[(αZ − Z(+e))^r] ≤ Σ_j (N_j/N) E_j[(αZ − Z(+e))^r]`
/// in exact rational arithmetic, summing over every edge placement and the
/// whole support of the kernel law. Passes when `left ≤ right + 1e−12` and
/// `α` dominates every single-edge addition.
pub fn moment_inequality_check(model: &ModelSpec, n1: usize, r: usize, alpha: f64, base: &Instance) -> Result<MomentReport> {
    let n = base.n_nodes();
    check_split(n, n1)?;
    if r == 0 {
        return Err(Error::param("r", "must be >= 1"));
    }
    let support = model.edge_pot.law.support().ok_or(Error::UnsupportedExact)?;
    let k = model.arity();
    let q = model.states();
    let total = crate::partition::state_space(q, n);
    if total > 1 << 20 {
        return Err(Error::StateCapExceeded {
            states: total,
            cap: 1 << 20,
        });
    }
    let measures = model.domain.measures();
    let alpha_q = rational(alpha)?;

    // exact weight of every assignment of the base instance, measure included
    let mut sigma = vec![0usize; n];
    let mut weights: Vec<(Vec<usize>, BigRational)> = Vec::new();
    let node_tables: Vec<Vec<BigRational>> = base
        .potentials
        .nodes
        .iter()
        .map(|h| (0..q).map(|s| rational(h.get(s) * measures[s])).collect())
        .collect::<Result<_>>()?;
    let edge_tables: Vec<HashMap<usize, BigRational>> = base
        .potentials
        .edges
        .iter()
        .map(|_| HashMap::new())
        .collect();
    let mut edge_tables = edge_tables;
    let mut tuple = vec![0usize; k];
    for _ in 0..total {
        let mut w = BigRational::one();
        for (u, &s) in sigma.iter().enumerate() {
            w *= &node_tables[u][s];
        }
        for (e, nodes) in base.graph.edges().enumerate() {
            if w.is_zero() {
                break;
            }
            for (slot, &u) in tuple.iter_mut().zip(nodes) {
                *slot = sigma[u];
            }
            let table = &base.potentials.edges[e];
            let idx = table.index(&tuple);
            let value = match edge_tables[e].get(&idx) {
                Some(v) => v.clone(),
                None => {
                    let v = rational(table.values[idx])?;
                    edge_tables[e].insert(idx, v.clone());
                    v
                }
            };
            w *= value;
        }
        if !w.is_zero() {
            weights.push((sigma.clone(), w));
        }
        for slot in sigma.iter_mut().rev() {
            *slot += 1;
            if *slot < q {
                break;
            }
            *slot = 0;
        }
    }
    let z0: BigRational = weights.iter().map(|(_, w)| w.clone()).sum();
    let scaled = &alpha_q * &z0;
    let support_q: Vec<(BigRational, Vec<BigRational>)> = support
        .iter()
        .map(|w| Ok((rational(w.prob)?, w.value.values.iter().map(|&v| rational(v)).collect::<Result<_>>()?)))
        .collect::<Result<_>>()?;

    let mut alpha_dominates = true;
    // E over placements inside `nodes` and over the kernel law
    let mut side = |nodes: std::ops::Range<usize>| -> BigRational {
        let size = nodes.len();
        let mut acc = BigRational::zero();
        for_each_tuple(k, size, |offsets| {
            let placement: Vec<usize> = offsets.iter().map(|o| nodes.start + o).collect();
            for (prob, table) in &support_q {
                let mut z = BigRational::zero();
                for (sigma, w) in &weights {
                    let idx = placement.iter().fold(0, |i, &u| i * q + sigma[u]);
                    if !table[idx].is_zero() {
                        z += w * &table[idx];
                    }
                }
                let gap = &scaled - z;
                if gap.is_negative() {
                    alpha_dominates = false;
                }
                acc += prob * num_traits::pow(gap, r);
            }
        });
        acc / BigRational::from_integer(BigInt::from(size).pow(k as u32))
    };
    let left = side(0..n);
    let right = side(0..n1) * BigRational::new(n1.into(), n.into())
        + side(n1..n) * BigRational::new((n - n1).into(), n.into());
    let slack = rational(1e-12)?;
    let passed = left <= &right + slack && alpha_dominates;
    Ok(MomentReport {
        left,
        right,
        alpha_dominates,
        passed,
    })
}

fn moments_experiment(cfg: &MomentsConfig) -> Result<ExperimentRecord> {
    let model = cfg.model.build()?;
    if cfg.n > 4 || cfg.r > 3 {
        return Err(Error::param("n", "exhaustive moments need n <= 4 and r <= 3"));
    }
    let seed = SeedStream::new(cfg.seed);
    let graph = sample_uniform_edges(cfg.n, model.arity(), cfg.base_edges, seed.child(tags::GRAPH))?;
    let base = Instance::draw(model.clone(), graph, seed)?;
    let alpha = cfg.alpha.unwrap_or(model.soft.alpha);
    let report = moment_inequality_check(&model, cfg.n1, cfg.r, alpha, &base)?;
    let f = |x: &BigRational| x.to_f64().unwrap_or(f64::NAN);
    let mut results = BTreeMap::new();
    results.insert("left".into(), f(&report.left));
    results.insert("right".into(), f(&report.right));
    results.insert("gap".into(), f(&(&report.right - &report.left)));
    results.insert("alpha_dominates".into(), if report.alpha_dominates { 1.0 } else { 0.0 });
    let verdict = if report.passed { Verdict::Pass } else { Verdict::Fail };
    ExperimentRecord::new(&Experiment::Moments(cfg.clone()), results, verdict)
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Standard deviation of `N⁻¹ log Z` for each `N` and the log-log slope of
/// that deviation against `N`. Passes when the slope is at most `max_slope`;
/// report-only when some deviation is zero.
pub fn concentration_experiment(cfg: &ConcentrationConfig) -> Result<ExperimentRecord> {
    let model = cfg.model.build()?;
    if cfg.n_list.len() < 2 || cfg.samples < 2 {
        return Err(Error::param("n_list", "need at least two sizes and two samples"));
    }
    let base = SeedStream::new(cfg.seed);
    let mut results = BTreeMap::new();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let mut degenerate = false;
    for &n in &cfg.n_list {
        let per_node: Vec<f64> = logz_samples(&model, n, &cfg.c, Ensemble::Er, cfg.samples, base.child(n as u64))?
            .into_iter()
            .map(|v| v / n as f64)
            .collect();
        let (mean, _) = mean_and_se(&per_node);
        let std = sample_std(&per_node);
        let nf = n as f64;
        let radius = nf.ln().powi(3) / nf.sqrt();
        let tail = per_node.iter().filter(|v| (*v - mean).abs() > radius).count() as f64 / per_node.len() as f64;
        results.insert(format!("mean_n{n}"), mean);
        results.insert(format!("std_n{n}"), std);
        results.insert(format!("tail_n{n}"), tail);
        if std > 0.0 {
            xs.push(nf.ln());
            ys.push(std.ln());
        } else {
            degenerate = true;
        }
    }
    let verdict = if degenerate {
        Verdict::ReportOnly
    } else {
        let slope = ols_slope(&xs, &ys);
        results.insert("slope".into(), slope);
        if slope <= cfg.max_slope {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    };
    ExperimentRecord::new(&Experiment::Concentration(cfg.clone()), results, verdict)
}

/// `a_N = E log Z(G(N,c))` for each size, `a_N / N`, the near-superadditivity
/// residuals `a_N − a_{N₁} − a_{N₂}` for `N₁ = ⌊N/2⌋` and `N₁ = ⌊N/3⌋`, the
/// constant `C` with residual `≥ −C√N` on these splits, and `max a_N / N`.
pub fn convergence_experiment(cfg: &ConvergenceConfig) -> Result<ExperimentRecord> {
    let model = cfg.model.build()?;
    if cfg.n_list.is_empty() || cfg.samples < 2 {
        return Err(Error::param("n_list", "need at least one size and two samples"));
    }
    let base = SeedStream::new(cfg.seed);
    let mut table: BTreeMap<usize, MeanEstimate> = BTreeMap::new();
    let mut estimate = |n: usize| -> Result<MeanEstimate> {
        if let Some(e) = table.get(&n) {
            return Ok(*e);
        }
        let e = estimate_mean_logz(&model, n, &cfg.c, Ensemble::Er, cfg.samples, base.child(n as u64))?;
        table.insert(n, e);
        Ok(e)
    };
    let mut results = BTreeMap::new();
    let mut sup = f64::NEG_INFINITY;
    let mut c_fit = 0.0f64;
    for &n in &cfg.n_list {
        let a = estimate(n)?;
        results.insert(format!("a_n{n}"), a.mean);
        results.insert(format!("se_n{n}"), a.std_error);
        results.insert(format!("a_over_n_n{n}"), a.mean / n as f64);
        sup = sup.max(a.mean / n as f64);
        let splits: BTreeSet<usize> = [n / 2, n / 3].into_iter().filter(|&n1| n1 >= 1 && n1 < n).collect();
        for n1 in splits {
            let residual = a.mean - estimate(n1)?.mean - estimate(n - n1)?.mean;
            results.insert(format!("residual_n{n}_{n1}"), residual);
            c_fit = c_fit.max(-residual / (n as f64).sqrt());
        }
    }
    results.insert("c_fit".into(), c_fit);
    results.insert("fekete_sup".into(), sup);
    ExperimentRecord::new(&Experiment::Convergence(cfg.clone()), results, Verdict::ReportOnly)
}

/// Chi-square goodness of fit against `Binomial(m, p)`, where `histogram[j]`
/// is the number of draws that came out as `j`. Pools adjacent outcomes until each cell expects at least 5. Returns
/// `(statistic, degrees of freedom, p-value)`.
pub fn binomial_chi_square(histogram: &[usize], m: usize, p: f64) -> Result<(f64, usize, f64)> {
    let total: usize = histogram.iter().sum();
    let law = Binomial::new(p, m as u64).map_err(|e| Error::param("p", e.to_string()))?;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for j in 0..=m {
        obs += histogram.get(j).copied().unwrap_or(0) as f64;
        exp += total as f64 * law.pmf(j as u64);
        if exp >= 5.0 {
            cells.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    match cells.last_mut() {
        Some(last) => {
            last.0 += obs;
            last.1 += exp;
        }
        None => cells.push((obs, exp)),
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let df = cells.len().saturating_sub(1);
    if df == 0 {
        return Ok((stat, 0, 1.0));
    }
    let chi = ChiSquared::new(df as f64).map_err(|e| Error::param("df", e.to_string()))?;
    Ok((stat, df, 1.0 - chi.cdf(stat)))
}

/// At the end of the path every edge lies inside a block. Checks the block-1
/// edge count against `Binomial(⌊cN⌋, N₁/N)` and compares `E log Z` at the
/// end with the sum of independent block estimates whose edge counts are
/// drawn from `Binomial(⌊cN⌋, N_j/N)`.
pub fn endpoint_experiment(cfg: &EndpointConfig) -> Result<ExperimentRecord> {
    let model = cfg.model.build()?;
    check_split(cfg.n, cfg.n1)?;
    if cfg.samples < 2 {
        return Err(Error::param("samples", "need at least 2"));
    }
    let (n, n1, n2) = (cfg.n, cfg.n1, cfg.n - cfg.n1);
    let m = cfg.c.edge_count(n);
    let k = model.arity();
    let base = SeedStream::new(cfg.seed);
    let end_seed = base.child(1);
    let point = InterpolationPoint::at_step(m, n1, n2, m)?;
    let end: Vec<(f64, usize)> = (0..cfg.samples)
        .into_par_iter()
        .map(|i| {
            let inst = sample_instance(&model, n, &cfg.c, Ensemble::Interpolated(point), end_seed, i)?;
            let in_first = inst.graph.edges().filter(|e| e[0] < n1).count();
            Ok((finite_log_z(&inst)?, in_first))
        })
        .collect::<Result<_>>()?;
    let mut counts = vec![0usize; m + 1];
    end.iter().for_each(|&(_, c)| counts[c] += 1);
    let (stat, df, p_value) = binomial_chi_square(&counts, m, n1 as f64 / n as f64)?;

    let block = |size: usize, stream: SeedStream| -> Result<Vec<f64>> {
        let p = size as f64 / n as f64;
        (0..cfg.samples)
            .into_par_iter()
            .map(|i| {
                let s = stream.child(i as u64);
                let mut rng = s.child(tags::AUX).rng();
                let edges = (0..m).filter(|_| rng.random::<f64>() < p).count();
                let graph = sample_uniform_edges(size, k, edges, s.child(tags::GRAPH))?;
                finite_log_z(&Instance::draw(model.clone(), graph, s)?)
            })
            .collect()
    };
    let first = block(n1, base.child(2))?;
    let second = block(n2, base.child(3))?;
    let end_values: Vec<f64> = end.iter().map(|v| v.0).collect();
    let (end_mean, end_se) = mean_and_se(&end_values);
    let (m1, se1) = mean_and_se(&first);
    let (m2, se2) = mean_and_se(&second);
    let diff = end_mean - (m1 + m2);
    let se = (end_se.powi(2) + se1.powi(2) + se2.powi(2)).sqrt();
    let agree = diff.abs() <= cfg.threshold_se * se + 1e-9 * (1.0 + end_mean.abs());
    let mut results = BTreeMap::new();
    results.insert("chi_square".into(), stat);
    results.insert("chi_square_df".into(), df as f64);
    results.insert("chi_square_p".into(), p_value);
    results.insert("end_mean".into(), end_mean);
    results.insert("end_se".into(), end_se);
    results.insert("block1_mean".into(), m1);
    results.insert("block1_se".into(), se1);
    results.insert("block2_mean".into(), m2);
    results.insert("block2_se".into(), se2);
    results.insert("diff".into(), diff);
    results.insert("diff_se".into(), se);
    let verdict = if agree && p_value >= cfg.significance { Verdict::Pass } else { Verdict::Fail };
    ExperimentRecord::new(&Experiment::Endpoint(cfg.clone()), results, verdict)
}

/// Appends one record as a single JSON line.
pub fn append_jsonl(path: &Path, record: &ExperimentRecord) -> Result<()> {
    let mut line = serde_json::to_string(record)?;
    line.push('\n');
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    file.write_all(line.as_bytes())?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<ExperimentRecord>> {
    let file = std::fs::File::open(path)?;
    BufReader::new(file)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Writes records as CSV. The header names `experiment`, `verdict`,
/// `timestamp`, every parameter key, then every result key.
pub fn write_csv<W: Write>(records: &[ExperimentRecord], out: W) -> Result<()> {
    let params: BTreeSet<&String> = records.iter().flat_map(|r| r.params.keys()).collect();
    let results: BTreeSet<&String> = records.iter().flat_map(|r| r.results.keys()).collect();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["experiment".to_string(), "verdict".into(), "timestamp".into()];
    header.extend(params.iter().map(|k| k.to_string()));
    header.extend(results.iter().map(|k| k.to_string()));
    w.write_record(&header).map_err(csv_error)?;
    for rec in records {
        let mut row = vec![
            rec.experiment.clone(),
            serde_json::to_value(rec.verdict)?.as_str().unwrap_or_default().to_string(),
            rec.timestamp.clone(),
        ];
        row.extend(params.iter().map(|k| rec.params.get(*k).map(csv_cell).unwrap_or_default()));
        row.extend(results.iter().map(|k| {
            rec.results
                .get(*k)
                .map(|v| csv_cell(&serde_json::to_value(v).unwrap_or(Value::Null)))
                .unwrap_or_default()
        }));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
