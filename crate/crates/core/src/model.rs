//! Spin domains, potential laws, the model zoo and soft-state parameters.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Hypergraph;
use crate::seed::{tags, SeedStream};

/// Half-open real interval `[lo, hi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn overlap(&self, other: &Interval) -> f64 {
        (self.hi.min(other.hi) - self.lo.max(other.lo)).max(0.0)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// The set of spin values. Discrete colors are `0..q`; continuous spins are
/// represented by a finite partition into cells on which every potential is
/// constant. Either way a spin is addressed by its state index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpinDomain {
    Discrete { q: usize },
    PiecewiseContinuous { cells: Vec<Interval> },
}

impl SpinDomain {
    pub fn discrete(q: usize) -> Result<Self> {
        if q < 2 {
            return Err(Error::param("q", "need at least two colors"));
        }
        Ok(SpinDomain::Discrete { q })
    }

    /// Cells must be pairwise disjoint and of positive length.
    pub fn continuous(cells: Vec<Interval>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::param("cells", "empty partition"));
        }
        if let Some(c) = cells.iter().find(|c| !(c.len() > 0.0) || !c.lo.is_finite() || !c.hi.is_finite()) {
            return Err(Error::param("cells", format!("cell [{}, {}) has no positive finite length", c.lo, c.hi)));
        }
        let mut sorted = cells.clone();
        sorted.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        if sorted.windows(2).any(|w| w[0].hi > w[1].lo) {
            return Err(Error::param("cells", "cells overlap"));
        }
        Ok(SpinDomain::PiecewiseContinuous { cells })
    }

    pub fn states(&self) -> usize {
        match self {
            SpinDomain::Discrete { q } => *q,
            SpinDomain::PiecewiseContinuous { cells } => cells.len(),
        }
    }

    /// Quadrature weight of a state: 1 for a color, the length for a cell.
    pub fn measure(&self, state: usize) -> f64 {
        match self {
            SpinDomain::Discrete { .. } => 1.0,
            SpinDomain::PiecewiseContinuous { cells } => cells[state].len(),
        }
    }

    pub fn measures(&self) -> Vec<f64> {
        (0..self.states()).map(|s| self.measure(s)).collect()
    }

    /// Position of a state on the real line (`[i, i+1)` for color `i`).
    pub fn cell(&self, state: usize) -> Interval {
        match self {
            SpinDomain::Discrete { .. } => Interval::new(state as f64, state as f64 + 1.0),
            SpinDomain::PiecewiseContinuous { cells } => cells[state],
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, SpinDomain::Discrete { .. })
    }
}

/// Node potential `h`, one value per state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeTable(pub Arc<[f64]>);

impl NodeTable {
    pub fn new(values: Vec<f64>) -> Self {
        NodeTable(values.into())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, state: usize) -> f64 {
        self.0[state]
    }

    pub fn states(&self) -> usize {
        self.0.len()
    }

    /// ∫h against the state measures.
    pub fn integral(&self, measures: &[f64]) -> f64 {
        self.0.iter().zip(measures).map(|(h, w)| h * w).sum()
    }
}

/// Edge potential `J` on `states^arity` tuples, row-major with the first
/// coordinate most significant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeTable {
    pub arity: usize,
    pub states: usize,
    pub values: Arc<[f64]>,
}

impl EdgeTable {
    pub fn new(arity: usize, states: usize, values: Vec<f64>) -> Result<Self> {
        let expected = states
            .checked_pow(arity as u32)
            .ok_or_else(|| Error::param("arity", "table too large"))?;
        if values.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "edge table has {} entries, expected {states}^{arity} = {expected}",
                values.len()
            )));
        }
        Ok(EdgeTable {
            arity,
            states,
            values: values.into(),
        })
    }

    /// Table filled by evaluating `f` on every tuple.
    pub fn from_fn(arity: usize, states: usize, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut values = Vec::with_capacity(states.pow(arity as u32));
        for_each_tuple(arity, states, |t| values.push(f(t)));
        EdgeTable {
            arity,
            states,
            values: values.into(),
        }
    }

    pub fn index(&self, tuple: &[usize]) -> usize {
        tuple.iter().fold(0, |acc, &s| acc * self.states + s)
    }

    pub fn get(&self, tuple: &[usize]) -> f64 {
        self.values[self.index(tuple)]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Visits every tuple of `arity` values in `0..states`, row-major.
pub fn for_each_tuple(arity: usize, states: usize, mut f: impl FnMut(&[usize])) {
    let mut t = vec![0usize; arity];
    if states == 0 {
        return;
    }
    loop {
        f(&t);
        let mut pos = arity;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            t[pos] += 1;
            if t[pos] < states {
                break;
            }
            t[pos] = 0;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weighted<T> {
    pub prob: f64,
    pub value: T,
}

fn pick<'a, T, R: Rng + ?Sized>(support: &'a [Weighted<T>], rng: &mut R) -> &'a T {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for w in support {
        acc += w.prob;
        if u < acc {
            return &w.value;
        }
    }
    &support.last().expect("non-empty support").value
}

/// ν_h, a finite-support law over node tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum NodeLaw {
    Finite { support: Vec<Weighted<NodeTable>> },
}

impl NodeLaw {
    pub fn fixed(table: NodeTable) -> Self {
        NodeLaw::Finite {
            support: vec![Weighted { prob: 1.0, value: table }],
        }
    }

    pub fn support(&self) -> &[Weighted<NodeTable>] {
        match self {
            NodeLaw::Finite { support } => support,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        self.support().len() == 1
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> NodeTable {
        pick(self.support(), rng).clone()
    }
}

/// ν_J. Finite laws cover every discrete zoo model; the uniform Viana-Bray
/// coupling is the one continuous law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum EdgeLaw {
    Finite {
        support: Vec<Weighted<EdgeTable>>,
    },
    /// `J(x) = exp(β I ∏ x_i)` on ±1 spins with `I ~ Uniform[−c, c]`.
    VianaBrayUniform { arity: usize, beta: f64, c: f64 },
}

impl EdgeLaw {
    pub fn fixed(table: EdgeTable) -> Self {
        EdgeLaw::Finite {
            support: vec![Weighted { prob: 1.0, value: table }],
        }
    }

    pub fn support(&self) -> Option<&[Weighted<EdgeTable>]> {
        match self {
            EdgeLaw::Finite { support } => Some(support),
            EdgeLaw::VianaBrayUniform { .. } => None,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        self.support().is_some_and(|s| s.len() == 1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> EdgeTable {
        match self {
            EdgeLaw::Finite { support } => pick(support, rng).clone(),
            EdgeLaw::VianaBrayUniform { arity, beta, c } => {
                let coupling = rng.random_range(-*c..=*c);
                viana_bray_table(*arity, *beta, coupling)
            }
        }
    }

    /// Tables that bound every draw from above and below; the whole support
    /// for finite laws, the extreme couplings for the uniform law.
    pub fn extreme_tables(&self) -> Vec<EdgeTable> {
        match self {
            EdgeLaw::Finite { support } => support.iter().map(|w| w.value.clone()).collect(),
            EdgeLaw::VianaBrayUniform { arity, beta, c } => {
                vec![viana_bray_table(*arity, *beta, *c), viana_bray_table(*arity, *beta, -*c)]
            }
        }
    }
}

/// Ω_h: where node potentials may be positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OmegaH {
    AllStates,
    Intervals { intervals: Vec<Interval> },
}

impl OmegaH {
    pub fn contains_state(&self, domain: &SpinDomain, state: usize) -> bool {
        match self {
            OmegaH::AllStates => true,
            OmegaH::Intervals { intervals } => {
                let cell = domain.cell(state);
                intervals.iter().any(|iv| iv.overlap(&cell) > 0.0)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodePotentialSpec {
    pub law: NodeLaw,
    pub omega_h: OmegaH,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgePotentialSpec {
    pub law: EdgeLaw,
    pub arity: usize,
}

/// Constants of the soft-state assumption plus the convexity constant α.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftStateParams {
    pub kappa: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub j_max: f64,
    pub omega_h: OmegaH,
    pub alpha: f64,
}

impl SoftStateParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.kappa > 0.0
            && self.rho_min > 0.0
            && self.rho_min <= self.rho_max
            && self.j_max > 0.0
            && self.j_max <= self.rho_max
            && self.alpha >= self.j_max;
        if ok {
            Ok(())
        } else {
            Err(Error::SoftState(format!("inconsistent constants {self:?}")))
        }
    }

    /// log ρ_max − log ρ_min.
    pub fn log_spread(&self) -> f64 {
        self.rho_max.ln() - self.rho_min.ln()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    IndependentSet,
    Potts,
    Ising,
    VianaBray,
    Xor,
    Ksat,
    GaussianPartition,
    /// Output of [`embed_discrete`] or a user-assembled model.
    Custom,
}

impl ModelKind {
    /// The six discrete zoo models.
    pub const ZOO: [ModelKind; 6] = [
        ModelKind::IndependentSet,
        ModelKind::Potts,
        ModelKind::Ising,
        ModelKind::VianaBray,
        ModelKind::Xor,
        ModelKind::Ksat,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::IndependentSet => "independent_set",
            ModelKind::Potts => "potts",
            ModelKind::Ising => "ising",
            ModelKind::VianaBray => "viana_bray",
            ModelKind::Xor => "xor",
            ModelKind::Ksat => "ksat",
            ModelKind::GaussianPartition => "gaussian_partition",
            ModelKind::Custom => "custom",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "independent_set" | "is" | "hard_core" => ModelKind::IndependentSet,
            "potts" | "coloring" => ModelKind::Potts,
            "ising" => ModelKind::Ising,
            "viana_bray" => ModelKind::VianaBray,
            "xor" => ModelKind::Xor,
            "ksat" | "k_sat" => ModelKind::Ksat,
            "gaussian_partition" => ModelKind::GaussianPartition,
            _ => return Err(Error::UnknownModel(s.to_string())),
        })
    }
}

/// A model parameter as it appears in a configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Number(f64),
    List(Vec<f64>),
    Text(String),
}

pub type Params = BTreeMap<String, ParamValue>;

/// Builds a [`Params`] map from `(name, value)` pairs.
pub fn params<const N: usize>(pairs: [(&str, f64); N]) -> Params {
    pairs
        .into_iter()
        .map(|(k, v)| (k.to_string(), ParamValue::Number(v)))
        .collect()
}

fn get_real(p: &Params, name: &str, default: Option<f64>) -> Result<f64> {
    match p.get(name) {
        Some(ParamValue::Number(v)) if v.is_finite() => Ok(*v),
        Some(_) => Err(Error::param(name, "expected a finite number")),
        None => default.ok_or_else(|| Error::param(name, "missing")),
    }
}

fn get_int(p: &Params, name: &str, default: Option<usize>, min: usize) -> Result<usize> {
    let v = get_real(p, name, default.map(|d| d as f64))?;
    if v.fract() != 0.0 || v < min as f64 || v > u32::MAX as f64 {
        return Err(Error::param(name, format!("expected an integer >= {min}")));
    }
    Ok(v as usize)
}

/// Everything needed to draw instances of one Gibbs model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub domain: SpinDomain,
    pub node_pot: NodePotentialSpec,
    pub edge_pot: EdgePotentialSpec,
    pub soft: SoftStateParams,
    pub params: Params,
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn arity(&self) -> usize {
        self.edge_pot.arity
    }

    pub fn states(&self) -> usize {
        self.domain.states()
    }

    pub fn is_deterministic(&self) -> bool {
        self.node_pot.law.is_deterministic() && self.edge_pot.law.is_deterministic()
    }
}

/// Maps a 0/1 color to the ±1 presentation.
pub fn pm(state: usize) -> f64 {
    2.0 * state as f64 - 1.0
}

/// Viana-Bray edge table `exp(β ι ∏ x_i)` on ±1 spins.
pub fn viana_bray_table(arity: usize, beta: f64, coupling: f64) -> EdgeTable {
    EdgeTable::from_fn(arity, 2, |t| {
        let prod: f64 = t.iter().map(|&s| pm(s)).product();
        (beta * coupling * prod).exp()
    })
}

/// K-SAT clause table: `e^{−β}` at the violating tuple `z`, 1 elsewhere.
pub fn ksat_table(beta: f64, violating: &[usize]) -> EdgeTable {
    let penalty = (-beta).exp();
    EdgeTable::from_fn(violating.len(), 2, |t| if t == violating { penalty } else { 1.0 })
}

/// Finite symmetric law of the Viana-Bray coupling `I`.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingLaw(pub Vec<Weighted<f64>>);

impl CouplingLaw {
    pub fn two_point() -> Self {
        CouplingLaw(vec![
            Weighted { prob: 0.5, value: -1.0 },
            Weighted { prob: 0.5, value: 1.0 },
        ])
    }

    pub fn new(values: &[f64], probs: &[f64]) -> Result<Self> {
        if values.len() != probs.len() || values.is_empty() {
            return Err(Error::param("i_values", "values and probabilities must have equal nonzero length"));
        }
        if probs.iter().any(|p| !(*p > 0.0)) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("i_probs", "probabilities must be positive and values finite"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::param("i_probs", format!("probabilities sum to {total}")));
        }
        let law: Vec<_> = values
            .iter()
            .zip(probs)
            .map(|(&value, &prob)| Weighted { prob, value })
            .collect();
        for w in &law {
            let mirror: f64 = law.iter().filter(|m| m.value == -w.value).map(|m| m.prob).sum();
            if (mirror - w.prob).abs() > 1e-12 {
                return Err(Error::param("i_values", "coupling law must be symmetric around zero"));
            }
        }
        Ok(CouplingLaw(law))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        *pick(&self.0, rng)
    }

    /// Half-width `c_I` of the support.
    pub fn bound(&self) -> f64 {
        self.0.iter().map(|w| w.value.abs()).fold(0.0, f64::max)
    }
}

fn lambda_model(p: &Params) -> Result<ModelSpec> {
    let lambda = get_real(p, "lambda", Some(1.0))?;
    if !(lambda > 0.0) {
        return Err(Error::param("lambda", "must be > 0"));
    }
    let domain = SpinDomain::discrete(2)?;
    let h = NodeTable::new(vec![1.0, lambda]);
    let j = EdgeTable::new(2, 2, vec![1.0, 1.0, 1.0, 0.0])?;
    let soft = SoftStateParams {
        kappa: 1.0,
        rho_min: lambda.min(1.0),
        rho_max: 1.0 + lambda,
        j_max: 1.0,
        omega_h: OmegaH::AllStates,
        alpha: 1.0,
    };
    Ok(assemble(ModelKind::IndependentSet, domain, h, EdgeLaw::fixed(j), 2, soft, params([("lambda", lambda)])))
}

/// Soft constants shared by Potts and Ising.
fn pairwise_soft(q: usize, h: f64, beta: f64) -> SoftStateParams {
    let j_max = beta.abs().exp();
    SoftStateParams {
        kappa: (q - 1) as f64,
        rho_min: h.min(1.0).min((-beta.abs()).exp()),
        rho_max: (h.max(1.0) * q as f64).max(j_max),
        j_max,
        omega_h: OmegaH::AllStates,
        alpha: j_max,
    }
}

fn potts_model(p: &Params) -> Result<ModelSpec> {
    let q = get_int(p, "q", Some(3), 2)?;
    let beta = get_real(p, "beta", None)?;
    if beta < 0.0 {
        return Err(Error::param("beta", "ferromagnetic Potts (beta < 0) is not supported"));
    }
    let domain = SpinDomain::discrete(q)?;
    let penalty = (-beta).exp();
    let j = EdgeTable::from_fn(2, q, |t| if t[0] == t[1] { penalty } else { 1.0 });
    let h = NodeTable::new(vec![1.0; q]);
    let soft = pairwise_soft(q, 1.0, beta);
    Ok(assemble(ModelKind::Potts, domain, h, EdgeLaw::fixed(j), 2, soft, params([("q", q as f64), ("beta", beta)])))
}

fn ising_model(p: &Params) -> Result<ModelSpec> {
    let beta = get_real(p, "beta", None)?;
    let field = get_real(p, "h", Some(1.0))?;
    if !(field > 0.0) {
        return Err(Error::param("h", "node potential must be positive"));
    }
    let domain = SpinDomain::discrete(2)?;
    let j = EdgeTable::from_fn(2, 2, |t| (beta * pm(t[0]) * pm(t[1])).exp());
    let h = NodeTable::new(vec![1.0, field]);
    let soft = pairwise_soft(2, field, beta);
    Ok(assemble(ModelKind::Ising, domain, h, EdgeLaw::fixed(j), 2, soft, params([("beta", beta), ("h", field)])))
}

fn viana_bray_soft(field: f64, beta: f64, c_i: f64) -> SoftStateParams {
    let j_max = field.max((beta * c_i).exp());
    SoftStateParams {
        kappa: 2.0,
        rho_min: field.min(1.0).min((-beta * c_i).exp()),
        rho_max: j_max.max(1.0 + field),
        j_max,
        omega_h: OmegaH::AllStates,
        alpha: j_max,
    }
}

fn coupling_law(p: &Params) -> Result<Option<CouplingLaw>> {
    match (p.get("i_law"), p.get("i_values"), p.get("i_probs")) {
        (Some(ParamValue::Text(s)), _, _) if s == "uniform" => Ok(None),
        (Some(ParamValue::Text(s)), _, _) if s == "two_point" => Ok(Some(CouplingLaw::two_point())),
        (Some(_), _, _) => Err(Error::param("i_law", "expected \"two_point\" or \"uniform\"")),
        (None, None, None) => Ok(Some(CouplingLaw::two_point())),
        (None, Some(ParamValue::List(vs)), Some(ParamValue::List(ps))) => CouplingLaw::new(vs, ps).map(Some),
        (None, Some(ParamValue::List(vs)), None) => {
            let ps = vec![1.0 / vs.len() as f64; vs.len()];
            CouplingLaw::new(vs, &ps).map(Some)
        }
        _ => Err(Error::param("i_values", "expected lists i_values and i_probs")),
    }
}

fn viana_bray_model(p: &Params) -> Result<ModelSpec> {
    let k = get_int(p, "k", Some(2), 2)?;
    let beta = get_real(p, "beta", None)?;
    let field = get_real(p, "h", Some(1.0))?;
    if !(beta > 0.0) {
        return Err(Error::param("beta", "must be > 0"));
    }
    if !(field > 0.0) {
        return Err(Error::param("h", "must be > 0"));
    }
    let domain = SpinDomain::discrete(2)?;
    let h = NodeTable::new(vec![1.0, field]);
    let mut recorded = params([("k", k as f64), ("beta", beta), ("h", field)]);
    let (law, c_i) = match coupling_law(p)? {
        Some(law) => {
            let c_i = law.bound();
            recorded.insert("i_values".into(), ParamValue::List(law.0.iter().map(|w| w.value).collect()));
            recorded.insert("i_probs".into(), ParamValue::List(law.0.iter().map(|w| w.prob).collect()));
            let support = law
                .0
                .iter()
                .map(|w| Weighted {
                    prob: w.prob,
                    value: viana_bray_table(k, beta, w.value),
                })
                .collect();
            (EdgeLaw::Finite { support }, c_i)
        }
        None => {
            let c_i = get_real(p, "c_i", Some(1.0))?;
            if !(c_i > 0.0) {
                return Err(Error::param("c_i", "must be > 0"));
            }
            recorded.insert("i_law".into(), ParamValue::Text("uniform".into()));
            recorded.insert("c_i".into(), ParamValue::Number(c_i));
            (EdgeLaw::VianaBrayUniform { arity: k, beta, c: c_i }, c_i)
        }
    };
    let soft = viana_bray_soft(field, beta, c_i);
    Ok(assemble(ModelKind::VianaBray, domain, h, law, k, soft, recorded))
}

fn xor_model(p: &Params) -> Result<ModelSpec> {
    let k = get_int(p, "k", Some(3), 2)?;
    let beta = get_real(p, "beta", None)?;
    let mut vb = viana_bray_model(&params([("k", k as f64), ("beta", beta), ("h", 1.0)]))?;
    vb.kind = ModelKind::Xor;
    vb.params = params([("k", k as f64), ("beta", beta)]);
    Ok(vb)
}

fn ksat_model(p: &Params) -> Result<ModelSpec> {
    let k = get_int(p, "k", Some(3), 2)?;
    let beta = get_real(p, "beta", None)?;
    if beta < 0.0 {
        return Err(Error::param("beta", "must be >= 0"));
    }
    let domain = SpinDomain::discrete(2)?;
    let h = NodeTable::new(vec![1.0, 1.0]);
    let prob = 0.5f64.powi(k as i32);
    let mut support = Vec::with_capacity(1 << k);
    for_each_tuple(k, 2, |z| {
        support.push(Weighted {
            prob,
            value: ksat_table(beta, z),
        })
    });
    let soft = SoftStateParams {
        kappa: 2.0,
        rho_min: (-beta).exp(),
        rho_max: 2.0,
        j_max: 1.0,
        omega_h: OmegaH::AllStates,
        alpha: 1.0,
    };
    Ok(assemble(
        ModelKind::Ksat,
        domain,
        h,
        EdgeLaw::Finite { support },
        k,
        soft,
        params([("k", k as f64), ("beta", beta)]),
    ))
}

/// Continuous spins on `[−L, L]` with the Gaussian kernel `h(x) = e^{−x²}`
/// (composite midpoint on equal cells) and the zero-one partition kernel
/// `J(x,y) = 1 − Σ_r γ_r 1{x,y ∈ A_r}`, where the classes `A_r` are bands of
/// width `class_width` and only the band holding 0 has `γ = 0`.
fn gaussian_partition_model(p: &Params) -> Result<ModelSpec> {
    let half = get_real(p, "l", Some(6.0))?;
    let cells = get_int(p, "cells", Some(512), 2)?;
    let width = get_real(p, "class_width", Some(1.0))?;
    if !(half > 0.0) || !(width > 0.0) {
        return Err(Error::param("l", "l and class_width must be > 0"));
    }
    let step = 2.0 * half / cells as f64;
    let intervals: Vec<Interval> = (0..cells)
        .map(|i| Interval::new(-half + i as f64 * step, -half + (i + 1) as f64 * step))
        .collect();
    let class_of = |iv: &Interval| ((iv.midpoint() + half) / width).floor() as i64;
    let soft_class = (half / width).floor() as i64;
    let classes: Vec<i64> = intervals.iter().map(class_of).collect();
    let h = NodeTable::new(intervals.iter().map(|iv| (-iv.midpoint().powi(2)).exp()).collect());
    let j = EdgeTable::from_fn(2, cells, |t| {
        if classes[t[0]] == classes[t[1]] && classes[t[0]] != soft_class {
            0.0
        } else {
            1.0
        }
    });
    // κ: right end of the run of soft-class cells starting at 0
    let start = intervals
        .iter()
        .position(|iv| iv.lo <= 0.0 && 0.0 < iv.hi)
        .ok_or_else(|| Error::param("l", "0 must lie inside the grid"))?;
    if classes[start] != soft_class {
        return Err(Error::SoftState("cell containing 0 is not in the soft class".into()));
    }
    let mut end = start;
    while end + 1 < cells && classes[end + 1] == soft_class {
        end += 1;
    }
    let kappa = intervals[end].hi;
    let measures: Vec<f64> = intervals.iter().map(Interval::len).collect();
    let soft_mass: f64 = intervals
        .iter()
        .zip(h.values())
        .map(|(iv, hv)| hv * iv.overlap(&Interval::new(0.0, kappa)))
        .sum();
    let total = h.integral(&measures);
    let domain = SpinDomain::continuous(intervals)?;
    let omega = OmegaH::Intervals {
        intervals: vec![Interval::new(-half, half)],
    };
    let soft = SoftStateParams {
        kappa,
        rho_min: soft_mass.min(1.0),
        rho_max: total.max(1.0),
        j_max: 1.0,
        omega_h: omega.clone(),
        alpha: 1.0,
    };
    let mut spec = assemble(
        ModelKind::GaussianPartition,
        domain,
        h,
        EdgeLaw::fixed(j),
        2,
        soft,
        params([("l", half), ("cells", cells as f64), ("class_width", width)]),
    );
    spec.node_pot.omega_h = omega;
    Ok(spec)
}

fn assemble(
    kind: ModelKind,
    domain: SpinDomain,
    h: NodeTable,
    law: EdgeLaw,
    arity: usize,
    soft: SoftStateParams,
    params: Params,
) -> ModelSpec {
    ModelSpec {
        kind,
        domain,
        node_pot: NodePotentialSpec {
            law: NodeLaw::fixed(h),
            omega_h: soft.omega_h.clone(),
        },
        edge_pot: EdgePotentialSpec { law, arity },
        soft,
        params,
    }
}

/// Builds a zoo model by name.
///
/// Recognised parameters: `independent_set` (`lambda`), `potts` (`q`,
/// `beta`), `ising` (`beta`, `h`), `viana_bray` (`k`, `beta`, `h`, and
/// either `i_values`/`i_probs` or `i_law = "uniform"` with `c_i`), `xor`
/// (`k`, `beta`), `ksat` (`k`, `beta`), `gaussian_partition` (`l`, `cells`,
/// `class_width`).
pub fn build_model(name: &str, p: &Params) -> Result<ModelSpec> {
    let kind: ModelKind = name.parse()?;
    let spec = match kind {
        ModelKind::IndependentSet => lambda_model(p)?,
        ModelKind::Potts => potts_model(p)?,
        ModelKind::Ising => ising_model(p)?,
        ModelKind::VianaBray => viana_bray_model(p)?,
        ModelKind::Xor => xor_model(p)?,
        ModelKind::Ksat => ksat_model(p)?,
        ModelKind::GaussianPartition => gaussian_partition_model(p)?,
        ModelKind::Custom => return Err(Error::UnknownModel(name.to_string())),
    };
    spec.soft.validate()?;
    Ok(spec)
}

/// Soft-state constants of a deterministic discrete kernel.
///
/// With `soft_color = None` the smallest admissible color is used. A color
/// is admissible when every entry with some coordinate equal to it is
/// strictly positive. The soft region is relabelled to `[0, 1)`, so κ = 1.
pub fn soft_params_discrete(j: &EdgeTable, h: &NodeTable, soft_color: Option<usize>) -> Result<SoftStateParams> {
    let q = j.states;
    if h.states() != q {
        return Err(Error::ShapeMismatch(format!("node table has {} states, kernel has {q}", h.states())));
    }
    let min_touching = |c: usize| -> f64 {
        let mut m = f64::INFINITY;
        for_each_tuple(j.arity, q, |t| {
            if t.contains(&c) {
                m = m.min(j.get(t));
            }
        });
        m
    };
    let q0 = match soft_color {
        Some(c) if c >= q => return Err(Error::param("q0", format!("color {c} out of range"))),
        Some(c) => {
            if !(min_touching(c) > 0.0) {
                return Err(Error::SoftState(format!("color {c} has a zero interaction")));
            }
            c
        }
        None => (0..q)
            .find(|&c| min_touching(c) > 0.0)
            .ok_or_else(|| Error::SoftState("no color interacts positively with every tuple".into()))?,
    };
    let j_max = j.max();
    let h_max = h.values().iter().copied().fold(0.0, f64::max);
    let soft = SoftStateParams {
        kappa: 1.0,
        rho_min: min_touching(q0),
        rho_max: j_max.max(q as f64 * h_max),
        j_max,
        omega_h: OmegaH::AllStates,
        alpha: j_max,
    };
    Ok(soft)
}

/// Re-expresses a discrete model on the real line: color `i` becomes the
/// cell `[i, i+1)` with the same potential values.
pub fn embed_discrete(model: &ModelSpec) -> Result<ModelSpec> {
    let q = match model.domain {
        SpinDomain::Discrete { q } => q,
        _ => return Err(Error::param("domain", "model is already continuous")),
    };
    let cells = (0..q).map(|i| Interval::new(i as f64, i as f64 + 1.0)).collect();
    let omega = OmegaH::Intervals {
        intervals: vec![Interval::new(0.0, q as f64)],
    };
    let mut out = model.clone();
    out.kind = ModelKind::Custom;
    out.domain = SpinDomain::continuous(cells)?;
    out.node_pot.omega_h = omega.clone();
    out.soft.omega_h = omega;
    out.params.insert("embedded_from".into(), ParamValue::Text(model.name().into()));
    Ok(out)
}

/// Node and edge potential draws attached to a graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Potentials {
    pub nodes: Vec<NodeTable>,
    pub edges: Vec<EdgeTable>,
}

/// One `h_u` per node and one `J_e` per edge, each from its own substream.
pub fn draw_potentials(model: &ModelSpec, graph: &Hypergraph, seed: SeedStream) -> Result<Potentials> {
    if graph.arity() != model.arity() {
        return Err(Error::ArityMismatch {
            expected: model.arity(),
            actual: graph.arity(),
        });
    }
    let node_stream = seed.child(tags::NODE_POTENTIALS);
    let edge_stream = seed.child(tags::EDGE_POTENTIALS);
    let nodes = (0..graph.n_nodes())
        .map(|u| draw_node(model, node_stream, u))
        .collect();
    let edges = (0..graph.n_edges())
        .map(|e| draw_edge(model, edge_stream, e))
        .collect();
    Ok(Potentials { nodes, edges })
}

pub(crate) fn draw_node(model: &ModelSpec, stream: SeedStream, u: usize) -> NodeTable {
    let law = &model.node_pot.law;
    if law.is_deterministic() {
        return law.support()[0].value.clone();
    }
    law.sample(&mut stream.child(u as u64).rng())
}

pub(crate) fn draw_edge(model: &ModelSpec, stream: SeedStream, e: usize) -> EdgeTable {
    let law = &model.edge_pot.law;
    if law.is_deterministic() {
        return law.support().expect("finite")[0].value.clone();
    }
    law.sample(&mut stream.child(e as u64).rng())
}

/// Exhaustive check of the soft-state assumption against the stored
/// constants, over every table in the support of ν_h and ν_J.
pub fn check_assumptions(model: &ModelSpec) -> Result<()> {
    let soft = &model.soft;
    soft.validate()?;
    let domain = &model.domain;
    let measures = domain.measures();
    let soft_region = Interval::new(0.0, soft.kappa);
    let tol = 1e-12;
    let in_omega: Vec<bool> = (0..domain.states())
        .map(|s| soft.omega_h.contains_state(domain, s))
        .collect();
    let is_soft: Vec<bool> = (0..domain.states())
        .map(|s| domain.cell(s).overlap(&soft_region) > 0.0)
        .collect();
    for w in model.node_pot.law.support() {
        let h = &w.value;
        if h.states() != domain.states() {
            return Err(Error::ShapeMismatch("node table size".into()));
        }
        for (s, &v) in h.values().iter().enumerate() {
            if v < 0.0 || (!in_omega[s] && v != 0.0) {
                return Err(Error::SoftState(format!("h({s}) = {v} violates support or sign")));
            }
        }
        let total = h.integral(&measures);
        let soft_mass: f64 = (0..h.states())
            .map(|s| h.get(s) * domain.cell(s).overlap(&soft_region))
            .sum();
        if soft.rho_min > soft_mass * (1.0 + tol) || total > soft.rho_max * (1.0 + tol) {
            return Err(Error::SoftState(format!(
                "node mass bounds fail: rho_min {} <= {soft_mass} <= {total} <= rho_max {}",
                soft.rho_min, soft.rho_max
            )));
        }
    }
    for j in model.edge_pot.law.extreme_tables() {
        if j.arity != model.arity() || j.states != domain.states() {
            return Err(Error::ShapeMismatch("edge table shape".into()));
        }
        let mut failure = None;
        for_each_tuple(j.arity, j.states, |t| {
            let v = j.get(t);
            if v < 0.0 || v > soft.j_max * (1.0 + tol) {
                failure.get_or_insert_with(|| format!("J{t:?} = {v} outside [0, J_max]"));
            }
            let admissible = t.iter().all(|&s| in_omega[s]);
            if admissible && t.iter().any(|&s| is_soft[s]) && v < soft.rho_min * (1.0 - tol) {
                failure.get_or_insert_with(|| format!("J{t:?} = {v} below rho_min at a soft tuple"));
            }
        });
        if let Some(msg) = failure {
            return Err(Error::SoftState(msg));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Hypergraph;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn independent_set_soft_params() {
        let m = build_model("independent_set", &params([("lambda", 1.0)])).unwrap();
        let s = &m.soft;
        assert_eq!((s.kappa, s.rho_min, s.rho_max, s.j_max), (1.0, 1.0, 2.0, 1.0));
        check_assumptions(&m).unwrap();
    }

    #[test]
    fn potts_beta_zero_is_all_ones() {
        let m = build_model("potts", &params([("q", 3.0), ("beta", 0.0)])).unwrap();
        let j = &m.edge_pot.law.support().unwrap()[0].value;
        assert!(j.values.iter().all(|&v| v == 1.0));
        assert_eq!(m.soft.j_max, 1.0);
    }

    #[test]
    fn ksat_soft_params() {
        let m = build_model("ksat", &params([("k", 3.0), ("beta", 0.5)])).unwrap();
        let s = &m.soft;
        assert_eq!((s.j_max, s.kappa, s.rho_max), (1.0, 2.0, 2.0));
        assert!(close(s.rho_min, (-0.5f64).exp()));
        assert_eq!(m.edge_pot.law.support().unwrap().len(), 8);
        check_assumptions(&m).unwrap();
    }

    #[test]
    fn every_zoo_model_satisfies_assumptions() {
        let configs: Vec<(&str, Params)> = vec![
            ("independent_set", params([("lambda", 0.3)])),
            ("independent_set", params([("lambda", 2.5)])),
            ("potts", params([("q", 4.0), ("beta", 1.3)])),
            ("ising", params([("beta", -0.7), ("h", 0.4)])),
            ("ising", params([("beta", 2.0), ("h", 3.0)])),
            ("viana_bray", params([("k", 3.0), ("beta", 0.8), ("h", 0.5)])),
            ("xor", params([("k", 4.0), ("beta", 1.1)])),
            ("ksat", params([("k", 2.0), ("beta", 2.0)])),
            ("gaussian_partition", params([("l", 3.0), ("cells", 24.0)])),
        ];
        for (name, p) in configs {
            let m = build_model(name, &p).unwrap();
            check_assumptions(&m).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn bad_parameters_are_rejected() {
        assert!(matches!(build_model("nope", &Params::new()), Err(Error::UnknownModel(_))));
        assert!(build_model("independent_set", &params([("lambda", 0.0)])).is_err());
        assert!(build_model("potts", &params([("q", 1.0), ("beta", 1.0)])).is_err());
        assert!(build_model("potts", &params([("q", 3.0), ("beta", -1.0)])).is_err());
        assert!(build_model("ksat", &params([("k", 1.0), ("beta", 1.0)])).is_err());
        let mut p = params([("beta", 1.0)]);
        p.insert("i_values".into(), ParamValue::List(vec![-1.0, 2.0]));
        p.insert("i_probs".into(), ParamValue::List(vec![0.5, 0.5]));
        assert!(build_model("viana_bray", &p).is_err());
    }

    #[test]
    fn soft_params_of_tables() {
        let is = build_model("independent_set", &params([("lambda", 1.0)])).unwrap();
        let j = &is.edge_pot.law.support().unwrap()[0].value;
        let h = &is.node_pot.law.support()[0].value;
        let s = soft_params_discrete(j, h, Some(0)).unwrap();
        assert_eq!((s.j_max, s.rho_max, s.rho_min), (1.0, 2.0, 1.0));
        // color 1 meets the hard-core zero
        assert!(matches!(soft_params_discrete(j, h, Some(1)), Err(Error::SoftState(_))));

        let potts = EdgeTable::from_fn(2, 2, |t| if t[0] == t[1] { (-1.0f64).exp() } else { 1.0 });
        let ones = NodeTable::new(vec![1.0, 1.0]);
        let s = soft_params_discrete(&potts, &ones, None).unwrap();
        assert_eq!(s.j_max, 1.0);
        assert!(close(s.rho_min, (-1.0f64).exp()));

        let flat = EdgeTable::new(2, 2, vec![1.0; 4]).unwrap();
        let s = soft_params_discrete(&flat, &ones, None).unwrap();
        assert_eq!((s.j_max, s.rho_max, s.rho_min), (1.0, 2.0, 1.0));

        let hard = EdgeTable::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!(matches!(soft_params_discrete(&hard, &ones, None), Err(Error::SoftState(_))));
    }

    #[test]
    fn viana_bray_decomposition_identity() {
        let beta = 0.7;
        for k in [2usize, 3, 4] {
            let law = CouplingLaw::new(&[-1.5, 0.0, 1.5], &[0.25, 0.5, 0.25]).unwrap();
            let j_max = (beta * law.bound()).exp();
            for w in &law.0 {
                let iota = w.value;
                let table = viana_bray_table(k, beta, iota);
                let f1 = j_max - (beta * iota).cosh();
                let f2 = (beta * iota).sinh();
                for_each_tuple(k, 2, |t| {
                    let prod: f64 = t.iter().map(|&s| pm(s)).product();
                    assert!(close(j_max - table.get(t), f1 - f2 * prod));
                });
            }
        }
    }

    #[test]
    fn xor_matches_parity_description() {
        let beta = 0.9;
        let m = build_model("xor", &params([("k", 3.0), ("beta", beta)])).unwrap();
        let support = m.edge_pot.law.support().unwrap();
        assert_eq!(support.len(), 2);
        for w in support {
            let iota = if w.value.get(&[1, 1, 1]) > 1.0 { 1.0 } else { -1.0 };
            for_each_tuple(3, 2, |t| {
                let minus_ones = t.iter().filter(|&&s| s == 0).count();
                let even = minus_ones % 2 == 0;
                let expected = if even == (iota > 0.0) { beta.exp() } else { (-beta).exp() };
                assert!(close(w.value.get(t), expected));
            });
        }
    }

    #[test]
    fn embedding_keeps_tables() {
        let m = build_model("potts", &params([("q", 3.0), ("beta", 0.4)])).unwrap();
        let e = embed_discrete(&m).unwrap();
        assert_eq!(e.states(), 3);
        assert_eq!(e.domain.measures(), vec![1.0; 3]);
        assert_eq!(e.edge_pot, m.edge_pot);
        check_assumptions(&e).unwrap();
        assert!(embed_discrete(&e).is_err());
    }

    #[test]
    fn continuous_domain_validation() {
        assert!(SpinDomain::continuous(vec![Interval::new(0.0, 1.0), Interval::new(0.5, 2.0)]).is_err());
        assert!(SpinDomain::continuous(vec![Interval::new(1.0, 1.0)]).is_err());
        let d = SpinDomain::continuous(vec![Interval::new(0.0, 0.5), Interval::new(2.0, 3.0)]).unwrap();
        assert_eq!(d.measures(), vec![0.5, 1.0]);
    }

    #[test]
    fn gaussian_kernel_mass() {
        let m = build_model("gaussian_partition", &Params::new()).unwrap();
        let total = m.node_pot.law.support()[0].value.integral(&m.domain.measures());
        // ∫ e^{-x²} over [-6, 6] is √π to double precision; midpoint error is O(h²)
        assert!((total - std::f64::consts::PI.sqrt()).abs() < 1e-3);
        assert!((m.soft.kappa - 1.0).abs() < 0.03);
        check_assumptions(&m).unwrap();
    }

    #[test]
    fn deterministic_draws_are_the_table() {
        let m = build_model("independent_set", &params([("lambda", 1.0)])).unwrap();
        let g = Hypergraph::new(3, 2, vec![vec![0, 1], vec![1, 2]]).unwrap();
        let pot = draw_potentials(&m, &g, SeedStream::new(1)).unwrap();
        let j = &m.edge_pot.law.support().unwrap()[0].value;
        assert!(pot.edges.iter().all(|e| e == j));
        assert_eq!(pot.nodes.len(), 3);
    }

    #[test]
    fn draws_are_seed_deterministic() {
        let m = build_model("ksat", &params([("k", 3.0), ("beta", 1.0)])).unwrap();
        let g = Hypergraph::new(4, 3, (0..20).map(|i| vec![i % 4, (i + 1) % 4, (i + 3) % 4]).collect()).unwrap();
        let a = draw_potentials(&m, &g, SeedStream::new(9)).unwrap();
        let b = draw_potentials(&m, &g, SeedStream::new(9)).unwrap();
        let c = draw_potentials(&m, &g, SeedStream::new(10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn arity_mismatch_is_an_error() {
        let m = build_model("ksat", &params([("k", 3.0), ("beta", 1.0)])).unwrap();
        let g = Hypergraph::new(2, 2, vec![vec![0, 1]]).unwrap();
        assert!(matches!(draw_potentials(&m, &g, SeedStream::new(0)), Err(Error::ArityMismatch { .. })));
    }
}
