//! Sparse random K-uniform directed hypergraphs.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::distribution::{Binomial, Discrete};

use crate::error::{Error, Result};
use crate::seed::SeedStream;

/// Edge density `c`, kept as an exact decimal so that `⌊cN⌋` is exact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Density {
    num: u128,
    den: u128,
}

impl Density {
    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `⌊cN⌋`.
    pub fn edge_count(&self, n: usize) -> usize {
        (self.num * n as u128 / self.den) as usize
    }

    /// The shortest decimal that round-trips to `c`.
    pub fn from_f64(c: f64) -> Result<Self> {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::param("c", "density must be finite and >= 0"));
        }
        format!("{c}").parse()
    }
}

impl FromStr for Density {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::param("c", format!("`{s}` is not a nonnegative decimal"));
        let s = s.trim();
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if (int.is_empty() && frac.is_empty())
            || !int.chars().all(|c| c.is_ascii_digit())
            || !frac.chars().all(|c| c.is_ascii_digit())
            || frac.len() > 18
        {
            return Err(bad());
        }
        let digits = format!("{int}{frac}");
        let num: u128 = if digits.is_empty() { 0 } else { digits.parse().map_err(|_| bad())? };
        let den = 10u128.pow(frac.len() as u32);
        Ok(Density { num, den })
    }
}

impl fmt::Display for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let int = self.num / self.den;
        let frac = self.num % self.den;
        let places = self.den.ilog10() as usize;
        if places == 0 {
            write!(f, "{int}")
        } else {
            let frac = format!("{frac:0places$}");
            let frac = frac.trim_end_matches('0');
            if frac.is_empty() {
                write!(f, "{int}")
            } else {
                write!(f, "{int}.{frac}")
            }
        }
    }
}

impl Serialize for Density {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Density {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Density::from_f64(v),
            Repr::Text(s) => s.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

/// Directed K-uniform hypergraph on nodes `0..n`. Node repetition inside an
/// edge is allowed; edges keep their draw order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hypergraph {
    n: usize,
    k: usize,
    flat: Vec<usize>,
}

impl Hypergraph {
    pub fn new(n: usize, k: usize, edges: Vec<Vec<usize>>) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(Error::param("n", "need at least one node and arity >= 1"));
        }
        let mut flat = Vec::with_capacity(edges.len() * k);
        for e in &edges {
            if e.len() != k {
                return Err(Error::ArityMismatch {
                    expected: k,
                    actual: e.len(),
                });
            }
            if let Some(&u) = e.iter().find(|&&u| u >= n) {
                return Err(Error::param("edges", format!("node {u} out of range for n = {n}")));
            }
            flat.extend_from_slice(e);
        }
        Ok(Hypergraph { n, k, flat })
    }

    pub fn empty(n: usize, k: usize) -> Result<Self> {
        Hypergraph::new(n, k, Vec::new())
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn arity(&self) -> usize {
        self.k
    }

    pub fn n_edges(&self) -> usize {
        self.flat.len() / self.k
    }

    pub fn edge(&self, i: usize) -> &[usize] {
        &self.flat[i * self.k..(i + 1) * self.k]
    }

    pub fn edges(&self) -> impl ExactSizeIterator<Item = &[usize]> + '_ {
        self.flat.chunks_exact(self.k)
    }

    pub fn push_edge(&mut self, edge: &[usize]) -> Result<()> {
        if edge.len() != self.k {
            return Err(Error::ArityMismatch {
                expected: self.k,
                actual: edge.len(),
            });
        }
        if edge.iter().any(|&u| u >= self.n) {
            return Err(Error::param("edge", "node out of range"));
        }
        self.flat.extend_from_slice(edge);
        Ok(())
    }

    pub fn with_edge(&self, edge: &[usize]) -> Result<Self> {
        let mut g = self.clone();
        g.push_edge(edge)?;
        Ok(g)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph serialises")
    }
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    n: usize,
    k: usize,
    edges: Vec<Vec<usize>>,
}

impl Serialize for Hypergraph {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GraphRepr {
            n: self.n,
            k: self.k,
            edges: self.edges().map(<[usize]>::to_vec).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Hypergraph {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = GraphRepr::deserialize(d)?;
        Hypergraph::new(r.n, r.k, r.edges).map_err(serde::de::Error::custom)
    }
}

/// A point on the interpolation path between `G(N,c)` and the disjoint
/// union of two blocks of sizes `n1` and `n2`.
///
/// `global_edges` of the `⌊cN⌋` edges are placed over all `N^K` tuples;
/// the rest are confined to one block. The interpolation step is
/// `t = ⌊cN⌋ − global_edges`: `t = 0` is `G(N,c)` and `t = ⌊cN⌋` the
/// disjoint union.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterpolationPoint {
    pub global_edges: usize,
    pub n1: usize,
    pub n2: usize,
}

impl InterpolationPoint {
    pub fn new(global_edges: usize, n1: usize, n2: usize, total_edges: usize) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::InvalidInterpolation("both blocks need at least one node".into()));
        }
        if global_edges > total_edges {
            return Err(Error::InvalidInterpolation(format!(
                "{global_edges} global edges exceed the {total_edges} edges of the graph"
            )));
        }
        Ok(InterpolationPoint { global_edges, n1, n2 })
    }

    /// Point at interpolation step `t` for a graph with `total_edges` edges.
    pub fn at_step(t: usize, n1: usize, n2: usize, total_edges: usize) -> Result<Self> {
        if t > total_edges {
            return Err(Error::InvalidInterpolation(format!("step {t} beyond {total_edges}")));
        }
        InterpolationPoint::new(total_edges - t, n1, n2, total_edges)
    }

    pub fn n(&self) -> usize {
        self.n1 + self.n2
    }

    pub fn step(&self, total_edges: usize) -> usize {
        total_edges - self.global_edges
    }
}

/// Per-edge randomness shared by every point on the interpolation path: a
/// global tuple, a block coin and a tuple inside each block. Using the same
/// draws at every step gives the common-random-number coupling.
fn place_edge(
    stream: SeedStream,
    index: usize,
    n: usize,
    k: usize,
    split: Option<(usize, usize)>,
    global: bool,
    out: &mut Vec<usize>,
) {
    let mut rng = stream.child(index as u64).rng();
    let start = out.len();
    for _ in 0..k {
        out.push(rng.random_range(0..n));
    }
    if global {
        return;
    }
    let (n1, n2) = split.expect("block placement needs a split");
    let coin: f64 = rng.random();
    let (offset, size) = if coin < n1 as f64 / n as f64 { (0, n1) } else { (n1, n2) };
    for slot in &mut out[start..] {
        *slot = offset + rng.random_range(0..size);
    }
}

fn check_args(n: usize, c: &Density, k: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::param("n", "must be >= 1"));
    }
    if k < 2 {
        return Err(Error::param("k", "arity must be >= 2"));
    }
    if c.num == 0 {
        return Err(Error::param("c", "must be > 0"));
    }
    Ok(())
}

/// `G(N,c)`: `⌊cN⌋` i.i.d. uniform ordered K-tuples.
pub fn sample_er(n: usize, c: &Density, k: usize, seed: SeedStream) -> Result<Hypergraph> {
    check_args(n, c, k)?;
    let m = c.edge_count(n);
    let mut flat = Vec::with_capacity(m * k);
    for i in 0..m {
        place_edge(seed, i, n, k, None, true, &mut flat);
    }
    Ok(Hypergraph { n, k, flat })
}

/// `G(N,c)` at an interpolation point. The first `global_edges` edges are
/// global; each remaining edge lands in block 1 with probability `N₁/N` and
/// is uniform over that block's tuples. With the same seed, every point
/// shares the per-edge draws, and `global_edges = ⌊cN⌋` reproduces
/// [`sample_er`] exactly.
pub fn sample_interpolated(
    n: usize,
    c: &Density,
    k: usize,
    point: InterpolationPoint,
    seed: SeedStream,
) -> Result<Hypergraph> {
    check_args(n, c, k)?;
    let m = c.edge_count(n);
    if point.n() != n {
        return Err(Error::InvalidInterpolation(format!(
            "block sizes {} + {} do not add up to {n}",
            point.n1, point.n2
        )));
    }
    InterpolationPoint::new(point.global_edges, point.n1, point.n2, m)?;
    let mut flat = Vec::with_capacity(m * k);
    for i in 0..m {
        place_edge(seed, i, n, k, Some((point.n1, point.n2)), i < point.global_edges, &mut flat);
    }
    Ok(Hypergraph { n, k, flat })
}

/// Graph with `edges` uniform edges on `n` nodes (no density rounding).
pub fn sample_uniform_edges(n: usize, k: usize, edges: usize, seed: SeedStream) -> Result<Hypergraph> {
    if n == 0 || k == 0 {
        return Err(Error::param("n", "need at least one node and arity >= 1"));
    }
    let mut flat = Vec::with_capacity(edges * k);
    for i in 0..edges {
        place_edge(seed, i, n, k, None, true, &mut flat);
    }
    Ok(Hypergraph { n, k, flat })
}

/// Degree statistics.
///
/// `node_degrees` counts incidences with multiplicity (a node appearing
/// twice in one edge contributes 2), so they sum to `K·M`.
/// `incident_edges` counts distinct edges containing each node.
/// `edge_neighborhoods[e]` is the number of edges sharing a node with `e`,
/// `e` included.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeStats {
    pub node_degrees: Vec<usize>,
    pub incident_edges: Vec<usize>,
    pub edge_neighborhoods: Vec<usize>,
    pub max_degree: usize,
}

pub fn degree_stats(graph: &Hypergraph) -> DegreeStats {
    let n = graph.n_nodes();
    let mut node_degrees = vec![0usize; n];
    let mut incidence: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (e, edge) in graph.edges().enumerate() {
        for &u in edge {
            node_degrees[u] += 1;
            if incidence[u].last() != Some(&e) {
                incidence[u].push(e);
            }
        }
    }
    let incident_edges = incidence.iter().map(Vec::len).collect();
    let mut mark = vec![usize::MAX; graph.n_edges()];
    let edge_neighborhoods = graph
        .edges()
        .enumerate()
        .map(|(e, edge)| {
            let mut count = 0;
            for &u in edge {
                for &f in &incidence[u] {
                    if mark[f] != e {
                        mark[f] = e;
                        count += 1;
                    }
                }
            }
            count
        })
        .collect();
    let max_degree = node_degrees.iter().copied().max().unwrap_or(0);
    DegreeStats {
        node_degrees,
        incident_edges,
        edge_neighborhoods,
        max_degree,
    }
}

/// Probability that a fixed node lies in exactly `m` of the `⌊cN⌋` edges of
/// `G(N,c)`: the Binomial(⌊cN⌋, 1 − (1 − 1/N)^K) mass at `m`.
pub fn degree_tail_probability(n: usize, c: &Density, k: usize, m: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::param("n", "must be >= 1"));
    }
    let trials = c.edge_count(n);
    if m > trials {
        return Ok(0.0);
    }
    let p = 1.0 - (1.0 - 1.0 / n as f64).powi(k as i32);
    let dist = Binomial::new(p, trials as u64).map_err(|e| Error::param("p", e.to_string()))?;
    Ok(dist.pmf(m as u64))
}
