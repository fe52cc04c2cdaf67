//! Order-K arrays, their multilinear forms, and the checks behind the
//! convexity hypothesis: PSD shifts `α − J` for pairwise kernels, expected
//! replica tensor products, a sampling falsifier for convexity on the
//! positive orthant, and the closed forms for K-SAT and Viana-Bray.

use nalgebra::{DMatrix, DVector, RealField, SymmetricEigen};
use num_rational::Rational64;
use num_traits::{Num, ToPrimitive};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{build_model, params, CouplingLaw, EdgeTable, ModelSpec};
use crate::seed::SeedStream;

/// Largest number of entries a dense [`KArray`] may hold.
pub const MAX_ENTRIES: usize = 1 << 20;

fn checked_entries(n: usize, k: usize) -> Result<usize> {
    let entries = (n as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    if entries > MAX_ENTRIES as u128 {
        return Err(Error::ArrayTooLarge {
            entries,
            cap: MAX_ENTRIES,
        });
    }
    Ok(entries as usize)
}

/// Dense `n`-dimensional array of order `k`, stored row-major (first index
/// most significant).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KArray<T> {
    n: usize,
    k: usize,
    entries: Vec<T>,
}

impl<T: Clone + Num> KArray<T> {
    pub fn new(n: usize, k: usize, entries: Vec<T>) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(Error::ShapeMismatch("dimension and order must be positive".into()));
        }
        let expected = checked_entries(n, k)?;
        if entries.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for an array of dimension {n} and order {k}",
                entries.len()
            )));
        }
        Ok(KArray { n, k, entries })
    }

    pub fn zeros(n: usize, k: usize) -> Result<Self> {
        KArray::new(n, k, vec![T::zero(); checked_entries(n, k)?])
    }

    pub fn from_fn(n: usize, k: usize, mut f: impl FnMut(&[usize]) -> T) -> Result<Self> {
        let total = checked_entries(n, k)?;
        let mut idx = vec![0usize; k];
        let mut entries = Vec::with_capacity(total);
        for _ in 0..total {
            entries.push(f(&idx));
            for slot in idx.iter_mut().rev() {
                *slot += 1;
                if *slot < n {
                    break;
                }
                *slot = 0;
            }
        }
        KArray::new(n, k, entries)
    }

    /// The `n × n` table of a pairwise kernel as an order-2 array.
    pub fn from_matrix(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::ShapeMismatch("matrix must be square".into()));
        }
        KArray::new(n, 2, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    pub fn index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.k);
        idx.iter().fold(0, |acc, &i| acc * self.n + i)
    }

    pub fn get(&self, idx: &[usize]) -> &T {
        &self.entries[self.index(idx)]
    }

    pub fn map<U: Clone + Num>(&self, f: impl FnMut(&T) -> U) -> KArray<U> {
        KArray {
            n: self.n,
            k: self.k,
            entries: self.entries.iter().map(f).collect(),
        }
    }

    fn scale_add(&mut self, weight: &T, other: &KArray<T>) {
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            *a = a.clone() + weight.clone() * b.clone();
        }
    }
}

/// Tensor product `⊗_l A_l`: an array of dimension `n^r` and the same order,
/// with entry `∏_l A_l[i^l_1, …, i^l_K]` at the index whose `k`-th
/// coordinate encodes `(i^1_k, …, i^r_k)` (first replica most significant).
pub fn tensor_product<T: Clone + Num>(arrays: &[KArray<T>]) -> Result<KArray<T>> {
    let first = arrays
        .first()
        .ok_or_else(|| Error::ShapeMismatch("tensor product of no arrays".into()))?;
    let (n, k, r) = (first.n, first.k, arrays.len());
    if arrays.iter().any(|a| a.n != n || a.k != k) {
        return Err(Error::ShapeMismatch("factors must share dimension and order".into()));
    }
    let big = (n as u128).checked_pow(r as u32).filter(|&d| d <= MAX_ENTRIES as u128);
    let big = big.ok_or(Error::ArrayTooLarge {
        entries: u128::MAX,
        cap: MAX_ENTRIES,
    })? as usize;
    checked_entries(big, k)?;
    KArray::from_fn(big, k, |idx| {
        // factor l reads base-n digit l of every coordinate
        arrays.iter().enumerate().fold(T::one(), |acc, (l, a)| {
            let shift = n.pow((r - 1 - l) as u32);
            let flat = idx.iter().fold(0, |f, &coord| f * n + (coord / shift) % n);
            acc * a.entries[flat].clone()
        })
    })
}

/// `⟨y, A⟩ = Σ y_{i_1} ⋯ y_{i_K} a_{i_1 … i_K}`, contracting the last axis
/// repeatedly.
pub fn multilinear_form<T: Clone + Num>(array: &KArray<T>, y: &[T]) -> Result<T> {
    if y.len() != array.n {
        return Err(Error::ShapeMismatch(format!("vector of length {} for dimension {}", y.len(), array.n)));
    }
    let mut cur = array.entries.clone();
    for _ in 0..array.k {
        cur = cur
            .chunks_exact(array.n)
            .map(|row| {
                row.iter()
                    .zip(y)
                    .fold(T::zero(), |acc, (a, b)| acc + a.clone() * b.clone())
            })
            .collect();
    }
    Ok(cur.pop().expect("contraction leaves one value"))
}

/// Coefficients `(c0, c1, c2)` of `s ↦ ⟨y + s d, A⟩` up to degree two.
pub fn directional_coefficients<T: Clone + Num>(array: &KArray<T>, y: &[T], d: &[T]) -> Result<(T, T, T)> {
    let n = array.n;
    if y.len() != n || d.len() != n {
        return Err(Error::ShapeMismatch("point and direction must match the dimension".into()));
    }
    let mut cur: Vec<(T, T, T)> = array
        .entries
        .chunks_exact(n)
        .map(|row| {
            row.iter().enumerate().fold((T::zero(), T::zero(), T::zero()), |(c0, c1, c2), (j, a)| {
                (c0 + a.clone() * y[j].clone(), c1 + a.clone() * d[j].clone(), c2)
            })
        })
        .collect();
    for _ in 1..array.k {
        cur = cur
            .chunks_exact(n)
            .map(|row| {
                row.iter().enumerate().fold((T::zero(), T::zero(), T::zero()), |(c0, c1, c2), (j, p)| {
                    let (yj, dj) = (y[j].clone(), d[j].clone());
                    (
                        c0 + p.0.clone() * yj.clone(),
                        c1 + p.1.clone() * yj.clone() + p.0.clone() * dj.clone(),
                        c2 + p.2.clone() * yj + p.1.clone() * dj,
                    )
                })
            })
            .collect();
    }
    Ok(cur.pop().expect("contraction leaves one value"))
}

/// Exact second derivative of `s ↦ ⟨y + s d, A⟩` at `s = 0`.
pub fn second_directional_derivative<T: Clone + Num>(array: &KArray<T>, y: &[T], d: &[T]) -> Result<T> {
    let (_, _, c2) = directional_coefficients(array, y, d)?;
    Ok(c2.clone() + c2)
}

/// Sampling configuration for [`convexity_falsify`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FalsifyOptions {
    pub orthant_only: bool,
    pub trials: usize,
    /// Coordinates are log-uniform in `[lo, hi]` in absolute value.
    pub lo: f64,
    pub hi: f64,
}

impl FalsifyOptions {
    pub fn orthant(trials: usize) -> Self {
        FalsifyOptions {
            orthant_only: true,
            trials,
            lo: 1e-3,
            hi: 1e3,
        }
    }

    pub fn full_space(trials: usize) -> Self {
        FalsifyOptions {
            orthant_only: false,
            ..FalsifyOptions::orthant(trials)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub trial: usize,
    pub y: Vec<f64>,
    pub direction: Vec<f64>,
    pub second_derivative: f64,
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum FalsifyOutcome {
    NoViolationFound { trials: usize },
    Violation(Violation),
}

impl FalsifyOutcome {
    pub fn is_violation(&self) -> bool {
        matches!(self, FalsifyOutcome::Violation(_))
    }
}

const FALSIFY_SHARD: usize = 64;

/// Searches for a point and direction where the second directional
/// derivative of the multilinear form is below `−tol`.
///
/// Finding nothing is evidence, not proof, of convexity. The reported
/// violation is the one with the smallest trial index, whatever the number
/// of worker threads.
pub fn convexity_falsify(array: &KArray<f64>, opts: &FalsifyOptions, seed: SeedStream) -> Result<FalsifyOutcome> {
    if !(opts.lo > 0.0 && opts.hi >= opts.lo) {
        return Err(Error::param("lo", "need 0 < lo <= hi"));
    }
    let n = array.n;
    let k = array.k as f64;
    let abs_sum: f64 = array.entries.iter().map(|a| a.abs()).sum();
    let (log_lo, log_hi) = (opts.lo.ln(), opts.hi.ln());
    let shards = opts.trials.div_ceil(FALSIFY_SHARD);
    let found: Vec<Option<Violation>> = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let mut rng = seed.child(shard as u64).rng();
            let start = shard * FALSIFY_SHARD;
            for trial in start..opts.trials.min(start + FALSIFY_SHARD) {
                let y: Vec<f64> = (0..n)
                    .map(|_| {
                        let mag = (log_lo + (log_hi - log_lo) * rng.random::<f64>()).exp();
                        if opts.orthant_only || rng.random::<bool>() {
                            mag
                        } else {
                            -mag
                        }
                    })
                    .collect();
                let mut d: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    d.iter_mut().for_each(|v| *v /= norm);
                }
                let second = second_directional_derivative(array, &y, &d).expect("shapes agree");
                let ymax = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let tol = 1e-9 * (1.0 + k * (k - 1.0) * abs_sum * ymax.powf(k - 2.0) * dmax * dmax);
                if second < -tol {
                    return Some(Violation {
                        trial,
                        y,
                        direction: d,
                        second_derivative: second,
                        tol,
                    });
                }
            }
            None
        })
        .collect();
    Ok(match found.into_iter().flatten().next() {
        Some(v) => FalsifyOutcome::Violation(v),
        None => FalsifyOutcome::NoViolationFound { trials: opts.trials },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Definiteness {
    Yes,
    No,
    Boundary,
}

/// Spectral data of `−J` restricted to the zero-sum subspace.
#[derive(Clone, Debug)]
pub struct R0Analysis<T: RealField> {
    pub verdict: Definiteness,
    pub min_eigenvalue: T,
    pub tol: T,
    /// Orthonormal basis of the zero-sum subspace, one column per vector.
    pub basis: DMatrix<T>,
    /// `Bᵀ(−J)B`.
    pub restricted: DMatrix<T>,
    pub eigen: SymmetricEigen<T, nalgebra::Dyn>,
}

fn c<T: RealField>(v: f64) -> T {
    nalgebra::convert(v)
}

fn inf_norm<T: RealField + Copy>(j: &DMatrix<T>) -> T {
    j.row_iter()
        .map(|r| r.iter().fold(T::zero(), |a, v| a + v.abs()))
        .fold(T::zero(), |a, v| a.max(v))
}

fn check_symmetric<T: RealField + Copy>(j: &DMatrix<T>) -> Result<()> {
    if !j.is_square() || j.nrows() == 0 {
        return Err(Error::ShapeMismatch("kernel matrix must be square and non-empty".into()));
    }
    let dev = (&j.transpose() - j).iter().fold(T::zero(), |a, v| a.max(v.abs()));
    if dev > c::<T>(1e-12) * (T::one() + inf_norm(j)) {
        return Err(Error::Asymmetric(nalgebra::try_convert(dev).unwrap_or(f64::NAN)));
    }
    Ok(())
}

/// Helmert basis of `{y : Σ y_i = 0}` as the columns of an `n × (n−1)` matrix.
pub fn zero_sum_basis<T: RealField + Copy>(n: usize) -> DMatrix<T> {
    DMatrix::from_fn(n, n.saturating_sub(1), |i, m| {
        let m1 = c::<T>((m + 1) as f64);
        let scale = (m1 * (m1 + T::one())).sqrt();
        match i.cmp(&(m + 1)) {
            std::cmp::Ordering::Less => T::one() / scale,
            std::cmp::Ordering::Equal => -m1 / scale,
            std::cmp::Ordering::Greater => T::zero(),
        }
    })
}

fn min_eigen<T: RealField + Copy>(eigen: &SymmetricEigen<T, nalgebra::Dyn>) -> (usize, T) {
    eigen
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .fold((0, T::max_value().unwrap_or(c(f64::MAX))), |best, (i, v)| if v < best.1 { (i, v) } else { best })
}

/// Decides whether `−J` is positive definite on the zero-sum subspace.
pub fn restricted_definite_on_r0<T: RealField + Copy>(j: &DMatrix<T>) -> Result<R0Analysis<T>> {
    check_symmetric(j)?;
    let n = j.nrows();
    let tol = c::<T>(1e-9) * (T::one() + inf_norm(j));
    let basis = zero_sum_basis::<T>(n);
    let restricted = basis.transpose() * (-j) * &basis;
    let eigen = SymmetricEigen::new(restricted.clone());
    let min_eigenvalue = if n > 1 { min_eigen(&eigen).1 } else { T::zero() };
    let verdict = if n == 1 {
        // the zero-sum subspace is {0}: definiteness holds vacuously
        Definiteness::Yes
    } else if min_eigenvalue > tol {
        Definiteness::Yes
    } else if min_eigenvalue < -tol {
        Definiteness::No
    } else {
        Definiteness::Boundary
    };
    Ok(R0Analysis {
        verdict,
        min_eigenvalue,
        tol,
        basis,
        restricted,
        eigen,
    })
}

/// Smallest eigenvalue of `α·eeᵀ − J`.
pub fn shifted_min_eigenvalue<T: RealField + Copy>(j: &DMatrix<T>, alpha: T) -> T {
    let shifted = j.map(|v| alpha - v);
    let eigen = SymmetricEigen::new(shifted);
    min_eigen(&eigen).1
}

#[derive(Clone, Debug, PartialEq)]
pub enum Verdict<T> {
    PsdForAlpha(T),
    NoAlphaExists,
    Inconclusive(String),
}

/// Outcome of the search for `α` making `α − J` positive semi-definite.
#[derive(Clone, Debug, PartialEq)]
pub struct PsdCertificate<T> {
    pub verdict: Verdict<T>,
    /// For `NoAlphaExists`: a zero-sum `y` with `yᵀ(−J)y ≤ 0`, or the rows of a
    /// principal sub-matrix that is never PSD.
    pub witness: Option<Vec<T>>,
    pub tol: T,
}

impl<T: Copy> PsdCertificate<T> {
    pub fn alpha(&self) -> Option<T> {
        match self.verdict {
            Verdict::PsdForAlpha(a) => Some(a),
            _ => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
struct CertificateRecord<T> {
    verdict: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    witness: Option<Vec<T>>,
    tol: T,
}

impl<T: Clone + Serialize> Serialize for PsdCertificate<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let (verdict, alpha, reason) = match &self.verdict {
            Verdict::PsdForAlpha(a) => ("psd_for_alpha", Some(a.clone()), None),
            Verdict::NoAlphaExists => ("no_alpha", None, None),
            Verdict::Inconclusive(r) => ("inconclusive", None, Some(r.clone())),
        };
        CertificateRecord {
            verdict: verdict.to_string(),
            alpha,
            reason,
            witness: self.witness.clone(),
            tol: self.tol.clone(),
        }
        .serialize(s)
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for PsdCertificate<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = CertificateRecord::<T>::deserialize(d)?;
        let verdict = match (rec.verdict.as_str(), rec.alpha) {
            ("psd_for_alpha", Some(a)) => Verdict::PsdForAlpha(a),
            ("no_alpha", None) => Verdict::NoAlphaExists,
            ("inconclusive", None) => Verdict::Inconclusive(rec.reason.unwrap_or_default()),
            (other, _) => return Err(D::Error::custom(format!("invalid certificate verdict {other:?}"))),
        };
        Ok(PsdCertificate {
            verdict,
            witness: rec.witness,
            tol: rec.tol,
        })
    }
}

/// Finds the smallest `α ≥ j_max` (up to the search width) for which
/// `α − J` is positive semi-definite, or shows that none exists.
///
/// When `−J` is only semi-definite on the zero-sum subspace, a PSD shift
/// exists exactly when `Bᵀ(−J)e` has no component in the kernel of
/// `Bᵀ(−J)B`; otherwise the kernel vector is returned as the witness.
pub fn min_alpha_psd<T: RealField + Copy>(j: &DMatrix<T>, j_max: T) -> Result<PsdCertificate<T>> {
    let r0 = restricted_definite_on_r0(j)?;
    let tol = r0.tol;
    let search = |lo: T, floor: T| -> Option<T> {
        let psd = |alpha: T| shifted_min_eigenvalue(j, alpha) >= floor;
        if psd(lo) {
            return Some(lo);
        }
        let scale = T::one() + inf_norm(j) + lo.abs();
        let ceiling = scale * c::<T>(2f64.powi(60));
        let mut hi = lo.abs().max(T::one()) * c::<T>(2.0);
        while !psd(hi) {
            if hi > ceiling {
                return None;
            }
            hi *= c::<T>(2.0);
        }
        let mut lo = lo;
        let width = c::<T>(1e-9) * (T::one() + j_max.abs());
        while hi - lo > width {
            let mid = (lo + hi) / c::<T>(2.0);
            if psd(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    };
    let witness_from = |v: DVector<T>| Some((&r0.basis * v).iter().copied().collect::<Vec<T>>());
    match r0.verdict {
        Definiteness::Yes => Ok(match search(j_max, T::zero()) {
            Some(alpha) => PsdCertificate {
                verdict: Verdict::PsdForAlpha(alpha.max(j_max)),
                witness: None,
                tol,
            },
            None => PsdCertificate {
                verdict: Verdict::Inconclusive("required shift exceeds the search ceiling".into()),
                witness: None,
                tol,
            },
        }),
        Definiteness::No => {
            let (idx, _) = min_eigen(&r0.eigen);
            Ok(PsdCertificate {
                verdict: Verdict::NoAlphaExists,
                witness: witness_from(r0.eigen.eigenvectors.column(idx).into_owned()),
                tol,
            })
        }
        Definiteness::Boundary => {
            let n = j.nrows();
            let u = DVector::from_element(n, T::one() / c::<T>(n as f64).sqrt());
            let b = r0.basis.transpose() * (-j) * u;
            let mut kernel_part = DVector::zeros(n - 1);
            for (i, &lambda) in r0.eigen.eigenvalues.iter().enumerate() {
                if lambda.abs() <= tol {
                    let v = r0.eigen.eigenvectors.column(i);
                    kernel_part += v * v.dot(&b);
                }
            }
            if kernel_part.norm() > tol {
                let norm = kernel_part.norm();
                return Ok(PsdCertificate {
                    verdict: Verdict::NoAlphaExists,
                    witness: witness_from(kernel_part / norm),
                    tol,
                });
            }
            Ok(match search(j_max, -tol) {
                Some(alpha) => PsdCertificate {
                    verdict: Verdict::PsdForAlpha(alpha.max(j_max)),
                    witness: None,
                    tol,
                },
                None => PsdCertificate {
                    verdict: Verdict::Inconclusive("semi-definite on the zero-sum subspace and no shift found".into()),
                    witness: None,
                    tol,
                },
            })
        }
    }
}

/// The `q × q` matrix of a pairwise edge table.
pub fn kernel_matrix(table: &EdgeTable) -> Result<DMatrix<f64>> {
    if table.arity != 2 {
        return Err(Error::ArityMismatch {
            expected: 2,
            actual: table.arity,
        });
    }
    Ok(DMatrix::from_fn(table.states, table.states, |a, b| table.get(&[a, b])))
}

/// Certificate for a model with a deterministic pairwise kernel.
///
/// Zero-one kernels are classified first; a kernel of partition form is
/// certified with `α = 1`, any other zero-one kernel has no valid shift. All
/// other kernels go through [`min_alpha_psd`] with `j_max` the largest entry.
pub fn certify_model(model: &ModelSpec) -> Result<PsdCertificate<f64>> {
    let table = match model.edge_pot.law.support() {
        Some([only]) if model.arity() == 2 => &only.value,
        _ => {
            return Ok(PsdCertificate {
                verdict: Verdict::Inconclusive(
                    "random or higher-order kernel: use the expected tensor falsifier".into(),
                ),
                witness: None,
                tol: 0.0,
            })
        }
    };
    let j = kernel_matrix(table)?;
    let j_max = table.max();
    if j.iter().all(|&v| v == 0.0 || v == 1.0) {
        let tol = 1e-9 * (1.0 + inf_norm(&j));
        match partition_kernel_classify(&j)? {
            KernelForm::PartitionForm { .. } if shifted_min_eigenvalue(&j, 1.0) >= -tol => {
                return Ok(PsdCertificate {
                    verdict: Verdict::PsdForAlpha(1.0),
                    witness: None,
                    tol,
                })
            }
            KernelForm::NotPartitionForm(w) => {
                return Ok(PsdCertificate {
                    verdict: Verdict::NoAlphaExists,
                    witness: Some(w.points().iter().map(|&p| p as f64).collect()),
                    tol,
                })
            }
            KernelForm::PartitionForm { .. } => {}
        }
    }
    min_alpha_psd(&j, j_max)
}

/// Violation of the equivalence-relation structure of `{J = 0}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelWitness {
    /// `J(x, x) = 1` while `J(x, partner) = 0`.
    Reflexivity { x: usize, partner: usize },
    /// `J(x1, x2) = J(x2, x3) = 0` but `J(x1, x3) = 1`.
    Transitivity { x1: usize, x2: usize, x3: usize },
}

impl KernelWitness {
    pub fn points(&self) -> Vec<usize> {
        match *self {
            KernelWitness::Reflexivity { x, partner } => vec![x, partner],
            KernelWitness::Transitivity { x1, x2, x3 } => vec![x1, x2, x3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum KernelForm {
    /// Classes of points related by `J = 0`; points with no zero are omitted.
    PartitionForm { classes: Vec<Vec<usize>> },
    NotPartitionForm(KernelWitness),
}

/// Decides whether `J(x, y) = 0` is an equivalence relation on the points
/// that have some zero.
pub fn partition_kernel_classify(j: &DMatrix<f64>) -> Result<KernelForm> {
    if !j.is_square() {
        return Err(Error::ShapeMismatch("kernel matrix must be square".into()));
    }
    let n = j.nrows();
    for a in 0..n {
        for b in 0..n {
            let v = j[(a, b)];
            if v != 0.0 && v != 1.0 {
                return Err(Error::NonBinaryKernel(a, b));
            }
            if v != j[(b, a)] {
                return Err(Error::Asymmetric(1.0));
            }
        }
    }
    let zero = |a: usize, b: usize| j[(a, b)] == 0.0;
    for x in 0..n {
        if !zero(x, x) {
            if let Some(partner) = (0..n).find(|&p| zero(x, p)) {
                return Ok(KernelForm::NotPartitionForm(KernelWitness::Reflexivity { x, partner }));
            }
        }
    }
    for x2 in 0..n {
        for x1 in (0..n).filter(|&a| a != x2 && zero(a, x2)) {
            if let Some(x3) = (0..n).find(|&b| b != x2 && zero(x2, b) && !zero(x1, b)) {
                let (x1, x3) = (x1.min(x3), x1.max(x3));
                return Ok(KernelForm::NotPartitionForm(KernelWitness::Transitivity { x1, x2, x3 }));
            }
        }
    }
    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut seen = vec![false; n];
    for x in 0..n {
        if seen[x] || !zero(x, x) {
            continue;
        }
        let class: Vec<usize> = (0..n).filter(|&y| zero(x, y)).collect();
        class.iter().for_each(|&y| seen[y] = true);
        classes.push(class);
    }
    Ok(KernelForm::PartitionForm { classes })
}

/// How the expectation over `ν_J` is taken.
#[derive(Clone, Copy, Debug)]
pub enum Expectation {
    Exact,
    MonteCarlo { samples: usize, seed: SeedStream },
}

/// `E ⊗_{l ≤ r} (α − J(x^l_{i_1}, …, x^l_{i_K}))` with one draw of `J`
/// shared by all factors. Each row of `x_rows` lists `n` spin states.
pub fn expected_alpha_minus_j_tensor(
    model: &ModelSpec,
    alpha: f64,
    x_rows: &[Vec<usize>],
    mode: &Expectation,
) -> Result<KArray<f64>> {
    let n = x_rows.first().map_or(0, Vec::len);
    if n == 0 || x_rows.iter().any(|row| row.len() != n) {
        return Err(Error::ShapeMismatch("x_rows must be non-empty rows of equal length".into()));
    }
    if x_rows.iter().flatten().any(|&s| s >= model.states()) {
        return Err(Error::param("x_rows", "spin state out of range"));
    }
    let k = model.arity();
    let r = x_rows.len();
    let dim = (n as u128).checked_pow(r as u32).unwrap_or(u128::MAX);
    if dim > MAX_ENTRIES as u128 {
        return Err(Error::ArrayTooLarge {
            entries: dim,
            cap: MAX_ENTRIES,
        });
    }
    checked_entries(dim as usize, k)?;
    let product = |table: &EdgeTable| -> Result<KArray<f64>> {
        let mut tuple = vec![0usize; k];
        let factors = x_rows
            .iter()
            .map(|row| {
                KArray::from_fn(n, k, |idx| {
                    for (slot, &i) in tuple.iter_mut().zip(idx) {
                        *slot = row[i];
                    }
                    alpha - table.get(&tuple)
                })
            })
            .collect::<Result<Vec<_>>>()?;
        tensor_product(&factors)
    };
    let mut acc = KArray::zeros(dim as usize, k)?;
    match *mode {
        Expectation::Exact => {
            let support = model.edge_pot.law.support().ok_or(Error::UnsupportedExact)?;
            for w in support {
                acc.scale_add(&w.prob, &product(&w.value)?);
            }
        }
        Expectation::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::param("samples", "must be positive"));
            }
            let mut rng = seed.rng();
            let weight = 1.0 / samples as f64;
            for _ in 0..samples {
                let table = model.edge_pot.law.sample(&mut rng);
                acc.scale_add(&weight, &product(&table)?);
            }
        }
    }
    Ok(acc)
}

/// Agreement set `S̄`: indices `(j_1, …, j_r)` of `[n]^r`, flattened with the
/// first replica most significant, at which `x^1_{j_1} = ⋯ = x^r_{j_r}`.
pub fn agreement_set(x_rows: &[Vec<usize>]) -> Vec<bool> {
    let n = x_rows.first().map_or(0, Vec::len);
    let r = x_rows.len();
    (0..n.pow(r as u32))
        .map(|flat| {
            let mut rest = flat;
            let mut values = Vec::with_capacity(r);
            for row in x_rows.iter().rev() {
                values.push(row[rest % n]);
                rest /= n;
            }
            values.windows(2).all(|w| w[0] == w[1])
        })
        .collect()
}

/// Result of comparing the K-SAT expected tensor with its rank-one closed form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsatReport {
    /// `2^{−K} (1 − e^{−β})^r`.
    pub constant: f64,
    pub agreement_size: usize,
    pub max_entry_error: f64,
    pub max_form_error: f64,
    pub passed: bool,
}

/// Checks that the K-SAT expected tensor with `α = 1` equals
/// `2^{−K}(1 − e^{−β})^r · 1[every coordinate in S̄]` entrywise, and that its
/// form equals `2^{−K}(1 − e^{−β})^r (Σ_{S̄} y)^K` at random positive points.
pub fn ksat_rank1_verify(beta: f64, k: usize, r: usize, x_rows: &[Vec<usize>], seed: SeedStream) -> Result<KsatReport> {
    if x_rows.len() != r {
        return Err(Error::ShapeMismatch(format!("{} rows for r = {r}", x_rows.len())));
    }
    if x_rows.iter().flatten().any(|&s| s > 1) {
        return Err(Error::param("x_rows", "spins must be binary"));
    }
    let model = build_model("ksat", &params([("k", k as f64), ("beta", beta)]))?;
    let tensor = expected_alpha_minus_j_tensor(&model, 1.0, x_rows, &Expectation::Exact)?;
    let constant = 0.5f64.powi(k as i32) * (1.0 - (-beta).exp()).powi(r as i32);
    let agree = agreement_set(x_rows);
    let dim = agree.len();
    let mut max_entry_error = 0.0f64;
    let mut idx = vec![0usize; k];
    for value in tensor.entries() {
        let expected = if idx.iter().all(|&i| agree[i]) { constant } else { 0.0 };
        max_entry_error = max_entry_error.max((value - expected).abs());
        for slot in idx.iter_mut().rev() {
            *slot += 1;
            if *slot < dim {
                break;
            }
            *slot = 0;
        }
    }
    let mut rng = seed.rng();
    let mut max_form_error = 0.0f64;
    for _ in 0..32 {
        let y: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() + 1e-3).collect();
        let form = multilinear_form(&tensor, &y)?;
        let mass: f64 = y.iter().zip(&agree).filter(|(_, &a)| a).map(|(v, _)| v).sum();
        let closed = constant * mass.powi(k as i32);
        max_form_error = max_form_error.max((form - closed).abs() / (1.0 + closed.abs()));
    }
    Ok(KsatReport {
        constant,
        agreement_size: agree.iter().filter(|&&a| a).count(),
        max_entry_error,
        max_form_error,
        passed: max_entry_error <= 1e-12 && max_form_error <= 1e-12,
    })
}

/// `f_1(ι) = J_max − cosh(βι)` in `α − J = f_1(ι) − f_2(ι) ∏ x_i`.
pub fn viana_bray_f1(j_max: f64, beta: f64, iota: f64) -> f64 {
    j_max - (beta * iota).cosh()
}

/// `f_2(ι) = sinh(βι)`.
pub fn viana_bray_f2(beta: f64, iota: f64) -> f64 {
    (beta * iota).sinh()
}

/// `E f_2(I)^r` summed over the support of a finite coupling law.
pub fn f2_moment_exact(law: &CouplingLaw, beta: f64, r: u32) -> f64 {
    law.0
        .iter()
        .map(|w| w.prob * viana_bray_f2(beta, w.value).powi(r as i32))
        .sum()
}

/// Monte Carlo estimate of `E f_2(I)^r`, returned as (mean, standard error).
pub fn f2_moment_mc(law: &CouplingLaw, beta: f64, r: u32, samples: usize, seed: SeedStream) -> Result<(f64, f64)> {
    if samples < 2 {
        return Err(Error::param("samples", "need at least 2"));
    }
    let mut rng = seed.rng();
    let draws: Vec<f64> = (0..samples)
        .map(|_| viana_bray_f2(beta, law.sample(&mut rng)).powi(r as i32))
        .collect();
    let n = samples as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Which nodes an interpolation vector charges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "block", rename_all = "snake_case")]
pub enum Block {
    Global,
    /// Block `j ∈ {1, 2}`: nodes `0..n1` for `j = 1`, `n1..n` for `j = 2`.
    Part { j: usize, n1: usize },
}

/// `e^{N,r}` (mass `1/N` on every diagonal index `(i, …, i)`) or
/// `e^{N,r,j}` (mass `1/N_j` on the diagonal indices of block `j`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolationVector<T> {
    pub n: usize,
    pub r: usize,
    pub block: Block,
    pub entries: Vec<T>,
}

impl<T: Clone + Num + ToPrimitive> InterpolationVector<T> {
    pub fn to_f64(&self) -> Vec<f64> {
        self.entries.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect()
    }
}

/// Builds `e^{N,r}` or `e^{N,r,j}` with exact rational entries.
pub fn interpolation_vector(n: usize, r: usize, block: Block) -> Result<InterpolationVector<Rational64>> {
    if n == 0 || r == 0 {
        return Err(Error::InvalidInterpolation("n and r must be positive".into()));
    }
    let dim = checked_entries(n, r)?;
    let nodes = match block {
        Block::Global => 0..n,
        Block::Part { j: 1, n1 } if n1 >= 1 && n1 < n => 0..n1,
        Block::Part { j: 2, n1 } if n1 >= 1 && n1 < n => n1..n,
        Block::Part { .. } => return Err(Error::InvalidInterpolation(format!("{block:?} does not split {n} nodes"))),
    };
    let mass = Rational64::new(1, nodes.len() as i64);
    let step: usize = (0..r).map(|p| n.pow(p as u32)).sum();
    let mut entries = vec![Rational64::from_integer(0); dim];
    for i in nodes {
        entries[i * step] = mass;
    }
    Ok(InterpolationVector { n, r, block, entries })
}

/// Checks `e^{N,r} = Σ_j (N_j/N) e^{N,r,j}` entrywise in exact arithmetic.
pub fn interpolation_decomposition_holds(n: usize, n1: usize, r: usize) -> Result<bool> {
    let global = interpolation_vector(n, r, Block::Global)?;
    let first = interpolation_vector(n, r, Block::Part { j: 1, n1 })?;
    let second = interpolation_vector(n, r, Block::Part { j: 2, n1 })?;
    let w1 = Rational64::new(n1 as i64, n as i64);
    let w2 = Rational64::new((n - n1) as i64, n as i64);
    Ok(global
        .entries
        .iter()
        .zip(first.entries.iter().zip(&second.entries))
        .all(|(g, (a, b))| *g == w1 * a + w2 * b))
}
