//! Gibbs models on sparse random K-uniform directed hypergraphs.
//!
//! The crate is organised around five pieces:
//!
//! * [`model`]: spin domains, node/edge potential laws, the model zoo and
//!   the soft-state parameters of each model.
//! * [`graph`]: the sparse Erdős–Rényi ensemble `G(N,c)`, the interpolated
//!   ensemble joining it to a disjoint union of two blocks, degree statistics.
//! * [`partition`]: homomorphism weights and log-partition functions (exact
//!   enumeration and importance sampling) plus the deterministic log-Z bounds.
//! * [`convexity`]: order-K arrays, tensor products, multilinear forms, PSD
//!   certification of `α − J` and the closed-form K-SAT / Viana-Bray checks.
//! * [`harness`]: seeded, replayable experiments and their JSON-lines records.
//!
//! Numeric kernels that do not depend on a model (arrays, forms, log-sum-exp,
//! PSD certificates) are generic over the scalar type; the aliases below pin
//! the common instantiations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convexity;
pub mod error;
pub mod graph;
pub mod harness;
pub mod model;
pub mod partition;
pub mod scalar;
pub mod seed;

pub use error::{Error, Result};
pub use scalar::{ExtReal, Real};
pub use seed::SeedStream;

/// Log-partition value in double precision.
pub type LogZ = ExtReal<f64>;
/// Order-K array of doubles.
pub type KArrayF64 = convexity::KArray<f64>;
/// Order-K array of singles.
pub type KArrayF32 = convexity::KArray<f32>;
/// Order-K array with exact rational entries.
pub type KArrayExact = convexity::KArray<num_rational::BigRational>;
/// Interpolation vector with exact rational entries.
pub type ExactInterpolationVector = convexity::InterpolationVector<num_rational::Rational64>;
/// Interpolation vector of doubles.
pub type InterpolationVectorF64 = convexity::InterpolationVector<f64>;
/// PSD certificate for a double-precision kernel.
pub type PsdCertificateF64 = convexity::PsdCertificate<f64>;
