//! Numerical laboratory for slant and semi-slant submanifolds of flat
//! hyperkähler spaces `R^{4m}`.
//!
//! The crate represents explicitly parametrized submanifolds, computes their
//! pointwise structure tensors and extrinsic geometry, and verifies the
//! identities, criteria, and inequalities that govern pointwise (almost)
//! h-slant and h-semi-slant immersions:
//!
//! - [`ambient`] — quaternionic Hermitian triples `(I, J, K)` on `R^{4m}`,
//!   both the standard parallel one and pointwise-rotated variants.
//! - [`exprmap`] — a small expression language for immersion components with
//!   exact first and second derivatives via second-order forward jets.
//! - [`geometry`] — orthonormal frames, projectors, second fundamental form,
//!   shape operators, mean curvature.
//! - [`slant`] — the `phi/omega/B/C` decomposition tensors, slant angles,
//!   distribution splittings, and pointwise classification.
//! - [`calculus`] — tangent fields, brackets, covariant derivatives of the
//!   structure tensors, and the differential identity checks (integrability,
//!   totally geodesic foliations, umbilic analysis, fundamental 2-forms).
//! - [`warped`] — warped-product charts, the warp identities, and the second
//!   fundamental form inequality with its frame-level expansion oracle.
//! - [`catalog`] — the built-in corpus of test charts.
//! - [`report`] — structured pass/fail records shared by all checks.

pub mod ambient;
pub mod calculus;
pub mod catalog;
pub mod error;
pub mod exprmap;
pub mod geometry;
pub mod report;
pub mod slant;
pub mod warped;

pub use error::{Error, Result};

/// Dense dynamic vector used throughout the crate.
pub type DVec = nalgebra::DVector<f64>;
/// Dense dynamic matrix used throughout the crate.
pub type DMat = nalgebra::DMatrix<f64>;
