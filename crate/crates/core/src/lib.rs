//! Numerical harmonic analysis on a family of exponential solvable Lie groups.
//!
//! The crate models four concrete group families in global charts — `euclidean(n)`,
//! the affine `ax+b` group (positive-dilation chart), its direct product with a
//! line, and the three-dimensional Bianchi groups IV-VII realized as `R^2 x| R` —
//! together with the operator-valued Fourier machinery each one carries:
//!
//! * left Haar quadrature grids, convolution and `p`-involutions ([`group`]);
//! * concrete irreducible representations, Duflo-Moore weights and the
//!   Plancherel transform with per-layer calibration ([`dual`]);
//! * `tau`-quantization `Op^tau`, its inverse Wigner transform, rank-one
//!   Wigner functions and integral-kernel realizations ([`quant`]);
//! * translation covariance of the calculus ([`covariance`]);
//! * an independently coded scalar pseudodifferential oracle for the abelian
//!   case ([`oracle`]).
//!
//! Everything is deterministic: grids are plain data, all transforms are
//! explicit quadrature sums, and no global state is involved.

pub mod cmatrix;
pub mod covariance;
pub mod dual;
pub mod error;
pub mod group;
pub mod oracle;
pub mod quant;
pub mod setup;
pub mod tolerances;

pub use cmatrix::CMatrix;
pub use error::{Error, Result};
pub use group::{AxisScale, AxisSpec, BianchiFamily, GroupGrid, GroupKind, GroupSpec, SampledFunction};

/// Complex scalar used throughout the crate.
pub type C64 = num_complex::Complex64;
