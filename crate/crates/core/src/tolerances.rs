//! Shared numerical tolerances.
//!
//! Three regimes appear throughout the crate and its test suites:
//!
//! * identities that hold *exactly* on the discrete objects (adjoint pairs,
//!   lattice-aligned translations, factorization inverses) are checked at
//!   accumulated-roundoff level;
//! * identities that hold only in the continuum are checked on a coarse
//!   base grid at percent level and must shrink under grid refinement;
//! * closed forms with their own (continuum) discretization error sit in
//!   between.
//!
//! Keeping the numbers here, with names, stops magic constants from
//! drifting apart between unit, integration and acceptance tests.

/// Residual bound for identities exact up to floating-point accumulation.
pub const SHIFT_EXACT: f64 = 1e-10;

/// Residual bound for continuum identities sampled on a coarse base grid.
pub const COARSE_RELATIVE: f64 = 5e-2;

/// Required residual contraction per grid-doubling for continuum identities
/// (a ratio above this means the discretization is not converging).
pub const REFINEMENT_DECAY: f64 = 0.7;

/// Residuals that sit below this are treated as converged noise; decay
/// ratios are not meaningful past that floor.
pub const NOISE_FLOOR: f64 = 1e-10;

/// Agreement of a discrete quadrature with an analytically known answer.
pub const ORACLE_CLOSED_FORM: f64 = 1e-6;

/// Agreement of two independent implementations of the same quadrature.
pub const PIPELINE_VS_ORACLE: f64 = 1e-8;
