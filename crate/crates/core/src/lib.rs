//! Numerical toolkit for chaos in mixed even-spin glasses.
//!
//! The crate evaluates the Parisi functional of a mixed even-spin model,
//! the coupled two-system interpolation bounds built on top of it, the
//! cross-overlap fixed point `u_f`, and exact-enumeration Monte Carlo for
//! small systems that serves as ground truth for the bounds.
//!
//! Modules are layered bottom-up:
//!
//! * [`mixture`]: mixture functions `ξ`, `θ` and their cross versions.
//! * [`numerics`]: Gaussian quadrature and bracketing root finding.
//! * [`parisi`]: the functional, its `Φ` profiles and a minimizer.
//! * [`chaos`]: replica-symmetric diagnostics and the coupled map `φ`.
//! * [`guerra`]: coupled RSB bounds.
//! * [`sim`]: disorder sampling and exact enumeration.

pub mod chaos;
pub mod guerra;
pub mod mixture;
pub mod numerics;
pub mod parisi;
pub mod sim;

mod error;

pub use error::{Error, Result};
