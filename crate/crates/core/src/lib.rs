//! Forward and frozen-Newton inverse solver for the one-dimensional
//! Westervelt equation with fractional (Caputo–Wismer–Kelvin) damping.
//!
//! The forward model is
//!
//! ```text
//! (ς(x) u - κ(x) u²)_tt - u_xx + b (-∂_xx) ∂_t^α u = r     on (0,1) × (0,T)
//! u(0,t) = 0,  u_x(1,t) = 0,  u = u_t = 0 at t = 0
//! ```
//!
//! and the inverse problem recovers the nonlinearity coefficient `κ` and the
//! squared slowness `ς` from time traces of `u` at a few points.

pub mod error;
pub mod experiment;
pub mod forward;
pub mod fracquad;
pub mod jacobian;
pub mod mesh;
pub mod newton;
pub mod spectral;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use forward::{observe, run, Excitation, ModelParams, StateHistory, Trace};
pub use fracquad::{FracWeights, TimeGrid};
pub use mesh::{CoeffField, Mesh1D};
