//! Geodesics of singular Randers-Kropina metrics.
//!
//! A Randers-Kropina metric on a manifold `S` is built from a Riemannian metric
//! `g0`, a one-form `omega` and a function `lambda >= 0`:
//!
//! ```text
//! F(v) = g0(v,v) / (-omega(v) + sqrt(lambda g0(v,v) + omega(v)^2))
//! ```
//!
//! Where `lambda = 0` the metric is of Kropina type and is only defined on the
//! open half space `omega(v) < 0`. The same data describe time-optimal navigation
//! under a wind `W` with `g0(W,W) <= 1` (`omega = -g0(., W)`, `lambda = 1 - g0(W,W)`).
//!
//! Geodesics are computed through the regularized Randers metrics `F_eps`, whose unit
//! geodesics are the spatial projections of future-pointing lightlike geodesics of
//! the stationary metric
//!
//! ```text
//! g_eps = g0 + omega (x) dt + dt (x) omega - (lambda + eps) dt^2
//! ```
//!
//! on `S x R`. The lifted geodesic flow depends smoothly on `eps` down to `eps = 0`,
//! which is what the shooting and continuation code relies on.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, configuration and the
//! command line live in the `kropina` crate.
#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bvp;
pub mod control;
pub mod error;
pub mod expr;
pub mod finsler;
pub mod geodesics;
pub mod linalg;
pub mod manifold;
pub mod ode;
pub mod path;
pub mod spacetime;

pub use error::{Error, Result};
pub use manifold::{Catalog, ChartManifold, DomainBounds, Topology};
pub use path::{GeodesicPath, Parametrization, PathSample};

/// Largest supported chart dimension of `S`.
pub const MAX_DIM: usize = 4;

/// Largest dimension of the lifted manifold `S x R`.
pub const MAX_LIFT: usize = MAX_DIM + 1;
