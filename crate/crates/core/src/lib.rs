//! Simulation, coupling and convergence-rate bounds for an infinite-server
//! queue whose arrival and service intensities depend on the full state
//! `(n, x0; x1..xn)`.
//!
//! * [`hazard`]: intensity/distribution conversions, competing clocks,
//!   common parts and maximal-coupling draws.
//! * [`model`]: states, intensity specifications, built-in families.
//! * [`simulator`]: trajectories, cycles, ensembles.
//! * [`analytics`]: the M|G|inf comparison system with Pareto service.
//! * [`coupling`]: domination pairing and the successful coupling.
//! * [`bounds`]: the constant chain up to the convergence-rate bound.

// NaN-rejecting checks are written as `!(x >= a)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod bounds;
pub mod coupling;
pub mod error;
pub mod hazard;
pub mod model;
pub mod quadrature;
pub mod rng;
pub mod simulator;
pub mod stats;

pub use error::{Error, Result};
pub use model::{Envelope, Family, FullState, Intensity, IntensitySpec};
pub use rng::Streams;
