//! Detection of switching actions in distribution feeders from voltage
//! phasor measurements.
//!
//! A switching action changes the slack-grounded pseudo-inverse of the bus
//! admittance matrix by a rank-one term, so the jump it causes in measured
//! voltages points along a direction that depends only on the breaker and
//! the state of the other breakers. [`signature`] precomputes those
//! directions, [`detection`] matches trend vectors against them online,
//! [`placement`] certifies and grows sensor placements and [`sim`] runs
//! seeded Monte Carlo experiments on top of a nonlinear power flow.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detection;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod network;
pub mod parallel;
pub mod placement;
pub mod signature;
pub mod sim;
pub mod stream;

pub use error::{Error, Result};
pub use grid::{Grid, SwitchStatus};
pub use parallel::Execution;
pub use signature::{Placement, SignatureKey, SignatureLibrary};
