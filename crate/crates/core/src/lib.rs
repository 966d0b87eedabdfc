//! Simulation and global-stability analysis of the Rate Control Protocol fluid model.
//!
//! * [`model`]: link and route types, the RCP right-hand side, the generalized
//!   single-bottleneck system.
//! * [`equilibrium`]: equilibrium rates and the stability constants `w`, `f⁽¹⁾`, `f⁽²⁾`.
//! * [`stability`]: global, closed-form and local stability conditions.
//! * [`sim`]: fixed-step delay integration and trajectory classification.
//! * [`harness`]: scenario files, stability reports, parameter sweeps and CSV output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod equilibrium;
pub mod error;
pub mod harness;
pub mod model;
pub mod sim;
pub mod stability;

pub use error::{Error, Result};
