//! Voltage-aware scheduling of residential EV charging.
//!
//! Residences choose charging intervals against a time-of-use tariff while a
//! network operator keeps node voltages inside limits under the linearized
//! DistFlow model. The two sides coordinate through a consensus ADMM loop
//! that exchanges only power trajectories.
//!
//! - [`network`]: radial feeder, path-resistance matrix, voltages and flows
//! - [`tariff`]: tariffs, base loads and the EV charging model
//! - [`residence`]: exact residence subproblems and a brute-force oracle
//! - [`operator`]: the operator's voltage-constrained QP
//! - [`admm`]: the coordination loop and a centralized reference solver
//! - [`scenario`], [`generator`], [`report`], [`config`]: experiment plumbing

pub mod admm;
pub mod config;
pub mod error;
pub mod generator;
pub mod network;
pub mod operator;
pub mod report;
pub mod residence;
pub mod scenario;
pub mod tariff;
mod table;

pub use error::{Result, RevsError};
