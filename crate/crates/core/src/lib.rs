//! Relative pose-velocity estimation between two IMU-equipped rigid bodies.
//!
//! * [`lie`]: SO(3) / SE₂(3) primitives.
//! * [`world`]: ground-truth kinematics, synthetic IMU and camera data, the
//!   ship-landing scenario.
//! * [`relative`]: relative body-target state and its dynamics.
//! * [`riccati`]: Riccati observer on ℝ¹⁵ for position or bearing outputs.
//! * [`attitude`]: complementary filter producing SO(3) attitude estimates.
//! * [`observability`]: transition matrices, Gramians, excitation tests and
//!   Schur-complement certificates.
//! * [`harness`]: scenario runner, sweeps and CSV/JSON export.

// `!(x > 0.0)` guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attitude;
pub mod error;
pub mod harness;
pub mod lie;
pub mod observability;
pub mod parallel;
pub mod relative;
pub mod riccati;
pub mod tolerances;
pub mod world;

pub use error::{Error, Result};
