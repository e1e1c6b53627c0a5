//! Risk-adaptive quadrotor local planning.
//!
//! The planner is organised in three layers that share one integrator
//! representation:
//!
//! 1. [`global_path`] runs grid A* on the occupancy map and resamples the
//!    result into a uniformly spaced guiding path.
//! 2. [`low_mpc`] optimises the guiding path with a first-order model into a
//!    smooth, obstacle-free [`low_mpc::ReferenceTrajectory`].
//! 3. [`high_mpcc`] runs model predictive contouring control with a
//!    third-order model over `{x, y, z, θ}`, trading tracking error against
//!    progress and slowing the vehicle according to the risk weight from
//!    [`easa`].
//!
//! [`sim`] closes the loop with an ideal triple-integrator vehicle, map
//! generators and metric extraction. Episode batches run on rayon when the
//! `parallel` feature is enabled (the default) and sequentially otherwise.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod diagnostics;
pub mod easa;
pub mod error;
pub mod global_path;
pub mod grid_esdf;
pub mod high_mpcc;
pub mod linear_system;
pub mod low_mpc;
pub mod optimizer;
pub mod parallel;
pub mod sim;

pub use config::PlannerConfig;
pub use error::{PlannerError, Result};

/// Position, velocity and gradient vectors in world coordinates.
pub type Vec3 = nalgebra::Vector3<f64>;
