//! Deterministic teleoperation workbench built around the fractal impedance
//! controller (FIC).
//!
//! The crate is split along the signal path:
//!
//! * [`fic`] - per-axis non-linear spring and divergence/convergence attractor.
//! * [`planner`] - harmonic trajectory generator producing the autonomous setpoint.
//! * [`teleop`] - master force law, teleoperation setpoint modes and the replica torque law.
//! * [`plant`] - simulated point-mass and two-link plants with penalty contact and a breakable bond.
//! * [`channel`] - delayed, lossy, disconnectable link between master and replica.
//! * [`scenario`] - closed-loop runs, logs, metrics and reference generators.
//! * [`api`] - request and response bodies of the HTTP service.
//! * [`protocol`] - newline-delimited JSON messages used by live sessions.

pub mod api;
pub mod channel;
pub mod error;
pub mod fic;
pub mod planner;
pub mod plant;
pub mod protocol;
pub mod scenario;
pub mod teleop;

pub use error::{Error, Result};

/// Task-space vector (m, N, m/s depending on context).
pub type Vec3 = nalgebra::Vector3<f64>;
