//! Harmonic trajectory generator for the autonomous setpoint `x''_d`.
//!
//! Each axis is driven by the same divergence/convergence attractor as the
//! FIC, applied to the planner's own tracking error `x_t - x''_d`: a
//! saturating spring while the error grows, a straight line through the
//! latched peak while it shrinks. The acceleration cap comes from the
//! distance and desired speed given when a target is commanded.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::fic::{FicState, Phase, Transition};
use crate::Vec3;

/// Ratio between peak and desired tangential speed.
pub const PEAK_SPEED_FACTOR: f64 = 1.595;

/// Largest integration step accepted by [`PlannerState::step`] (s).
pub const MAX_STEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlannerParamsRepr", into = "PlannerParamsRepr")]
pub struct PlannerParams {
    omega_n: f64,
    v_d: f64,
}

#[derive(Serialize, Deserialize)]
struct PlannerParamsRepr {
    omega_n: f64,
    v_d: f64,
}

impl TryFrom<PlannerParamsRepr> for PlannerParams {
    type Error = Error;

    fn try_from(s: PlannerParamsRepr) -> Result<Self> {
        PlannerParams::new(s.omega_n, s.v_d)
    }
}

impl From<PlannerParams> for PlannerParamsRepr {
    fn from(p: PlannerParams) -> Self {
        PlannerParamsRepr {
            omega_n: p.omega_n,
            v_d: p.v_d,
        }
    }
}

impl PlannerParams {
    pub fn new(omega_n: f64, v_d: f64) -> Result<Self> {
        if !(omega_n.is_finite() && omega_n > 0.0) {
            return Err(Error::InvalidParams(format!(
                "omega_n must be > 0, got {omega_n}"
            )));
        }
        if !(v_d.is_finite() && v_d > 0.0) {
            return Err(Error::InvalidParams(format!("v_d must be > 0, got {v_d}")));
        }
        Ok(PlannerParams { omega_n, v_d })
    }

    pub fn omega_n(&self) -> f64 {
        self.omega_n
    }

    pub fn v_d(&self) -> f64 {
        self.v_d
    }

    /// Viscosity, fixed at 1 % of the natural frequency.
    pub fn mu(&self) -> f64 {
        0.01 * self.omega_n
    }

    pub fn v_p(&self) -> f64 {
        PEAK_SPEED_FACTOR
    }
}

impl Default for PlannerParams {
    fn default() -> Self {
        PlannerParams {
            omega_n: 4.0,
            v_d: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct AxisPlan {
    tracker: FicState,
    /// Signed planner error latched at the last switch to convergence.
    x_t0: f64,
    /// Divergence acceleration at `x_t0`, signed towards the target.
    a_switch: f64,
    target_at_switch: f64,
}

/// Accelerations produced by one [`PlannerState::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerStep {
    /// Total acceleration applied this tick, viscosity included.
    pub accel: Vec3,
    /// Attractor term before viscosity. In divergence its magnitude never
    /// exceeds the acceleration cap.
    pub drive: Vec3,
    pub phases: [Phase; 3],
}

#[derive(Debug, Clone)]
pub struct PlannerState {
    x_dd: Vec3,
    v_dd: Vec3,
    axes: [AxisPlan; 3],
    d_vec: Vec3,
    a_max: Vec3,
    v_max: f64,
    v_d: f64,
}

impl PlannerState {
    /// Planner at rest at `x0`, with no target commanded yet (zero
    /// acceleration cap).
    pub fn new(x0: Vec3, params: &PlannerParams) -> Self {
        PlannerState {
            x_dd: x0,
            v_dd: Vec3::zeros(),
            axes: Default::default(),
            d_vec: Vec3::zeros(),
            a_max: Vec3::zeros(),
            v_max: 0.0,
            v_d: params.v_d(),
        }
    }

    pub fn setpoint(&self) -> Vec3 {
        self.x_dd
    }

    pub fn velocity(&self) -> Vec3 {
        self.v_dd
    }

    pub fn d_vec(&self) -> Vec3 {
        self.d_vec
    }

    pub fn a_max(&self) -> Vec3 {
        self.a_max
    }

    /// Magnitude of the acceleration cap, `2 v_max^2 / |d|`.
    pub fn a_cap(&self) -> f64 {
        self.a_max.norm()
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn v_d(&self) -> f64 {
        self.v_d
    }

    pub fn phases(&self) -> [Phase; 3] {
        self.axes.map(|a| a.tracker.phase())
    }

    /// Commands a new target. Derives the speed and acceleration limits from
    /// the distance to it and restarts every axis in divergence.
    pub fn set_target(&mut self, params: &PlannerParams, x_t: Vec3, v_d: f64) -> Result<()> {
        for i in 0..3 {
            ensure_finite(x_t[i], "planner target")?;
        }
        if !(v_d.is_finite() && v_d > 0.0) {
            return Err(Error::InvalidParams(format!("v_d must be > 0, got {v_d}")));
        }
        let d = x_t - self.x_dd;
        let dist = d.norm();
        self.d_vec = d;
        self.v_d = v_d;
        if dist == 0.0 {
            self.v_max = 0.0;
            self.a_max = Vec3::zeros();
        } else {
            self.v_max = params.v_p() * v_d.min(params.omega_n() * dist);
            let ratio = self.v_max / dist;
            self.a_max = 2.0 * d * (ratio * ratio);
        }
        self.axes = Default::default();
        Ok(())
    }

    /// Advances the setpoint by `dt` towards the (possibly moving) target
    /// `x_t`.
    pub fn step(&mut self, params: &PlannerParams, x_t: Vec3, dt: f64) -> Result<PlannerStep> {
        if !(dt > 0.0 && dt <= MAX_STEP) {
            return Err(Error::InvalidParams(format!(
                "planner step must be in (0, {MAX_STEP}] s, got {dt}"
            )));
        }
        for i in 0..3 {
            ensure_finite(x_t[i], "planner target")?;
        }
        let w2 = params.omega_n() * params.omega_n();
        let mu = params.mu();
        let cap = self.a_cap();
        let mut accel = Vec3::zeros();
        let mut drive = Vec3::zeros();

        for i in 0..3 {
            let axis = &mut self.axes[i];
            let err = x_t[i] - self.x_dd[i];
            if axis.tracker.update(err)? == Transition::ToConvergence {
                let x0 = axis.tracker.x_max();
                axis.x_t0 = x0;
                axis.a_switch = (w2 * x0.abs()).min(cap).copysign(x0);
                axis.target_at_switch = x_t[i];
            }
            let spring = match axis.tracker.phase() {
                Phase::Convergence if axis.x_t0 != 0.0 => {
                    let rel = axis.target_at_switch - self.x_dd[i];
                    2.0 * axis.a_switch / axis.x_t0 * (rel - 0.5 * axis.x_t0)
                }
                _ => (w2 * err.abs()).min(cap).copysign(err),
            };
            drive[i] = spring;
            accel[i] = spring - mu * self.v_dd[i];
        }

        // semi-implicit Euler, speed clamped per axis before the position update
        for i in 0..3 {
            let v = (self.v_dd[i] + accel[i] * dt).clamp(-self.v_d, self.v_d);
            self.v_dd[i] = v;
            self.x_dd[i] += v * dt;
        }
        if !(self.x_dd.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite("planner setpoint"));
        }

        Ok(PlannerStep {
            accel,
            drive,
            phases: self.phases(),
        })
    }
}
