//! Master- and replica-side controllers.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Result};
use crate::fic::{FicParams, Phase, TaskFic};
use crate::plant::PlantModel;
use crate::Vec3;

/// How the master displacement is turned into the teleoperation setpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TeleopMode {
    /// `x'_d = x_M`: precise, limited to the master workspace.
    #[default]
    Offset,
    /// `x'_d += g_v x_M dt`: the master acts as a velocity stick.
    Velocity,
}

/// Default velocity-mode gain (1/s).
pub const DEFAULT_VELOCITY_GAIN: f64 = 1.0;

/// Clamps the raw grasp input to a haptic gain in `[0, 1]`. NaN maps to 0.
pub fn haptic_gain(raw: f64) -> f64 {
    if raw.is_nan() {
        0.0
    } else {
        raw.clamp(0.0, 1.0)
    }
}

/// One tick of the teleoperation setpoint update, without mode-switch
/// handling.
pub fn teleop_setpoint(
    mode: TeleopMode,
    x_m: &Vec3,
    prev_x_prime_d: &Vec3,
    dt: f64,
    velocity_gain: f64,
) -> Vec3 {
    match mode {
        TeleopMode::Offset => *x_m,
        TeleopMode::Velocity => prev_x_prime_d + x_m * (velocity_gain * dt),
    }
}

/// Superimposes teleoperation and autonomous setpoints.
pub fn compose_setpoint(x_prime_d: &Vec3, x_dprime_d: &Vec3) -> Vec3 {
    x_prime_d + x_dprime_d
}

/// Master force: workspace re-centring term plus scaled replica force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MasterForce {
    /// `FIC(-x_M)`, pulling the device back to its local origin.
    pub boundary: Vec3,
    /// `K_H * F_R`.
    pub haptic: Vec3,
}

impl MasterForce {
    pub fn total(&self) -> Vec3 {
        self.boundary + self.haptic
    }
}

/// `f = FIC(-x_M) + K_H F_R`, updating the master FIC phases.
pub fn master_force(x_m: &Vec3, f_r: &Vec3, k_h: f64, fic: &mut TaskFic) -> Result<MasterForce> {
    for i in 0..3 {
        ensure_finite(f_r[i], "replica force")?;
    }
    let boundary = fic.force(&-x_m)?;
    Ok(MasterForce {
        boundary,
        haptic: f_r * haptic_gain(k_h),
    })
}

/// Master side: turns operator input into `x'_d` and the haptic force.
#[derive(Debug, Clone)]
pub struct MasterController {
    fic: TaskFic,
    mode: TeleopMode,
    k_h: f64,
    x_m: Vec3,
    x_prime_d: Vec3,
    /// Device position that maps to `x'_d = 0` in offset mode. Moves on a
    /// switch back from velocity mode so `x'_d` stays continuous.
    origin: Vec3,
    velocity_gain: f64,
}

/// Result of one master tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MasterOutput {
    pub x_prime_d: Vec3,
    pub force: MasterForce,
}

impl MasterController {
    pub fn new(params: FicParams, velocity_gain: f64) -> Self {
        MasterController {
            fic: TaskFic::new(params),
            mode: TeleopMode::Offset,
            k_h: 0.0,
            x_m: Vec3::zeros(),
            x_prime_d: Vec3::zeros(),
            origin: Vec3::zeros(),
            velocity_gain,
        }
    }

    pub fn mode(&self) -> TeleopMode {
        self.mode
    }

    pub fn k_h(&self) -> f64 {
        self.k_h
    }

    pub fn x_m(&self) -> Vec3 {
        self.x_m
    }

    pub fn x_prime_d(&self) -> Vec3 {
        self.x_prime_d
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    /// Processes one tick of operator input. `x_m` is the device
    /// displacement from its centre, `f_r` the latest replica force received.
    pub fn update(
        &mut self,
        x_m: Vec3,
        k_h_raw: f64,
        mode: TeleopMode,
        f_r: &Vec3,
        dt: f64,
    ) -> Result<MasterOutput> {
        for i in 0..3 {
            ensure_finite(x_m[i], "master position")?;
        }
        self.k_h = haptic_gain(k_h_raw);
        self.x_m = x_m;

        if mode != self.mode {
            if mode == TeleopMode::Offset {
                self.origin = x_m - self.x_prime_d;
            }
            // switching into velocity mode keeps x'_d as the integration origin
            self.mode = mode;
        } else {
            self.x_prime_d = match mode {
                TeleopMode::Offset => x_m - self.origin,
                TeleopMode::Velocity => {
                    teleop_setpoint(mode, &x_m, &self.x_prime_d, dt, self.velocity_gain)
                }
            };
        }

        let force = master_force(&x_m, f_r, self.k_h, &mut self.fic)?;
        Ok(MasterOutput {
            x_prime_d: self.x_prime_d,
            force,
        })
    }
}

/// Replica-side output of one control tick.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaOutput {
    pub tau: DVector<f64>,
    /// Task-space FIC force handed to `J^T`.
    pub force: Vec3,
    /// `x_d - x_R`.
    pub error: Vec3,
    pub x_r: Vec3,
}

/// `tau = C(q, q_dot) + G(q) + J(q)^T FIC(x_d - x_R)`.
#[derive(Debug, Clone)]
pub struct ReplicaController {
    fic: TaskFic,
}

impl ReplicaController {
    pub fn new(params: FicParams) -> Self {
        ReplicaController {
            fic: TaskFic::new(params),
        }
    }

    pub fn params(&self) -> &FicParams {
        self.fic.params()
    }

    pub fn phases(&self) -> [Phase; 3] {
        self.fic.phases()
    }

    pub fn fic(&self) -> &TaskFic {
        &self.fic
    }

    pub fn torque(
        &mut self,
        model: &PlantModel,
        q: &DVector<f64>,
        q_dot: &DVector<f64>,
        x_d: &Vec3,
    ) -> Result<ReplicaOutput> {
        replica_torque(q, q_dot, x_d, model, &mut self.fic)
    }
}

pub fn replica_torque(
    q: &DVector<f64>,
    q_dot: &DVector<f64>,
    x_d: &Vec3,
    model: &PlantModel,
    fic: &mut TaskFic,
) -> Result<ReplicaOutput> {
    for i in 0..3 {
        ensure_finite(x_d[i], "replica setpoint")?;
    }
    let x_r = model.forward_kinematics(q);
    let error = x_d - x_r;
    let force = fic.force(&error)?;
    let terms = model.dynamics_terms(q, q_dot);
    let tau = terms.coriolis + terms.gravity + model.jacobian(q).transpose() * force;
    Ok(ReplicaOutput {
        tau,
        force,
        error,
        x_r,
    })
}
