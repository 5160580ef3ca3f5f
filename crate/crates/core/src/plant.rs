//! Simulated replica plants.
//!
//! Two models are provided: a Cartesian point mass (three translational
//! DOF, no gravity) and a planar two-link arm moving in the vertical x-y
//! plane. Task space is always three-dimensional; the arm's end effector
//! lives at `z = 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec3;

pub mod contact;

pub use contact::{bond_force, contact_forces, BondState, Obstacle, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoLinkParams {
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub l2: f64,
    pub lc1: f64,
    pub lc2: f64,
    pub i1: f64,
    pub i2: f64,
    pub gravity: f64,
}

impl Default for TwoLinkParams {
    /// 2 kg, 0.4 m uniform rods with centre-of-mass inertias.
    fn default() -> Self {
        let (m, l) = (2.0, 0.4);
        TwoLinkParams {
            m1: m,
            m2: m,
            l1: l,
            l2: l,
            lc1: l / 2.0,
            lc2: l / 2.0,
            i1: m * l * l / 12.0,
            i2: m * l * l / 12.0,
            gravity: 9.81,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlantModel {
    PointMass { mass: f64 },
    TwoLink(TwoLinkParams),
}

/// Joint-space mass matrix, Coriolis/centrifugal vector and gravity vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsTerms {
    pub mass: DMatrix<f64>,
    pub coriolis: DVector<f64>,
    pub gravity: DVector<f64>,
}

impl PlantModel {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            PlantModel::PointMass { mass } => mass.is_finite() && *mass > 0.0,
            PlantModel::TwoLink(p) => {
                [p.m1, p.m2, p.l1, p.l2, p.lc1, p.lc2]
                    .iter()
                    .all(|v| v.is_finite() && *v > 0.0)
                    && p.i1 >= 0.0
                    && p.i2 >= 0.0
                    && p.gravity.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "plant masses and lengths must be positive: {self:?}"
            )))
        }
    }

    /// Number of generalized coordinates.
    pub fn dof(&self) -> usize {
        match self {
            PlantModel::PointMass { .. } => 3,
            PlantModel::TwoLink(_) => 2,
        }
    }

    pub fn forward_kinematics(&self, q: &DVector<f64>) -> Vec3 {
        match self {
            PlantModel::PointMass { .. } => Vec3::new(q[0], q[1], q[2]),
            PlantModel::TwoLink(p) => {
                let (q1, q12) = (q[0], q[0] + q[1]);
                Vec3::new(
                    p.l1 * q1.cos() + p.l2 * q12.cos(),
                    p.l1 * q1.sin() + p.l2 * q12.sin(),
                    0.0,
                )
            }
        }
    }

    /// Analytic 3 x dof position Jacobian of the end effector.
    pub fn jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        match self {
            PlantModel::PointMass { .. } => DMatrix::identity(3, 3),
            PlantModel::TwoLink(p) => {
                let (s1, c1) = q[0].sin_cos();
                let (s12, c12) = (q[0] + q[1]).sin_cos();
                DMatrix::from_row_slice(
                    3,
                    2,
                    &[
                        -p.l1 * s1 - p.l2 * s12,
                        -p.l2 * s12,
                        p.l1 * c1 + p.l2 * c12,
                        p.l2 * c12,
                        0.0,
                        0.0,
                    ],
                )
            }
        }
    }

    pub fn dynamics_terms(&self, q: &DVector<f64>, q_dot: &DVector<f64>) -> DynamicsTerms {
        match self {
            PlantModel::PointMass { mass } => DynamicsTerms {
                mass: DMatrix::identity(3, 3) * *mass,
                coriolis: DVector::zeros(3),
                gravity: DVector::zeros(3),
            },
            PlantModel::TwoLink(p) => {
                let c2 = q[1].cos();
                let a = p.m2 * p.l1 * p.lc2;
                let m11 = p.i1
                    + p.i2
                    + p.m1 * p.lc1.powi(2)
                    + p.m2 * (p.l1.powi(2) + p.lc2.powi(2) + 2.0 * p.l1 * p.lc2 * c2);
                let m12 = p.i2 + p.m2 * (p.lc2.powi(2) + p.l1 * p.lc2 * c2);
                let m22 = p.i2 + p.m2 * p.lc2.powi(2);
                let h = -a * q[1].sin();
                let (qd1, qd2) = (q_dot[0], q_dot[1]);
                let g2 = p.m2 * p.gravity * p.lc2 * (q[0] + q[1]).cos();
                let g1 = (p.m1 * p.lc1 + p.m2 * p.l1) * p.gravity * q[0].cos() + g2;
                DynamicsTerms {
                    mass: DMatrix::from_row_slice(2, 2, &[m11, m12, m12, m22]),
                    coriolis: DVector::from_vec(vec![
                        h * (2.0 * qd1 * qd2 + qd2 * qd2),
                        -h * qd1 * qd1,
                    ]),
                    gravity: DVector::from_vec(vec![g1, g2]),
                }
            }
        }
    }

    pub fn ee_velocity(&self, q: &DVector<f64>, q_dot: &DVector<f64>) -> Vec3 {
        let v = self.jacobian(q) * q_dot;
        Vec3::new(v[0], v[1], v[2])
    }

    pub fn kinetic_energy(&self, q: &DVector<f64>, q_dot: &DVector<f64>) -> f64 {
        let m = self.dynamics_terms(q, q_dot).mass;
        0.5 * q_dot.dot(&(m * q_dot))
    }

    pub fn potential_energy(&self, q: &DVector<f64>) -> f64 {
        match self {
            PlantModel::PointMass { .. } => 0.0,
            PlantModel::TwoLink(p) => {
                let (s1, s12) = (q[0].sin(), (q[0] + q[1]).sin());
                p.gravity * (p.m1 * p.lc1 * s1 + p.m2 * (p.l1 * s1 + p.lc2 * s12))
            }
        }
    }
}

/// Generalized state of the plant plus the bond it may be holding.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub q: DVector<f64>,
    pub q_dot: DVector<f64>,
    pub t: f64,
    pub tick: u64,
    pub bond: BondState,
}

impl PlantState {
    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        PlantState {
            q,
            q_dot: DVector::zeros(n),
            t: 0.0,
            tick: 0,
            bond: BondState::detached(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q
            .iter()
            .chain(self.q_dot.iter())
            .all(|v| v.is_finite())
    }
}

/// Advances the plant one step with semi-implicit Euler:
/// `q_ddot = M^-1 (tau + J^T F_ext - C - G)`.
pub fn step_dynamics(
    model: &PlantModel,
    state: &PlantState,
    tau: &DVector<f64>,
    f_ext: &Vec3,
    dt: f64,
) -> Result<PlantState> {
    if !(dt > 0.0 && dt <= 0.01) {
        return Err(Error::InvalidParams(format!(
            "plant step must be in (0, 0.01] s, got {dt}"
        )));
    }
    let terms = model.dynamics_terms(&state.q, &state.q_dot);
    let jt_f = model.jacobian(&state.q).transpose() * f_ext;
    let rhs = tau + jt_f - &terms.coriolis - &terms.gravity;
    let q_ddot = match terms.mass.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => terms.mass.lu().solve(&rhs).ok_or_else(|| Error::Diverged {
            tick: state.tick,
            detail: "singular mass matrix".into(),
        })?,
    };
    let q_dot = &state.q_dot + q_ddot * dt;
    let q = &state.q + &q_dot * dt;
    let next = PlantState {
        q,
        q_dot,
        t: state.t + dt,
        tick: state.tick + 1,
        bond: state.bond,
    };
    if !next.is_finite() {
        return Err(Error::Diverged {
            tick: state.tick,
            detail: format!("non-finite state q={:?} q_dot={:?}", next.q, next.q_dot),
        });
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn arm() -> PlantModel {
        PlantModel::TwoLink(TwoLinkParams::default())
    }

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn forward_kinematics_examples() {
        let m = arm();
        let x = m.forward_kinematics(&dv(&[0.0, 0.0]));
        assert_abs_diff_eq!(x, Vec3::new(0.8, 0.0, 0.0), epsilon = 1e-15);
        let x = m.forward_kinematics(&dv(&[FRAC_PI_2, 0.0]));
        assert_abs_diff_eq!(x, Vec3::new(0.0, 0.8, 0.0), epsilon = 1e-15);
        let pm = PlantModel::PointMass { mass: 1.0 };
        assert_eq!(
            pm.forward_kinematics(&dv(&[0.1, 0.2, 0.3])),
            Vec3::new(0.1, 0.2, 0.3)
        );
    }

    #[test]
    fn jacobian_examples() {
        let pm = PlantModel::PointMass { mass: 1.0 };
        assert_eq!(pm.jacobian(&dv(&[1.0, 2.0, 3.0])), DMatrix::identity(3, 3));
        let j = arm().jacobian(&dv(&[0.7, 0.0]));
        let det = j[(0, 0)] * j[(1, 1)] - j[(0, 1)] * j[(1, 0)];
        assert_abs_diff_eq!(det, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn gravity_at_horizontal() {
        let t = arm().dynamics_terms(&dv(&[0.0, 0.0]), &dv(&[0.0, 0.0]));
        assert_abs_diff_eq!(t.gravity[0], 15.696, epsilon = 1e-9);
        assert_abs_diff_eq!(t.gravity[1], 3.924, epsilon = 1e-9);
        assert_eq!(t.coriolis, DVector::zeros(2));
    }

    #[test]
    fn point_mass_newton() {
        let m = PlantModel::PointMass { mass: 1.0 };
        let mut s = PlantState::at_rest(DVector::zeros(3));
        let f = Vec3::new(1.0, 0.0, 0.0);
        for _ in 0..1000 {
            s = step_dynamics(&m, &s, &DVector::zeros(3), &f, 0.001).unwrap();
        }
        assert!((s.q_dot[0] - 1.0).abs() < 1e-3);
        assert_eq!(s.tick, 1000);
    }

    #[test]
    fn gravity_compensation_holds_arm() {
        let m = arm();
        let mut s = PlantState::at_rest(dv(&[0.3, 0.9]));
        let q0 = s.q.clone();
        for _ in 0..2000 {
            let g = m.dynamics_terms(&s.q, &s.q_dot).gravity;
            s = step_dynamics(&m, &s, &g, &Vec3::zeros(), 0.001).unwrap();
        }
        assert_abs_diff_eq!(s.q, q0, epsilon = 1e-12);
    }

    #[test]
    fn nan_torque_reports_tick() {
        let m = arm();
        let mut s = PlantState::at_rest(dv(&[0.3, 0.9]));
        s.tick = 42;
        let err = step_dynamics(&m, &s, &dv(&[f64::NAN, 0.0]), &Vec3::zeros(), 0.001).unwrap_err();
        assert!(err.to_string().contains("tick 42"), "{err}");
    }

    #[test]
    fn rejects_invalid_models() {
        assert!(PlantModel::PointMass { mass: 0.0 }.validate().is_err());
        let p = TwoLinkParams {
            l2: -0.1,
            ..TwoLinkParams::default()
        };
        assert!(PlantModel::TwoLink(p).validate().is_err());
        assert!(arm().validate().is_ok());
    }
}
