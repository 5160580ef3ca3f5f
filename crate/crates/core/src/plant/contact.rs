//! Penalty contact against static obstacles and the breakable "velcro" bond.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Axis-aligned box.
    Box { center: Vec3, half_extents: Vec3 },
    /// Solid half-space behind a plane; `normal` points out of the solid.
    HalfPlane { point: Vec3, normal: Vec3 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub shape: Shape,
    #[serde(default = "default_k_c")]
    pub k_c: f64,
    #[serde(default = "default_d_c")]
    pub d_c: f64,
}

fn default_k_c() -> f64 {
    5000.0
}

fn default_d_c() -> f64 {
    50.0
}

impl Obstacle {
    pub fn new(shape: Shape) -> Self {
        Obstacle {
            shape,
            k_c: default_k_c(),
            d_c: default_d_c(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_c > 0.0 && self.d_c >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "obstacle needs k_c > 0 and d_c >= 0, got {} / {}",
                self.k_c, self.d_c
            )));
        }
        match self.shape {
            Shape::Box { half_extents, .. } if half_extents.iter().any(|h| *h <= 0.0) => Err(
                Error::InvalidParams("box half extents must be positive".into()),
            ),
            Shape::HalfPlane { normal, .. } if normal.norm() == 0.0 => Err(Error::InvalidParams(
                "half-plane normal must be non-zero".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Penetration depth and outward unit normal, if `x` is inside.
    pub fn penetration(&self, x: &Vec3) -> Option<(f64, Vec3)> {
        match self.shape {
            Shape::Box {
                center,
                half_extents,
            } => {
                let rel = x - center;
                let mut best: Option<(f64, Vec3)> = None;
                for i in 0..3 {
                    for sign in [1.0, -1.0] {
                        let depth = half_extents[i] - sign * rel[i];
                        if depth <= 0.0 {
                            return None;
                        }
                        if best.is_none_or(|(d, _)| depth < d) {
                            let mut n = Vec3::zeros();
                            n[i] = sign;
                            best = Some((depth, n));
                        }
                    }
                }
                best
            }
            Shape::HalfPlane { point, normal } => {
                let n = normal.normalize();
                let depth = -(x - point).dot(&n);
                (depth > 0.0).then_some((depth, n))
            }
        }
    }

    /// One-sided spring-damper reaction, never pulling.
    pub fn force(&self, x: &Vec3, x_dot: &Vec3) -> Vec3 {
        match self.penetration(x) {
            Some((depth, n)) => {
                let outward_speed = x_dot.dot(&n);
                let mag = (self.k_c * depth - self.d_c * outward_speed).max(0.0);
                n * mag
            }
            None => Vec3::zeros(),
        }
    }
}

/// Sum of the penalty forces of every obstacle at end-effector position `x`.
pub fn contact_forces(x: &Vec3, x_dot: &Vec3, obstacles: &[Obstacle]) -> Vec3 {
    obstacles
        .iter()
        .fold(Vec3::zeros(), |acc, o| acc + o.force(x, x_dot))
}

/// Spring attachment that snaps once its force exceeds `f_break`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BondState {
    pub attached: bool,
    pub anchor: Vec3,
    pub k_v: f64,
    pub f_break: f64,
}

impl BondState {
    pub fn detached() -> Self {
        BondState {
            attached: false,
            anchor: Vec3::zeros(),
            k_v: 5000.0,
            f_break: 15.0,
        }
    }

    pub fn attached_at(anchor: Vec3, k_v: f64, f_break: f64) -> Self {
        BondState {
            attached: true,
            anchor,
            k_v,
            f_break,
        }
    }
}

/// Bond force on the end effector at `x`. The force that breaks the bond is
/// still reported for the breaking tick.
pub fn bond_force(x: &Vec3, bond: &BondState) -> (Vec3, BondState) {
    if !bond.attached {
        return (Vec3::zeros(), *bond);
    }
    let f = (bond.anchor - x) * bond.k_v;
    let mut next = *bond;
    if f.norm() > bond.f_break {
        next.attached = false;
    }
    (f, next)
}
