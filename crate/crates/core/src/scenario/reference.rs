use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec3;

/// Point on a horizontal circle at time `t`, starting on the +x side.
pub fn circle_reference(t: f64, center: &Vec3, radius: f64, period: f64) -> Vec3 {
    let a = TAU * t / period;
    center + Vec3::new(radius * a.cos(), radius * a.sin(), 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    /// Time at which the waypoint is commanded (s).
    pub t: f64,
    pub position: Vec3,
}

/// Autonomous reference fed to the planner.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reference {
    /// Hold the initial end-effector position.
    #[default]
    None,
    Circle {
        center: Vec3,
        radius: f64,
        period: f64,
    },
    Waypoints {
        points: Vec<Waypoint>,
    },
}

impl Reference {
    pub fn validate(&self) -> Result<()> {
        match self {
            Reference::None => Ok(()),
            Reference::Circle { radius, period, .. } => {
                if !(period.is_finite() && *period > 0.0) {
                    return Err(Error::Config(format!(
                        "circle period must be > 0, got {period}"
                    )));
                }
                if !(radius.is_finite() && *radius >= 0.0) {
                    return Err(Error::Config(format!(
                        "circle radius must be >= 0, got {radius}"
                    )));
                }
                Ok(())
            }
            Reference::Waypoints { points } => {
                let sorted = points.windows(2).all(|w| w[0].t <= w[1].t);
                let finite = points
                    .iter()
                    .all(|p| p.t.is_finite() && p.position.iter().all(|v| v.is_finite()));
                if sorted && finite {
                    Ok(())
                } else {
                    Err(Error::Config(
                        "waypoints must be finite and sorted by time".into(),
                    ))
                }
            }
        }
    }
}

/// Walks a [`Reference`] tick by tick, reporting when a new target is
/// commanded.
#[derive(Debug, Clone)]
pub struct ReferenceDriver {
    reference: Reference,
    next_waypoint: usize,
    started: bool,
    current: Option<Vec3>,
}

/// Reference output for one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceTick {
    /// Target for the planner step, `None` to hold.
    pub target: Option<Vec3>,
    /// Set when a new command is issued on this tick.
    pub command: Option<Vec3>,
}

impl ReferenceDriver {
    pub fn new(reference: Reference) -> Self {
        ReferenceDriver {
            reference,
            next_waypoint: 0,
            started: false,
            current: None,
        }
    }

    pub fn tick(&mut self, t: f64) -> ReferenceTick {
        match &self.reference {
            Reference::None => ReferenceTick {
                target: None,
                command: None,
            },
            Reference::Circle {
                center,
                radius,
                period,
            } => {
                let x = circle_reference(t, center, *radius, *period);
                let command = (!self.started).then_some(x);
                self.started = true;
                ReferenceTick {
                    target: Some(x),
                    command,
                }
            }
            Reference::Waypoints { points } => {
                let mut command = None;
                while let Some(wp) = points.get(self.next_waypoint).filter(|wp| wp.t <= t) {
                    command = Some(wp.position);
                    self.current = Some(wp.position);
                    self.next_waypoint += 1;
                }
                ReferenceTick {
                    target: self.current,
                    command,
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn circle_examples() {
        let c = Vec3::zeros();
        assert_abs_diff_eq!(
            circle_reference(0.0, &c, 0.1, 5.0),
            Vec3::new(0.1, 0.0, 0.0),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            circle_reference(1.25, &c, 0.1, 5.0),
            Vec3::new(0.0, 0.1, 0.0),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            circle_reference(5.0, &c, 0.1, 5.0),
            circle_reference(0.0, &c, 0.1, 5.0),
            epsilon = 1e-15
        );
    }

    #[test]
    fn circle_commands_once() {
        let mut d = ReferenceDriver::new(Reference::Circle {
            center: Vec3::zeros(),
            radius: 0.1,
            period: 5.0,
        });
        assert!(d.tick(0.0).command.is_some());
        assert!(d.tick(0.001).command.is_none());
    }

    #[test]
    fn waypoints_issue_in_order() {
        let mut d = ReferenceDriver::new(Reference::Waypoints {
            points: vec![
                Waypoint {
                    t: 0.0,
                    position: Vec3::new(0.1, 0.0, 0.0),
                },
                Waypoint {
                    t: 1.0,
                    position: Vec3::new(0.0, 0.1, 0.0),
                },
            ],
        });
        let first = d.tick(0.0);
        assert_eq!(first.command, Some(Vec3::new(0.1, 0.0, 0.0)));
        assert_eq!(d.tick(0.5).command, None);
        assert_eq!(d.tick(0.5).target, Some(Vec3::new(0.1, 0.0, 0.0)));
        assert_eq!(d.tick(1.0).command, Some(Vec3::new(0.0, 0.1, 0.0)));
    }

    #[test]
    fn validation() {
        let bad = Reference::Circle {
            center: Vec3::zeros(),
            radius: 0.1,
            period: 0.0,
        };
        assert!(bad.validate().is_err());
    }
}
