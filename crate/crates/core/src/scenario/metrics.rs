//! Summary statistics over a run log.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::log::LogRow;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsParams {
    /// Tracking tolerance for the free-motion fraction (m).
    pub x_b: f64,
}

impl Default for MetricsParams {
    fn default() -> Self {
        MetricsParams { x_b: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rows: usize,
    pub duration: f64,
    /// Per-axis peak `|x_d - x_R|` (m).
    pub max_abs_err: [f64; 3],
    /// Peak tracking-error norm (m).
    pub max_err_norm: f64,
    /// Ticks with no external force.
    pub free_ticks: usize,
    /// Share of free ticks whose error norm is within `x_b`; 1 if there are
    /// none.
    pub free_motion_fraction: f64,
    /// Per-axis peak `|F_cmd|` (N).
    pub max_abs_fcmd: [f64; 3],
    /// Peak external force norm (N).
    pub max_fext: f64,
    /// Net work done by the controller on the error coordinate (J),
    /// trapezoidal in error space. Negative means the controller absorbed
    /// energy.
    pub controller_work: f64,
    /// First tick at which the bond went from attached to released.
    pub bond_break_time: Option<f64>,
}

pub fn compute_metrics(rows: &[LogRow], params: &MetricsParams) -> Result<Metrics> {
    let (first, last) = match (rows.first(), rows.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::EmptyLog),
    };
    let mut max_abs_err = [0.0f64; 3];
    let mut max_abs_fcmd = [0.0f64; 3];
    let mut max_err_norm = 0.0f64;
    let mut max_fext = 0.0f64;
    let mut free_ticks = 0usize;
    let mut free_ok = 0usize;
    for r in rows {
        for i in 0..3 {
            max_abs_err[i] = max_abs_err[i].max(r.err[i].abs());
            max_abs_fcmd[i] = max_abs_fcmd[i].max(r.f_cmd[i].abs());
        }
        let e = r.err.norm();
        max_err_norm = max_err_norm.max(e);
        let f = r.f_ext.norm();
        max_fext = max_fext.max(f);
        if f == 0.0 {
            free_ticks += 1;
            if e <= params.x_b {
                free_ok += 1;
            }
        }
    }
    let controller_work = -rows
        .windows(2)
        .map(|w| {
            (0..3)
                .map(|i| 0.5 * (w[0].f_cmd[i] + w[1].f_cmd[i]) * (w[1].err[i] - w[0].err[i]))
                .sum::<f64>()
        })
        .sum::<f64>();
    let bond_break_time = rows
        .windows(2)
        .find(|w| w[0].bond_attached && !w[1].bond_attached)
        .map(|w| w[1].t);
    Ok(Metrics {
        rows: rows.len(),
        duration: last.t - first.t,
        max_abs_err,
        max_err_norm,
        free_ticks,
        free_motion_fraction: if free_ticks == 0 {
            1.0
        } else {
            free_ok as f64 / free_ticks as f64
        },
        max_abs_fcmd,
        max_fext,
        controller_work,
        bond_break_time,
    })
}
