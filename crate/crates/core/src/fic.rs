//! Mono-dimensional fractal impedance controller.
//!
//! Each task-space axis owns a [`FicState`] that remembers whether the error
//! magnitude is growing (divergence) or shrinking (convergence). While
//! diverging the axis behaves as a saturating non-linear spring; when the
//! error starts to shrink the force follows a straight line through the
//! latched peak `(x_max, F(x_max))` and `(x_max / 2, 0)`, so the energy stored
//! on the way out is not handed back on the way in.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::Vec3;

/// Deadband on phase switching (m). Keeps sensor-scale noise from toggling
/// the phase every tick.
pub const PHASE_DEADBAND: f64 = 1e-6;

/// Spring profile constants for one axis.
///
/// Only the four primary constants are stored in configuration files; the
/// derived ones are recomputed on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FicParamsRepr", into = "FicParamsRepr")]
pub struct FicParams {
    k0: f64,
    x_b: f64,
    f_max: f64,
    xi: f64,
    f0: f64,
    delta_f: f64,
    s: f64,
    linear_limit: f64,
    ceiling: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct FicParamsRepr {
    k0: f64,
    x_b: f64,
    f_max: f64,
    #[serde(default = "default_xi")]
    xi: f64,
}

fn default_xi() -> f64 {
    0.9
}

impl TryFrom<FicParamsRepr> for FicParams {
    type Error = Error;

    fn try_from(r: FicParamsRepr) -> Result<Self> {
        FicParams::new(r.k0, r.x_b, r.f_max, r.xi)
    }
}

impl From<FicParams> for FicParamsRepr {
    fn from(p: FicParams) -> Self {
        FicParamsRepr {
            k0: p.k0,
            x_b: p.x_b,
            f_max: p.f_max,
            xi: p.xi,
        }
    }
}

impl FicParams {
    pub fn new(k0: f64, x_b: f64, f_max: f64, xi: f64) -> Result<Self> {
        if !(k0.is_finite() && k0 > 0.0) {
            return Err(Error::InvalidParams(format!("K0 must be > 0, got {k0}")));
        }
        if !(x_b.is_finite() && x_b > 0.0) {
            return Err(Error::InvalidParams(format!("x_b must be > 0, got {x_b}")));
        }
        if !(xi > 0.0 && xi < 1.0) {
            return Err(Error::InvalidParams(format!(
                "xi must be in (0, 1), got {xi}"
            )));
        }
        let f0 = xi * k0 * x_b;
        if !(f_max.is_finite() && f_max > f0) {
            return Err(Error::InvalidParams(format!(
                "F_max must exceed xi*K0*x_b = {f0}, got {f_max}"
            )));
        }
        Ok(FicParams {
            k0,
            x_b,
            f_max,
            xi,
            f0,
            delta_f: f_max - f0,
            s: (1.0 - xi) * x_b / (2.0 * PI),
            linear_limit: xi * x_b,
            ceiling: f_max.next_down(),
        })
    }

    /// Replica defaults: K0 = 200 N/m, x_b = 0.05 m, F_max = 20 N, xi = 0.9.
    pub fn replica_default() -> Self {
        FicParams::new(200.0, 0.05, 20.0, 0.9).expect("valid defaults")
    }

    /// Master defaults sized for a desktop haptic device: K0 = 100 N/m,
    /// x_b = 0.05 m, F_max = 5 N.
    pub fn master_default() -> Self {
        FicParams::new(100.0, 0.05, 5.0, 0.9).expect("valid defaults")
    }

    pub fn k0(&self) -> f64 {
        self.k0
    }

    pub fn x_b(&self) -> f64 {
        self.x_b
    }

    pub fn f_max(&self) -> f64 {
        self.f_max
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    /// Force at the end of the linear region, `xi * K0 * x_b`.
    pub fn f0(&self) -> f64 {
        self.f0
    }

    pub fn delta_f(&self) -> f64 {
        self.delta_f
    }

    /// Length scale of the tanh saturation, `(1 - xi) * x_b / (2 pi)`.
    pub fn s(&self) -> f64 {
        self.s
    }

    /// Error magnitude where the linear branch ends, `xi * x_b`.
    pub fn linear_limit(&self) -> f64 {
        self.linear_limit
    }

    /// Divergence force profile. Odd in `e`, strictly below `F_max` in
    /// magnitude.
    ///
    /// `tanh` rounds to exactly 1.0 far into the saturation branch, which
    /// would put the force on `F_max`; the result is capped one ulp below.
    pub fn force_profile(&self, e: f64) -> f64 {
        let a = e.abs();
        let f = if a <= self.linear_limit {
            self.k0 * a
        } else {
            0.5 * self.delta_f * (((a - self.x_b) / self.s + PI).tanh() + 1.0) + self.f0
        };
        f.min(self.ceiling).copysign(e)
    }

    /// Energy stored by the divergence profile when stretched from 0 to `e`.
    pub fn stored_energy(&self, e: f64) -> f64 {
        let a = e.abs();
        let lin = a.min(self.linear_limit);
        let mut energy = 0.5 * self.k0 * lin * lin;
        if a > self.linear_limit {
            energy += self.saturation_integral(self.linear_limit, a);
        }
        energy
    }

    // Composite Simpson on the tanh branch, with panels sized to the
    // saturation length scale.
    fn saturation_integral(&self, lo: f64, hi: f64) -> f64 {
        let span = hi - lo;
        let mut n = ((span / self.s) * 32.0).ceil() as usize;
        n = n.clamp(64, 200_000);
        if n % 2 == 1 {
            n += 1;
        }
        let h = span / n as f64;
        let f = |x: f64| self.saturation_branch(x);
        let mut sum = f(lo) + f(hi);
        for i in 1..n {
            let x = lo + i as f64 * h;
            sum += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
        }
        sum * h / 3.0
    }

    fn saturation_branch(&self, a: f64) -> f64 {
        0.5 * self.delta_f * (((a - self.x_b) / self.s + PI).tanh() + 1.0) + self.f0
    }

    fn clamp_force(&self, f: f64) -> f64 {
        f.clamp(-self.ceiling, self.ceiling)
    }
}

/// Attractor phase of one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Divergence,
    Convergence,
}

impl Phase {
    pub fn as_char(self) -> char {
        match self {
            Phase::Divergence => 'D',
            Phase::Convergence => 'C',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'D' => Some(Phase::Divergence),
            'C' => Some(Phase::Convergence),
            _ => None,
        }
    }
}

/// What [`FicState::update`] did on this tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    /// First sample; the tracker was initialised in divergence.
    Start,
    None,
    /// Divergence ended; `x_max` was latched.
    ToConvergence,
    /// Error magnitude grew again during convergence.
    ToDivergence,
    /// Error changed sign; a fresh divergence cycle started.
    Reset,
}

/// Divergence/convergence memory for one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FicState {
    phase: Phase,
    x_max: f64,
    prev_err: Option<f64>,
    running_max: f64,
    conv_min: f64,
}

impl Default for FicState {
    fn default() -> Self {
        FicState::new()
    }
}

impl FicState {
    pub fn new() -> Self {
        FicState {
            phase: Phase::Divergence,
            x_max: 0.0,
            prev_err: None,
            running_max: 0.0,
            conv_min: 0.0,
        }
    }

    /// Rebuilds a tracker mid-cycle, e.g. from a checkpoint.
    pub fn from_parts(phase: Phase, prev_err: f64, running_max: f64, x_max: f64) -> Self {
        FicState {
            phase,
            x_max,
            prev_err: Some(prev_err),
            running_max: running_max.abs(),
            conv_min: prev_err.abs(),
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Signed peak error latched at the last divergence to convergence switch.
    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn prev_err(&self) -> Option<f64> {
        self.prev_err
    }

    /// Largest `|e|` seen in the current divergence phase.
    pub fn running_max(&self) -> f64 {
        self.running_max
    }

    /// Feeds the error of the current tick into the phase detector.
    ///
    /// * magnitude dropping more than [`PHASE_DEADBAND`] below the divergence
    ///   peak switches to convergence and latches `x_max`;
    /// * magnitude rising more than the deadband above the smallest value seen
    ///   while converging switches back to divergence;
    /// * a strict sign change against the previous sample starts a new
    ///   divergence cycle.
    pub fn update(&mut self, e: f64) -> Result<Transition> {
        ensure_finite(e, "FIC error")?;
        let mag = e.abs();
        let Some(prev) = self.prev_err else {
            self.prev_err = Some(e);
            self.phase = Phase::Divergence;
            self.running_max = mag;
            return Ok(Transition::Start);
        };
        self.prev_err = Some(e);

        if e * prev < 0.0 {
            self.phase = Phase::Divergence;
            self.running_max = mag;
            return Ok(Transition::Reset);
        }

        match self.phase {
            Phase::Divergence => {
                self.running_max = self.running_max.max(mag);
                if mag < self.running_max - PHASE_DEADBAND {
                    self.phase = Phase::Convergence;
                    self.x_max = self.running_max.copysign(prev);
                    self.conv_min = mag;
                    Ok(Transition::ToConvergence)
                } else {
                    Ok(Transition::None)
                }
            }
            Phase::Convergence => {
                self.conv_min = self.conv_min.min(mag);
                if mag > self.conv_min + PHASE_DEADBAND {
                    self.phase = Phase::Divergence;
                    self.running_max = mag;
                    Ok(Transition::ToDivergence)
                } else {
                    Ok(Transition::None)
                }
            }
        }
    }

    /// Force for error `e` given the current phase. Call after [`update`](Self::update)
    /// for the same tick.
    pub fn force(&self, p: &FicParams, e: f64) -> f64 {
        match self.phase {
            Phase::Divergence => p.force_profile(e),
            Phase::Convergence if self.x_max == 0.0 => p.force_profile(e),
            Phase::Convergence => {
                let peak = p.force_profile(self.x_max);
                p.clamp_force(2.0 * peak / self.x_max * (e - 0.5 * self.x_max))
            }
        }
    }
}

pub fn force_profile(p: &FicParams, e: f64) -> f64 {
    p.force_profile(e)
}

/// Functional form of [`FicState::update`].
pub fn update_phase(s: &FicState, e_new: f64) -> Result<FicState> {
    let mut next = *s;
    next.update(e_new)?;
    Ok(next)
}

pub fn fic_force(p: &FicParams, s: &FicState, e: f64) -> f64 {
    s.force(p, e)
}

pub fn stored_energy(p: &FicParams, e: f64) -> f64 {
    p.stored_energy(e)
}

/// Three independent FIC axes acting on a task-space error.
#[derive(Debug, Clone)]
pub struct TaskFic {
    params: [FicParams; 3],
    states: [FicState; 3],
}

impl TaskFic {
    pub fn new(params: FicParams) -> Self {
        TaskFic {
            params: [params; 3],
            states: [FicState::new(); 3],
        }
    }

    pub fn params(&self) -> &FicParams {
        &self.params[0]
    }

    pub fn states(&self) -> &[FicState; 3] {
        &self.states
    }

    pub fn phases(&self) -> [Phase; 3] {
        self.states.map(|s| s.phase())
    }

    /// Updates every axis with `err` and returns the task-space force.
    pub fn force(&mut self, err: &Vec3) -> Result<Vec3> {
        let mut out = Vec3::zeros();
        for axis in 0..3 {
            self.states[axis].update(err[axis])?;
            out[axis] = self.states[axis].force(&self.params[axis], err[axis]);
        }
        Ok(out)
    }
}
