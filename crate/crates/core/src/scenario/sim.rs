//! Fixed-step closed-loop simulation.
//!
//! Each tick `k` (at `t = k / tick_rate`) runs, in order:
//!
//! 1. scenario events due at `t`;
//! 2. master: latest replica feedback, operator sample, `x'_d` sent on the link;
//! 3. replica: latest `x'_d`, reference commands, one planner step;
//! 4. `x_d = x'_d + x''_d`, replica torque, contact and bond forces;
//! 5. log row, feedback sent back to the master;
//! 6. plant integration (skipped on the final tick).

use crate::channel::{ChannelStats, DelayChannel, LinkEvent};
use crate::error::{Error, Result};
use crate::planner::PlannerState;
use crate::plant::{bond_force, contact_forces, step_dynamics, BondState, PlantState};
use crate::protocol::{Event, EventKind, StateFrame};
use crate::scenario::config::{OperatorSource, ScenarioConfig, ScenarioEvent};
use crate::scenario::log::{LogRow, LoggedEvent, RunLog, RunMeta};
use crate::scenario::operator::{sample_at, OperatorSample};
use crate::scenario::reference::ReferenceDriver;
use crate::teleop::{compose_setpoint, MasterController, ReplicaController};
use crate::Vec3;

/// Everything one tick produced.
#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub row: LogRow,
    pub frame: StateFrame,
    pub events: Vec<Event>,
}

#[derive(Debug)]
pub struct Simulation {
    cfg: ScenarioConfig,
    tick: u64,
    plant: PlantState,
    master: MasterController,
    replica: ReplicaController,
    planner: PlannerState,
    planner_target: Vec3,
    reference: ReferenceDriver,
    m2r: DelayChannel<Vec3>,
    r2m: DelayChannel<Vec3>,
    /// Latest `x'_d` seen by the replica.
    replica_x_prime_d: Vec3,
    /// Latest replica force seen by the master.
    master_f_r: Vec3,
    live_input: OperatorSample,
    next_event: usize,
    record: bool,
    rows: Vec<LogRow>,
    events: Vec<LoggedEvent>,
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        if matches!(cfg.operator, OperatorSource::ScriptedFile { .. }) {
            return Err(Error::Config(
                "operator trace file must be resolved before running (load with from_file)".into(),
            ));
        }
        let model = &cfg.plant;
        let mut plant = PlantState::at_rest(cfg.initial_q());
        let x0 = model.forward_kinematics(&plant.q);
        if let Some(b) = &cfg.bond {
            plant.bond = BondState::attached_at(b.anchor.unwrap_or(x0), b.k_v, b.f_break);
        }

        // Distinct streams per direction, both derived from the scenario seed.
        let mut m2r = DelayChannel::new(cfg.link, cfg.seed)?;
        let mut r2m = DelayChannel::new(cfg.link, cfg.seed ^ 0x9E37_79B9_7F4A_7C15)?;
        for e in &cfg.events {
            let (link, dir) = match *e {
                ScenarioEvent::Disconnect { t, direction } => {
                    (LinkEvent::DisconnectAt(t), direction)
                }
                ScenarioEvent::Reconnect { t, direction } => (LinkEvent::ReconnectAt(t), direction),
                ScenarioEvent::BondRearm { .. } => continue,
            };
            if dir.master_to_replica() {
                m2r.set_link_state(link)?;
            }
            if dir.replica_to_master() {
                r2m.set_link_state(link)?;
            }
        }

        Ok(Simulation {
            tick: 0,
            master: MasterController::new(cfg.master_fic, cfg.velocity_gain),
            replica: ReplicaController::new(cfg.replica_fic),
            planner: PlannerState::new(x0, &cfg.planner),
            planner_target: x0,
            reference: ReferenceDriver::new(cfg.reference.clone()),
            m2r,
            r2m,
            replica_x_prime_d: Vec3::zeros(),
            master_f_r: Vec3::zeros(),
            live_input: OperatorSample::idle(),
            next_event: 0,
            record: true,
            rows: Vec::new(),
            events: Vec::new(),
            plant,
            cfg,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    /// Index of the next tick to run.
    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 / self.cfg.tick_rate
    }

    pub fn plant(&self) -> &PlantState {
        &self.plant
    }

    /// True once the row at `t = duration` has been produced.
    pub fn finished(&self) -> bool {
        self.tick > self.cfg.tick_count()
    }

    /// Turns row retention off for open-ended live sessions.
    pub fn set_recording(&mut self, on: bool) {
        self.record = on;
    }

    /// Latest operator sample for live sessions; held until the next one.
    pub fn set_operator_input(&mut self, sample: OperatorSample) {
        self.live_input = sample;
    }

    /// Changes the one-way delay on both link directions.
    pub fn set_delay(&mut self, delay: f64) -> Result<()> {
        self.m2r.set_delay(delay)?;
        self.r2m.set_delay(delay)?;
        self.cfg.link.delay = delay;
        Ok(())
    }

    /// Records an externally observed event (for example a client
    /// disconnecting from a live session).
    pub fn note_event(&mut self, kind: EventKind) -> Event {
        let ev = Event {
            kind,
            t: self.time(),
        };
        self.events.push(LoggedEvent { t: ev.t, kind });
        ev
    }

    pub fn channel_stats(&self) -> (ChannelStats, ChannelStats) {
        (self.m2r.stats(), self.r2m.stats())
    }

    fn operator_sample(&self, t: f64) -> OperatorSample {
        match &self.cfg.operator {
            OperatorSource::Scripted { samples } => sample_at(samples, t),
            _ => self.live_input,
        }
    }

    fn apply_events(&mut self, t: f64, out: &mut Vec<Event>) {
        while let Some(e) = self
            .cfg
            .events
            .get(self.next_event)
            .filter(|e| e.time() <= t)
        {
            self.next_event += 1;
            let kind = match *e {
                ScenarioEvent::Disconnect { .. } => EventKind::Disconnect,
                ScenarioEvent::Reconnect { .. } => EventKind::Reconnect,
                ScenarioEvent::BondRearm { .. } => {
                    let b = self.cfg.bond.unwrap_or_default();
                    let x = self.cfg.plant.forward_kinematics(&self.plant.q);
                    self.plant.bond = BondState::attached_at(x, b.k_v, b.f_break);
                    continue;
                }
            };
            out.push(Event { kind, t });
        }
    }

    /// Runs one tick. On error the simulation state is left at the failing
    /// tick.
    pub fn step(&mut self) -> Result<TickOutput> {
        let k = self.tick;
        let t = self.time();
        let dt = self.cfg.dt();
        let mut events = Vec::new();
        self.apply_events(t, &mut events);

        // master side
        if let Some(env) = self.r2m.poll(t).pop() {
            self.master_f_r = env.payload;
        }
        let op = self.operator_sample(t);
        let master = self
            .master
            .update(op.x_m, op.k_h, op.mode, &self.master_f_r, dt)?;
        self.m2r.send(master.x_prime_d, t);

        // replica side
        if let Some(env) = self.m2r.poll(t).pop() {
            self.replica_x_prime_d = env.payload;
        }
        let r = self.reference.tick(t);
        if let Some(target) = r.command {
            let v_d = self.cfg.planner.v_d();
            self.planner.set_target(&self.cfg.planner, target, v_d)?;
        }
        if let Some(target) = r.target {
            self.planner_target = target;
        }
        self.planner
            .step(&self.cfg.planner, self.planner_target, dt)?;
        let x_dprime_d = self.planner.setpoint();
        let x_d = compose_setpoint(&self.replica_x_prime_d, &x_dprime_d);

        let model = &self.cfg.plant;
        let ctrl = self
            .replica
            .torque(model, &self.plant.q, &self.plant.q_dot, &x_d)?;
        let v_r = model.ee_velocity(&self.plant.q, &self.plant.q_dot);
        let f_contact = contact_forces(&ctrl.x_r, &v_r, &self.cfg.obstacles);
        let was_attached = self.plant.bond.attached;
        let (f_bond, bond) = bond_force(&ctrl.x_r, &self.plant.bond);
        self.plant.bond = bond;
        if was_attached && !bond.attached {
            events.push(Event {
                kind: EventKind::BondBreak,
                t,
            });
        }
        let f_ext = f_contact + f_bond;

        let row = LogRow {
            t,
            x_d,
            x_prime_d: self.replica_x_prime_d,
            x_dprime_d,
            x_r: ctrl.x_r,
            err: ctrl.error,
            f_cmd: ctrl.force,
            f_ext,
            bond_attached: bond.attached,
            phases: self.replica.phases(),
            m2r_in_flight: self.m2r.in_flight() as u64,
            r2m_in_flight: self.r2m.in_flight() as u64,
        };
        self.r2m.send(f_ext, t);

        if k < self.cfg.tick_count() || self.cfg.is_live() {
            self.plant = step_dynamics(model, &self.plant, &ctrl.tau, &f_ext, dt)?;
            // keep time on the tick grid rather than accumulating dt
            self.plant.t = (k + 1) as f64 / self.cfg.tick_rate;
        }
        self.tick += 1;

        self.events.extend(events.iter().map(|e| LoggedEvent {
            t: e.t,
            kind: e.kind,
        }));
        if self.record {
            self.rows.push(row);
        }
        let arr = |v: Vec3| [v.x, v.y, v.z];
        Ok(TickOutput {
            frame: StateFrame {
                t,
                x_r: arr(ctrl.x_r),
                x_d: arr(x_d),
                f_r: arr(f_ext),
                f_master: arr(master.force.total()),
                bond: bond.attached,
                delay: self.cfg.link.delay,
            },
            row,
            events,
        })
    }

    /// Consumes the simulation and returns what was recorded so far.
    pub fn into_log(self) -> RunLog {
        let (m2r, r2m) = (self.m2r.stats(), self.r2m.stats());
        RunLog {
            meta: RunMeta {
                scenario: self.cfg.name.clone(),
                config_hash: self.cfg.hash(),
                seed: self.cfg.seed,
                version: env!("CARGO_PKG_VERSION").to_string(),
                tick_rate: self.cfg.tick_rate,
                x_b: self.cfg.replica_fic.x_b(),
                reproducible: !self.cfg.is_live(),
            },
            rows: self.rows,
            events: self.events,
            m2r,
            r2m,
        }
    }
}

/// A run that stopped early, with everything logged up to the failure.
#[derive(Debug, thiserror::Error)]
#[error("run aborted at t = {t} s: {source}")]
pub struct RunAborted {
    pub t: f64,
    #[source]
    pub source: Error,
    pub partial: Box<RunLog>,
}

/// Runs a scripted scenario from `t = 0` to `t = duration` inclusive.
pub fn run_scenario(cfg: ScenarioConfig) -> std::result::Result<RunLog, RunAborted> {
    if cfg.is_live() {
        return Err(RunAborted {
            t: 0.0,
            source: Error::Config("live scenarios cannot run in batch mode".into()),
            partial: Box::new(empty_log(&cfg)),
        });
    }
    let mut sim = match Simulation::new(cfg.clone()) {
        Ok(sim) => sim,
        Err(source) => {
            return Err(RunAborted {
                t: 0.0,
                source,
                partial: Box::new(empty_log(&cfg)),
            })
        }
    };
    while !sim.finished() {
        if let Err(source) = sim.step() {
            let t = sim.time();
            tracing::warn!(t, error = %source, "run aborted");
            return Err(RunAborted {
                t,
                source,
                partial: Box::new(sim.into_log()),
            });
        }
    }
    Ok(sim.into_log())
}

fn empty_log(cfg: &ScenarioConfig) -> RunLog {
    RunLog {
        meta: RunMeta {
            scenario: cfg.name.clone(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            tick_rate: cfg.tick_rate,
            x_b: cfg.replica_fic.x_b(),
            reproducible: !cfg.is_live(),
        },
        rows: Vec::new(),
        events: Vec::new(),
        m2r: ChannelStats::default(),
        r2m: ChannelStats::default(),
    }
}
