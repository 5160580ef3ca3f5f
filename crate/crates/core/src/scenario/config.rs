use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::LinkConfig;
use crate::error::{Error, Result};
use crate::fic::FicParams;
use crate::planner::PlannerParams;
use crate::plant::{Obstacle, PlantModel};
use crate::scenario::operator::{self, OperatorSample};
use crate::scenario::reference::Reference;
use crate::teleop::DEFAULT_VELOCITY_GAIN;
use crate::Vec3;

/// Version of the scenario file schema understood by this build.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorSource {
    /// Time-stamped samples, linearly interpolated. An empty trace keeps the
    /// master at its origin.
    Scripted {
        #[serde(default)]
        samples: Vec<OperatorSample>,
    },
    /// CSV trace (`t,x_m_x,x_m_y,x_m_z,k_h,mode`), resolved relative to the
    /// scenario file and inlined on load.
    ScriptedFile { path: String },
    /// Inputs arrive from a live session.
    Live,
}

impl Default for OperatorSource {
    fn default() -> Self {
        OperatorSource::Scripted {
            samples: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkDirection {
    #[default]
    Both,
    MasterToReplica,
    ReplicaToMaster,
}

impl LinkDirection {
    pub fn master_to_replica(self) -> bool {
        matches!(self, LinkDirection::Both | LinkDirection::MasterToReplica)
    }

    pub fn replica_to_master(self) -> bool {
        matches!(self, LinkDirection::Both | LinkDirection::ReplicaToMaster)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioEvent {
    Disconnect {
        t: f64,
        #[serde(default)]
        direction: LinkDirection,
    },
    Reconnect {
        t: f64,
        #[serde(default)]
        direction: LinkDirection,
    },
    /// Re-attaches the bond at the end effector's current position.
    BondRearm { t: f64 },
}

impl ScenarioEvent {
    pub fn time(&self) -> f64 {
        match *self {
            ScenarioEvent::Disconnect { t, .. }
            | ScenarioEvent::Reconnect { t, .. }
            | ScenarioEvent::BondRearm { t } => t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BondConfig {
    /// Defaults to the initial end-effector position.
    #[serde(default)]
    pub anchor: Option<Vec3>,
    #[serde(default = "default_k_v")]
    pub k_v: f64,
    #[serde(default = "default_f_break")]
    pub f_break: f64,
}

fn default_k_v() -> f64 {
    5000.0
}

fn default_f_break() -> f64 {
    15.0
}

impl Default for BondConfig {
    fn default() -> Self {
        BondConfig {
            anchor: None,
            k_v: default_k_v(),
            f_break: default_f_break(),
        }
    }
}

/// Declarative description of one closed-loop experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub plant: PlantModel,
    /// Initial generalized coordinates; defaults to the origin for the point
    /// mass and to `[0.2, 1.4]` rad for the arm.
    #[serde(default)]
    pub initial_q: Option<Vec<f64>>,
    #[serde(default = "FicParams::replica_default")]
    pub replica_fic: FicParams,
    #[serde(default = "FicParams::master_default")]
    pub master_fic: FicParams,
    #[serde(default = "default_velocity_gain")]
    pub velocity_gain: f64,
    #[serde(default)]
    pub planner: PlannerParams,
    #[serde(default)]
    pub link: LinkConfig,
    #[serde(default)]
    pub reference: Reference,
    #[serde(default)]
    pub operator: OperatorSource,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default)]
    pub bond: Option<BondConfig>,
    #[serde(default)]
    pub events: Vec<ScenarioEvent>,
    pub duration: f64,
    #[serde(default = "default_tick_rate")]
    pub tick_rate: f64,
    #[serde(default)]
    pub seed: u64,
    /// StateFrame rate for live sessions (Hz).
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f64,
}

fn default_velocity_gain() -> f64 {
    DEFAULT_VELOCITY_GAIN
}

fn default_tick_rate() -> f64 {
    1000.0
}

fn default_frame_rate() -> f64 {
    60.0
}

impl ScenarioConfig {
    /// Minimal scenario: 1 kg point mass at the origin, default controllers,
    /// no reference, idle operator.
    pub fn new(plant: PlantModel, duration: f64) -> Self {
        ScenarioConfig {
            schema_version: SCHEMA_VERSION,
            name: String::new(),
            plant,
            initial_q: None,
            replica_fic: FicParams::replica_default(),
            master_fic: FicParams::master_default(),
            velocity_gain: DEFAULT_VELOCITY_GAIN,
            planner: PlannerParams::default(),
            link: LinkConfig::default(),
            reference: Reference::None,
            operator: OperatorSource::default(),
            obstacles: Vec::new(),
            bond: None,
            events: Vec::new(),
            duration,
            tick_rate: default_tick_rate(),
            seed: 0,
            frame_rate: default_frame_rate(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Loads, resolves external operator traces and validates a scenario
    /// file.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ScenarioConfig =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        if let OperatorSource::ScriptedFile { path: trace } = &cfg.operator {
            let base = path.parent().unwrap_or_else(|| Path::new("."));
            let samples = operator::read_trace(base.join(trace))?;
            cfg.operator = OperatorSource::Scripted { samples };
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.tick_rate
    }

    /// Number of integration steps; the log holds one more row (t = 0 and
    /// t = duration are both recorded).
    pub fn tick_count(&self) -> u64 {
        (self.duration * self.tick_rate).round() as u64
    }

    pub fn initial_q(&self) -> DVector<f64> {
        match &self.initial_q {
            Some(q) => DVector::from_column_slice(q),
            None => match self.plant {
                PlantModel::PointMass { .. } => DVector::zeros(3),
                PlantModel::TwoLink(_) => DVector::from_vec(vec![0.2, 1.4]),
            },
        }
    }

    pub fn is_live(&self) -> bool {
        matches!(self.operator, OperatorSource::Live)
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if !(100.0..=10_000.0).contains(&self.tick_rate) {
            return bad(format!(
                "tick_rate must be in [100, 10000] Hz, got {}",
                self.tick_rate
            ));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad(format!("duration must be > 0, got {}", self.duration));
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return bad(format!("frame_rate must be > 0, got {}", self.frame_rate));
        }
        if !(self.velocity_gain.is_finite()) {
            return bad("velocity_gain must be finite".into());
        }
        self.plant.validate()?;
        let q = self.initial_q();
        if q.len() != self.plant.dof() || q.iter().any(|v| !v.is_finite()) {
            return bad(format!(
                "initial_q needs {} finite values, got {:?}",
                self.plant.dof(),
                self.initial_q
            ));
        }
        self.link.validate()?;
        self.reference.validate()?;
        for o in &self.obstacles {
            o.validate()?;
        }
        if let Some(b) = &self.bond {
            if !(b.k_v > 0.0 && b.f_break > 0.0) {
                return bad("bond needs k_v > 0 and f_break > 0".into());
            }
        }
        let mut last = f64::NEG_INFINITY;
        for e in &self.events {
            let t = e.time();
            if !t.is_finite() || t < 0.0 {
                return bad(format!("event time must be finite and >= 0, got {t}"));
            }
            if t < last {
                return bad("events must be sorted by time".into());
            }
            last = t;
        }
        if let OperatorSource::Scripted { samples } = &self.operator {
            operator::validate_trace(samples)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "plant": {"kind": "point_mass", "mass": 1.0},
        "duration": 1.0
    }"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = ScenarioConfig::from_json(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.tick_rate, 1000.0);
        assert_eq!(cfg.replica_fic, FicParams::replica_default());
        assert_eq!(cfg.master_fic, FicParams::master_default());
        assert_eq!(cfg.tick_count(), 1000);
        assert_eq!(cfg.initial_q(), DVector::zeros(3));
    }

    #[test]
    fn rejects_out_of_range_tick_rate() {
        let mut cfg = ScenarioConfig::from_json(MINIMAL).unwrap();
        cfg.tick_rate = 50.0;
        assert!(cfg.validate().is_err());
        cfg.tick_rate = 20_000.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_wrong_schema_and_bad_q() {
        let mut cfg = ScenarioConfig::from_json(MINIMAL).unwrap();
        cfg.schema_version = 2;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::from_json(MINIMAL).unwrap();
        cfg.initial_q = Some(vec![0.0, 0.0]);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_unsorted_events() {
        let mut cfg = ScenarioConfig::from_json(MINIMAL).unwrap();
        cfg.events = vec![
            ScenarioEvent::BondRearm { t: 2.0 },
            ScenarioEvent::BondRearm { t: 1.0 },
        ];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn json_round_trip_keeps_hash() {
        let cfg = ScenarioConfig::from_json(MINIMAL).unwrap();
        let again = ScenarioConfig::from_json(&cfg.to_json_pretty()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn loads_external_trace() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("trace.csv"),
            "t,x_m_x,x_m_y,x_m_z,k_h,mode\n0,0,0,0,0.5,offset\n1,0.02,0,0,0.5,offset\n",
        )
        .unwrap();
        let scenario = r#"{
            "schema_version": 1,
            "plant": {"kind": "point_mass", "mass": 1.0},
            "operator": {"kind": "scripted_file", "path": "trace.csv"},
            "duration": 1.0
        }"#;
        let path = dir.path().join("s.json");
        std::fs::write(&path, scenario).unwrap();
        let cfg = ScenarioConfig::from_file(&path).unwrap();
        match cfg.operator {
            OperatorSource::Scripted { samples } => assert_eq!(samples.len(), 2),
            other => panic!("trace not inlined: {other:?}"),
        }
    }

    #[test]
    fn missing_file_has_path_context() {
        let err = ScenarioConfig::from_file("/nonexistent/scenario.json").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/scenario.json"));
    }
}
