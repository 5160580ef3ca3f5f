use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::OperatorInput;
use crate::teleop::TeleopMode;
use crate::Vec3;

/// One time-stamped operator command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorSample {
    pub t: f64,
    pub x_m: Vec3,
    #[serde(default)]
    pub k_h: f64,
    #[serde(default)]
    pub mode: TeleopMode,
}

impl OperatorSample {
    pub fn idle() -> Self {
        OperatorSample {
            t: 0.0,
            x_m: Vec3::zeros(),
            k_h: 0.0,
            mode: TeleopMode::Offset,
        }
    }
}

impl From<OperatorInput> for OperatorSample {
    fn from(m: OperatorInput) -> Self {
        OperatorSample {
            t: m.t,
            x_m: Vec3::from(m.x_m),
            k_h: m.k_h,
            mode: m.mode,
        }
    }
}

pub(crate) fn validate_trace(samples: &[OperatorSample]) -> Result<()> {
    for s in samples {
        if !(s.t.is_finite() && s.k_h.is_finite() && s.x_m.iter().all(|v| v.is_finite())) {
            return Err(Error::Config(format!(
                "non-finite operator sample at t={}",
                s.t
            )));
        }
    }
    if samples.windows(2).any(|w| w[1].t < w[0].t) {
        return Err(Error::Config(
            "operator samples must be sorted by time".into(),
        ));
    }
    Ok(())
}

/// Operator position and gain at `t`: linear interpolation between samples,
/// mode held from the latest sample at or before `t`.
pub fn sample_at(samples: &[OperatorSample], t: f64) -> OperatorSample {
    let Some(first) = samples.first() else {
        return OperatorSample {
            t,
            ..OperatorSample::idle()
        };
    };
    let idx = samples.partition_point(|s| s.t <= t);
    if idx == 0 {
        return OperatorSample { t, ..*first };
    }
    let a = samples[idx - 1];
    let Some(b) = samples.get(idx) else {
        return OperatorSample { t, ..a };
    };
    let span = b.t - a.t;
    let w = if span > 0.0 { (t - a.t) / span } else { 0.0 };
    OperatorSample {
        t,
        x_m: a.x_m + (b.x_m - a.x_m) * w,
        k_h: a.k_h + (b.k_h - a.k_h) * w,
        mode: a.mode,
    }
}

#[derive(Debug, Deserialize)]
struct TraceRow {
    t: f64,
    x_m_x: f64,
    x_m_y: f64,
    x_m_z: f64,
    k_h: f64,
    mode: TeleopMode,
}

/// Reads a CSV operator trace with header `t,x_m_x,x_m_y,x_m_z,k_h,mode`.
pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<OperatorSample>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
    let mut out = Vec::new();
    for row in reader.deserialize::<TraceRow>() {
        let row = row.map_err(|e| Error::parse(path, e))?;
        out.push(OperatorSample {
            t: row.t,
            x_m: Vec3::new(row.x_m_x, row.x_m_y, row.x_m_z),
            k_h: row.k_h,
            mode: row.mode,
        });
    }
    validate_trace(&out).map_err(|e| Error::parse(path, e))?;
    Ok(out)
}
