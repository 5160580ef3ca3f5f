//! Per-tick run records and their CSV / JSON-lines encodings.
//!
//! Column order is fixed:
//!
//! ```text
//! t, xd_x, xd_y, xd_z, xpd_x, xpd_y, xpd_z, xppd_x, xppd_y, xppd_z,
//! xr_x, xr_y, xr_z, err_x, err_y, err_z, fcmd_x, fcmd_y, fcmd_z,
//! fext_x, fext_y, fext_z, bond_attached, phase_x, phase_y, phase_z,
//! ch_m2r_inflight, ch_r2m_inflight
//! ```
//!
//! Floats are written in shortest round-trip form, so reading a log back
//! yields bit-identical values.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelStats;
use crate::error::{Error, Result};
use crate::fic::Phase;
use crate::Vec3;

pub const CSV_COLUMNS: [&str; 28] = [
    "t",
    "xd_x",
    "xd_y",
    "xd_z",
    "xpd_x",
    "xpd_y",
    "xpd_z",
    "xppd_x",
    "xppd_y",
    "xppd_z",
    "xr_x",
    "xr_y",
    "xr_z",
    "err_x",
    "err_y",
    "err_z",
    "fcmd_x",
    "fcmd_y",
    "fcmd_z",
    "fext_x",
    "fext_y",
    "fext_z",
    "bond_attached",
    "phase_x",
    "phase_y",
    "phase_z",
    "ch_m2r_inflight",
    "ch_r2m_inflight",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub x_d: Vec3,
    pub x_prime_d: Vec3,
    pub x_dprime_d: Vec3,
    pub x_r: Vec3,
    /// `x_d - x_R`.
    pub err: Vec3,
    /// Task-space FIC force.
    pub f_cmd: Vec3,
    /// Contact plus bond force on the end effector.
    pub f_ext: Vec3,
    pub bond_attached: bool,
    pub phases: [Phase; 3],
    pub m2r_in_flight: u64,
    pub r2m_in_flight: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    Csv,
    Jsonl,
}

impl FromStr for LogFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(LogFormat::Csv),
            "jsonl" => Ok(LogFormat::Jsonl),
            other => Err(format!("unknown log format {other:?} (csv|jsonl)")),
        }
    }
}

impl LogFormat {
    /// Guesses the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => LogFormat::Jsonl,
            _ => LogFormat::Csv,
        }
    }
}

/// Run provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub scenario: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub tick_rate: f64,
    /// Replica saturation error, used as the tracking tolerance in metrics.
    pub x_b: f64,
    /// Live runs depend on wall-clock input timing and are not reproducible.
    pub reproducible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub t: f64,
    pub kind: crate::protocol::EventKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub meta: RunMeta,
    pub rows: Vec<LogRow>,
    pub events: Vec<LoggedEvent>,
    pub m2r: ChannelStats,
    pub r2m: ChannelStats,
}

#[derive(Debug, Serialize, Deserialize)]
struct FlatRow {
    t: f64,
    xd_x: f64,
    xd_y: f64,
    xd_z: f64,
    xpd_x: f64,
    xpd_y: f64,
    xpd_z: f64,
    xppd_x: f64,
    xppd_y: f64,
    xppd_z: f64,
    xr_x: f64,
    xr_y: f64,
    xr_z: f64,
    err_x: f64,
    err_y: f64,
    err_z: f64,
    fcmd_x: f64,
    fcmd_y: f64,
    fcmd_z: f64,
    fext_x: f64,
    fext_y: f64,
    fext_z: f64,
    bond_attached: u8,
    phase_x: char,
    phase_y: char,
    phase_z: char,
    ch_m2r_inflight: u64,
    ch_r2m_inflight: u64,
}

impl From<&LogRow> for FlatRow {
    fn from(r: &LogRow) -> Self {
        FlatRow {
            t: r.t,
            xd_x: r.x_d.x,
            xd_y: r.x_d.y,
            xd_z: r.x_d.z,
            xpd_x: r.x_prime_d.x,
            xpd_y: r.x_prime_d.y,
            xpd_z: r.x_prime_d.z,
            xppd_x: r.x_dprime_d.x,
            xppd_y: r.x_dprime_d.y,
            xppd_z: r.x_dprime_d.z,
            xr_x: r.x_r.x,
            xr_y: r.x_r.y,
            xr_z: r.x_r.z,
            err_x: r.err.x,
            err_y: r.err.y,
            err_z: r.err.z,
            fcmd_x: r.f_cmd.x,
            fcmd_y: r.f_cmd.y,
            fcmd_z: r.f_cmd.z,
            fext_x: r.f_ext.x,
            fext_y: r.f_ext.y,
            fext_z: r.f_ext.z,
            bond_attached: r.bond_attached as u8,
            phase_x: r.phases[0].as_char(),
            phase_y: r.phases[1].as_char(),
            phase_z: r.phases[2].as_char(),
            ch_m2r_inflight: r.m2r_in_flight,
            ch_r2m_inflight: r.r2m_in_flight,
        }
    }
}

impl TryFrom<FlatRow> for LogRow {
    type Error = String;

    fn try_from(f: FlatRow) -> Result<Self, String> {
        let phase = |c: char| Phase::from_char(c).ok_or_else(|| format!("bad phase {c:?}"));
        if f.bond_attached > 1 {
            return Err(format!(
                "bond_attached must be 0 or 1, got {}",
                f.bond_attached
            ));
        }
        Ok(LogRow {
            t: f.t,
            x_d: Vec3::new(f.xd_x, f.xd_y, f.xd_z),
            x_prime_d: Vec3::new(f.xpd_x, f.xpd_y, f.xpd_z),
            x_dprime_d: Vec3::new(f.xppd_x, f.xppd_y, f.xppd_z),
            x_r: Vec3::new(f.xr_x, f.xr_y, f.xr_z),
            err: Vec3::new(f.err_x, f.err_y, f.err_z),
            f_cmd: Vec3::new(f.fcmd_x, f.fcmd_y, f.fcmd_z),
            f_ext: Vec3::new(f.fext_x, f.fext_y, f.fext_z),
            bond_attached: f.bond_attached == 1,
            phases: [phase(f.phase_x)?, phase(f.phase_y)?, phase(f.phase_z)?],
            m2r_in_flight: f.ch_m2r_inflight,
            r2m_in_flight: f.ch_r2m_inflight,
        })
    }
}

/// Writes rows as CSV with the documented header.
pub fn write_csv<W: Write>(rows: &[LogRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(FlatRow::from(r))?;
    }
    if rows.is_empty() {
        w.write_record(CSV_COLUMNS)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one JSON object per line.
pub fn write_jsonl<W: Write>(rows: &[LogRow], mut out: W) -> std::io::Result<()> {
    for r in rows {
        serde_json::to_writer(&mut out, &FlatRow::from(r))?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<LogRow>, String> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers().map_err(|e| e.to_string())?;
    if header.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(format!("unexpected CSV header: {header:?}"));
    }
    reader
        .deserialize::<FlatRow>()
        .map(|r| r.map_err(|e| e.to_string()).and_then(LogRow::try_from))
        .collect()
}

pub fn read_jsonl<R: std::io::Read>(input: R) -> Result<Vec<LogRow>, String> {
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        let flat: FlatRow =
            serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?;
        rows.push(LogRow::try_from(flat).map_err(|e| format!("line {}: {e}", i + 1))?);
    }
    Ok(rows)
}

/// Writes the log rows to `path`.
pub fn export_log(log: &RunLog, path: impl AsRef<Path>, format: LogFormat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let out = BufWriter::new(file);
    match format {
        LogFormat::Csv => write_csv(&log.rows, out).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::parse(path, format!("{other:?}")),
        }),
        LogFormat::Jsonl => write_jsonl(&log.rows, out).map_err(|e| Error::io(path, e)),
    }
}

/// Reads log rows back from `path`.
pub fn read_log(path: impl AsRef<Path>, format: LogFormat) -> Result<Vec<LogRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        LogFormat::Csv => read_csv(file),
        LogFormat::Jsonl => read_jsonl(file),
    }
    .map_err(|e| Error::parse(path, e))
}

impl RunLog {
    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        write_csv(&self.rows, &mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        write_jsonl(&self.rows, &mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("jsonl is utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64) -> LogRow {
        LogRow {
            t,
            x_d: Vec3::new(0.1, 1.0 / 3.0, 0.0),
            x_prime_d: Vec3::new(0.0, 1e-300, -0.0),
            x_dprime_d: Vec3::new(0.1, 0.2, 0.3),
            x_r: Vec3::new(std::f64::consts::PI, -2.5e-7, 0.0),
            err: Vec3::new(0.01, 0.02, 0.03),
            f_cmd: Vec3::new(19.999999999999996, -2.0, 0.0),
            f_ext: Vec3::zeros(),
            bond_attached: t < 0.002,
            phases: [Phase::Divergence, Phase::Convergence, Phase::Divergence],
            m2r_in_flight: 200,
            r2m_in_flight: 3,
        }
    }

    #[test]
    fn csv_header_matches_documented_order() {
        let text = {
            let mut buf = Vec::new();
            write_csv(&[row(0.0)], &mut buf).unwrap();
            String::from_utf8(buf).unwrap()
        };
        let header = text.lines().next().unwrap();
        assert_eq!(header, CSV_COLUMNS.join(","));
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let rows: Vec<_> = (0..5).map(|k| row(k as f64 * 0.001)).collect();
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn jsonl_rows_parse_independently() {
        let rows: Vec<_> = (0..3).map(|k| row(k as f64 * 0.001)).collect();
        let mut buf = Vec::new();
        write_jsonl(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(v.is_object());
            assert_eq!(v.as_object().unwrap().len(), CSV_COLUMNS.len());
        }
        assert_eq!(read_jsonl(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn rejects_foreign_header() {
        assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn export_to_missing_dir_has_path() {
        let log = RunLog {
            meta: RunMeta {
                scenario: String::new(),
                config_hash: String::new(),
                seed: 0,
                version: String::new(),
                tick_rate: 1000.0,
                x_b: 0.05,
                reproducible: true,
            },
            rows: vec![row(0.0)],
            events: Vec::new(),
            m2r: ChannelStats::default(),
            r2m: ChannelStats::default(),
        };
        let err = export_log(&log, "/nonexistent-dir/x.csv", LogFormat::Csv).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/x.csv"));
    }
}
