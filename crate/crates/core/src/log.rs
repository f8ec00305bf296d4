//! Trial logs and their JSONL persistence.
//!
//! A log file is one header line followed by one line per sample:
//!
//! ```text
//! {"schema":"1","metadata":{"vessel_length":0.72,"side":"starboard",...}}
//! {"t":0.0,"truth":{"x":0.0,...},"est":null,"gps":null,"imu":null,"cmd":{"left":0.0,"right":0.0}}
//! ```
//!
//! Floats are written in shortest round-trip form, so `read → write` of a
//! file produced by [`write_log`] is byte-identical. Fields this version
//! does not know about are kept and written back unchanged.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::dynamics::{SimState, ThrusterCommand};
use crate::ekf::{EkfState, STATE_DIM};
use crate::geo::GeoPoint;
use crate::sensors::{GpsFix, ImuReading};

pub const SCHEMA_VERSION: &str = "1";

pub type Extra = BTreeMap<String, Value>;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {source}")]
    Malformed {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: unsupported schema version {found:?} (expected {SCHEMA_VERSION:?})")]
    SchemaVersion { path: PathBuf, found: String },
    #[error("{path}:{line}: timestamp {t} does not increase")]
    NonMonotone { path: PathBuf, line: usize, t: f64 },
    #[error("invalid log: {0}")]
    Invalid(String),
    #[error("{path}: empty file, no header")]
    MissingHeader { path: PathBuf },
}

/// Turn direction of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Port,
    Starboard,
}

impl Side {
    /// +1 for port (counterclockwise), −1 for starboard.
    pub fn sign(self) -> f64 {
        match self {
            Side::Port => 1.0,
            Side::Starboard => -1.0,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Side::Port => 'P',
            Side::Starboard => 'S',
        }
    }

    pub fn mirrored(self) -> Self {
        match self {
            Side::Port => Side::Starboard,
            Side::Starboard => Side::Port,
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Port => "port",
            Side::Starboard => "starboard",
        })
    }
}

impl std::str::FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "port" | "p" => Ok(Side::Port),
            "starboard" | "s" => Ok(Side::Starboard),
            other => Err(format!("unknown side {other:?}; expected port or starboard")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetadata {
    pub vessel_length: f64,
    pub side: Side,
    pub execute_index: usize,
    pub approach_speed: f64,
    pub seed: u64,
    /// Geodetic anchor of the ENU frame, needed to replay GPS fixes.
    pub origin: GeoPoint,
    /// Resolved configuration the trial ran with.
    pub config: Value,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub u: f64,
    pub v: f64,
    pub r: f64,
}

impl TruthRecord {
    pub fn speed(&self) -> f64 {
        self.u.hypot(self.v)
    }
}

impl From<&SimState> for TruthRecord {
    fn from(s: &SimState) -> Self {
        Self { x: s.x, y: s.y, yaw: s.yaw, u: s.u, v: s.v, r: s.r }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    #[serde(rename = "P_diag")]
    pub p_diag: [f64; STATE_DIM],
}

impl EstimateRecord {
    pub fn speed(&self) -> f64 {
        self.u.hypot(self.v)
    }
}

impl From<&EkfState<f64>> for EstimateRecord {
    fn from(s: &EkfState<f64>) -> Self {
        let x = &s.x;
        Self {
            x: x[0],
            y: x[1],
            z: x[2],
            roll: x[3],
            pitch: x[4],
            yaw: x[5],
            u: x[6],
            v: x[7],
            w: x[8],
            p: x[9],
            q: x[10],
            r: x[11],
            p_diag: std::array::from_fn(|i| s.p[(i, i)]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsRecord {
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
    pub std: f64,
}

impl GpsRecord {
    pub fn to_fix(&self, t: f64) -> GpsFix {
        GpsFix { t, point: GeoPoint::new(self.lat, self.lon, self.alt), horizontal_std: self.std, valid: true }
    }
}

impl From<&GpsFix> for GpsRecord {
    fn from(f: &GpsFix) -> Self {
        Self { lat: f.point.lat, lon: f.point.lon, alt: f.point.alt, std: f.horizontal_std }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuRecord {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

impl ImuRecord {
    pub fn to_reading(&self, t: f64, orientation_std: f64, rate_std: f64) -> ImuReading {
        ImuReading {
            t,
            roll: self.roll,
            pitch: self.pitch,
            yaw: self.yaw,
            rate_x: self.p,
            rate_y: self.q,
            rate_z: self.r,
            orientation_std,
            rate_std,
        }
    }
}

impl From<&ImuReading> for ImuRecord {
    fn from(r: &ImuReading) -> Self {
        Self { roll: r.roll, pitch: r.pitch, yaw: r.yaw, p: r.rate_x, q: r.rate_y, r: r.rate_z }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub left: f64,
    pub right: f64,
}

impl From<&ThrusterCommand> for CommandRecord {
    fn from(c: &ThrusterCommand) -> Self {
        Self { left: c.left, right: c.right }
    }
}

/// One sample line. `cmd` is the command applied from `t` until the next sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t: f64,
    pub truth: Option<TruthRecord>,
    pub est: Option<EstimateRecord>,
    pub gps: Option<GpsRecord>,
    pub imu: Option<ImuRecord>,
    pub cmd: CommandRecord,
    #[serde(flatten)]
    pub extra: Extra,
}

impl LogRecord {
    fn numbers(&self) -> Vec<f64> {
        let mut v = vec![self.t, self.cmd.left, self.cmd.right];
        if let Some(t) = &self.truth {
            v.extend([t.x, t.y, t.yaw, t.u, t.v, t.r]);
        }
        if let Some(e) = &self.est {
            v.extend([e.x, e.y, e.z, e.roll, e.pitch, e.yaw, e.u, e.v, e.w, e.p, e.q, e.r]);
            v.extend(e.p_diag);
        }
        if let Some(g) = &self.gps {
            v.extend([g.lat, g.lon, g.alt, g.std]);
        }
        if let Some(i) = &self.imu {
            v.extend([i.roll, i.pitch, i.yaw, i.p, i.q, i.r]);
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    schema: String,
    metadata: TrialMetadata,
    #[serde(flatten)]
    extra: Extra,
}

/// Timestamped trajectory, sensor and command record of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialLog {
    pub metadata: TrialMetadata,
    pub samples: Vec<LogRecord>,
    /// Unknown header fields, preserved across round trips.
    pub header_extra: Extra,
}

impl TrialLog {
    pub fn new(metadata: TrialMetadata, samples: Vec<LogRecord>) -> Self {
        Self { metadata, samples, header_extra: Extra::new() }
    }

    /// Structural checks shared by simulated and ingested logs.
    pub fn validate(&self) -> Result<(), LogError> {
        let m = &self.metadata;
        if !(m.vessel_length.is_finite() && m.vessel_length > 0.0) {
            return Err(LogError::Invalid(format!("vessel_length {} must be > 0", m.vessel_length)));
        }
        if !(m.approach_speed.is_finite() && m.approach_speed >= 0.0) {
            return Err(LogError::Invalid(format!("approach_speed {} must be finite and >= 0", m.approach_speed)));
        }
        m.origin.validate().map_err(|e| LogError::Invalid(format!("origin: {e}")))?;
        if !self.samples.is_empty() && m.execute_index >= self.samples.len() {
            return Err(LogError::Invalid(format!(
                "execute_index {} out of range for {} samples",
                m.execute_index,
                self.samples.len()
            )));
        }
        for (i, s) in self.samples.iter().enumerate() {
            if s.numbers().iter().any(|v| !v.is_finite()) {
                return Err(LogError::Invalid(format!("sample {i} contains a non-finite value")));
            }
        }
        if let Some(i) = self.samples.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(LogError::Invalid(format!("sample {} timestamp {} does not increase", i + 1, self.samples[i + 1].t)));
        }
        Ok(())
    }

    pub fn has_sensor_data(&self) -> bool {
        self.samples.iter().any(|s| s.gps.is_some() || s.imu.is_some())
    }

    pub fn has_estimates(&self) -> bool {
        self.samples.iter().any(|s| s.est.is_some())
    }

    /// Serialize to the JSONL byte stream written by [`write_log`].
    pub fn to_jsonl(&self) -> Result<Vec<u8>, LogError> {
        self.validate()?;
        let mut out = Vec::new();
        let header = Header { schema: SCHEMA_VERSION.to_string(), metadata: self.metadata.clone(), extra: self.header_extra.clone() };
        serde_json::to_writer(&mut out, &header).map_err(|e| LogError::Invalid(e.to_string()))?;
        out.push(b'\n');
        for s in &self.samples {
            serde_json::to_writer(&mut out, s).map_err(|e| LogError::Invalid(e.to_string()))?;
            out.push(b'\n');
        }
        Ok(out)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LogError + '_ {
    move |source| LogError::Io { path: path.to_path_buf(), source }
}

pub fn write_log(log: &TrialLog, path: &Path) -> Result<(), LogError> {
    let bytes = log.to_jsonl()?;
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_log(path: &Path) -> Result<TrialLog, LogError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(file).lines();
    let malformed = |line: usize, source| LogError::Malformed { path: path.to_path_buf(), line, source };

    let first = lines.next().ok_or_else(|| LogError::MissingHeader { path: path.to_path_buf() })?.map_err(io_err(path))?;
    let raw: Value = serde_json::from_str(&first).map_err(|e| malformed(1, e))?;
    let version = match raw.get("schema") {
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
        None => String::new(),
    };
    if version != SCHEMA_VERSION {
        return Err(LogError::SchemaVersion { path: path.to_path_buf(), found: version });
    }
    let header: Header = serde_json::from_value(raw).map_err(|e| malformed(1, e))?;

    let mut samples: Vec<LogRecord> = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LogRecord = serde_json::from_str(&line).map_err(|e| malformed(line_no, e))?;
        if let Some(prev) = samples.last() {
            if rec.t <= prev.t {
                return Err(LogError::NonMonotone { path: path.to_path_buf(), line: line_no, t: rec.t });
            }
        }
        samples.push(rec);
    }
    let log = TrialLog { metadata: header.metadata, samples, header_extra: header.extra };
    log.validate()?;
    Ok(log)
}
