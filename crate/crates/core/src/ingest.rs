//! Import of external field tracks (CSV) into the trial log format.
//!
//! Expected columns: `iso_time, lat, lon, heading_deg_compass[, speed_mps]`.
//! The datum and heading reference of the file must be declared by the
//! caller; files without a declaration are refused.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::DateTime;
use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use crate::dynamics::ThrusterCommand;
use crate::geo::{enu_from_geodetic, enu_yaw_from_compass, unwrap_heading, wrap_angle, GeoError, GeoPoint};
use crate::log::{CommandRecord, Extra, LogError, LogRecord, Side, TrialLog, TrialMetadata, TruthRecord};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: row {row}: {msg}")]
    Row { path: PathBuf, row: usize, msg: String },
    #[error("{0} not declared; refusing to guess")]
    MissingConvention(&'static str),
    #[error("unsupported {what} '{value}'")]
    Unsupported { what: &'static str, value: String },
    #[error("{path}: need at least two rows, found {found}")]
    TooShort { path: PathBuf, found: usize },
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Log(#[from] LogError),
}

/// Geodetic datum of the latitude/longitude columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Datum {
    Wgs84,
}

/// Reference direction of `heading_deg_compass`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadingReference {
    /// Clockwise from true north.
    TrueNorth,
}

impl FromStr for Datum {
    type Err = IngestError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "wgs84" => Ok(Datum::Wgs84),
            _ => Err(IngestError::Unsupported { what: "datum", value: s.into() }),
        }
    }
}

impl FromStr for HeadingReference {
    type Err = IngestError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "true" | "truenorth" | "compasstrue" => Ok(HeadingReference::TrueNorth),
            _ => Err(IngestError::Unsupported { what: "heading reference", value: s.into() }),
        }
    }
}

impl fmt::Display for Datum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("wgs84")
    }
}

impl fmt::Display for HeadingReference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("true-north")
    }
}

/// Per-file declaration of how the CSV was recorded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Conventions {
    pub datum: Option<Datum>,
    pub heading: Option<HeadingReference>,
}

/// Trial facts that a bare track cannot supply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestOptions {
    pub execute_index: usize,
    pub vessel_length: f64,
    pub side: Side,
    /// Defaults to the speed at the execute sample.
    pub approach_speed: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ExternalTrackRow {
    pub iso_time: String,
    pub lat: f64,
    pub lon: f64,
    pub heading_deg_compass: f64,
    #[serde(default)]
    pub speed_mps: Option<f64>,
}

fn read_rows(path: &Path) -> Result<Vec<(f64, ExternalTrackRow)>, IngestError> {
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io { path: path.into(), source })?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut rows = Vec::new();
    let mut t0 = None;
    for (i, rec) in reader.deserialize::<ExternalTrackRow>().enumerate() {
        // Header is row 1.
        let row = i + 2;
        let bad = |msg: String| IngestError::Row { path: path.into(), row, msg };
        let r = rec.map_err(|e| bad(e.to_string()))?;
        let stamp = DateTime::parse_from_rfc3339(&r.iso_time).map_err(|e| bad(format!("timestamp '{}': {e}", r.iso_time)))?;
        let micros = stamp.timestamp_micros();
        let t0 = *t0.get_or_insert(micros);
        let t = (micros - t0) as f64 * 1e-6;
        if let Some((prev, _)) = rows.last() {
            if t <= *prev {
                return Err(bad(format!("timestamp {} does not increase", r.iso_time)));
            }
        }
        if !r.heading_deg_compass.is_finite() || r.speed_mps.is_some_and(|s| !s.is_finite() || s < 0.0) {
            return Err(bad("heading and speed must be finite, speed >= 0".into()));
        }
        rows.push((t, r));
    }
    Ok(rows)
}

/// Central difference in the interior, one-sided at the ends.
fn derivative(t: &[f64], v: &[f64]) -> Vec<f64> {
    let n = t.len();
    (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (v[b] - v[a]) / (t[b] - t[a])
        })
        .collect()
}

/// Read an external track into a truth-only trial log anchored at `origin`.
pub fn ingest_external(path: &Path, origin: &GeoPoint, conventions: &Conventions, opts: &IngestOptions) -> Result<TrialLog, IngestError> {
    let datum = conventions.datum.ok_or(IngestError::MissingConvention("datum"))?;
    let heading_ref = conventions.heading.ok_or(IngestError::MissingConvention("heading reference"))?;
    origin.validate()?;
    let rows = read_rows(path)?;
    if rows.len() < 2 {
        return Err(IngestError::TooShort { path: path.into(), found: rows.len() });
    }

    let t: Vec<f64> = rows.iter().map(|(t, _)| *t).collect();
    let mut xs = Vec::with_capacity(rows.len());
    let mut ys = Vec::with_capacity(rows.len());
    for (_, r) in &rows {
        let [x, y, _] = enu_from_geodetic(origin, &GeoPoint::new(r.lat, r.lon, origin.alt))?;
        xs.push(x);
        ys.push(y);
    }
    let yaws: Vec<f64> = rows.iter().map(|(_, r)| wrap_angle(enu_yaw_from_compass(r.heading_deg_compass))).collect();
    let rates = derivative(&t, &unwrap_heading(&yaws)?);
    let vx = derivative(&t, &xs);
    let vy = derivative(&t, &ys);

    let cmd = CommandRecord::from(&ThrusterCommand::zero());
    let samples: Vec<LogRecord> = rows
        .iter()
        .enumerate()
        .map(|(i, (ti, r))| LogRecord {
            t: *ti,
            truth: Some(TruthRecord {
                x: xs[i],
                y: ys[i],
                yaw: yaws[i],
                u: r.speed_mps.unwrap_or_else(|| vx[i].hypot(vy[i])),
                v: 0.0,
                r: rates[i],
            }),
            est: None,
            gps: None,
            imu: None,
            cmd,
            extra: Extra::new(),
        })
        .collect();

    let approach_speed = match opts.approach_speed {
        Some(s) => s,
        None => samples.get(opts.execute_index).and_then(|s| s.truth).map(|tr| tr.u).unwrap_or(0.0),
    };
    let mut extra = Extra::new();
    extra.insert("source".into(), Value::String(path.display().to_string()));
    extra.insert("datum".into(), Value::String(datum.to_string()));
    extra.insert("heading_reference".into(), Value::String(heading_ref.to_string()));
    let log = TrialLog::new(
        TrialMetadata {
            vessel_length: opts.vessel_length,
            side: opts.side,
            execute_index: opts.execute_index,
            approach_speed,
            seed: 0,
            origin: *origin,
            config: Value::Null,
            extra,
        },
        samples,
    );
    log.validate()?;
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;
    use std::io::Write;

    const DECLARED: Conventions = Conventions { datum: Some(Datum::Wgs84), heading: Some(HeadingReference::TrueNorth) };

    fn opts() -> IngestOptions {
        IngestOptions { execute_index: 0, vessel_length: 0.72, side: Side::Starboard, approach_speed: None }
    }

    fn csv_file(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, "iso_time,lat,lon,heading_deg_compass,speed_mps\n{body}").unwrap();
        f
    }

    #[test]
    fn compass_north_is_enu_ninety_degrees() {
        let origin = GeoPoint::new(53.0, -1.0, 0.0);
        let f = csv_file("2024-05-01T10:00:00Z,53.0,-1.0,0,1.0\n2024-05-01T10:00:01Z,53.0,-1.0,0,1.0\n");
        let log = ingest_external(f.path(), &origin, &DECLARED, &opts()).unwrap();
        let tr = log.samples[0].truth.unwrap();
        assert_abs_diff_eq!(tr.yaw, FRAC_PI_2, epsilon = 1e-12);
        assert_abs_diff_eq!(tr.x, 0.0, epsilon = 1e-9);
        assert!(log.samples[0].est.is_none() && log.samples[0].gps.is_none());
    }

    #[test]
    fn northward_step_maps_to_y() {
        let origin = GeoPoint::new(0.0, 0.0, 0.0);
        // 1e-5 deg of latitude on a 6378137 m sphere.
        let dy = 6378137.0 * 1e-5_f64.to_radians();
        let f = csv_file("2024-05-01T10:00:00Z,0.0,0.0,0,\n2024-05-01T10:00:00.5Z,0.00001,0.0,0,\n");
        let log = ingest_external(f.path(), &origin, &DECLARED, &opts()).unwrap();
        let (a, b) = (log.samples[0].truth.unwrap(), log.samples[1].truth.unwrap());
        assert_abs_diff_eq!(b.y - a.y, 1.113, epsilon = 1e-3);
        assert_abs_diff_eq!(b.y - a.y, dy, epsilon = 1e-9);
        assert_abs_diff_eq!(log.samples[1].t, 0.5, epsilon = 1e-12);
        // Speed from finite differences when the column is empty.
        assert_abs_diff_eq!(a.u, dy / 0.5, epsilon = 1e-9);
    }

    #[test]
    fn undeclared_conventions_refused() {
        let f = csv_file("2024-05-01T10:00:00Z,0,0,0,\n2024-05-01T10:00:01Z,0,0,0,\n");
        let origin = GeoPoint::new(0.0, 0.0, 0.0);
        let no_datum = Conventions { datum: None, ..DECLARED };
        let no_heading = Conventions { heading: None, ..DECLARED };
        assert!(matches!(ingest_external(f.path(), &origin, &no_datum, &opts()), Err(IngestError::MissingConvention("datum"))));
        assert!(matches!(ingest_external(f.path(), &origin, &no_heading, &opts()), Err(IngestError::MissingConvention(_))));
        assert!("ed50".parse::<Datum>().is_err());
        assert_eq!("WGS-84".parse::<Datum>().unwrap(), Datum::Wgs84);
    }

    #[test]
    fn decreasing_time_names_row() {
        let f = csv_file("2024-05-01T10:00:01Z,0,0,0,\n2024-05-01T10:00:00Z,0,0,0,\n");
        let err = ingest_external(f.path(), &GeoPoint::new(0.0, 0.0, 0.0), &DECLARED, &opts()).unwrap_err();
        assert!(matches!(err, IngestError::Row { row: 3, .. }), "{err}");
    }

    #[test]
    fn yaw_rate_from_heading_differences() {
        // Compass heading increasing 10 deg/s is a clockwise turn: ENU rate -10 deg/s.
        let body: String = (0..5).map(|k| format!("2024-05-01T10:00:0{k}Z,0,0,{},1\n", 355 + 10 * k)).collect();
        let f = csv_file(&body);
        let log = ingest_external(f.path(), &GeoPoint::new(0.0, 0.0, 0.0), &DECLARED, &opts()).unwrap();
        for s in &log.samples {
            assert_abs_diff_eq!(s.truth.unwrap().r, -10f64.to_radians(), epsilon = 1e-9);
        }
    }
}
