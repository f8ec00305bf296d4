//! Turning-circle metrics and IMO turning-ability checks.
//!
//! Geometry follows the usual turning-circle convention: the course axis is
//! the heading at the execute instant, positions are projected onto
//! (along-course, lateral) axes with lateral positive toward the turn side,
//! and every crossing is located on the unwrapped heading by linear
//! interpolation between samples.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{unwrap_heading, GeoError};
use crate::log::{Side, TrialLog};
use crate::scalar::Real;

/// Steady-turn speed window, as heading change in degrees after execute.
pub const STEADY_TURN_WINDOW_DEG: (f64, f64) = (360.0, 540.0);
/// IMO advance limit in ship lengths (strict).
pub const ADVANCE_LIMIT_LENGTHS: f64 = 4.5;
/// IMO tactical diameter limit in ship lengths (strict).
pub const TACTICAL_DIAMETER_LIMIT_LENGTHS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("heading change reached only {reached_deg:.1} deg of the required {required_deg:.0} deg")]
    HeadingNotReached { reached_deg: f64, required_deg: f64 },
    #[error("approach speed must be > 0")]
    ZeroApproachSpeed,
    #[error("execute index {index} out of range for {len} samples")]
    BadExecuteIndex { index: usize, len: usize },
    #[error("sample {0} has no {1} data")]
    MissingData(usize, &'static str),
    #[error("vessel length must be > 0, got {0}")]
    InvalidLength(f64),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// Which trajectory in the log to analyze.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackSource {
    Truth,
    Estimate,
}

/// Planar trajectory sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint<T = f64> {
    pub t: T,
    pub x: T,
    pub y: T,
    pub yaw: T,
    pub speed: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurningCircleMetrics<T = f64> {
    pub advance: T,
    pub transfer: T,
    pub tactical_diameter: T,
    pub speed_loss_pct: T,
    pub t90: T,
    pub t180: T,
    pub side: Side,
}

/// Heading change and position at an interpolated crossing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing<T> {
    pub t: T,
    pub x: T,
    pub y: T,
    pub along: T,
    pub lateral: T,
}

/// Key points of a turn, in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurnMarkers<T = f64> {
    pub execute: TrackPoint<T>,
    pub quarter: Crossing<T>,
    pub half: Crossing<T>,
}

struct TurnFrame<T> {
    origin: TrackPoint<T>,
    cos: T,
    sin: T,
    side: T,
    /// Signed heading change since execute, positive in the turn direction.
    change: Vec<T>,
}

impl<T: Real> TurnFrame<T> {
    fn new(track: &[TrackPoint<T>], execute: usize, side: Side) -> Result<Self, MetricsError> {
        if execute >= track.len() {
            return Err(MetricsError::BadExecuteIndex { index: execute, len: track.len() });
        }
        let yaws: Vec<T> = track.iter().map(|p| p.yaw).collect();
        let unwrapped = unwrap_heading(&yaws)?;
        let side_sign = T::c(side.sign());
        let h0 = unwrapped[execute];
        let change = unwrapped.iter().map(|h| (*h - h0) * side_sign).collect();
        let origin = track[execute];
        let (sin, cos) = origin.yaw.sin_cos();
        Ok(Self { origin, cos, sin, side: side_sign, change })
    }

    fn project(&self, x: T, y: T) -> (T, T) {
        let dx = x - self.origin.x;
        let dy = y - self.origin.y;
        let along = dx * self.cos + dy * self.sin;
        let left = -dx * self.sin + dy * self.cos;
        (along, left * self.side)
    }

    /// Fractional sample position where the heading change first reaches `target`.
    fn find(&self, execute: usize, target: T) -> Option<(usize, T)> {
        (execute + 1..self.change.len()).find(|&i| self.change[i] >= target).map(|i| {
            let (a, b) = (self.change[i - 1], self.change[i]);
            let frac = if b > a { (target - a) / (b - a) } else { T::one() };
            (i, frac.max(T::zero()).min(T::one()))
        })
    }

    fn max_change(&self, execute: usize) -> T {
        self.change[execute..].iter().copied().fold(T::zero(), |a, b| a.max(b))
    }
}

fn lerp<T: Real>(a: T, b: T, f: T) -> T {
    a + (b - a) * f
}

fn crossing<T: Real>(frame: &TurnFrame<T>, track: &[TrackPoint<T>], at: (usize, T)) -> Crossing<T> {
    let (i, f) = at;
    let (p, q) = (&track[i - 1], &track[i]);
    let x = lerp(p.x, q.x, f);
    let y = lerp(p.y, q.y, f);
    let (along, lateral) = frame.project(x, y);
    Crossing { t: lerp(p.t, q.t, f), x, y, along, lateral }
}

fn locate<T: Real>(frame: &TurnFrame<T>, execute: usize, deg: f64) -> Result<(usize, T), MetricsError> {
    frame.find(execute, T::c(deg.to_radians())).ok_or_else(|| MetricsError::HeadingNotReached {
        reached_deg: frame.max_change(execute).f64().to_degrees(),
        required_deg: deg,
    })
}

/// Time-weighted mean speed between two interpolated crossings.
fn mean_speed<T: Real>(track: &[TrackPoint<T>], from: (usize, T), to: (usize, T)) -> T {
    let point = |(i, f): (usize, T)| {
        let (p, q) = (&track[i - 1], &track[i]);
        (lerp(p.t, q.t, f), lerp(p.speed, q.speed, f))
    };
    let mut pts = vec![point(from)];
    pts.extend(track[from.0..to.0].iter().map(|p| (p.t, p.speed)));
    pts.push(point(to));
    let two = T::c(2.0);
    let (mut area, mut span) = (T::zero(), T::zero());
    for w in pts.windows(2) {
        let dt = w[1].0 - w[0].0;
        area += dt * (w[0].1 + w[1].1) / two;
        span += dt;
    }
    if span > T::zero() {
        area / span
    } else {
        pts[0].1
    }
}

/// Execute point and the 90°/180° crossings of a turn.
pub fn turn_markers<T: Real>(track: &[TrackPoint<T>], execute: usize, side: Side) -> Result<TurnMarkers<T>, MetricsError> {
    let frame = TurnFrame::new(track, execute, side)?;
    let quarter = crossing(&frame, track, locate(&frame, execute, 90.0)?);
    let half = crossing(&frame, track, locate(&frame, execute, 180.0)?);
    Ok(TurnMarkers { execute: track[execute], quarter, half })
}

/// The six turning-circle parameters of a planar track.
pub fn turning_metrics<T: Real>(
    track: &[TrackPoint<T>],
    execute: usize,
    approach_speed: T,
    side: Side,
) -> Result<TurningCircleMetrics<T>, MetricsError> {
    if approach_speed.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
        return Err(MetricsError::ZeroApproachSpeed);
    }
    let frame = TurnFrame::new(track, execute, side)?;
    let (lo, hi) = STEADY_TURN_WINDOW_DEG;
    let end = locate(&frame, execute, hi)?;
    let c90 = crossing(&frame, track, locate(&frame, execute, 90.0)?);
    let c180 = crossing(&frame, track, locate(&frame, execute, 180.0)?);
    let start = locate(&frame, execute, lo)?;
    let steady = mean_speed(track, start, end);
    let t_e = track[execute].t;
    Ok(TurningCircleMetrics {
        advance: c90.along,
        transfer: c90.lateral,
        tactical_diameter: c180.lateral,
        speed_loss_pct: T::c(100.0) * (approach_speed - steady) / approach_speed,
        t90: c90.t - t_e,
        t180: c180.t - t_e,
        side,
    })
}

/// Extract a planar track from a log.
pub fn track_from_log(log: &TrialLog, source: TrackSource) -> Result<Vec<TrackPoint>, MetricsError> {
    log.samples
        .iter()
        .enumerate()
        .map(|(i, s)| match source {
            TrackSource::Truth => s
                .truth
                .map(|tr| TrackPoint { t: s.t, x: tr.x, y: tr.y, yaw: tr.yaw, speed: tr.speed() })
                .ok_or(MetricsError::MissingData(i, "truth")),
            TrackSource::Estimate => s
                .est
                .map(|e| TrackPoint { t: s.t, x: e.x, y: e.y, yaw: e.yaw, speed: e.speed() })
                .ok_or(MetricsError::MissingData(i, "estimate")),
        })
        .collect()
}

/// Turning-circle metrics of a logged trial, using the logged approach speed.
pub fn compute_metrics(log: &TrialLog, source: TrackSource) -> Result<TurningCircleMetrics, MetricsError> {
    let m = &log.metadata;
    if m.execute_index >= log.samples.len() {
        return Err(MetricsError::BadExecuteIndex { index: m.execute_index, len: log.samples.len() });
    }
    let track = track_from_log(log, source)?;
    turning_metrics(&track, m.execute_index, m.approach_speed, m.side)
}

/// Pass/fail against the IMO turning-ability limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub length: f64,
    pub advance_limit: f64,
    pub td_limit: f64,
    pub advance: f64,
    pub tactical_diameter: f64,
    pub advance_pass: bool,
    pub td_pass: bool,
}

impl ComplianceReport {
    /// Verdict in "TD, A" order, e.g. `"N, N"`.
    pub fn verdict(&self) -> String {
        let yn = |b: bool| if b { "Y" } else { "N" };
        format!("{}, {}", yn(self.td_pass), yn(self.advance_pass))
    }

    pub fn compliant(&self) -> bool {
        self.advance_pass && self.td_pass
    }
}

/// Check measured advance and tactical diameter against limits derived from the vessel length.
pub fn check_imo_values(advance: f64, tactical_diameter: f64, length: f64) -> Result<ComplianceReport, MetricsError> {
    if !(length.is_finite() && length > 0.0) {
        return Err(MetricsError::InvalidLength(length));
    }
    let advance_limit = ADVANCE_LIMIT_LENGTHS * length;
    let td_limit = TACTICAL_DIAMETER_LIMIT_LENGTHS * length;
    Ok(ComplianceReport {
        length,
        advance_limit,
        td_limit,
        advance,
        tactical_diameter,
        advance_pass: advance < advance_limit,
        td_pass: tactical_diameter < td_limit,
    })
}

pub fn check_imo(m: &TurningCircleMetrics, length: f64) -> Result<ComplianceReport, MetricsError> {
    check_imo_values(m.advance, m.tactical_diameter, length)
}
