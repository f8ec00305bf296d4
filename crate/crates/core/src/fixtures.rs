//! Synthetic tracks with known answers, for tests and demonstrations.

use serde_json::Value;

use crate::dynamics::ThrusterCommand;
use crate::geo::{wrap_angle, GeoPoint};
use crate::log::{CommandRecord, Extra, LogRecord, Side, TrialLog, TrialMetadata, TruthRecord};
use crate::metrics::TrackPoint;

/// Straight 10 s approach along +x into a tangent circle of radius `r` at
/// yaw rate `w`, sampled at `hz`. The circle is flown for 576°, at
/// `turn_speed` after the execute sample. Returns the track and execute index.
pub fn circle_track(r: f64, w: f64, hz: f64, side: Side, turn_speed: f64) -> (Vec<TrackPoint>, usize) {
    let dt = 1.0 / hz;
    let s = side.sign();
    let u = r * w;
    let n_app = (10.0 * hz).round() as usize;
    let mut track: Vec<TrackPoint> = (0..n_app)
        .map(|i| {
            let t = i as f64 * dt;
            TrackPoint { t, x: u * (t - 10.0), y: 0.0, yaw: 0.0, speed: u }
        })
        .collect();
    let exec = track.len();
    let n_turn = (3.2 * std::f64::consts::PI / w * hz) as usize;
    for k in 0..=n_turn {
        let tau = k as f64 * dt;
        let a = w * tau;
        track.push(TrackPoint {
            t: 10.0 + tau,
            x: r * a.sin(),
            y: s * r * (1.0 - a.cos()),
            yaw: wrap_angle(s * a),
            speed: if k > 0 { turn_speed } else { u },
        });
    }
    (track, exec)
}

/// Truth-only log of [`circle_track`] with the approach speed `r·w`.
pub fn circle_log(r: f64, w: f64, hz: f64, side: Side, turn_speed: f64, vessel_length: f64) -> TrialLog {
    let (track, exec) = circle_track(r, w, hz, side, turn_speed);
    let cmd = CommandRecord::from(&ThrusterCommand::zero());
    let samples = track
        .iter()
        .map(|p| LogRecord {
            t: p.t,
            truth: Some(TruthRecord { x: p.x, y: p.y, yaw: p.yaw, u: p.speed, v: 0.0, r: 0.0 }),
            est: None,
            gps: None,
            imu: None,
            cmd,
            extra: Extra::new(),
        })
        .collect();
    TrialLog::new(
        TrialMetadata {
            vessel_length,
            side,
            execute_index: exec,
            approach_speed: r * w,
            seed: 0,
            origin: GeoPoint::new(0.0, 0.0, 0.0),
            config: Value::Null,
            extra: Extra::new(),
        },
        samples,
    )
}
