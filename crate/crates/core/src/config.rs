//! JSON configuration shared by the simulator, sensors, filter and trial runner.
//!
//! Every section and field is optional; missing values take the defaults
//! below. Unknown keys are rejected so typos do not silently fall back.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{Environment, VesselParams, DEFAULT_DT, MAX_DT};
use crate::ekf::FilterConfig;
use crate::geo::GeoPoint;
use crate::log::Side;
use crate::sensors::SensorNoiseConfig;

/// Minimum steady approach before the turn is executed, seconds.
pub const MIN_STEADY_HOLD_S: f64 = 60.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartPose {
    pub x: f64,
    pub y: f64,
    /// ENU yaw, radians.
    pub yaw: f64,
}

impl Default for StartPose {
    fn default() -> Self {
        Self { x: 0.0, y: 0.0, yaw: 0.0 }
    }
}

/// Turning-circle trial protocol settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialSettings {
    pub side: Side,
    /// Run-up from rest before the steady hold starts, seconds.
    pub spin_up: f64,
    /// Steady course at constant setting before execute, seconds (>= 60).
    pub steady_hold: f64,
    /// Heading change that ends the turn, radians.
    pub total_heading_change: f64,
    /// Differential steer applied at execute (sign chosen by side).
    pub turn_steer: f64,
    /// Proportional gain of the approach heading hold, steer per radian.
    pub heading_gain: f64,
    /// Limit on simulated time after execute, seconds.
    pub max_duration: f64,
    pub dt: f64,
    pub start_pose: StartPose,
}

impl Default for TrialSettings {
    fn default() -> Self {
        Self {
            side: Side::Starboard,
            spin_up: 10.0,
            steady_hold: MIN_STEADY_HOLD_S,
            total_heading_change: 3.0 * std::f64::consts::PI,
            turn_steer: 0.5,
            heading_gain: 0.8,
            max_duration: 300.0,
            dt: DEFAULT_DT,
            start_pose: StartPose::default(),
        }
    }
}

impl TrialSettings {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.steady_hold.is_finite() && self.steady_hold >= MIN_STEADY_HOLD_S) {
            return bad(format!("steady_hold {} s is below the {MIN_STEADY_HOLD_S} s protocol minimum", self.steady_hold));
        }
        if !(self.spin_up.is_finite() && self.spin_up >= 0.0) {
            return bad("spin_up must be >= 0".into());
        }
        if !(self.total_heading_change.is_finite() && self.total_heading_change > 0.0) {
            return bad("total_heading_change must be > 0".into());
        }
        if !(self.turn_steer > 0.0 && self.turn_steer <= 1.0) {
            return bad(format!("turn_steer {} outside (0, 1]", self.turn_steer));
        }
        if !(self.heading_gain.is_finite() && self.heading_gain >= 0.0) {
            return bad("heading_gain must be >= 0".into());
        }
        if !(self.max_duration.is_finite() && self.max_duration > 0.0) {
            return bad("max_duration must be > 0".into());
        }
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return bad(format!("dt {} outside (0, {MAX_DT}]", self.dt));
        }
        let p = self.start_pose;
        if !(p.x.is_finite() && p.y.is_finite() && p.yaw.is_finite()) {
            return bad("start_pose must be finite".into());
        }
        Ok(())
    }

    /// Sample index of the execute instant.
    pub fn execute_index(&self) -> usize {
        ((self.spin_up + self.steady_hold) / self.dt).round() as usize
    }
}

/// Whole configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub vessel: VesselParams,
    pub environment: Environment,
    pub sensors: SensorNoiseConfig,
    pub filter: FilterConfig,
    pub trial: TrialSettings,
    /// Geodetic anchor of the local ENU frame.
    pub origin: GeoPoint,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            vessel: VesselParams::default(),
            environment: Environment::default(),
            sensors: SensorNoiseConfig::default(),
            filter: FilterConfig::default(),
            trial: TrialSettings::default(),
            origin: GeoPoint::new(53.3846, -1.6183, 0.0),
        }
    }
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let cfg = Self::from_json(&text).map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.vessel.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.environment.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.sensors.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.filter.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.origin.validate().map_err(|e| ConfigError::Invalid(format!("origin: {e}")))?;
        self.trial.validate()?;
        for (name, rate) in [("gps_rate", self.sensors.gps_rate), ("imu_rate", self.sensors.imu_rate)] {
            let ratio = 1.0 / (rate * self.trial.dt);
            if (ratio - ratio.round()).abs() > 1e-6 || ratio.round() < 1.0 {
                return Err(ConfigError::Invalid(format!("{name} {rate} Hz is not a whole divisor of the {} s step", self.trial.dt)));
            }
        }
        Ok(())
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = SimConfig::default();
        cfg.validate().unwrap();
        let back = SimConfig::from_json(&cfg.to_pretty_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg = SimConfig::from_json(r#"{"vessel": {"mass": 6.0}, "trial": {"side": "port"}}"#).unwrap();
        assert_eq!(cfg.vessel.mass, 6.0);
        assert_eq!(cfg.vessel.length, 0.72);
        assert_eq!(cfg.trial.side, Side::Port);
        assert_eq!(cfg.sensors.gps_std, 1.5);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(SimConfig::from_json(r#"{"vessel": {"masss": 6.0}}"#).is_err());
    }

    #[test]
    fn short_steady_hold_rejected() {
        let mut cfg = SimConfig::default();
        cfg.trial.steady_hold = 59.0;
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(m)) if m.contains("steady_hold")));
    }

    #[test]
    fn sensor_rates_must_divide_step() {
        let mut cfg = SimConfig::default();
        cfg.sensors.imu_rate = 30.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn execute_index_covers_spin_up_and_hold() {
        assert_eq!(TrialSettings::default().execute_index(), 3500);
    }
}
