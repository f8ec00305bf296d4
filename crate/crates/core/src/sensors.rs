//! Noisy GPS and IMU observations generated from ground truth.
//!
//! The IMU model emits fused attitude plus body rates, which is what the
//! localization filter consumes. Ground truth is planar, so roll and pitch
//! readings are pure noise around zero.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::SimState;
use crate::geo::{geodetic_from_enu, wrap_angle, GeoError, GeoPoint};

/// Smallest standard deviation a sensor reports, so downstream covariances stay positive definite.
pub const MIN_REPORTED_STD: f64 = 1e-3;
/// Same floor for IMU angular quantities, radians or rad/s.
pub const MIN_REPORTED_ANGLE_STD: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensorError {
    #[error("invalid sensor config: {0}")]
    InvalidConfig(String),
    #[error("non-finite ground truth at t = {0}")]
    NonFiniteTruth(f64),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsFix {
    pub t: f64,
    pub point: GeoPoint,
    /// One-sigma horizontal error per axis, meters.
    pub horizontal_std: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuReading {
    pub t: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub rate_x: f64,
    pub rate_y: f64,
    pub rate_z: f64,
    pub orientation_std: f64,
    pub rate_std: f64,
}

impl ImuReading {
    pub fn is_finite(&self) -> bool {
        [self.t, self.roll, self.pitch, self.yaw, self.rate_x, self.rate_y, self.rate_z, self.orientation_std, self.rate_std]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Sensor rates and noise levels. Defaults are conventional values for a
/// hobby-grade GPS and a fused-attitude IMU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorNoiseConfig {
    pub gps_rate: f64,
    pub gps_std: f64,
    pub gps_dropout_prob: f64,
    pub imu_rate: f64,
    pub imu_yaw_std: f64,
    pub imu_rate_std: f64,
    /// Gyro bias random walk, rad/s/√s.
    pub gyro_bias_walk_std: f64,
    /// Standard deviation of per-sample timestamp jitter, seconds.
    pub timestamp_jitter_std: f64,
    /// Relative sensor clock rate error (reported t = true t · (1 + skew)).
    pub clock_skew: f64,
}

impl Default for SensorNoiseConfig {
    fn default() -> Self {
        Self::low_cost()
    }
}

impl SensorNoiseConfig {
    pub fn low_cost() -> Self {
        Self {
            gps_rate: 1.0,
            gps_std: 1.5,
            gps_dropout_prob: 0.0,
            imu_rate: 50.0,
            imu_yaw_std: 0.035,
            imu_rate_std: 0.01,
            gyro_bias_walk_std: 0.0,
            timestamp_jitter_std: 0.0,
            clock_skew: 0.0,
        }
    }

    pub fn rtk() -> Self {
        Self { gps_std: 0.02, ..Self::low_cost() }
    }

    pub fn noiseless() -> Self {
        Self { gps_std: 0.0, imu_yaw_std: 0.0, imu_rate_std: 0.0, ..Self::low_cost() }
    }

    pub fn validate(&self) -> Result<(), SensorError> {
        let bad = |m: &str| Err(SensorError::InvalidConfig(m.to_string()));
        if !(self.gps_rate > 0.0 && self.gps_rate.is_finite() && self.imu_rate > 0.0 && self.imu_rate.is_finite()) {
            return bad("sensor rates must be finite and > 0");
        }
        let stds = [self.gps_std, self.imu_yaw_std, self.imu_rate_std, self.gyro_bias_walk_std, self.timestamp_jitter_std];
        if stds.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad("standard deviations must be finite and >= 0");
        }
        if !(0.0..1.0).contains(&self.gps_dropout_prob) {
            return bad("gps_dropout_prob must lie in [0, 1)");
        }
        if !(self.clock_skew.is_finite() && self.clock_skew.abs() < 0.5) {
            return bad("clock_skew must be finite with |skew| < 0.5");
        }
        Ok(())
    }

    fn stamp<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> f64 {
        let mut s = t * (1.0 + self.clock_skew);
        if self.timestamp_jitter_std > 0.0 {
            s += gaussian(rng, self.timestamp_jitter_std);
        }
        s
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
    std * z
}

/// Gyro bias that evolves as a random walk between IMU samples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GyroBias {
    pub value: f64,
    pub last_t: Option<f64>,
}

impl GyroBias {
    fn advance<R: Rng + ?Sized>(&mut self, t: f64, walk_std: f64, rng: &mut R) {
        if let Some(prev) = self.last_t {
            let dt = (t - prev).max(0.0);
            if walk_std > 0.0 && dt > 0.0 {
                self.value += gaussian(rng, walk_std * dt.sqrt());
            }
        }
        self.last_t = Some(t);
    }
}

/// Draw a GPS fix for the truth state, or `None` on a simulated dropout.
pub fn sample_gps<R: Rng + ?Sized>(
    truth: &SimState,
    origin: &GeoPoint,
    cfg: &SensorNoiseConfig,
    rng: &mut R,
) -> Result<Option<GpsFix>, SensorError> {
    if !truth.is_finite() {
        return Err(SensorError::NonFiniteTruth(truth.t));
    }
    if cfg.gps_dropout_prob > 0.0 && rng.random::<f64>() < cfg.gps_dropout_prob {
        return Ok(None);
    }
    // Vertical error is twice the horizontal, matching the filter's GPS model.
    let east = truth.x + gaussian(rng, cfg.gps_std);
    let north = truth.y + gaussian(rng, cfg.gps_std);
    let up = gaussian(rng, 2.0 * cfg.gps_std);
    let point = geodetic_from_enu(origin, [east, north, up])?;
    Ok(Some(GpsFix {
        t: cfg.stamp(truth.t, rng),
        point,
        horizontal_std: cfg.gps_std.max(MIN_REPORTED_STD),
        valid: true,
    }))
}

/// Draw an IMU reading for the truth state, advancing the gyro bias.
pub fn sample_imu<R: Rng + ?Sized>(
    truth: &SimState,
    bias: &mut GyroBias,
    cfg: &SensorNoiseConfig,
    rng: &mut R,
) -> Result<ImuReading, SensorError> {
    if !truth.is_finite() {
        return Err(SensorError::NonFiniteTruth(truth.t));
    }
    bias.advance(truth.t, cfg.gyro_bias_walk_std, rng);
    let a = cfg.imu_yaw_std;
    let w = cfg.imu_rate_std;
    let roll = wrap_angle(gaussian(rng, a));
    let pitch = wrap_angle(gaussian(rng, a));
    let yaw = wrap_angle(truth.yaw + bias.value + gaussian(rng, a));
    let rate_x = gaussian(rng, w);
    let rate_y = gaussian(rng, w);
    let rate_z = truth.r + bias.value + gaussian(rng, w);
    Ok(ImuReading {
        t: cfg.stamp(truth.t, rng),
        roll,
        pitch,
        yaw,
        rate_x,
        rate_y,
        rate_z,
        orientation_std: a.max(MIN_REPORTED_ANGLE_STD),
        rate_std: w.max(MIN_REPORTED_ANGLE_STD),
    })
}

/// Fixed-rate sampling schedule; sample `k` is due at exactly `k / rate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleClock {
    rate: f64,
    next: u64,
}

impl SampleClock {
    pub fn new(rate: f64) -> Self {
        Self { rate, next: 0 }
    }

    /// Returns the nominal sample time if a sample is due at simulation time `t`.
    pub fn poll(&mut self, t: f64) -> Option<f64> {
        let nominal = self.next as f64 / self.rate;
        if t + 1e-9 >= nominal {
            self.next += 1;
            Some(nominal)
        } else {
            None
        }
    }
}
