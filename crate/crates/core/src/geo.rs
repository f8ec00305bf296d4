//! Local frames, geodetic conversion and angle helpers.
//!
//! Internally everything is ENU with yaw measured counterclockwise from East.
//! Human-facing reports use compass headings (clockwise from North); see
//! [`compass_from_enu_yaw`] and [`enu_yaw_from_compass`].

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

/// WGS-84 equatorial radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_378_137.0;

/// Largest latitude offset (degrees) accepted by the local tangent approximation.
pub const MAX_LOCAL_LAT_OFFSET_DEG: f64 = 1.0;

/// Smallest distance from ±π/2 tolerated by [`euler_rate_matrix`].
pub const PITCH_SINGULARITY_MARGIN: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("latitude {0} deg outside [-90, 90]")]
    InvalidLatitude(f64),
    #[error("longitude {0} deg outside [-180, 180]")]
    InvalidLongitude(f64),
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("point is {offset_deg} deg of latitude from origin; local tangent approximation limited to 1 deg")]
    OutsideLocalDomain { offset_deg: f64 },
    #[error("pitch {pitch} rad too close to the +/-pi/2 Euler singularity")]
    PitchSingularity { pitch: f64 },
    #[error("heading series jumps by {jump} rad between samples {index} and {next}; sampling too sparse to unwrap", next = .index + 1)]
    HeadingDiscontinuity { index: usize, jump: f64 },
}

/// Geodetic position (WGS-84 degrees, meters above the ellipsoid).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint<T = f64> {
    pub lat: T,
    pub lon: T,
    pub alt: T,
}

impl<T: Real> GeoPoint<T> {
    pub fn new(lat: T, lon: T, alt: T) -> Self {
        Self { lat, lon, alt }
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        if !(self.lat.is_finite() && self.lon.is_finite() && self.alt.is_finite()) {
            return Err(GeoError::NonFinite);
        }
        if self.lat.abs() > T::c(90.0) {
            return Err(GeoError::InvalidLatitude(self.lat.f64()));
        }
        if self.lon.abs() > T::c(180.0) {
            return Err(GeoError::InvalidLongitude(self.lon.f64()));
        }
        Ok(())
    }
}

/// Pose in the local ENU frame. Angles in radians, ZYX convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnuPose<T = f64> {
    pub x: T,
    pub y: T,
    pub z: T,
    pub roll: T,
    pub pitch: T,
    pub yaw: T,
}

impl<T: Real> EnuPose<T> {
    /// Build a pose with roll and yaw wrapped and pitch clamped to [-π/2, π/2].
    pub fn new(x: T, y: T, z: T, roll: T, pitch: T, yaw: T) -> Self {
        let half_pi = T::frac_pi_2();
        Self {
            x,
            y,
            z,
            roll: wrap_angle(roll),
            pitch: wrap_angle(pitch).max(-half_pi).min(half_pi),
            yaw: wrap_angle(yaw),
        }
    }

    pub fn planar(x: T, y: T, yaw: T) -> Self {
        Self::new(x, y, T::zero(), T::zero(), T::zero(), yaw)
    }
}

/// Equirectangular local-tangent conversion of `p` relative to `origin`.
pub fn enu_from_geodetic<T: Real>(origin: &GeoPoint<T>, p: &GeoPoint<T>) -> Result<[T; 3], GeoError> {
    origin.validate()?;
    p.validate()?;
    let dlat = p.lat - origin.lat;
    if dlat.abs() >= T::c(MAX_LOCAL_LAT_OFFSET_DEG) {
        return Err(GeoError::OutsideLocalDomain { offset_deg: dlat.f64() });
    }
    let deg = T::pi() / T::c(180.0);
    let re = T::c(EARTH_RADIUS_M);
    let x = (p.lon - origin.lon) * deg * re * (origin.lat * deg).cos();
    let y = dlat * deg * re;
    Ok([x, y, p.alt - origin.alt])
}

/// Inverse of [`enu_from_geodetic`] around the same origin.
pub fn geodetic_from_enu<T: Real>(origin: &GeoPoint<T>, enu: [T; 3]) -> Result<GeoPoint<T>, GeoError> {
    origin.validate()?;
    let deg = T::pi() / T::c(180.0);
    let re = T::c(EARTH_RADIUS_M);
    let cos_lat = (origin.lat * deg).cos();
    if cos_lat <= T::c(1e-12) {
        return Err(GeoError::OutsideLocalDomain { offset_deg: 0.0 });
    }
    let p = GeoPoint {
        lat: origin.lat + enu[1] / (re * deg),
        lon: origin.lon + enu[0] / (re * deg * cos_lat),
        alt: origin.alt + enu[2],
    };
    p.validate()?;
    if (p.lat - origin.lat).abs() >= T::c(MAX_LOCAL_LAT_OFFSET_DEG) {
        return Err(GeoError::OutsideLocalDomain { offset_deg: (p.lat - origin.lat).f64() });
    }
    Ok(p)
}

/// Wrap an angle into (−π, π].
pub fn wrap_angle<T: Real>(a: T) -> T {
    let two_pi = T::two_pi();
    let pi = T::pi();
    if a > -pi && a <= pi {
        return a;
    }
    // rem_euclid into [0, 2π), then shift.
    let mut r = a - two_pi * (a / two_pi).floor();
    if r > pi {
        r -= two_pi;
    }
    if r <= -pi {
        r += two_pi;
    }
    r
}

/// Remove 2π jumps from a wrapped heading series.
pub fn unwrap_heading<T: Real>(series: &[T]) -> Result<Vec<T>, GeoError> {
    let mut out = Vec::with_capacity(series.len());
    let Some(&first) = series.first() else {
        return Ok(out);
    };
    out.push(first);
    let mut acc = first;
    for (i, w) in series.windows(2).enumerate() {
        let step = wrap_angle(w[1] - w[0]);
        if step.abs() >= T::pi() {
            return Err(GeoError::HeadingDiscontinuity { index: i, jump: step.f64() });
        }
        acc += step;
        out.push(acc);
    }
    Ok(out)
}

fn rot_x<T: Real>(a: T) -> Matrix3<T> {
    let (s, c) = a.sin_cos();
    let (o, z) = (T::one(), T::zero());
    Matrix3::new(o, z, z, z, c, -s, z, s, c)
}

fn rot_y<T: Real>(a: T) -> Matrix3<T> {
    let (s, c) = a.sin_cos();
    let (o, z) = (T::one(), T::zero());
    Matrix3::new(c, z, s, z, o, z, -s, z, c)
}

fn rot_z<T: Real>(a: T) -> Matrix3<T> {
    let (s, c) = a.sin_cos();
    let (o, z) = (T::one(), T::zero());
    Matrix3::new(c, -s, z, s, c, z, z, z, o)
}

/// Body-to-world rotation, ZYX intrinsic: `Rz(yaw) · Ry(pitch) · Rx(roll)`.
pub fn rotation_world_from_body<T: Real>(roll: T, pitch: T, yaw: T) -> Matrix3<T> {
    rot_z(yaw) * rot_y(pitch) * rot_x(roll)
}

/// Partial derivatives of [`rotation_world_from_body`] with respect to
/// roll, pitch and yaw, in that order.
pub fn rotation_partials<T: Real>(roll: T, pitch: T, yaw: T) -> [Matrix3<T>; 3] {
    let (rz, ry, rx) = (rot_z(yaw), rot_y(pitch), rot_x(roll));
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    let z = T::zero();
    let drx = Matrix3::new(z, z, z, z, -sr, -cr, z, cr, -sr);
    let dry = Matrix3::new(-sp, z, cp, z, z, z, -cp, z, -sp);
    let drz = Matrix3::new(-sy, -cy, z, cy, -sy, z, z, z, z);
    [rz * ry * drx, rz * dry * rx, drz * ry * rx]
}

fn check_pitch<T: Real>(pitch: T) -> Result<(), GeoError> {
    if !pitch.is_finite() || pitch.abs() >= T::frac_pi_2() - T::c(PITCH_SINGULARITY_MARGIN) {
        return Err(GeoError::PitchSingularity { pitch: pitch.f64() });
    }
    Ok(())
}

/// Matrix mapping body rates (p, q, r) to Euler rates (roll, pitch, yaw).
pub fn euler_rate_matrix<T: Real>(roll: T, pitch: T) -> Result<Matrix3<T>, GeoError> {
    check_pitch(pitch)?;
    let (sr, cr) = roll.sin_cos();
    let (cp, tp) = (pitch.cos(), pitch.tan());
    let (o, z) = (T::one(), T::zero());
    Ok(Matrix3::new(o, sr * tp, cr * tp, z, cr, -sr, z, sr / cp, cr / cp))
}

/// Partial derivatives of [`euler_rate_matrix`] with respect to roll and pitch.
pub fn euler_rate_partials<T: Real>(roll: T, pitch: T) -> Result<[Matrix3<T>; 2], GeoError> {
    check_pitch(pitch)?;
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let tp = sp / cp;
    let sec2 = T::one() / (cp * cp);
    let z = T::zero();
    let d_roll = Matrix3::new(z, cr * tp, -sr * tp, z, -sr, -cr, z, cr / cp, -sr / cp);
    let d_pitch = Matrix3::new(
        z,
        sr * sec2,
        cr * sec2,
        z,
        z,
        z,
        z,
        sr * sp * sec2,
        cr * sp * sec2,
    );
    Ok([d_roll, d_pitch])
}

/// ENU yaw (CCW from East, radians) to compass heading (CW from North, degrees in [0, 360)).
pub fn compass_from_enu_yaw<T: Real>(yaw: T) -> T {
    let deg = T::c(90.0) - yaw * T::c(180.0) / T::pi();
    let full = T::c(360.0);
    let h = deg - full * (deg / full).floor();
    if h >= full {
        h - full
    } else {
        h
    }
}

/// Compass heading in degrees to ENU yaw in (−π, π].
pub fn enu_yaw_from_compass<T: Real>(heading_deg: T) -> T {
    wrap_angle((T::c(90.0) - heading_deg) * T::pi() / T::c(180.0))
}
