//! Extended Kalman filter over a 12-dimensional pose and velocity state.
//!
//! State layout: `[x, y, z, roll, pitch, yaw, u, v, w, p, q, r]`, with
//! position in the local ENU frame, ZYX Euler angles, and linear and angular
//! velocities in the body frame. The motion model is constant-velocity; all
//! uncertainty about accelerations enters through the process noise.
//!
//! Measurements observe an arbitrary ordered subset of the state
//! ([`Measurement::indices`]), so GPS and IMU each correct only the
//! components they see.

use nalgebra::{Const, DMatrix, DVector, Dyn, OMatrix, SMatrix, SVector, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::dynamics::{Environment, SimState};
use crate::geo::{enu_from_geodetic, euler_rate_matrix, euler_rate_partials, rotation_partials, rotation_world_from_body, wrap_angle, GeoError, GeoPoint};
use crate::scalar::Real;
use crate::sensors::{GpsFix, ImuReading};

pub const STATE_DIM: usize = 12;

pub const X: usize = 0;
pub const Y: usize = 1;
pub const Z: usize = 2;
pub const ROLL: usize = 3;
pub const PITCH: usize = 4;
pub const YAW: usize = 5;
pub const VX: usize = 6;
pub const VY: usize = 7;
pub const VZ: usize = 8;
pub const ROLL_RATE: usize = 9;
pub const PITCH_RATE: usize = 10;
pub const YAW_RATE: usize = 11;

/// State components that are angles and must stay wrapped.
pub const ANGLE_INDICES: [usize; 3] = [ROLL, PITCH, YAW];

pub type StateVector<T> = SVector<T, STATE_DIM>;
pub type Covariance<T> = SMatrix<T, STATE_DIM, STATE_DIM>;

type Selection<T> = OMatrix<T, Dyn, Const<STATE_DIM>>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("negative prediction interval {0} s")]
    NegativeInterval(f64),
    #[error("malformed measurement: {0}")]
    BadMeasurement(String),
    #[error("innovation covariance is not invertible")]
    SingularInnovation,
    #[error("measurement rejected by innovation gate (d2 = {distance2:.3} > {threshold:.3})")]
    Gated { distance2: f64, threshold: f64 },
    #[error("invalid filter configuration: {0}")]
    InvalidConfig(String),
}

/// Filter memory: time, mean and covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EkfState<T: Real = f64> {
    pub t: T,
    pub x: StateVector<T>,
    pub p: Covariance<T>,
}

impl<T: Real> EkfState<T> {
    pub fn new(t: T, x: StateVector<T>, p: Covariance<T>) -> Self {
        let mut s = Self { t, x, p };
        wrap_state_angles(&mut s.x);
        s
    }

    /// Largest absolute asymmetry and smallest eigenvalue of `P`.
    pub fn covariance_health(&self) -> (T, T) {
        covariance_health(&self.p)
    }
}

pub fn covariance_health<T: Real>(p: &Covariance<T>) -> (T, T) {
    let asym = (p - p.transpose()).abs().max();
    let sym = (p + p.transpose()) * T::c(0.5);
    let min_eig = SymmetricEigen::new(sym).eigenvalues.min();
    (asym, min_eig)
}

fn wrap_state_angles<T: Real>(x: &mut StateVector<T>) {
    for i in ANGLE_INDICES {
        x[i] = wrap_angle(x[i]);
    }
}

fn symmetrize<T: Real>(p: &Covariance<T>) -> Covariance<T> {
    (p + p.transpose()) * T::c(0.5)
}

/// Process noise (per second) and initial covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessConfig<T: Real = f64> {
    pub q: Covariance<T>,
    pub p0: Covariance<T>,
}

/// Serializable filter settings, including stream-handling policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Diagonal of the process noise spectral density, per second.
    pub q_diag: [f64; STATE_DIM],
    pub p0_diag: [f64; STATE_DIM],
    /// Reject measurements whose Mahalanobis distance exceeds the gate.
    pub gate_enabled: bool,
    /// Gate width in sigmas, converted to a chi-square quantile per measurement dimension.
    pub gate_sigma: f64,
    /// Measurements older than the filter clock by more than this are dropped, seconds.
    pub stale_tolerance: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            q_diag: [1e-4, 1e-4, 1e-4, 1e-4, 1e-4, 1e-4, 1e-2, 1e-2, 1e-2, 1e-2, 1e-2, 1e-2],
            p0_diag: [10.0, 10.0, 10.0, 0.5, 0.5, 0.5, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            gate_enabled: false,
            gate_sigma: 3.0,
            stale_tolerance: 0.5,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        if self.q_diag.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(FilterError::InvalidConfig("q_diag entries must be finite and >= 0".into()));
        }
        if self.p0_diag.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(FilterError::InvalidConfig("p0_diag entries must be finite and > 0".into()));
        }
        if !(self.gate_sigma.is_finite() && self.gate_sigma > 0.0) {
            return Err(FilterError::InvalidConfig("gate_sigma must be > 0".into()));
        }
        if !(self.stale_tolerance.is_finite() && self.stale_tolerance >= 0.0) {
            return Err(FilterError::InvalidConfig("stale_tolerance must be >= 0".into()));
        }
        Ok(())
    }

    pub fn process<T: Real>(&self) -> ProcessConfig<T> {
        ProcessConfig {
            q: Covariance::from_diagonal(&StateVector::from_fn(|i, _| T::c(self.q_diag[i]))),
            p0: Covariance::from_diagonal(&StateVector::from_fn(|i, _| T::c(self.p0_diag[i]))),
        }
    }

    /// Chi-square threshold for a `dim`-dimensional innovation, if gating is on.
    pub fn gate_threshold(&self, dim: usize) -> Option<f64> {
        if !self.gate_enabled || dim == 0 {
            return None;
        }
        let prob = statrs::function::erf::erf(self.gate_sigma / std::f64::consts::SQRT_2);
        let chi = ChiSquared::new(dim as f64).expect("positive dof");
        Some(chi.inverse_cdf(prob))
    }
}

/// Where a measurement came from; orders fusion at equal timestamps (GPS first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Source {
    Gps,
    Imu,
    Other,
}

/// Timestamped observation of a subset of the state.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement<T: Real = f64> {
    pub t: T,
    pub source: Source,
    /// Observed state indices, strictly increasing.
    pub indices: Vec<usize>,
    pub z: DVector<T>,
    pub r: DMatrix<T>,
    pub is_angle: Vec<bool>,
}

impl<T: Real> Measurement<T> {
    pub fn new(t: T, source: Source, indices: Vec<usize>, z: DVector<T>, r: DMatrix<T>) -> Result<Self, FilterError> {
        let is_angle = indices.iter().map(|i| ANGLE_INDICES.contains(i)).collect();
        let m = Self { t, source, indices, z, r, is_angle };
        m.validate()?;
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        let bad = |s: &str| Err(FilterError::BadMeasurement(s.to_string()));
        let n = self.indices.len();
        if n == 0 {
            return bad("no observed indices");
        }
        if self.indices.windows(2).any(|w| w[0] >= w[1]) || self.indices.iter().any(|&i| i >= STATE_DIM) {
            return bad("indices must be strictly increasing and < 12");
        }
        if self.z.len() != n || self.r.shape() != (n, n) || self.is_angle.len() != n {
            return bad("z, R and angle flags must match the index count");
        }
        if !self.t.is_finite() || self.z.iter().any(|v| !v.is_finite()) || self.r.iter().any(|v| !v.is_finite()) {
            return bad("non-finite values");
        }
        if (&self.r - self.r.transpose()).abs().max() > T::c(1e-9) * (T::one() + self.r.abs().max()) {
            return bad("R is not symmetric");
        }
        if self.r.clone().cholesky().is_none() {
            return bad("R is not positive definite");
        }
        Ok(())
    }

    /// Selection matrix `H` picking the observed rows out of the state.
    pub fn selection(&self) -> Selection<T> {
        let mut h = Selection::zeros(self.dim());
        for (row, &col) in self.indices.iter().enumerate() {
            h[(row, col)] = T::one();
        }
        h
    }
}

/// Constant-velocity kinematic motion model.
pub fn f_kinematic<T: Real>(x: &StateVector<T>, dt: T) -> Result<StateVector<T>, FilterError> {
    if dt < T::zero() {
        return Err(FilterError::NegativeInterval(dt.f64()));
    }
    let (roll, pitch, yaw) = (x[ROLL], x[PITCH], x[YAW]);
    let rot = rotation_world_from_body(roll, pitch, yaw);
    let rates = euler_rate_matrix(roll, pitch)?;
    let vel = Vector3::new(x[VX], x[VY], x[VZ]);
    let omega = Vector3::new(x[ROLL_RATE], x[PITCH_RATE], x[YAW_RATE]);
    let dpos = rot * vel * dt;
    let dang = rates * omega * dt;
    let mut out = *x;
    for k in 0..3 {
        out[X + k] += dpos[k];
        out[ROLL + k] += dang[k];
    }
    wrap_state_angles(&mut out);
    Ok(out)
}

/// Analytic Jacobian of [`f_kinematic`] with respect to the state.
pub fn jacobian_f<T: Real>(x: &StateVector<T>, dt: T) -> Result<Covariance<T>, FilterError> {
    if dt < T::zero() {
        return Err(FilterError::NegativeInterval(dt.f64()));
    }
    let (roll, pitch, yaw) = (x[ROLL], x[PITCH], x[YAW]);
    let rot = rotation_world_from_body(roll, pitch, yaw);
    let d_rot = rotation_partials(roll, pitch, yaw);
    let rates = euler_rate_matrix(roll, pitch)?;
    let d_rates = euler_rate_partials(roll, pitch)?;
    let vel = Vector3::new(x[VX], x[VY], x[VZ]);
    let omega = Vector3::new(x[ROLL_RATE], x[PITCH_RATE], x[YAW_RATE]);

    let mut f = Covariance::identity();
    // Position rows.
    for (k, d) in d_rot.iter().enumerate() {
        let col = d * vel * dt;
        for row in 0..3 {
            f[(X + row, ROLL + k)] = col[row];
        }
    }
    f.fixed_view_mut::<3, 3>(X, VX).copy_from(&(rot * dt));
    // Orientation rows; yaw does not enter the Euler-rate matrix.
    for (k, d) in d_rates.iter().enumerate() {
        let col = d * omega * dt;
        for row in 0..3 {
            f[(ROLL + row, ROLL + k)] += col[row];
        }
    }
    f.fixed_view_mut::<3, 3>(ROLL, ROLL_RATE).copy_from(&(rates * dt));
    Ok(f)
}

/// Propagate mean and covariance forward by `dt`: `x ← f(x)`, `P ← F P Fᵀ + Q·dt`.
pub fn predict<T: Real>(s: &EkfState<T>, dt: T, cfg: &ProcessConfig<T>) -> Result<EkfState<T>, FilterError> {
    if dt < T::zero() {
        return Err(FilterError::NegativeInterval(dt.f64()));
    }
    if dt == T::zero() {
        return Ok(s.clone());
    }
    let f = jacobian_f(&s.x, dt)?;
    let x = f_kinematic(&s.x, dt)?;
    let p = f * s.p * f.transpose() + cfg.q * dt;
    Ok(EkfState { t: s.t + dt, x, p: symmetrize(&p) })
}

/// Innovation `z − H x` with angle components wrapped into (−π, π].
pub fn innovation<T: Real>(s: &EkfState<T>, m: &Measurement<T>) -> DVector<T> {
    DVector::from_fn(m.dim(), |row, _| {
        let d = m.z[row] - s.x[m.indices[row]];
        if m.is_angle[row] {
            wrap_angle(d)
        } else {
            d
        }
    })
}

/// Joseph-form covariance update `(I − K H) P (I − K H)ᵀ + K R Kᵀ`.
///
/// Valid for any gain, optimal or not.
pub fn joseph_update<T: Real>(
    p: &Covariance<T>,
    k: &OMatrix<T, Const<STATE_DIM>, Dyn>,
    h: &OMatrix<T, Dyn, Const<STATE_DIM>>,
    r: &DMatrix<T>,
) -> Covariance<T> {
    let i_kh: Covariance<T> = Covariance::identity() - k * h;
    i_kh * p * i_kh.transpose() + k * r * k.transpose()
}

/// Kalman correction with the given measurement. `gate` is an optional chi-square threshold.
pub fn correct<T: Real>(s: &EkfState<T>, m: &Measurement<T>, gate: Option<T>) -> Result<EkfState<T>, FilterError> {
    m.validate()?;
    let h = m.selection();
    let y = innovation(s, m);
    let pht: OMatrix<T, Const<STATE_DIM>, Dyn> = s.p * h.transpose();
    let innov_cov: DMatrix<T> = &h * &pht + &m.r;
    let innov_cov = (&innov_cov + innov_cov.transpose()) * T::c(0.5);
    let s_inv = innov_cov.cholesky().ok_or(FilterError::SingularInnovation)?.inverse();
    if let Some(threshold) = gate {
        let d2 = (y.transpose() * &s_inv * &y)[(0, 0)];
        if d2 > threshold {
            return Err(FilterError::Gated { distance2: d2.f64(), threshold: threshold.f64() });
        }
    }
    let k: OMatrix<T, Const<STATE_DIM>, Dyn> = pht * s_inv;
    let mut x = s.x + &k * y;
    wrap_state_angles(&mut x);
    let p = joseph_update(&s.p, &k, &h, &m.r);
    Ok(EkfState { t: s.t, x, p: symmetrize(&p) })
}

/// GPS fix as a position measurement in the ENU frame of `origin`.
pub fn fuse_gps<T: Real>(fix: &GpsFix, origin: &GeoPoint) -> Result<Measurement<T>, FilterError> {
    if !fix.valid {
        return Err(FilterError::BadMeasurement("invalid GPS fix".into()));
    }
    if !(fix.horizontal_std.is_finite() && fix.horizontal_std > 0.0) {
        return Err(FilterError::BadMeasurement("GPS std must be > 0".into()));
    }
    let enu = enu_from_geodetic(origin, &fix.point)?;
    let var = fix.horizontal_std * fix.horizontal_std;
    Measurement::new(
        T::c(fix.t),
        Source::Gps,
        vec![X, Y, Z],
        DVector::from_iterator(3, enu.iter().map(|v| T::c(*v))),
        DMatrix::from_diagonal(&DVector::from_vec(vec![T::c(var), T::c(var), T::c(4.0 * var)])),
    )
}

/// IMU attitude and body rates as a six-component measurement.
pub fn fuse_imu<T: Real>(r: &ImuReading) -> Result<Measurement<T>, FilterError> {
    if !r.is_finite() || r.orientation_std <= 0.0 || r.rate_std <= 0.0 {
        return Err(FilterError::BadMeasurement("IMU reading must be finite with positive stds".into()));
    }
    let a = r.orientation_std * r.orientation_std;
    let w = r.rate_std * r.rate_std;
    Measurement::new(
        T::c(r.t),
        Source::Imu,
        vec![ROLL, PITCH, YAW, ROLL_RATE, PITCH_RATE, YAW_RATE],
        DVector::from_vec([r.roll, r.pitch, r.yaw, r.rate_x, r.rate_y, r.rate_z].map(T::c).to_vec()),
        DMatrix::from_diagonal(&DVector::from_vec([a, a, a, w, w, w].map(T::c).to_vec())),
    )
}

/// What happened to one measurement in the stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Disposition {
    Fused,
    /// Older than the filter clock beyond the tolerance; not applied.
    Stale,
    /// Rejected by the innovation gate; the state was still predicted to its time.
    Gated,
}

/// Online filter: owns the state and applies the stream-ordering policy.
#[derive(Debug, Clone)]
pub struct LocalizationFilter<T: Real = f64> {
    state: EkfState<T>,
    process: ProcessConfig<T>,
    stale_tolerance: T,
    config: FilterConfig,
    pub fused: usize,
    pub stale: usize,
    pub gated: usize,
}

impl<T: Real> LocalizationFilter<T> {
    pub fn new(init: EkfState<T>, cfg: &FilterConfig) -> Result<Self, FilterError> {
        cfg.validate()?;
        Ok(Self {
            state: init,
            process: cfg.process(),
            stale_tolerance: T::c(cfg.stale_tolerance),
            config: cfg.clone(),
            fused: 0,
            stale: 0,
            gated: 0,
        })
    }

    /// Start at time `t` with mean `x` and the configured initial covariance.
    pub fn with_prior(t: T, x: StateVector<T>, cfg: &FilterConfig) -> Result<Self, FilterError> {
        Self::new(EkfState::new(t, x, cfg.process::<T>().p0), cfg)
    }

    pub fn state(&self) -> &EkfState<T> {
        &self.state
    }

    /// Predict forward to `t`; a no-op if `t` is not ahead of the filter clock.
    pub fn predict_to(&mut self, t: T) -> Result<(), FilterError> {
        if t > self.state.t {
            self.state = predict(&self.state, t - self.state.t, &self.process)?;
        }
        Ok(())
    }

    /// Prediction of the current state to `t` without modifying the filter.
    pub fn peek(&self, t: T) -> Result<EkfState<T>, FilterError> {
        if t > self.state.t {
            predict(&self.state, t - self.state.t, &self.process)
        } else {
            Ok(self.state.clone())
        }
    }

    pub fn process(&mut self, m: &Measurement<T>) -> Result<Disposition, FilterError> {
        if m.t < self.state.t - self.stale_tolerance {
            self.stale += 1;
            return Ok(Disposition::Stale);
        }
        // Slightly late measurements are applied at the current filter time.
        self.predict_to(m.t)?;
        let gate = self.config.gate_threshold(m.dim()).map(T::c);
        match correct(&self.state, m, gate) {
            Ok(next) => {
                self.state = next;
                self.fused += 1;
                Ok(Disposition::Fused)
            }
            Err(FilterError::Gated { .. }) => {
                self.gated += 1;
                Ok(Disposition::Gated)
            }
            Err(e) => Err(e),
        }
    }
}

/// Result of running a whole measurement stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamOutput<T: Real = f64> {
    /// Posterior after each applied (fused or gated) measurement.
    pub states: Vec<EkfState<T>>,
    pub fused: usize,
    pub stale_dropped: usize,
    pub gate_rejected: usize,
}

/// Run the filter over time-ordered measurements.
pub fn process_stream<T: Real>(init: &EkfState<T>, measurements: &[Measurement<T>], cfg: &FilterConfig) -> Result<StreamOutput<T>, FilterError> {
    let mut filter = LocalizationFilter::new(init.clone(), cfg)?;
    let mut states = Vec::with_capacity(measurements.len());
    for m in measurements {
        if filter.process(m)? != Disposition::Stale {
            states.push(filter.state().clone());
        }
    }
    Ok(StreamOutput { states, fused: filter.fused, stale_dropped: filter.stale, gate_rejected: filter.gated })
}

/// Stable time ordering with GPS before IMU at equal timestamps.
pub fn sort_measurements<T: Real>(ms: &mut [Measurement<T>]) {
    ms.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap_or(std::cmp::Ordering::Equal).then(a.source.cmp(&b.source)));
}

/// Ground truth expressed in the filter's state layout.
///
/// The filter's body velocities are over ground, so the ambient current is
/// rotated into the body frame and added to the water-relative velocity.
pub fn state_from_truth<T: Real>(truth: &SimState<T>, env: &Environment<T>) -> StateVector<T> {
    let (s, c) = truth.yaw.sin_cos();
    let u = truth.u + c * env.current_east + s * env.current_north;
    let v = truth.v - s * env.current_east + c * env.current_north;
    let z = T::zero();
    StateVector::from_column_slice(&[truth.x, truth.y, z, z, z, truth.yaw, u, v, z, z, z, truth.r])
}

/// Normalized estimation error squared of `est` against a true state.
pub fn nees<T: Real>(est: &EkfState<T>, truth: &StateVector<T>) -> Result<T, FilterError> {
    let mut e = truth - est.x;
    wrap_state_angles(&mut e);
    let p_inv = est.p.cholesky().ok_or(FilterError::SingularInnovation)?.inverse();
    Ok((e.transpose() * p_inv * e)[(0, 0)])
}
