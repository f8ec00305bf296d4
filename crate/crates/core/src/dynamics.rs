//! 3-DOF planar (surge, sway, yaw) model of a twin-hull differential-drive vessel.
//!
//! Body velocities `u`, `v` are relative to the water. A uniform ambient
//! current is added in the kinematics, so it drifts the vessel without
//! producing hydrodynamic force.
//!
//! ```text
//! m (u' - v r) = T_L + T_R - (d1 u + d2 u|u|) + f_dist
//! m (v' + u r) = -(s1 v + s2 v|v|)
//! I_z r'       = (T_R - T_L) h - (n1 r + n2 r|r|) + n_dist
//! x' = u cos(psi) - v sin(psi) + c_east
//! y' = u sin(psi) + v cos(psi) + c_north
//! ```

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::wrap_angle;
use crate::scalar::Real;

/// Default integration step, seconds.
pub const DEFAULT_DT: f64 = 0.02;
/// Largest accepted integration step, seconds.
pub const MAX_DT: f64 = 0.1;

const STEADY_WINDOW_S: f64 = 5.0;
const STEADY_TOL: f64 = 1e-4;
const STEADY_MAX_S: f64 = 600.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("invalid vessel parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },
    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),
    #[error("time step {0} s outside (0, 0.1]")]
    InvalidStep(f64),
    #[error("non-finite simulation state at t = {0}")]
    NonFiniteState(f64),
    #[error("throttle {0} outside [0, 1]")]
    InvalidThrottle(f64),
    #[error("surge speed did not settle within {0} simulated seconds")]
    NoSteadyState(f64),
}

/// Physical and configured constants of the vessel.
///
/// Length and beam are the measured hull dimensions. Every other default is a
/// tuning value chosen for a plausible desk-scale craft, not a measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VesselParams<T = f64> {
    pub length: T,
    pub beam: T,
    pub mass: T,
    pub yaw_inertia: T,
    /// Lateral offset of each thruster from the centerline.
    pub thruster_halfspan: T,
    /// Forward thrust of one thruster at full command, newtons.
    pub max_thrust: T,
    /// Normalized command magnitude that produces no thrust.
    pub deadband: T,
    /// Exponent of the thrust curve above the deadband.
    pub curve_exponent: T,
    /// Reverse thrust as a fraction of forward thrust at equal command.
    pub reverse_factor: T,
    pub drag_surge_lin: T,
    pub drag_surge_quad: T,
    pub drag_sway_lin: T,
    pub drag_sway_quad: T,
    pub drag_yaw_lin: T,
    pub drag_yaw_quad: T,
}

impl<T: Real> Default for VesselParams<T> {
    fn default() -> Self {
        Self {
            length: T::c(0.72),
            beam: T::c(0.41),
            mass: T::c(4.5),
            yaw_inertia: T::c(0.18),
            thruster_halfspan: T::c(0.16),
            max_thrust: T::c(35.0),
            deadband: T::c(0.05),
            curve_exponent: T::c(2.0),
            reverse_factor: T::c(0.78),
            drag_surge_lin: T::c(5.0),
            drag_surge_quad: T::c(25.0),
            drag_sway_lin: T::c(8.0),
            drag_sway_quad: T::c(40.0),
            drag_yaw_lin: T::c(6.0),
            drag_yaw_quad: T::c(5.0),
        }
    }
}

impl<T: Real> VesselParams<T> {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let positive: [(&'static str, T); 8] = [
            ("length", self.length),
            ("beam", self.beam),
            ("mass", self.mass),
            ("yaw_inertia", self.yaw_inertia),
            ("thruster_halfspan", self.thruster_halfspan),
            ("max_thrust", self.max_thrust),
            ("curve_exponent", self.curve_exponent),
            ("reverse_factor", self.reverse_factor),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > T::zero()) {
                return Err(DynamicsError::InvalidParam { name, reason: format!("{} must be > 0", v.f64()) });
            }
        }
        // Drag terms may individually be zero (pure linear or pure quadratic
        // damping) but each axis needs some resistance.
        let drag: [(&'static str, T, T); 3] = [
            ("drag_surge", self.drag_surge_lin, self.drag_surge_quad),
            ("drag_sway", self.drag_sway_lin, self.drag_sway_quad),
            ("drag_yaw", self.drag_yaw_lin, self.drag_yaw_quad),
        ];
        for (name, lin, quad) in drag {
            if !(lin.is_finite() && quad.is_finite()) || lin < T::zero() || quad < T::zero() || lin + quad <= T::zero() {
                return Err(DynamicsError::InvalidParam {
                    name,
                    reason: "coefficients must be >= 0 with a positive sum".into(),
                });
            }
        }
        if !(self.deadband >= T::zero() && self.deadband < T::c(0.2)) {
            return Err(DynamicsError::InvalidParam {
                name: "deadband",
                reason: format!("{} outside [0, 0.2)", self.deadband.f64()),
            });
        }
        if self.thruster_halfspan >= self.beam / T::c(2.0) {
            return Err(DynamicsError::InvalidParam {
                name: "thruster_halfspan",
                reason: "must be less than half the beam".into(),
            });
        }
        Ok(())
    }
}

/// Ground-truth planar state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState<T = f64> {
    pub t: T,
    pub x: T,
    pub y: T,
    pub yaw: T,
    pub u: T,
    pub v: T,
    pub r: T,
}

impl<T: Real> SimState<T> {
    pub fn at_rest(x: T, y: T, yaw: T) -> Self {
        Self { t: T::zero(), x, y, yaw: wrap_angle(yaw), u: T::zero(), v: T::zero(), r: T::zero() }
    }

    pub fn is_finite(&self) -> bool {
        [self.t, self.x, self.y, self.yaw, self.u, self.v, self.r].iter().all(|v| v.is_finite())
    }

    /// Speed through the water.
    pub fn speed(&self) -> T {
        (self.u * self.u + self.v * self.v).sqrt()
    }
}

/// Normalized per-thruster commands, clamped to [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThrusterCommand<T = f64> {
    pub left: T,
    pub right: T,
}

impl<T: Real> ThrusterCommand<T> {
    pub fn new(left: T, right: T) -> Self {
        Self { left: clamp_unit(left), right: clamp_unit(right) }
    }

    pub fn zero() -> Self {
        Self { left: T::zero(), right: T::zero() }
    }
}

/// Ambient current and random disturbance settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Environment<T = f64> {
    pub current_east: T,
    pub current_north: T,
    /// Standard deviation of the surge disturbance force drawn each step, N.
    pub disturbance_force_std: T,
    /// Standard deviation of the yaw disturbance torque drawn each step, N·m.
    pub disturbance_torque_std: T,
    pub seed: u64,
}

impl<T: Real> Default for Environment<T> {
    fn default() -> Self {
        Self {
            current_east: T::zero(),
            current_north: T::zero(),
            disturbance_force_std: T::zero(),
            disturbance_torque_std: T::zero(),
            seed: 0,
        }
    }
}

impl<T: Real> Environment<T> {
    pub fn calm() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.current_east.is_finite() && self.current_north.is_finite()) {
            return Err(DynamicsError::InvalidEnvironment("current must be finite".into()));
        }
        if !(self.disturbance_force_std >= T::zero() && self.disturbance_torque_std >= T::zero())
            || !(self.disturbance_force_std.is_finite() && self.disturbance_torque_std.is_finite())
        {
            return Err(DynamicsError::InvalidEnvironment("disturbance std must be finite and >= 0".into()));
        }
        Ok(())
    }

    fn has_disturbance(&self) -> bool {
        self.disturbance_force_std > T::zero() || self.disturbance_torque_std > T::zero()
    }
}

fn clamp_unit<T: Real>(v: T) -> T {
    if v.partial_cmp(&T::zero()).is_none() {
        return T::zero();
    }
    v.max(-T::one()).min(T::one())
}

/// Thrust of one thruster for a normalized command.
pub fn thrust_from_command<T: Real>(cmd: T, params: &VesselParams<T>) -> T {
    let cmd = clamp_unit(cmd);
    let mag = cmd.abs();
    if mag <= params.deadband {
        return T::zero();
    }
    let frac = (mag - params.deadband) / (T::one() - params.deadband);
    let forward = params.max_thrust * frac.powf(params.curve_exponent);
    if cmd > T::zero() {
        forward
    } else {
        -forward * params.reverse_factor
    }
}

/// Differential mixing: positive steer speeds up the right thruster and turns to port.
pub fn mix_differential<T: Real>(throttle: T, steer: T) -> ThrusterCommand<T> {
    ThrusterCommand::new(throttle - steer, throttle + steer)
}

#[derive(Clone, Copy)]
struct Forces<T> {
    left: T,
    right: T,
    surge_dist: T,
    yaw_dist: T,
}

fn derivative<T: Real>(s: &[T; 6], f: &Forces<T>, env: &Environment<T>, p: &VesselParams<T>) -> [T; 6] {
    let [_, _, psi, u, v, r] = *s;
    let (sp, cp) = psi.sin_cos();
    let surge_drag = p.drag_surge_lin * u + p.drag_surge_quad * u * u.abs();
    let sway_drag = p.drag_sway_lin * v + p.drag_sway_quad * v * v.abs();
    let yaw_drag = p.drag_yaw_lin * r + p.drag_yaw_quad * r * r.abs();
    [
        u * cp - v * sp + env.current_east,
        u * sp + v * cp + env.current_north,
        r,
        (f.left + f.right - surge_drag + f.surge_dist) / p.mass + v * r,
        -sway_drag / p.mass - u * r,
        ((f.right - f.left) * p.thruster_halfspan - yaw_drag + f.yaw_dist) / p.yaw_inertia,
    ]
}

fn axpy<T: Real>(base: &[T; 6], k: &[T; 6], h: T) -> [T; 6] {
    std::array::from_fn(|i| base[i] + k[i] * h)
}

/// Advance the vessel by one RK4 step. Disturbances are drawn once per step
/// and held constant across the RK4 stages.
pub fn step<T: Real, R: Rng + ?Sized>(
    state: &SimState<T>,
    cmd: &ThrusterCommand<T>,
    env: &Environment<T>,
    params: &VesselParams<T>,
    dt: T,
    rng: &mut R,
) -> Result<SimState<T>, DynamicsError> {
    if !(dt > T::zero() && dt <= T::c(MAX_DT)) {
        return Err(DynamicsError::InvalidStep(dt.f64()));
    }
    if !state.is_finite() {
        return Err(DynamicsError::NonFiniteState(state.t.f64()));
    }
    let (surge_dist, yaw_dist) = if env.has_disturbance() {
        let n = Normal::new(0.0, 1.0).expect("unit normal");
        let a: f64 = n.sample(rng);
        let b: f64 = n.sample(rng);
        (env.disturbance_force_std * T::c(a), env.disturbance_torque_std * T::c(b))
    } else {
        (T::zero(), T::zero())
    };
    let forces = Forces {
        left: thrust_from_command(cmd.left, params),
        right: thrust_from_command(cmd.right, params),
        surge_dist,
        yaw_dist,
    };
    let s0 = [state.x, state.y, state.yaw, state.u, state.v, state.r];
    let half = dt / T::c(2.0);
    let k1 = derivative(&s0, &forces, env, params);
    let k2 = derivative(&axpy(&s0, &k1, half), &forces, env, params);
    let k3 = derivative(&axpy(&s0, &k2, half), &forces, env, params);
    let k4 = derivative(&axpy(&s0, &k3, dt), &forces, env, params);
    let sixth = dt / T::c(6.0);
    let two = T::c(2.0);
    let s1: [T; 6] = std::array::from_fn(|i| s0[i] + sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]));
    let next = SimState {
        t: state.t + dt,
        x: s1[0],
        y: s1[1],
        yaw: wrap_angle(s1[2]),
        u: s1[3],
        v: s1[4],
        r: s1[5],
    };
    if !next.is_finite() {
        return Err(DynamicsError::NonFiniteState(next.t.f64()));
    }
    Ok(next)
}

/// Converged straight-line surge speed for a symmetric throttle setting.
///
/// Runs from rest in calm water until the surge speed changes by less than
/// 1e-4 m/s over a 5 s window.
pub fn find_steady_speed<T: Real>(throttle: T, params: &VesselParams<T>, env: &Environment<T>) -> Result<T, DynamicsError> {
    if !(throttle >= T::zero() && throttle <= T::one()) {
        return Err(DynamicsError::InvalidThrottle(throttle.f64()));
    }
    params.validate()?;
    env.validate()?;
    // Straight-line speed through the water does not depend on the current,
    // and the calibration is defined without random disturbance.
    let calm = Environment { disturbance_force_std: T::zero(), disturbance_torque_std: T::zero(), ..*env };
    let dt = T::c(DEFAULT_DT);
    let window = (STEADY_WINDOW_S / DEFAULT_DT).round() as usize;
    let max_steps = (STEADY_MAX_S / DEFAULT_DT).round() as usize;
    let cmd = ThrusterCommand::new(throttle, throttle);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut state = SimState::at_rest(T::zero(), T::zero(), T::zero());
    let mut history = Vec::with_capacity(max_steps + 1);
    history.push(state.u);
    for i in 1..=max_steps {
        state = step(&state, &cmd, &calm, params, dt, &mut rng)?;
        history.push(state.u);
        if i >= window && (state.u - history[i - window]).abs() < T::c(STEADY_TOL) {
            return Ok(state.u);
        }
    }
    Err(DynamicsError::NoSteadyState(STEADY_MAX_S))
}
