//! Sensor sampling and online fusion wired around the simulator.
//!
//! [`FusionLoop`] owns the sensor clocks, the gyro bias, the sensor RNG and
//! the filter; the trial runner and scripted scenarios both drive it one
//! truth sample at a time.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::SimConfig;
use crate::dynamics::{mix_differential, step, SimState, ThrusterCommand};
use crate::ekf::{fuse_gps, fuse_imu, Covariance, EkfState, LocalizationFilter, StateVector, STATE_DIM, X, Y, YAW};
use crate::geo::enu_from_geodetic;
use crate::log::{EstimateRecord, GpsRecord, ImuRecord, TrialLog};
use crate::sensors::{sample_gps, sample_imu, GyroBias, SampleClock, MIN_REPORTED_ANGLE_STD};
use crate::trial::{TrialCounts, TrialError};

/// How sensor data reaches the filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    /// Every measurement is fused.
    Full,
    /// Measurements are fused until the first GPS fix; afterwards the filter only predicts.
    DeadReckoning,
}

pub struct FusionLoop<'a> {
    cfg: &'a SimConfig,
    filter: LocalizationFilter<f64>,
    gps_clock: SampleClock,
    imu_clock: SampleClock,
    bias: GyroBias,
    rng: ChaCha8Rng,
    mode: FusionMode,
    had_fix: bool,
    pub counts: TrialCounts,
}

impl<'a> FusionLoop<'a> {
    pub fn new(cfg: &'a SimConfig, prior: StateVector<f64>, seed: u64, mode: FusionMode) -> Result<Self, TrialError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Ok(Self {
            cfg,
            filter: LocalizationFilter::with_prior(0.0, prior, &cfg.filter)?,
            gps_clock: SampleClock::new(cfg.sensors.gps_rate),
            imu_clock: SampleClock::new(cfg.sensors.imu_rate),
            bias: GyroBias::default(),
            rng,
            mode,
            had_fix: false,
            counts: TrialCounts::default(),
        })
    }

    pub fn state(&self) -> &EkfState<f64> {
        self.filter.state()
    }

    /// Sample whatever sensors are due at `truth.t`, fuse them and predict to `truth.t`.
    pub fn observe(&mut self, truth: &SimState) -> Result<(Option<GpsRecord>, Option<ImuRecord>), TrialError> {
        let cfg = self.cfg;
        let fusing = self.mode == FusionMode::Full || !self.had_fix;
        let mut gps = None;
        if self.gps_clock.poll(truth.t).is_some() {
            match sample_gps(truth, &cfg.origin, &cfg.sensors, &mut self.rng)? {
                Some(fix) => {
                    self.counts.gps_fixes += 1;
                    if fusing {
                        self.filter.process(&fuse_gps(&fix, &cfg.origin)?)?;
                    }
                    self.had_fix = true;
                    gps = Some(GpsRecord::from(&fix));
                }
                None => self.counts.gps_dropouts += 1,
            }
        }
        let mut imu = None;
        if self.imu_clock.poll(truth.t).is_some() {
            let reading = sample_imu(truth, &mut self.bias, &cfg.sensors, &mut self.rng)?;
            self.counts.imu_readings += 1;
            if fusing {
                self.filter.process(&fuse_imu(&reading)?)?;
            }
            imu = Some(ImuRecord::from(&reading));
        }
        self.filter.predict_to(truth.t)?;
        self.counts.fused = self.filter.fused;
        self.counts.stale = self.filter.stale;
        self.counts.gated = self.filter.gated;
        Ok((gps, imu))
    }
}

/// Truth and filter output of a scripted run, one entry per simulation step.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub truth: Vec<SimState>,
    pub estimates: Vec<EkfState<f64>>,
    pub counts: TrialCounts,
}

/// Simulate `duration` seconds from `initial` under `command`, fusing sensors into a filter started at `prior`.
pub fn run_scenario(
    cfg: &SimConfig,
    initial: SimState,
    prior: StateVector<f64>,
    duration: f64,
    seed: u64,
    mode: FusionMode,
    mut command: impl FnMut(&SimState) -> ThrusterCommand,
) -> Result<ScenarioRun, TrialError> {
    cfg.validate()?;
    let dt = cfg.trial.dt;
    let steps = (duration / dt).round() as usize;
    let mut dyn_rng = ChaCha8Rng::seed_from_u64(seed);
    dyn_rng.set_stream(0);
    let mut fusion = FusionLoop::new(cfg, prior, seed, mode)?;
    let mut truth = SimState { t: 0.0, ..initial };
    let mut out = ScenarioRun { truth: Vec::with_capacity(steps + 1), estimates: Vec::with_capacity(steps + 1), counts: TrialCounts::default() };
    for i in 0..=steps {
        truth.t = i as f64 * dt;
        fusion.observe(&truth)?;
        out.truth.push(truth);
        out.estimates.push(fusion.state().clone());
        if i < steps {
            let cmd = command(&truth);
            truth = step(&truth, &cmd, &cfg.environment, &cfg.vessel, dt, &mut dyn_rng)?;
        }
    }
    out.counts = fusion.counts;
    Ok(out)
}

/// Reference manoeuvre used for filter consistency checks: straight legs joined by gentle turns both ways.
pub fn scripted_command(t: f64, throttle: f64) -> ThrusterCommand {
    let steer = match t {
        t if t < 15.0 => 0.0,
        t if t < 30.0 => 0.12,
        t if t < 38.0 => 0.0,
        t if t < 52.0 => -0.2,
        _ => 0.0,
    };
    mix_differential(throttle, steer)
}

/// Draw a prior mean from N(truth, P).
pub fn sample_prior(truth: &StateVector<f64>, p: &Covariance<f64>, rng: &mut impl rand::Rng) -> StateVector<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let l = p.cholesky().expect("prior covariance is positive definite").l();
    let z = StateVector::<f64>::from_fn(|_, _| StandardNormal.sample(rng));
    let mut x = truth + l * z;
    for i in crate::ekf::ANGLE_INDICES {
        x[i] = crate::geo::wrap_angle(x[i]);
    }
    debug_assert_eq!(x.len(), STATE_DIM);
    x
}

/// Bookkeeping from an offline replay.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReplaySummary {
    pub gps_fixes: usize,
    /// Expected fixes at the configured rate that are absent from the log.
    pub gps_missing: usize,
    pub imu_readings: usize,
    pub fused: usize,
    pub stale: usize,
    pub gated: usize,
}

/// Re-run the filter over the sensor records of `log` and fill in its estimates.
///
/// The prior sits at the first GPS position with the first IMU heading.
/// IMU noise comes from `cfg.sensors`; GPS noise from each record.
pub fn replay_log(log: &TrialLog, cfg: &SimConfig) -> Result<(TrialLog, ReplaySummary), TrialError> {
    cfg.filter.validate()?;
    let origin = &log.metadata.origin;
    let mut prior = StateVector::zeros();
    if let Some(g) = log.samples.iter().find_map(|s| s.gps) {
        let [x, y, _] = enu_from_geodetic(origin, &g.to_fix(0.0).point).map_err(crate::ekf::FilterError::from)?;
        prior[X] = x;
        prior[Y] = y;
    }
    if let Some(imu) = log.samples.iter().find_map(|s| s.imu) {
        prior[YAW] = imu.yaw;
    }
    let t0 = log.samples.first().map_or(0.0, |s| s.t);
    let mut filter = LocalizationFilter::with_prior(t0, prior, &cfg.filter)?;
    let ostd = cfg.sensors.imu_yaw_std.max(MIN_REPORTED_ANGLE_STD);
    let rstd = cfg.sensors.imu_rate_std.max(MIN_REPORTED_ANGLE_STD);
    let mut summary = ReplaySummary::default();
    let mut out = log.clone();
    for s in out.samples.iter_mut() {
        if let Some(g) = &s.gps {
            summary.gps_fixes += 1;
            filter.process(&fuse_gps(&g.to_fix(s.t), origin)?)?;
        }
        if let Some(imu) = &s.imu {
            summary.imu_readings += 1;
            filter.process(&fuse_imu(&imu.to_reading(s.t, ostd, rstd))?)?;
        }
        filter.predict_to(s.t)?;
        s.est = Some(EstimateRecord::from(filter.state()));
    }
    if let (Some(first), Some(last)) = (log.samples.first(), log.samples.last()) {
        let expected = ((last.t - first.t) * cfg.sensors.gps_rate + 1e-9).floor() as usize + 1;
        summary.gps_missing = expected.saturating_sub(summary.gps_fixes);
    }
    summary.fused = filter.fused;
    summary.stale = filter.stale;
    summary.gated = filter.gated;
    Ok((out, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ekf::{state_from_truth, X, Y};
    use crate::sensors::SensorNoiseConfig;

    #[test]
    fn noiseless_fusion_tracks_truth() {
        let mut cfg = SimConfig::default();
        cfg.sensors = SensorNoiseConfig::noiseless();
        let initial = SimState { u: 1.0, ..SimState::at_rest(0.0, 0.0, 0.3) };
        let prior = state_from_truth(&initial, &cfg.environment);
        let run = run_scenario(&cfg, initial, prior, 60.0, 0, FusionMode::Full, |_| mix_differential(0.75, 0.0)).unwrap();
        // Straight steady run: after convergence the estimate sits on the truth.
        for (tr, est) in run.truth.iter().zip(&run.estimates).skip(1500) {
            assert!((est.x[X] - tr.x).abs() < 1e-3 && (est.x[Y] - tr.y).abs() < 1e-3, "t={} {} vs {}", tr.t, est.x[X], tr.x);
        }
    }

    #[test]
    fn replay_reproduces_online_estimates() {
        let mut cfg = SimConfig::default();
        cfg.trial.spin_up = 1.0;
        let cal = crate::trial::calibrate_approach_throttle(&cfg.vessel, &cfg.environment).unwrap();
        let log = crate::trial::run_turning_circle(&cfg, &cal, 4).unwrap();
        let mut stripped = log.clone();
        for s in stripped.samples.iter_mut() {
            s.est = None;
        }
        let (replayed, summary) = replay_log(&stripped, &cfg).unwrap();
        assert_eq!(summary.gps_missing, 0);
        assert_eq!(summary.gps_fixes + summary.imu_readings, summary.fused);
        // Different prior, same data: the two runs converge onto each other.
        let (a, b) = (log.samples.last().unwrap().est.unwrap(), replayed.samples.last().unwrap().est.unwrap());
        assert!((a.x - b.x).abs() < 1e-3 && (a.y - b.y).abs() < 1e-3, "{a:?} {b:?}");
    }

    #[test]
    fn dead_reckoning_stops_fusing_after_first_fix() {
        let cfg = SimConfig::default();
        let initial = SimState::at_rest(0.0, 0.0, 0.0);
        let prior = state_from_truth(&initial, &cfg.environment);
        let full = run_scenario(&cfg, initial, prior, 5.0, 2, FusionMode::Full, |t| scripted_command(t.t, 0.7)).unwrap();
        let dr = run_scenario(&cfg, initial, prior, 5.0, 2, FusionMode::DeadReckoning, |t| scripted_command(t.t, 0.7)).unwrap();
        assert_eq!(full.counts.gps_fixes, dr.counts.gps_fixes);
        assert!(dr.counts.fused <= 2);
        assert!(full.counts.fused > 200);
    }
}
