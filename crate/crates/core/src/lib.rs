//! Simulation, localization and manoeuvring-trial analysis for small
//! twin-hull surface vessels.
//!
//! The numeric core ([`geo`], [`dynamics`], [`ekf`], [`metrics`]) is generic
//! over [`scalar::Real`], so it runs in `f32` or `f64`. The aliases below fix
//! the common choices. Trial orchestration, logging and reporting work in
//! `f64`.

pub mod config;
pub mod dynamics;
pub mod ekf;
pub mod fixtures;
pub mod geo;
pub mod ingest;
pub mod log;
pub mod metrics;
pub mod pipeline;
pub mod plot;
pub mod report;
pub mod scalar;
pub mod sensors;
pub mod trial;

pub use scalar::Real;

pub type GeoPoint = geo::GeoPoint<f64>;
pub type EnuPose = geo::EnuPose<f64>;
pub type VesselParams = dynamics::VesselParams<f64>;
pub type SimState = dynamics::SimState<f64>;
pub type ThrusterCommand = dynamics::ThrusterCommand<f64>;
pub type Environment = dynamics::Environment<f64>;
pub type EkfState = ekf::EkfState<f64>;
pub type Measurement = ekf::Measurement<f64>;
pub type TrackPoint = metrics::TrackPoint<f64>;
pub type TurningCircleMetrics = metrics::TurningCircleMetrics<f64>;

pub type GeoPointF32 = geo::GeoPoint<f32>;
pub type VesselParamsF32 = dynamics::VesselParams<f32>;
pub type SimStateF32 = dynamics::SimState<f32>;
pub type EkfStateF32 = ekf::EkfState<f32>;
pub type MeasurementF32 = ekf::Measurement<f32>;
pub type TurningCircleMetricsF32 = metrics::TurningCircleMetrics<f32>;
