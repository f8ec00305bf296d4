use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use usv_core::config::SimConfig;
use usv_core::geo::GeoPoint;
use usv_core::ingest::{ingest_external, Conventions, IngestOptions};
use usv_core::log::{read_log, write_log, TrialLog};
use usv_core::metrics::{check_imo, check_imo_values, compute_metrics, TrackSource};
use usv_core::pipeline::replay_log;
use usv_core::plot::render_plots;
use usv_core::report::{compare_logs, compliance_text, metrics_csv};
use usv_core::trial::{calibrate_approach_throttle, run_turning_circle, Calibration, TrialError};
use usv_core::TurningCircleMetrics;

use crate::{resolve_config, Cli, CliError, Command, Common};

pub const LOG_FILE: &str = "trial.jsonl";
pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const COMPLIANCE_FILE: &str = "compliance.txt";
pub const REPORT_FILE: &str = "report.txt";
pub const CAMPAIGN_CSV: &str = "campaign.csv";
pub const CAMPAIGN_TEXT: &str = "campaign.txt";
const DEFAULT_OUT: &str = "out";

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, body).map_err(|e| io_err(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn say(out: &mut dyn Write, text: impl std::fmt::Display) -> Result<(), CliError> {
    writeln!(out, "{text}").map_err(|e| CliError::Io(format!("stdout: {e}")))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Calibrate { common } => calibrate(&common, out),
        Command::Trial { common, seeds } => trial(&common, &seeds, out),
        Command::Ekf { common, log } => ekf(&common, &log, out),
        Command::Metrics { log, length, source, advance, tactical_diameter, .. } => match (log, advance, tactical_diameter) {
            (Some(log), _, _) => metrics_for_log(&log, length, source.into(), out),
            (None, Some(a), Some(td)) => metrics_for_values(a, td, length, out),
            _ => Err(CliError::Validation("need --log or both --advance and --tactical-diameter".into())),
        },
        Command::Report { common, logs, length, source } => report(&common, &logs, length, source.into(), out),
        Command::Ingest { common, csv, datum, heading_ref, origin_lat, origin_lon, execute_index, length, approach_speed } => {
            let conventions = Conventions {
                datum: datum.map(|d| d.parse()).transpose()?,
                heading: heading_ref.map(|h| h.parse()).transpose()?,
            };
            let opts = IngestOptions { execute_index, vessel_length: length, side: common.side.ok_or_else(|| CliError::Validation("--side is required for ingest".into()))?, approach_speed };
            let origin = GeoPoint::new(origin_lat, origin_lon, 0.0);
            let log = ingest_external(&csv, &origin, &conventions, &opts)?;
            let path = common.out.clone().unwrap_or_else(|| csv.with_extension("jsonl"));
            write_log(&log, &path)?;
            say(out, format!("wrote {} samples to {}", log.samples.len(), path.display()))
        }
    }
}

fn calibrate(common: &Common, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = resolve_config(common)?;
    let cal = calibrate_approach_throttle(&cfg.vessel, &cfg.environment)?;
    say(out, format!("approach throttle      {:.6}", cal.throttle))?;
    say(out, format!("approach speed (m/s)   {:.6}", cal.approach_speed))?;
    say(out, format!("reference speed (m/s)  {:.6}  at 85% throttle", cal.reference_speed))?;
    if let Some(dir) = &common.out {
        create_dir(dir)?;
        let body = json!({
            "throttle": cal.throttle,
            "approach_speed": cal.approach_speed,
            "reference_speed": cal.reference_speed,
            "config": cfg.to_value(),
        });
        write_file(&dir.join("calibration.json"), serde_json::to_string_pretty(&body).expect("json") + "\n")?;
    }
    Ok(())
}

/// Everything a single trial leaves in its directory.
struct TrialOutcome {
    log: TrialLog,
    truth: TurningCircleMetrics,
}

fn run_one(cfg: &SimConfig, cal: &Calibration, dir: &Path) -> Result<TrialOutcome, CliError> {
    create_dir(dir)?;
    write_file(&dir.join(CONFIG_FILE), cfg.to_pretty_json() + "\n")?;
    let log = match run_turning_circle(cfg, cal, cfg.environment.seed) {
        Ok(log) => log,
        Err(TrialError::Incomplete { reached_deg, required_deg, partial }) => {
            // Keep what was recorded so the failure can be inspected.
            write_log(&partial, &dir.join(LOG_FILE))?;
            render_plots(&partial, None, dir)?;
            return Err(TrialError::Incomplete { reached_deg, required_deg, partial }.into());
        }
        Err(e) => return Err(e.into()),
    };
    write_log(&log, &dir.join(LOG_FILE))?;
    let truth = compute_metrics(&log, TrackSource::Truth)?;
    let estimate = compute_metrics(&log, TrackSource::Estimate).ok();
    let length = log.metadata.vessel_length;
    let truth_c = check_imo(&truth, length)?;
    let est_c = estimate.as_ref().map(|m| check_imo(m, length)).transpose()?;

    let mut rows = vec![("truth", &truth, Some(&truth_c))];
    let mut verdicts = vec![("truth", &truth_c)];
    if let (Some(m), Some(c)) = (&estimate, &est_c) {
        rows.push(("estimate", m, Some(c)));
        verdicts.push(("estimate", c));
    }
    write_file(&dir.join(METRICS_FILE), metrics_csv(&rows))?;
    write_file(&dir.join(COMPLIANCE_FILE), compliance_text(&verdicts))?;
    let report = compare_logs(&[(log.clone(), truth)], None).map_err(|e| CliError::Validation(e.to_string()))?;
    write_file(&dir.join(REPORT_FILE), report.to_text())?;
    render_plots(&log, Some(&truth), dir)?;
    Ok(TrialOutcome { log, truth })
}

fn trial(common: &Common, seeds: &[u64], out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = resolve_config(common)?;
    let cal = calibrate_approach_throttle(&cfg.vessel, &cfg.environment)?;
    let root = common.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    say(out, format!("approach throttle {:.6}, approach speed {:.6} m/s", cal.throttle, cal.approach_speed))?;

    if seeds.is_empty() {
        let o = run_one(&cfg, &cal, &root)?;
        return summarize(out, &root, &o);
    }

    let jobs: Vec<(u64, SimConfig, PathBuf)> = seeds
        .iter()
        .map(|&s| {
            let mut c = cfg.clone();
            c.environment.seed = s;
            (s, c, root.join(format!("seed-{s}")))
        })
        .collect();
    let results: Vec<Result<TrialOutcome, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs.iter().map(|(_, c, dir)| scope.spawn(|| run_one(c, &cal, dir))).collect();
        handles.into_iter().map(|h| h.join().expect("trial worker panicked")).collect()
    });

    let mut done = Vec::new();
    let mut first_err = None;
    for ((seed, _, dir), r) in jobs.iter().zip(results) {
        match r {
            Ok(o) => {
                summarize(out, dir, &o)?;
                done.push((o.log, o.truth));
            }
            Err(e) => {
                say(out, format!("seed {seed}: {e}"))?;
                first_err.get_or_insert(e);
            }
        }
    }
    if !done.is_empty() {
        let report = compare_logs(&done, None).map_err(|e| CliError::Validation(e.to_string()))?;
        create_dir(&root)?;
        write_file(&root.join(CAMPAIGN_CSV), report.to_csv())?;
        write_file(&root.join(CAMPAIGN_TEXT), report.to_text())?;
        say(out, report.to_text())?;
    }
    first_err.map_or(Ok(()), Err)
}

fn summarize(out: &mut dyn Write, dir: &Path, o: &TrialOutcome) -> Result<(), CliError> {
    let m = &o.truth;
    let c = check_imo(m, o.log.metadata.vessel_length)?;
    say(
        out,
        format!(
            "{}: {} seed {} advance {:.3} m transfer {:.3} m TD {:.3} m speed loss {:.2}% t90 {:.2} s t180 {:.2} s IMO (TD, A) {}",
            dir.display(),
            m.side,
            o.log.metadata.seed,
            m.advance,
            m.transfer,
            m.tactical_diameter,
            m.speed_loss_pct,
            m.t90,
            m.t180,
            c.verdict()
        ),
    )
}

fn ekf(common: &Common, path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let log = read_log(path)?;
    if !log.has_sensor_data() {
        return Err(CliError::Validation(format!("{}: log has no GPS or IMU records to replay", path.display())));
    }
    let cfg = match &common.config {
        Some(_) => resolve_config(common)?,
        None => match serde_json::from_value::<SimConfig>(log.metadata.config.clone()) {
            Ok(c) => c,
            Err(_) => resolve_config(common)?,
        },
    };
    cfg.validate()?;
    let (mut replayed, summary) = replay_log(&log, &cfg)?;
    let extra = &mut replayed.metadata.extra;
    extra.insert("ekf_config".into(), cfg.to_value());
    for (k, v) in [
        ("ekf_gps_fixes", summary.gps_fixes),
        ("ekf_gps_missing", summary.gps_missing),
        ("ekf_imu_readings", summary.imu_readings),
        ("ekf_fused", summary.fused),
        ("ekf_stale", summary.stale),
        ("ekf_gated", summary.gated),
    ] {
        extra.insert(k.into(), Value::from(v));
    }
    let target = common.out.clone().unwrap_or_else(|| {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "log".into());
        path.with_file_name(format!("{stem}.ekf.jsonl"))
    });
    write_log(&replayed, &target)?;
    say(
        out,
        format!(
            "gps fixes {} (missing {}), imu readings {}, fused {}, stale dropped {}, gated {}",
            summary.gps_fixes, summary.gps_missing, summary.imu_readings, summary.fused, summary.stale, summary.gated
        ),
    )?;
    say(out, format!("wrote {}", target.display()))
}

fn metrics_for_values(advance: f64, td: f64, length: f64, out: &mut dyn Write) -> Result<(), CliError> {
    let c = check_imo_values(advance, td, length)?;
    say(out, compliance_text(&[("measured", &c)]).trim_end())
}

fn metrics_for_log(path: &Path, length: f64, source: TrackSource, out: &mut dyn Write) -> Result<(), CliError> {
    let log = read_log(path)?;
    let m = compute_metrics(&log, source)?;
    let c = check_imo(&m, length)?;
    let label = match source {
        TrackSource::Truth => "truth",
        TrackSource::Estimate => "estimate",
    };
    say(out, metrics_csv(&[(label, &m, Some(&c))]).trim_end())?;
    say(out, "")?;
    say(out, compliance_text(&[(label, &c)]).trim_end())
}

fn report(common: &Common, paths: &[PathBuf], length: Option<f64>, source: TrackSource, out: &mut dyn Write) -> Result<(), CliError> {
    let mut trials = Vec::with_capacity(paths.len());
    for p in paths {
        let log = read_log(p)?;
        let m = compute_metrics(&log, source)?;
        trials.push((log, m));
    }
    let report = compare_logs(&trials, length).map_err(|e| CliError::Validation(e.to_string()))?;
    if let Some(dir) = &common.out {
        create_dir(dir)?;
        write_file(&dir.join(CAMPAIGN_CSV), report.to_csv())?;
        write_file(&dir.join(CAMPAIGN_TEXT), report.to_text())?;
    }
    say(out, report.to_text().trim_end())
}
