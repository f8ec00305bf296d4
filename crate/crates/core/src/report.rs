//! Campaign tables: several turning-circle trials side by side with per-side statistics.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::log::{Side, TrialLog};
use crate::metrics::{ComplianceReport, TurningCircleMetrics};

pub const METRIC_NAMES: [&str; 6] = [
    "Advance (m)",
    "Transfer (m)",
    "Tactical Diameter (m)",
    "Loss of speed-steady turn (%)",
    "Time to change heading 90deg (s)",
    "Time to change heading 180deg (s)",
];

const CSV_KEYS: [&str; 6] = ["advance_m", "transfer_m", "tactical_diameter_m", "speed_loss_pct", "t90_s", "t180_s"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("a campaign report needs at least one trial")]
    Empty,
}

fn values(m: &TurningCircleMetrics) -> [f64; 6] {
    [m.advance, m.transfer, m.tactical_diameter, m.speed_loss_pct, m.t90, m.t180]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignEntry {
    pub label: String,
    pub metrics: TurningCircleMetrics,
    pub compliance: Option<ComplianceReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideSummary {
    pub side: Side,
    pub n: usize,
    pub mean: [f64; 6],
    /// Sample standard deviation per metric; `None` below two trials.
    pub spread: Option<[f64; 6]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignReport {
    pub entries: Vec<CampaignEntry>,
    pub sides: Vec<SideSummary>,
    pub notes: Vec<String>,
}

fn summarize(side: Side, rows: &[[f64; 6]]) -> SideSummary {
    let n = rows.len();
    let mean: [f64; 6] = std::array::from_fn(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n as f64);
    let spread = (n >= 2).then(|| {
        std::array::from_fn(|k| {
            let ss: f64 = rows.iter().map(|r| (r[k] - mean[k]).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        })
    });
    SideSummary { side, n, mean, spread }
}

/// Tabulate trials and summarize each side.
pub fn compare_tests(entries: Vec<CampaignEntry>) -> Result<CampaignReport, ReportError> {
    if entries.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut sides = Vec::new();
    let mut notes = Vec::new();
    for side in [Side::Starboard, Side::Port] {
        let rows: Vec<[f64; 6]> = entries.iter().filter(|e| e.metrics.side == side).map(|e| values(&e.metrics)).collect();
        if rows.is_empty() {
            continue;
        }
        let s = summarize(side, &rows);
        if s.spread.is_none() {
            notes.push(format!("{side}: insufficient n ({}) for spread", s.n));
        }
        sides.push(s);
    }
    let spread_of = |side| sides.iter().find(|s: &&SideSummary| s.side == side).and_then(|s| s.spread);
    if let (Some(sb), Some(pt)) = (spread_of(Side::Starboard), spread_of(Side::Port)) {
        let tighter = (0..6).filter(|&k| sb[k] < pt[k]).count();
        if tighter * 2 > 6 {
            notes.push(format!("starboard trials show less variability than port ({tighter} of 6 metrics)"));
        } else if tighter * 2 < 6 {
            notes.push(format!("port trials show less variability than starboard ({} of 6 metrics)", 6 - tighter));
        }
    }
    Ok(CampaignReport { entries, sides, notes })
}

/// Campaign from logs and their metrics, labelled "Test k (S|P)" in order.
pub fn compare_logs(trials: &[(TrialLog, TurningCircleMetrics)], length: Option<f64>) -> Result<CampaignReport, ReportError> {
    let entries = trials
        .iter()
        .enumerate()
        .map(|(i, (log, m))| CampaignEntry {
            label: format!("Test {} ({})", i + 1, m.side.letter()),
            metrics: *m,
            compliance: crate::metrics::check_imo(m, length.unwrap_or(log.metadata.vessel_length)).ok(),
        })
        .collect();
    compare_tests(entries)
}

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

fn metric_header() -> Vec<&'static str> {
    let mut header = vec!["label", "side"];
    header.extend(CSV_KEYS);
    header.extend(["advance_limit_m", "td_limit_m", "imo_td_a"]);
    header
}

fn metric_row(label: &str, m: &TurningCircleMetrics, c: Option<&ComplianceReport>) -> Vec<String> {
    let mut row = vec![label.to_string(), m.side.to_string()];
    row.extend(values(m).map(fmt));
    match c {
        Some(c) => row.extend([fmt(c.advance_limit), fmt(c.td_limit), c.verdict()]),
        None => row.extend([String::new(), String::new(), String::new()]),
    }
    row
}

/// One CSV row per labelled metric set, same columns as [`CampaignReport::to_csv`].
pub fn metrics_csv(rows: &[(&str, &TurningCircleMetrics, Option<&ComplianceReport>)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(metric_header()).expect("in-memory csv");
    for (label, m, c) in rows {
        w.write_record(metric_row(label, m, *c)).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

/// Compliance verdicts laid out as "measured TD, A / criteria TD, A / Y-N".
pub fn compliance_text(rows: &[(&str, &ComplianceReport)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<14}{:>20}{:>20}{:>16}", "Test", "Measured TD, A", "Criteria TD, A", "IMO (Y/N)");
    for (label, c) in rows {
        let _ = writeln!(
            out,
            "{:<14}{:>20}{:>20}{:>16}",
            label,
            format!("{:.2}, {:.2}", c.tactical_diameter, c.advance),
            format!("{:.2}, {:.2}", c.td_limit, c.advance_limit),
            c.verdict()
        );
    }
    out
}

impl CampaignReport {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(metric_header()).expect("in-memory csv");
        for e in &self.entries {
            w.write_record(metric_row(&e.label, &e.metrics, e.compliance.as_ref())).expect("in-memory csv");
        }
        for s in &self.sides {
            let mut row = vec![format!("mean_{}", s.side), s.side.to_string()];
            row.extend(s.mean.map(fmt));
            row.extend([String::new(), String::new(), String::new()]);
            w.write_record(&row).expect("in-memory csv");
            let mut row = vec![format!("std_{}", s.side), s.side.to_string()];
            match s.spread {
                Some(sp) => row.extend(sp.map(fmt)),
                None => row.extend(std::iter::repeat_n("insufficient n".to_string(), 6)),
            }
            row.extend([String::new(), String::new(), String::new()]);
            w.write_record(&row).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let label_w = 34;
        let col_w = self.entries.iter().map(|e| e.label.len()).max().unwrap_or(0).max(10) + 2;
        let _ = write!(out, "{:<label_w$}", "Parameters");
        for e in &self.entries {
            let _ = write!(out, "{:>col_w$}", e.label);
        }
        out.push('\n');
        for (k, name) in METRIC_NAMES.iter().enumerate() {
            let _ = write!(out, "{name:<label_w$}");
            for e in &self.entries {
                let _ = write!(out, "{:>col_w$.2}", values(&e.metrics)[k]);
            }
            out.push('\n');
        }
        if self.entries.iter().any(|e| e.compliance.is_some()) {
            out.push('\n');
            let rows: Vec<(&str, &ComplianceReport)> =
                self.entries.iter().filter_map(|e| e.compliance.as_ref().map(|c| (e.label.as_str(), c))).collect();
            out.push_str(&compliance_text(&rows));
        }
        out.push('\n');
        for s in &self.sides {
            let _ = write!(out, "{} (n={}) mean:", s.side, s.n);
            for v in s.mean {
                let _ = write!(out, " {v:.2}");
            }
            match s.spread {
                Some(sp) => {
                    let _ = write!(out, "  std:");
                    for v in sp {
                        let _ = write!(out, " {v:.2}");
                    }
                }
                None => out.push_str("  std: insufficient n"),
            }
            out.push('\n');
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}
