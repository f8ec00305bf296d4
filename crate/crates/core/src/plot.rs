//! SVG plots of a trial: trajectory, heading and speed against time.
//!
//! Output is plain text built with fixed number formatting so that equal
//! inputs give byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::geo::{compass_from_enu_yaw, unwrap_heading};
use crate::log::TrialLog;
use crate::metrics::{track_from_log, turn_markers, TrackPoint, TrackSource, TurnMarkers, TurningCircleMetrics};

pub const TRAJECTORY_FILE: &str = "trajectory.svg";
pub const HEADING_FILE: &str = "heading.svg";
pub const SPEED_FILE: &str = "speed.svg";

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;
/// Approach shown ahead of the execute point on the trajectory plot, seconds.
pub const TRAJECTORY_LEAD_S: f64 = 5.0;
const TRUTH_COLOR: &str = "#1f4e99";
const ESTIMATE_COLOR: &str = "#d9822b";

/// Named polyline: layer name, stroke colour and points.
type Series<'a> = (&'a str, &'a str, Vec<(f64, f64)>);

#[derive(Debug, thiserror::Error)]
#[error("{path}: {source}")]
pub struct PlotError {
    pub path: PathBuf,
    pub source: std::io::Error,
}

#[derive(Debug, Clone, Copy)]
struct Bounds {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Bounds {
    fn of(points: impl Iterator<Item = (f64, f64)>) -> Self {
        let mut b = Bounds { x0: f64::INFINITY, x1: f64::NEG_INFINITY, y0: f64::INFINITY, y1: f64::NEG_INFINITY };
        for (x, y) in points {
            b.x0 = b.x0.min(x);
            b.x1 = b.x1.max(x);
            b.y0 = b.y0.min(y);
            b.y1 = b.y1.max(y);
        }
        if !b.x0.is_finite() {
            return Bounds { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };
        }
        let pad = |lo: f64, hi: f64| {
            let span = (hi - lo).max(1e-9);
            (lo - 0.05 * span, hi + 0.05 * span)
        };
        (b.x0, b.x1) = pad(b.x0, b.x1);
        (b.y0, b.y1) = pad(b.y0, b.y1);
        b
    }

    /// Grow the shorter axis so both share one scale.
    fn equal_aspect(mut self) -> Self {
        let (w, h) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
        let scale = ((self.x1 - self.x0) / w).max((self.y1 - self.y0) / h);
        let (cx, cy) = ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0);
        self.x0 = cx - scale * w / 2.0;
        self.x1 = cx + scale * w / 2.0;
        self.y0 = cy - scale * h / 2.0;
        self.y1 = cy + scale * h / 2.0;
        self
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let nice = if f < 1.5 { 1.0 } else if f < 3.5 { 2.0 } else if f < 7.5 { 5.0 } else { 10.0 };
    nice * mag
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = nice_step(hi - lo);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn label(v: f64) -> String {
    let s = format!("{:.3}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

struct Svg {
    body: String,
    b: Bounds,
}

impl Svg {
    fn new(title: &str, x_label: &str, y_label: &str, b: Bounds) -> Self {
        let mut body = String::new();
        let _ = writeln!(body, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#);
        let _ = writeln!(body, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(body, r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, WIDTH / 2.0);
        let (l, r, t, btm) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
        let _ = writeln!(body, r##"<g class="axes" stroke="#888" fill="none"><rect x="{l:.1}" y="{t:.1}" width="{:.1}" height="{:.1}"/></g>"##, r - l, btm - t);
        let _ = writeln!(body, r##"<g class="ticks" fill="#444">"##);
        for x in ticks(b.x0, b.x1) {
            let _ = writeln!(body, r#"<text x="{:.2}" y="{:.1}" text-anchor="middle">{}</text>"#, b.px(x), btm + 14.0, label(x));
        }
        for y in ticks(b.y0, b.y1) {
            let _ = writeln!(body, r#"<text x="{:.1}" y="{:.2}" text-anchor="end">{}</text>"#, l - 4.0, b.py(y) + 4.0, label(y));
        }
        let _ = writeln!(body, "</g>");
        let _ = writeln!(body, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{x_label}</text>"#, WIDTH / 2.0, HEIGHT - 16.0);
        let _ = writeln!(body, r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{y_label}</text>"#, HEIGHT / 2.0, HEIGHT / 2.0);
        Svg { body, b }
    }

    fn polyline(&mut self, class: &str, color: &str, pts: &[(f64, f64)]) {
        let mut d = String::with_capacity(pts.len() * 16);
        for (i, (x, y)) in pts.iter().enumerate() {
            if i > 0 {
                d.push(' ');
            }
            let _ = write!(d, "{:.2},{:.2}", self.b.px(*x), self.b.py(*y));
        }
        let _ = writeln!(self.body, r#"<polyline class="{class}" fill="none" stroke="{color}" stroke-width="1.5" points="{d}"/>"#);
    }

    fn marker(&mut self, name: &str, x: f64, y: f64) {
        let (px, py) = (self.b.px(x), self.b.py(y));
        let _ = writeln!(
            self.body,
            r#"<g class="marker" id="{name}" data-x="{x}" data-y="{y}"><circle cx="{px:.2}" cy="{py:.2}" r="4" fill="black"/><text x="{:.2}" y="{:.2}">{name}</text></g>"#,
            px + 6.0,
            py - 6.0
        );
    }

    fn legend(&mut self, entries: &[(&str, &str)]) {
        for (i, (name, color)) in entries.iter().enumerate() {
            let y = MARGIN + 14.0 + 14.0 * i as f64;
            let x = WIDTH - MARGIN - 90.0;
            let _ = writeln!(self.body, r#"<line x1="{x:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{y:.1}">{name}</text>"#, y - 4.0, x + 18.0, y - 4.0, x + 22.0);
        }
    }

    fn note(&mut self, text: &str) {
        let _ = writeln!(self.body, r#"<text class="note" x="{:.1}" y="{:.1}">{text}</text>"#, MARGIN + 6.0, MARGIN + 14.0);
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn layers(log: &TrialLog) -> Vec<(&'static str, &'static str, Vec<TrackPoint>)> {
    let mut out = Vec::new();
    if let Ok(t) = track_from_log(log, TrackSource::Truth) {
        out.push(("truth", TRUTH_COLOR, t));
    }
    if log.has_estimates() {
        if let Ok(t) = track_from_log(log, TrackSource::Estimate) {
            out.push(("estimate", ESTIMATE_COLOR, t));
        }
    }
    out
}

fn trajectory_svg(log: &TrialLog, layers: &[(&str, &str, Vec<TrackPoint>)], markers: Option<&TurnMarkers>, metrics: Option<&TurningCircleMetrics>) -> String {
    // With a turn to show, the long approach would shrink it to a dot.
    let t_min = markers.map_or(f64::NEG_INFINITY, |m| m.execute.t - TRAJECTORY_LEAD_S);
    let shown: Vec<Series> =
        layers.iter().map(|(n, c, t)| (*n, *c, t.iter().filter(|p| p.t >= t_min).map(|p| (p.x, p.y)).collect())).collect();
    let b = Bounds::of(shown.iter().flat_map(|(_, _, pts)| pts.iter().copied())).equal_aspect();
    let mut svg = Svg::new("Trajectory", "East (m)", "North (m)", b);
    for (name, color, pts) in &shown {
        svg.polyline(name, color, pts);
    }
    if let Some(m) = markers {
        svg.marker("execute", m.execute.x, m.execute.y);
        svg.marker("turn90", m.quarter.x, m.quarter.y);
        svg.marker("turn180", m.half.x, m.half.y);
    }
    if let Some(m) = metrics {
        svg.note(&format!(
            "{} side, L = {} m: advance {:.2} m, transfer {:.2} m, TD {:.2} m",
            m.side,
            label(log.metadata.vessel_length),
            m.advance,
            m.transfer,
            m.tactical_diameter
        ));
    }
    let legend: Vec<(&str, &str)> = layers.iter().map(|(n, c, _)| (*n, *c)).collect();
    svg.legend(&legend);
    svg.finish()
}

fn series_svg(title: &str, y_label: &str, layers: &[Series], execute_t: Option<f64>) -> String {
    let b = Bounds::of(layers.iter().flat_map(|(_, _, s)| s.iter().copied()));
    let mut svg = Svg::new(title, "Time (s)", y_label, b);
    if let Some(t) = execute_t {
        let x = svg.b.px(t);
        let _ = writeln!(svg.body, r##"<line class="execute" data-t="{t}" x1="{x:.2}" y1="{MARGIN:.1}" x2="{x:.2}" y2="{:.1}" stroke="#999" stroke-dasharray="4 3"/>"##, HEIGHT - MARGIN);
    }
    for (name, color, pts) in layers {
        svg.polyline(name, color, pts);
    }
    let legend: Vec<(&str, &str)> = layers.iter().map(|(n, c, _)| (*n, *c)).collect();
    svg.legend(&legend);
    svg.finish()
}

/// Compass heading in degrees, unwrapped so a turn plots as a continuous ramp.
fn heading_series(track: &[TrackPoint]) -> Vec<(f64, f64)> {
    let yaws: Vec<f64> = track.iter().map(|p| p.yaw).collect();
    let unwrapped = unwrap_heading(&yaws).unwrap_or(yaws);
    let first = track.first().map(|p| compass_from_enu_yaw(p.yaw)).unwrap_or(0.0);
    let y0 = unwrapped.first().copied().unwrap_or(0.0);
    track.iter().zip(&unwrapped).map(|(p, y)| (p.t, first - (y - y0).to_degrees())).collect()
}

/// Write the trajectory, heading and speed plots into `out_dir`.
///
/// The trajectory carries execute, 90° and 180° markers when the truth track
/// (or the estimate, for logs without truth) reaches them. An estimate layer
/// is drawn only when the log contains estimates.
pub fn render_plots(log: &TrialLog, metrics: Option<&TurningCircleMetrics>, out_dir: &Path) -> Result<Vec<PathBuf>, PlotError> {
    let layers = layers(log);
    let markers = layers.first().and_then(|(_, _, track)| turn_markers(track, log.metadata.execute_index, log.metadata.side).ok());
    let execute_t = log.samples.get(log.metadata.execute_index).map(|s| s.t);

    let heading: Vec<_> = layers.iter().map(|(n, c, t)| (*n, *c, heading_series(t))).collect();
    let speed: Vec<_> = layers.iter().map(|(n, c, t)| (*n, *c, t.iter().map(|p| (p.t, p.speed)).collect::<Vec<_>>())).collect();

    let files = [
        (TRAJECTORY_FILE, trajectory_svg(log, &layers, markers.as_ref(), metrics)),
        (HEADING_FILE, series_svg("Heading", "Heading (deg, compass)", &heading, execute_t)),
        (SPEED_FILE, series_svg("Speed", "Speed (m/s)", &speed, execute_t)),
    ];
    std::fs::create_dir_all(out_dir).map_err(|source| PlotError { path: out_dir.into(), source })?;
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = out_dir.join(name);
        std::fs::write(&path, body).map_err(|source| PlotError { path: path.clone(), source })?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tick_steps_are_round() {
        assert_eq!(nice_step(6.0), 1.0);
        assert_eq!(nice_step(12.0), 2.0);
        assert_eq!(nice_step(0.3), 0.05);
        assert_eq!(ticks(-0.4, 2.2), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn labels_trim_zeros() {
        assert_eq!(label(2.0), "2");
        assert_eq!(label(0.25), "0.25");
        assert_eq!(label(-0.0001), "0");
    }

    #[test]
    fn equal_aspect_shares_scale() {
        let b = Bounds { x0: 0.0, x1: 10.0, y0: 0.0, y1: 1.0 }.equal_aspect();
        let sx = (b.x1 - b.x0) / (WIDTH - 2.0 * MARGIN);
        let sy = (b.y1 - b.y0) / (HEIGHT - 2.0 * MARGIN);
        assert!((sx - sy).abs() < 1e-12);
    }
}
