//! Trajectory CSV, run summaries and SVG plots.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use replicator_core::analysis::{settle_time, Target};
use replicator_core::controller::ValidityVerdict;
use replicator_core::{ControlledSystem, GameClass, Limit, SystemState, Trajectory};

use crate::error::{CliError, CliResult};

/// Writes `t,x,g` rows. `f64` display is the shortest string that parses
/// back to the same value, so the file round-trips bit for bit.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["t", "x", "g"]).map_err(|e| csv_error(path, e))?;
    for (t, s) in traj.iter() {
        w.write_record([t.to_string(), s.x.to_string(), s.g.to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(CliError::io(format!("writing {}", path.display())))
}

pub fn read_trajectory_csv(path: &Path) -> CliResult<Trajectory> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "x", "g"] {
        return Err(CliError::Usage(format!("{}: expected header t,x,g", path.display())));
    }
    let mut times = Vec::new();
    let mut states = Vec::new();
    for row in r.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let num = |i: usize| -> CliResult<f64> {
            row[i]
                .parse()
                .map_err(|e| CliError::Usage(format!("{}: bad number {:?}: {e}", path.display(), &row[i])))
        };
        times.push(num(0)?);
        states.push(SystemState::new(num(1)?, num(2)?));
    }
    Ok(Trajectory::from_samples(times, states))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io { context: path.display().to_string(), source },
        other => CliError::Usage(format!("{}: {other:?}", path.display())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub class: GameClass,
    pub validity: ValidityVerdict,
    pub terminal: Option<SystemState>,
    pub converged_to: Option<Limit>,
    pub t_settle: Option<f64>,
    pub peak_gain: Option<f64>,
    pub max_clamp_correction: Option<f64>,
    pub max_substeps: Option<usize>,
    /// Set when the integration failed.
    pub error: Option<String>,
}

pub fn target_of(limit: Limit) -> Option<Target> {
    match limit {
        Limit::X0 => Some(Target::X0),
        Limit::X1 => Some(Target::X1),
        Limit::MixedNe => Some(Target::MixedNe),
        Limit::GainConstant => Some(Target::GainConstant),
        Limit::None => None,
    }
}

impl RunSummary {
    pub fn from_run(
        sys: &ControlledSystem,
        validity: ValidityVerdict,
        run: &Result<Trajectory, replicator_core::Error>,
        crit: &replicator_core::ConvergenceCriteria,
    ) -> Self {
        let class = sys.class().clone();
        match run {
            Ok(traj) => Self {
                class,
                validity,
                terminal: Some(traj.terminal),
                converged_to: Some(traj.converged_to),
                t_settle: target_of(traj.converged_to).and_then(|t| settle_time(traj, sys, crit, t)),
                peak_gain: Some(traj.peak_gain()),
                max_clamp_correction: Some(traj.max_clamp_correction),
                max_substeps: Some(traj.max_substeps),
                error: None,
            },
            Err(e) => Self {
                class,
                validity,
                terminal: None,
                converged_to: None,
                t_settle: None,
                peak_gain: None,
                max_clamp_correction: None,
                max_substeps: None,
                error: Some(e.to_string()),
            },
        }
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).expect("summary always serializes");
        std::fs::write(path, text + "\n").map_err(CliError::io(format!("writing {}", path.display())))
    }
}

const WIDTH: f64 = 720.0;
const PANEL_HEIGHT: f64 = 220.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const PANEL_GAP: f64 = 60.0;
const TICKS: usize = 5;

struct Panel<'a> {
    label: &'a str,
    color: &'a str,
    values: Vec<f64>,
    y_max: f64,
    top: f64,
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 1000.0).round() / 1000.0)
    }
}

/// Two stacked line plots, `x(t)` on top and `g(t)` below, sharing the time axis.
pub fn trajectory_svg(traj: &Trajectory, title: &str) -> String {
    let t_max = traj.t_end().max(f64::MIN_POSITIVE);
    let g_max = traj.peak_gain();
    let panels = [
        Panel { label: "x(t)", color: "#1f77b4", values: traj.states.iter().map(|s| s.x).collect(), y_max: 1.0, top: MARGIN_TOP },
        Panel {
            label: "g(t)",
            color: "#d62728",
            values: traj.states.iter().map(|s| s.g).collect(),
            y_max: if g_max > 0.0 { g_max * 1.05 } else { 1.0 },
            top: MARGIN_TOP + PANEL_HEIGHT + PANEL_GAP,
        },
    ];
    let height = MARGIN_TOP + 2.0 * PANEL_HEIGHT + PANEL_GAP + 50.0;
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    for p in &panels {
        let bottom = p.top + PANEL_HEIGHT;
        let sx = |t: f64| MARGIN_LEFT + t / t_max * plot_w;
        let sy = |v: f64| bottom - (v / p.y_max).clamp(0.0, 1.0) * PANEL_HEIGHT;
        let _ = writeln!(
            svg,
            r#"<rect x="{MARGIN_LEFT}" y="{}" width="{plot_w}" height="{PANEL_HEIGHT}" fill="none" stroke="black"/>"#,
            p.top
        );
        for i in 0..=TICKS {
            let frac = i as f64 / TICKS as f64;
            let (tx, vy) = (sx(frac * t_max), sy(frac * p.y_max));
            let _ = writeln!(svg, r#"<line x1="{tx}" y1="{bottom}" x2="{tx}" y2="{}" stroke="black"/>"#, bottom + 5.0);
            let _ = writeln!(
                svg,
                r#"<text x="{tx}" y="{}" text-anchor="middle">{}</text>"#,
                bottom + 18.0,
                tick_label(frac * t_max)
            );
            let _ = writeln!(svg, r#"<line x1="{}" y1="{vy}" x2="{MARGIN_LEFT}" y2="{vy}" stroke="black"/>"#, MARGIN_LEFT - 5.0);
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                MARGIN_LEFT - 8.0,
                vy + 4.0,
                tick_label(frac * p.y_max)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
            p.top + PANEL_HEIGHT / 2.0,
            p.top + PANEL_HEIGHT / 2.0,
            p.label
        );
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">t</text>"#, MARGIN_LEFT + plot_w / 2.0, bottom + 34.0);
        let points: Vec<String> = traj
            .times
            .iter()
            .zip(&p.values)
            .map(|(&t, &v)| format!("{:.2},{:.2}", sx(t), sy(v)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            p.color,
            points.join(" ")
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
