//! SVG figures from a run directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use plotters::prelude::*;

use crate::runner::SCENARIO_FILE;
use crate::scenario::Scenario;
use crate::trace::{self, TraceRow};

pub const FIG_REGRESSION: &str = "fig1_regression.svg";
pub const FIG_PARAMETERS: &str = "fig2_parameter_errors.svg";
pub const FIG_STATE: &str = "fig3_state_error.svg";

struct Curve {
    label: String,
    color: RGBColor,
    points: Vec<(f64, f64)>,
}

fn curve(rows: &[TraceRow], label: &str, color: RGBColor, f: impl Fn(&TraceRow) -> f64, log: bool) -> Curve {
    let points = rows
        .iter()
        .filter_map(|r| {
            let v = f(r);
            // log panels skip non-positive and missing samples
            let v = if log { if v > 0.0 { v.log10() } else { f64::NAN } } else { v };
            v.is_finite().then_some((r.t, v))
        })
        .collect();
    Curve {
        label: label.to_string(),
        color,
        points,
    }
}

fn y_range(curves: &[Curve]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in curves {
        for &(_, y) in &c.points {
            lo = lo.min(y);
            hi = hi.max(y);
        }
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn panel<DB: DrawingBackend>(
    area: &DrawingArea<DB, plotters::coord::Shift>,
    title: &str,
    y_desc: &str,
    t_range: (f64, f64),
    curves: &[Curve],
) -> Result<()>
where
    DB::ErrorType: 'static,
{
    let (lo, hi) = y_range(curves);
    let mut chart = ChartBuilder::on(area)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(64)
        .build_cartesian_2d(t_range.0..t_range.1, lo..hi)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    chart
        .configure_mesh()
        .x_desc("t [s]")
        .y_desc(y_desc)
        .draw()
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    for c in curves.iter().filter(|c| !c.points.is_empty()) {
        let color = c.color;
        chart
            .draw_series(LineSeries::new(c.points.iter().copied(), color.stroke_width(2)))
            .map_err(|e| anyhow::anyhow!("{e}"))?
            .label(c.label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .draw()
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(())
}

const BLUE_: RGBColor = RGBColor(31, 119, 180);
const ORANGE_: RGBColor = RGBColor(255, 127, 14);
const GREEN_: RGBColor = RGBColor(44, 160, 44);
const RED_: RGBColor = RGBColor(214, 39, 40);

/// Writes the three figures for the run in `dir` and returns their paths.
pub fn emit_plots(dir: &Path) -> Result<Vec<PathBuf>> {
    let rows = trace::read_trace(&dir.join(trace::TRACE_FILE))?;
    if rows.len() < 2 {
        bail!("trace in {} has fewer than two rows", dir.display());
    }
    let scn: Scenario = toml::from_str(
        &std::fs::read_to_string(dir.join(SCENARIO_FILE))
            .with_context(|| format!("reading {}", dir.join(SCENARIO_FILE).display()))?,
    )?;
    let t_range = (rows[0].t, rows[rows.len() - 1].t);
    let mut out = Vec::new();

    let path = dir.join(FIG_REGRESSION);
    {
        let root = SVGBackend::new(&path, (1000, 720)).into_drawing_area();
        root.fill(&WHITE).map_err(|e| anyhow::anyhow!("{e}"))?;
        let (top, bottom) = root.split_vertically(360);
        let engaged: Vec<TraceRow> = rows.iter().filter(|r| r.t >= scn.params.t_eps).cloned().collect();
        panel(
            &top,
            "measured q vs regressor times true parameters",
            "value",
            t_range,
            &[
                curve(&rows, "q", BLUE_, |r| r.qbar, false),
                curve(&rows, "phi^T eta", ORANGE_, |r| r.phi_eta_true, false),
                curve(&engaged, "q - phi^T eta (t >= t_eps)", RED_, |r| r.qbar - r.phi_eta_true, false),
            ],
        )?;
        panel(
            &bottom,
            "excitation: lambda_min of the T = 1 Gram integral",
            "log10 lambda_min",
            t_range,
            &[curve(&rows, "log10 lambda_min", GREEN_, |r| r.lambda_min, true)],
        )?;
        root.present().map_err(|e| anyhow::anyhow!("{e}"))?;
    }
    out.push(path);

    let path = dir.join(FIG_PARAMETERS);
    {
        let root = SVGBackend::new(&path, (1000, 480)).into_drawing_area();
        root.fill(&WHITE).map_err(|e| anyhow::anyhow!("{e}"))?;
        panel(
            &root,
            "parameter errors of the proposed observer",
            "log10 norm",
            t_range,
            &[
                curve(&rows, "psi_a", BLUE_, |r| r.psi_a_err, true),
                curve(&rows, "psi_b", ORANGE_, |r| r.psi_b_err, true),
                curve(&rows, "O_Gamma", GREEN_, |r| r.o_gamma_err, true),
                curve(&rows, "T_I", RED_, |r| r.t_i_err, true),
            ],
        )?;
        root.present().map_err(|e| anyhow::anyhow!("{e}"))?;
    }
    out.push(path);

    let path = dir.join(FIG_STATE);
    {
        let root = SVGBackend::new(&path, (1000, 480)).into_drawing_area();
        root.fill(&WHITE).map_err(|e| anyhow::anyhow!("{e}"))?;
        let mut curves = Vec::new();
        if scn.observers.proposed() {
            curves.push(curve(&rows, "proposed", BLUE_, |r| r.x_err, true));
        }
        if scn.observers.baseline() {
            curves.push(curve(&rows, "certainty equivalence", RED_, |r| r.xb_err, true));
        }
        panel(&root, "state reconstruction error |x^ - x|", "log10 norm", t_range, &curves)?;
        root.present().map_err(|e| anyhow::anyhow!("{e}"))?;
    }
    out.push(path);
    Ok(out)
}
