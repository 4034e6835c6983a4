//! Static SVG plots of a trajectory.

use std::path::Path;

use hartree::evolution::DiagnosticsRow;
use plotters::prelude::*;

use crate::CliError;

type Curve = (&'static str, Vec<(f64, f64)>);

fn bounds(curves: &[Curve]) -> Option<((f64, f64), (f64, f64))> {
    let pts = curves.iter().flat_map(|c| c.1.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return None;
    }
    let pad = |a: f64, b: f64| if b > a { 0.05 * (b - a) } else { 0.5 * a.abs().max(1.0) };
    let (px, py) = (pad(x0, x1), pad(y0, y1));
    Some(((x0 - px, x1 + px), (y0 - py, y1 + py)))
}

fn line_plot(path: &Path, title: &str, ylabel: &str, curves: &[Curve]) -> Result<(), CliError> {
    let Some(((x0, x1), (y0, y1))) = bounds(curves) else {
        return Ok(());
    };
    let err = |e: &dyn std::fmt::Display| CliError::Plot(format!("{}: {e}", path.display()));
    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(|e| err(&e))?;
    chart.configure_mesh().x_desc("t").y_desc(ylabel).draw().map_err(|e| err(&e))?;
    let palette = [BLUE, RED, GREEN, BLACK];
    for (i, (name, pts)) in curves.iter().enumerate() {
        let color = palette[i % palette.len()];
        chart
            .draw_series(LineSeries::new(pts.iter().copied().filter(|p| p.1.is_finite()), color))
            .map_err(|e| err(&e))?
            .label(*name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
    }
    if curves.len() > 1 {
        chart.configure_series_labels().background_style(WHITE).border_style(BLACK).draw().map_err(|e| err(&e))?;
    }
    root.present().map_err(|e| err(&e))
}

/// delta.svg, grad_norm_sq.svg and virial.svg next to the trajectory CSV.
pub fn trajectory(dir: &Path, rows: &[DiagnosticsRow], kinetic_w: f64) -> Result<(), CliError> {
    let series = |f: &dyn Fn(&DiagnosticsRow) -> f64| rows.iter().map(|r| (r.t, f(r))).collect::<Vec<_>>();
    line_plot(
        &dir.join("delta.svg"),
        "log10 delta(t)/|grad W|^2",
        "log10 delta",
        &[("delta", series(&|r| (r.delta / kinetic_w).log10()))],
    )?;
    line_plot(
        &dir.join("grad_norm_sq.svg"),
        "|grad u(t)|^2 / |grad W|^2",
        "ratio",
        &[("|grad u|^2", series(&|r| r.grad_norm_sq / kinetic_w))],
    )?;
    line_plot(
        &dir.join("virial.svg"),
        "localized virial",
        "value",
        &[
            ("V_R", series(&|r| r.v_r)),
            ("dV_R", series(&|r| r.dv_r)),
            ("d2V_R", series(&|r| r.d2v_r)),
        ],
    )
}
