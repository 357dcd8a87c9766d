use std::path::{Path, PathBuf};

use plotters::prelude::*;

use super::metrics::{ema, sparse_ema, write_csv, MetricsRecord};
use crate::error::{Error, Result};

const GOLD: RGBColor = RGBColor(214, 150, 20);
const BASE: RGBColor = RGBColor(60, 90, 170);
const SIZE: (u32, u32) = (800, 480);

struct Series {
    label: &'static str,
    color: RGBColor,
    points: Vec<(f64, f64)>,
}

/// Write `goldilocks.csv`, `baseline.csv` and seven SVG plots into `out_dir`.
/// On any failure, files written so far are removed.
pub fn emit_report(goldilocks: &[MetricsRecord], baseline: &[MetricsRecord], out_dir: &Path, alpha: f64) -> Result<Vec<PathBuf>> {
    if goldilocks.is_empty() || baseline.is_empty() {
        return Err(Error::EmptyReport(format!(
            "goldilocks has {} rows, baseline has {}",
            goldilocks.len(),
            baseline.len()
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    match write_all(goldilocks, baseline, out_dir, alpha, &mut written) {
        Ok(()) => Ok(written),
        Err(e) => {
            for p in &written {
                let _ = std::fs::remove_file(p);
            }
            Err(e)
        }
    }
}

fn write_all(g: &[MetricsRecord], b: &[MetricsRecord], dir: &Path, alpha: f64, written: &mut Vec<PathBuf>) -> Result<()> {
    for (name, rows) in [("goldilocks.csv", g), ("baseline.csv", b)] {
        let p = dir.join(name);
        written.push(p.clone());
        write_csv(&p, rows)?;
    }

    let both = |f: fn(&MetricsRecord) -> f64| {
        let smooth = |rows: &[MetricsRecord]| {
            let ys = ema(&rows.iter().map(f).collect::<Vec<_>>(), alpha);
            rows.iter().zip(ys).map(|(r, y)| (r.step as f64, y)).collect::<Vec<_>>()
        };
        vec![
            Series { label: "goldilocks", color: GOLD, points: smooth(g) },
            Series { label: "baseline", color: BASE, points: smooth(b) },
        ]
    };
    let evals = |rows: &[MetricsRecord]| {
        rows.iter()
            .filter_map(|r| r.validation_accuracy.map(|a| (r.step as f64, a)))
            .collect::<Vec<_>>()
    };

    let plots: Vec<(&str, &str, Vec<Series>)> = vec![
        ("validation_accuracy.svg", "validation accuracy", vec![
            Series { label: "goldilocks", color: GOLD, points: evals(g) },
            Series { label: "baseline", color: BASE, points: evals(b) },
        ]),
        ("mean_reward.svg", "mean training reward (EMA)", both(|r| r.mean_reward)),
        ("reward_std.svg", "reward std (EMA)", both(|r| r.reward_std)),
        ("zero_variance.svg", "zero-variance fraction (EMA)", both(|r| f64::from(r.zero_variance_flag))),
        ("grad_norm.svg", "gradient norm (EMA)", both(|r| r.grad_norm)),
        ("teacher_mae.svg", "teacher MAE on unseen samples (EMA)", vec![Series {
            label: "goldilocks",
            color: GOLD,
            points: sparse_ema(g, alpha, |r| r.teacher_val_mae)
                .into_iter()
                .map(|(s, y)| (s as f64, y))
                .collect(),
        }]),
    ];
    for (file, title, series) in plots {
        let p = dir.join(file);
        written.push(p.clone());
        line_plot(&p, title, &series)?;
    }
    let p = dir.join("teacher_band.svg");
    written.push(p.clone());
    band_plot(&p, g, alpha)
}

fn plot_err(e: impl std::fmt::Display) -> Error {
    Error::Plot(e.to_string())
}

fn bounds(points: impl Iterator<Item = (f64, f64)>) -> (f64, f64, f64, f64) {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let pad = ((y1 - y0) * 0.05).max(1e-3);
    (x0, x1, y0 - pad, y1 + pad)
}

fn line_plot(path: &Path, title: &str, series: &[Series]) -> Result<()> {
    let (x0, x1, y0, y1) = bounds(series.iter().flat_map(|s| s.points.iter().copied()));
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc("step").draw().map_err(plot_err)?;
    for s in series {
        let color = s.color;
        chart
            .draw_series(LineSeries::new(s.points.iter().copied(), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(s.label)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

fn band_plot(path: &Path, g: &[MetricsRecord], alpha: f64) -> Result<()> {
    let rows: Vec<_> = g.iter().filter(|r| r.teacher_mu.is_some()).collect();
    let steps: Vec<f64> = rows.iter().map(|r| r.step as f64).collect();
    let mu = ema(&rows.iter().map(|r| r.teacher_mu.unwrap_or(0.0)).collect::<Vec<_>>(), alpha);
    let sd = ema(&rows.iter().map(|r| r.teacher_sigma.unwrap_or(0.0)).collect::<Vec<_>>(), alpha);
    let upper: Vec<(f64, f64)> = steps.iter().zip(mu.iter().zip(&sd)).map(|(&x, (m, s))| (x, m + s)).collect();
    let lower: Vec<(f64, f64)> = steps.iter().zip(mu.iter().zip(&sd)).map(|(&x, (m, s))| (x, m - s)).collect();
    let (x0, x1, y0, y1) = bounds(upper.iter().chain(&lower).copied());
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("teacher predicted utility: mean ± std over candidates (EMA)", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc("step").draw().map_err(plot_err)?;
    if !upper.is_empty() {
        let mut poly = upper.clone();
        poly.extend(lower.iter().rev());
        chart
            .draw_series(std::iter::once(Polygon::new(poly, GOLD.mix(0.25).filled())))
            .map_err(plot_err)?;
        chart
            .draw_series(LineSeries::new(steps.iter().copied().zip(mu), GOLD.stroke_width(2)))
            .map_err(plot_err)?;
    }
    root.present().map_err(plot_err)
}
