//! CSV tables and small self-contained SVG plots for comparison runs.
//!
//! Output is deterministic: numbers are written with fixed precision and
//! nothing depends on the clock or on iteration order of hash maps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dataset::{Series, Split};
use crate::error::{Error, Result};
use crate::evaluate::{Comparison, EvalReport, PredictionPoint};
use crate::model::ModelKind;

/// Days shown in the series overview.
pub const SERIES_DAYS: usize = 500;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    /// File stem; written as `<name>.csv` and `<name>.svg`.
    pub name: String,
    pub csv: String,
    pub svg: String,
}

impl Figure {
    pub fn write(&self, dir: &Path) -> Result<[PathBuf; 2]> {
        let csv = dir.join(format!("{}.csv", self.name));
        let svg = dir.join(format!("{}.svg", self.name));
        std::fs::write(&csv, &self.csv).map_err(|e| Error::io(&csv, e))?;
        std::fs::write(&svg, &self.svg).map_err(|e| Error::io(&svg, e))?;
        Ok([csv, svg])
    }
}

fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Contract(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Contract(e.to_string()))
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Padded data range; degenerate ranges are widened to unit width.
fn extent(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

struct Plot {
    body: String,
    x: (f64, f64),
    y: (f64, f64),
}

impl Plot {
    /// `x_ticks: false` suits categorical axes labelled with [`Plot::category`].
    fn new(title: &str, x_label: &str, y_label: &str, x: (f64, f64), y: (f64, f64), x_ticks: bool) -> Self {
        let mut body = String::new();
        let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN / 2.0, MARGIN, HEIGHT - MARGIN);
        let _ = writeln!(
            body,
            r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
        );
        let _ = writeln!(
            body,
            r#"<text x="{}" y="25" text-anchor="middle" font-size="16">{}</text>"#,
            WIDTH / 2.0,
            escape(title)
        );
        let _ = writeln!(
            body,
            r#"<path d="M{left} {top} L{left} {bottom} L{right} {bottom}" stroke="black" fill="none"/>"#
        );
        for (value, label) in [(x.0, left), (x.1, right)].into_iter().filter(|_| x_ticks) {
            let _ = writeln!(
                body,
                r#"<text x="{label}" y="{}" text-anchor="middle" font-size="11">{value:.1}</text>"#,
                bottom + 15.0
            );
        }
        for (value, pos) in [(y.0, bottom), (y.1, top)] {
            let _ = writeln!(
                body,
                r#"<text x="{}" y="{pos}" text-anchor="end" font-size="11">{value:.1}</text>"#,
                left - 4.0
            );
        }
        let _ = writeln!(
            body,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
            (left + right) / 2.0,
            HEIGHT - 12.0,
            escape(x_label)
        );
        let _ = writeln!(
            body,
            r#"<text x="14" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {})">{}</text>"#,
            (top + bottom) / 2.0,
            (top + bottom) / 2.0,
            escape(y_label)
        );
        Plot { body, x, y }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 1.5 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }

    fn polyline(&mut self, points: &[(f64, f64)], color: &str) {
        let coords: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y)))
            .collect();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" stroke="{color}" stroke-width="1" fill="none"/>"#,
            coords.join(" ")
        );
    }

    fn dot(&mut self, x: f64, y: f64, color: &str) {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{:.2}" cy="{:.2}" r="1.5" fill="{color}" fill-opacity="0.6"/>"#,
            self.px(x),
            self.py(y)
        );
    }

    fn bar(&mut self, x0: f64, x1: f64, y: f64, color: &str) {
        let (left, right) = (self.px(x0), self.px(x1));
        let (top, base) = (self.py(y.max(self.y.0)), self.py(self.y.0));
        let _ = writeln!(
            self.body,
            r#"<rect x="{left:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
            right - left,
            base - top
        );
    }

    fn category(&mut self, x: f64, text: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="11">{}</text>"#,
            self.px(x),
            HEIGHT - MARGIN + 15.0,
            escape(text)
        );
    }

    fn legend(&mut self, entries: &[(&str, &str)]) {
        for (i, (name, color)) in entries.iter().enumerate() {
            let y = MARGIN + 14.0 * i as f64;
            let x = WIDTH - 1.5 * MARGIN - 60.0;
            let _ = writeln!(
                self.body,
                r#"<rect x="{x}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}" font-size="11">{}</text>"#,
                y - 9.0,
                x + 14.0,
                y,
                escape(name)
            );
        }
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n{}</svg>\n",
            self.body
        )
    }
}

const SPLIT_COLORS: [(Split, &str); 3] = [
    (Split::Train, "#1f77b4"),
    (Split::Validation, "#2ca02c"),
    (Split::Test, "#d62728"),
];

/// Ozone over the first [`SERIES_DAYS`] days.
pub fn series_figure(series: &Series) -> Result<Figure> {
    let n = series.len().min(SERIES_DAYS);
    let csv = csv_table(
        &["day", "date", "o3"],
        (0..n).map(|t| vec![t.to_string(), series.timestamps[t].to_string(), num(series.o3[t])]),
    )?;
    let y = extent(series.o3[..n].iter().copied());
    let mut plot = Plot::new(
        &format!("Ozone level, first {n} days"),
        "day",
        "O3",
        (0.0, n.saturating_sub(1).max(1) as f64),
        y,
        true,
    );
    let points: Vec<(f64, f64)> = (0..n).map(|t| (t as f64, series.o3[t])).collect();
    plot.polyline(&points, "#1f77b4");
    Ok(Figure {
        name: "fig5_series".into(),
        csv,
        svg: plot.finish(),
    })
}

/// Correlation of every model on every split. Undefined values are left
/// blank in the table and drawn as missing bars.
pub fn comparison_figure(report: &EvalReport) -> Result<Figure> {
    let cor = |kind: ModelKind, split: Split| {
        report
            .model(kind)
            .and_then(|m| m.metrics.as_ref())
            .and_then(|e| e.split(split).cor)
    };
    let kinds: Vec<ModelKind> = report.models.iter().map(|m| m.kind).collect();
    let mut rows = Vec::new();
    for &kind in &kinds {
        for split in Split::ALL {
            rows.push(vec![
                kind.to_string(),
                split.to_string(),
                cor(kind, split).map(num).unwrap_or_default(),
            ]);
        }
    }
    let csv = csv_table(&["model", "split", "cor"], rows)?;
    let lowest = kinds
        .iter()
        .flat_map(|&k| Split::ALL.map(|s| cor(k, s)))
        .flatten()
        .fold(0.0_f64, f64::min);
    let mut plot = Plot::new(
        "Correlation by model and split",
        "model",
        "COR",
        (0.0, kinds.len().max(1) as f64),
        (lowest, 1.0),
        false,
    );
    for (i, &kind) in kinds.iter().enumerate() {
        for (j, (split, color)) in SPLIT_COLORS.iter().enumerate() {
            let x0 = i as f64 + 0.1 + 0.27 * j as f64;
            if let Some(r) = cor(kind, *split) {
                plot.bar(x0, x0 + 0.25, r, color);
            }
        }
        plot.category(i as f64 + 0.5, &kind.to_string().to_uppercase());
    }
    plot.legend(&SPLIT_COLORS.map(|(s, c)| (split_name(s), c)));
    Ok(Figure {
        name: "fig6_comparison".into(),
        csv,
        svg: plot.finish(),
    })
}

fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Validation => "validation",
        Split::Test => "test",
    }
}

/// Target against prediction for one model, coloured by split.
pub fn scatter_figure(name: &str, title: &str, points: &[PredictionPoint]) -> Result<Figure> {
    let csv = csv_table(
        &["date", "split", "actual", "predicted"],
        points.iter().map(|p| {
            vec![p.date.to_string(), p.split.to_string(), num(p.actual), num(p.predicted)]
        }),
    )?;
    let range = extent(points.iter().flat_map(|p| [p.actual, p.predicted]));
    let mut plot = Plot::new(title, "target O3", "predicted O3", range, range, true);
    plot.polyline(&[(range.0, range.0), (range.1, range.1)], "#999999");
    for (split, color) in SPLIT_COLORS {
        for p in points.iter().filter(|p| p.split == split) {
            plot.dot(p.actual, p.predicted, color);
        }
    }
    plot.legend(&SPLIT_COLORS.map(|(s, c)| (split_name(s), c)));
    Ok(Figure {
        name: name.into(),
        csv,
        svg: plot.finish(),
    })
}

/// The full figure set for a comparison run. Scatter plots are skipped
/// for models that failed to train.
pub fn comparison_figures(series: &Series, comparison: &Comparison) -> Result<Vec<Figure>> {
    let mut figures = vec![series_figure(series)?, comparison_figure(&comparison.report)?];
    for (kind, name, title) in [
        (ModelKind::Bel, "fig7_bel_scatter", "BEL: target vs predicted"),
        (ModelKind::Mlp, "fig8_mlp_scatter", "MLP: target vs predicted"),
    ] {
        match comparison.run(kind) {
            Some(run) if run.model.is_some() => {
                figures.push(scatter_figure(name, title, &run.points)?)
            }
            _ => log::warn!("no {kind} predictions; skipping {name}"),
        }
    }
    Ok(figures)
}
