use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use super::{mean_curves, MeanCurve, SummaryRow};
use crate::error::Result;

pub const CSV_HEADER: [&str; 6] = ["algorithm", "seed", "round", "cum_regret", "cum_seconds", "opt_calls"];

pub fn write_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(rows: &[SummaryRow], path: &Path) -> Result<()> {
    write_csv(rows, std::fs::File::create(path)?)
}

pub fn parse_csv<R: Read>(input: R) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for row in r.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

pub fn read_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    parse_csv(std::fs::File::open(path)?)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const PANEL_W: f64 = 440.0;
const PANEL_H: f64 = 300.0;
const MARGIN: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Panel {
    x0: f64,
    max_round: f64,
    max_y: f64,
}

impl Panel {
    fn px(&self, round: f64) -> f64 {
        self.x0 + MARGIN + PANEL_W * round / self.max_round
    }

    fn py(&self, y: f64) -> f64 {
        MARGIN + PANEL_H * (1.0 - y / self.max_y)
    }

    fn frame(&self, svg: &mut String, title: &str, y_label: &str) {
        let (l, t) = (self.x0 + MARGIN, MARGIN);
        let _ = writeln!(
            svg,
            r#"<rect x="{l}" y="{t}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{}</text>"#,
            l + PANEL_W / 2.0,
            t - 20.0,
            escape(title)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">round</text>"#,
            l + PANEL_W / 2.0,
            t + PANEL_H + 35.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end" font-size="11">{}</text>"#,
            l - 4.0,
            t + 4.0,
            fmt_tick(self.max_y)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end" font-size="11">0</text>"#,
            l - 4.0,
            t + PANEL_H
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end" font-size="11">{}</text>"#,
            l + PANEL_W,
            t + PANEL_H + 16.0,
            fmt_tick(self.max_round)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="12" transform="rotate(-90 {} {})" text-anchor="middle">{}</text>"#,
            l - 40.0,
            t + PANEL_H / 2.0,
            l - 40.0,
            t + PANEL_H / 2.0,
            escape(y_label)
        );
    }
}

fn fmt_tick(v: f64) -> String {
    if v >= 100.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn polyline(points: impl Iterator<Item = (f64, f64)>) -> String {
    points.map(|(x, y)| format!("{x:.2},{y:.2}")).collect::<Vec<_>>().join(" ")
}

/// Self-contained SVG with mean cumulative regret (shaded by one standard
/// error) and mean cumulative seconds, one series per algorithm.
pub fn render_plot(rows: &[SummaryRow]) -> String {
    let curves = mean_curves(rows);
    render_curves(&curves)
}

fn render_curves(curves: &[MeanCurve]) -> String {
    let width = 2.0 * (PANEL_W + 2.0 * MARGIN);
    let height = PANEL_H + 2.0 * MARGIN + 20.0 * curves.len() as f64 + 20.0;
    let max_round = curves
        .iter()
        .flat_map(|c| c.rounds.iter().copied())
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let positive = |v: f64| if v > 0.0 && v.is_finite() { v } else { 1.0 };
    let max_regret = positive(
        curves
            .iter()
            .flat_map(|c| c.mean_regret.iter().zip(&c.stderr_regret).map(|(m, s)| m + s))
            .fold(0.0, f64::max),
    );
    let max_seconds = positive(curves.iter().flat_map(|c| c.mean_seconds.iter().copied()).fold(0.0, f64::max));

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let regret = Panel {
        x0: 0.0,
        max_round,
        max_y: max_regret,
    };
    let seconds = Panel {
        x0: PANEL_W + 2.0 * MARGIN,
        max_round,
        max_y: max_seconds,
    };
    regret.frame(&mut svg, "Cumulative regret", "regret");
    seconds.frame(&mut svg, "Cumulative runtime", "seconds");

    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let upper = c.rounds.iter().zip(c.mean_regret.iter().zip(&c.stderr_regret));
        let band: Vec<(f64, f64)> = upper
            .clone()
            .map(|(&r, (m, s))| (regret.px(r as f64), regret.py(m + s)))
            .chain(
                upper
                    .rev()
                    .map(|(&r, (m, s))| (regret.px(r as f64), regret.py((m - s).max(0.0)))),
            )
            .collect();
        if !band.is_empty() {
            let _ = writeln!(
                svg,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                polyline(band.into_iter())
            );
        }
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            polyline(c.rounds.iter().zip(&c.mean_regret).map(|(&r, &m)| (regret.px(r as f64), regret.py(m))))
        );
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            polyline(c.rounds.iter().zip(&c.mean_seconds).map(|(&r, &s)| (seconds.px(r as f64), seconds.py(s))))
        );
        let y = PANEL_H + 2.0 * MARGIN + 20.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{m}" y1="{y}" x2="{x2}" y2="{y}" stroke="{color}" stroke-width="3"/>"#,
            m = MARGIN,
            x2 = MARGIN + 20.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="12">{} ({} seeds)</text>"#,
            MARGIN + 26.0,
            y + 4.0,
            escape(&c.algorithm),
            c.seeds
        );
    }
    let _ = writeln!(svg, "</svg>");
    svg
}

pub fn emit_plot(rows: &[SummaryRow], path: &Path) -> Result<()> {
    std::fs::write(path, render_plot(rows))?;
    Ok(())
}
