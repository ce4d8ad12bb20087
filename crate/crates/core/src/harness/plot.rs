//! Minimal static SVG line charts from CSV columns.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Values at or below zero are drawn at this floor on a log axis.
pub const LOG_FLOOR: f64 = 1e-12;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlotOptions {
    pub log_x: bool,
    pub log_y: bool,
    pub title: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Reads `x_col` and each of `y_cols` from a headed CSV and writes an SVG with one
/// polyline per y column. Empty cells are skipped. Returns warnings (for example
/// log-axis clamping).
pub fn emit_plot(
    csv_path: &Path,
    x_col: &str,
    y_cols: &[&str],
    out: &Path,
    opts: &PlotOptions,
) -> Result<Vec<String>> {
    let mut reader = csv::Reader::from_path(csv_path)
        .map_err(|e| Error::Parse(format!("{}: {e}", csv_path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse(format!("{}: {e}", csv_path.display())))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let xi = column(x_col)?;
    let yis = y_cols
        .iter()
        .map(|c| column(c))
        .collect::<Result<Vec<usize>>>()?;
    let mut series: Vec<Series> = y_cols
        .iter()
        .map(|c| Series {
            name: (*c).to_string(),
            points: Vec::new(),
        })
        .collect();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("{}: {e}", csv_path.display())))?;
        let cell = |i: usize| -> Result<Option<f64>> {
            match rec.get(i).map(str::trim) {
                None | Some("") => Ok(None),
                Some(s) => s
                    .parse()
                    .map(Some)
                    .map_err(|_| Error::Parse(format!("row {}: `{s}` is not a number", row + 2))),
            }
        };
        let Some(x) = cell(xi)? else { continue };
        for (s, &yi) in series.iter_mut().zip(&yis) {
            if let Some(y) = cell(yi)? {
                s.points.push((x, y));
            }
        }
    }
    let (svg, warnings) = render_svg(&series, x_col, opts);
    std::fs::write(out, svg)?;
    Ok(warnings)
}

fn clamp_log(v: f64, axis: &str, warnings: &mut Vec<String>) -> f64 {
    if v > LOG_FLOOR {
        v.log10()
    } else {
        let msg = format!("non-positive {axis} values clamped to {LOG_FLOOR:e} on the log axis");
        if !warnings.contains(&msg) {
            warnings.push(msg);
        }
        LOG_FLOOR.log10()
    }
}

/// Tick positions in transformed coordinates, with labels.
fn ticks(lo: f64, hi: f64, log: bool) -> Vec<(f64, String)> {
    if log {
        let (a, b) = (lo.floor() as i32, hi.ceil() as i32);
        let step = ((b - a) / 6).max(1);
        return (a..=b)
            .step_by(step as usize)
            .map(|k| k as f64)
            .filter(|k| *k >= lo - 1e-9 && *k <= hi + 1e-9)
            .map(|k| (k, format!("1e{}", k as i32)))
            .collect();
    }
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut out = Vec::new();
    let mut v = (lo / step).ceil() * step;
    while v <= hi + 1e-9 * step {
        let label = format!("{}", (v / step).round() * step);
        out.push((v, trim_label(&label)));
        v += step;
    }
    out
}

fn trim_label(s: &str) -> String {
    match s.parse::<f64>() {
        Ok(v) if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) => format!("{v:.1e}"),
        Ok(v) => {
            let t = format!("{v:.4}");
            t.trim_end_matches('0').trim_end_matches('.').to_string()
        }
        Err(_) => s.to_string(),
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Renders the chart; returns the SVG text and warnings.
pub fn render_svg(series: &[Series], x_label: &str, opts: &PlotOptions) -> (String, Vec<String>) {
    let mut warnings = Vec::new();
    let transformed: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|&(x, y)| {
                    let tx = if opts.log_x {
                        clamp_log(x, "x", &mut warnings)
                    } else {
                        x
                    };
                    let ty = if opts.log_y {
                        clamp_log(y, "y", &mut warnings)
                    } else {
                        y
                    };
                    (tx, ty)
                })
                .collect()
        })
        .collect();
    let all = transformed.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = all.fold(
        (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        ),
        |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
    );
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 <= 0.0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 <= 0.0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| MARGIN_TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if let Some(title) = &opts.title {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
            MARGIN_LEFT + pw / 2.0,
            escape(title)
        );
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for (v, label) in ticks(x0, x1, opts.log_x) {
        let x = sx(v);
        let yb = MARGIN_TOP + ph;
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{yb}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" text-anchor="middle">{label}</text>"#,
            yb + 5.0,
            yb + 20.0
        );
    }
    for (v, label) in ticks(y0, y1, opts.log_y) {
        let y = sy(v);
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{y:.2}" x2="{MARGIN_LEFT}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{label}</text>"#,
            MARGIN_LEFT - 5.0,
            MARGIN_LEFT - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + pw / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );
    for (i, (s, pts)) in series.iter().zip(&transformed).enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
        let ly = MARGIN_TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - MARGIN_RIGHT + 10.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    (svg, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, text: &str) -> std::path::PathBuf {
        let p = dir.join("d.csv");
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn two_rows_give_one_two_point_polyline() {
        let dir = tempfile::tempdir().unwrap();
        let csv = write(dir.path(), "epoch,kl\n0,1.5\n10,0.5\n");
        let out = dir.path().join("p.svg");
        let warn = emit_plot(&csv, "epoch", &["kl"], &out, &PlotOptions::default()).unwrap();
        assert!(warn.is_empty());
        let svg = std::fs::read_to_string(out).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        let pts = svg
            .split("points=\"")
            .nth(1)
            .unwrap()
            .split('"')
            .next()
            .unwrap();
        assert_eq!(pts.split(' ').count(), 2);
    }

    #[test]
    fn log_axis_clamps_zero_with_warning() {
        let dir = tempfile::tempdir().unwrap();
        let csv = write(dir.path(), "x,y\n1,0\n2,1e-3\n3,\n");
        let out = dir.path().join("p.svg");
        let opts = PlotOptions {
            log_y: true,
            ..Default::default()
        };
        let warn = emit_plot(&csv, "x", &["y"], &out, &opts).unwrap();
        assert_eq!(warn.len(), 1);
        assert!(warn[0].contains("1e-12"));
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let csv = write(dir.path(), "x,y\n1,2\n");
        let err = emit_plot(
            &csv,
            "x",
            &["kl"],
            &dir.path().join("p.svg"),
            &PlotOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "kl"));
    }
}
