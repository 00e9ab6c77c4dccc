//! Standalone SVG line plots.

use std::fmt::Write;

use anyhow::{bail, Result};
use iles::Trajectory;

/// Most points drawn per series; longer series are decimated.
pub const MAX_PLOTTED_POINTS: usize = 4000;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 72.0;
const MARGIN_R: f64 = 180.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 56.0;

const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const DASHES: [&str; 4] = ["", "6 3", "2 2", "8 3 2 3"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series {
            label: label.into(),
            points,
        }
    }

    /// First component of a trajectory against time.
    pub fn from_trajectory(label: impl Into<String>, x: &Trajectory) -> Self {
        let pts = x.grid().times().zip(x.rows()).map(|(t, r)| (t, r[0])).collect();
        Series::new(label, pts)
    }
}

#[derive(Debug, Clone, Default)]
pub struct PlotStyle {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Plot `log10 y`; non-positive values are dropped.
    pub log_y: bool,
}

/// Keeps the first and last point and, per bucket, the minimum and maximum
/// in order of appearance, so the envelope of the curve survives.
pub fn decimate(points: &[(f64, f64)], max_points: usize) -> Vec<(f64, f64)> {
    if points.len() <= max_points || max_points < 4 {
        return points.to_vec();
    }
    let buckets = (max_points - 2) / 2;
    let inner = &points[1..points.len() - 1];
    let mut out = Vec::with_capacity(max_points);
    out.push(points[0]);
    for b in 0..buckets {
        let lo = b * inner.len() / buckets;
        let hi = ((b + 1) * inner.len() / buckets).max(lo + 1);
        let chunk = &inner[lo..hi];
        let (mut imin, mut imax) = (0, 0);
        for (i, p) in chunk.iter().enumerate() {
            if p.1 < chunk[imin].1 {
                imin = i;
            }
            if p.1 > chunk[imax].1 {
                imax = i;
            }
        }
        let (a, b) = (imin.min(imax), imin.max(imax));
        out.push(chunk[a]);
        if b != a {
            out.push(chunk[b]);
        }
    }
    out.push(points[points.len() - 1]);
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Tick positions covering `[lo, hi]` at a 1-2-5 spacing.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 8.0)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.1e}")
    }
}

/// Renders the series as a standalone SVG document.
pub fn emit_svg_plot(series: &[Series], style: &PlotStyle) -> Result<String> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        bail!("cannot plot an empty series list");
    }
    let prepared: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            let pts: Vec<(f64, f64)> = s
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite() && (!style.log_y || *y > 0.0))
                .map(|&(x, y)| (x, if style.log_y { y.log10() } else { y }))
                .collect();
            decimate(&pts, MAX_PLOTTED_POINTS)
        })
        .collect();
    let all = prepared.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        bail!("no finite points to plot");
    }
    if x1 == x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 == y0 {
        let pad = if y0 == 0.0 { 1.0 } else { 0.1 * y0.abs() };
        y0 -= pad;
        y1 += pad;
    } else {
        let pad = 0.05 * (y1 - y0);
        y0 -= pad;
        y1 += pad;
    }
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| MARGIN_T + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )?;
    writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#)?;
    writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        MARGIN_L + pw / 2.0,
        escape(&style.title)
    )?;
    writeln!(
        s,
        r##"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
    )?;
    for t in ticks(x0, x1) {
        let x = sx(t);
        writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="#444"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"##,
            MARGIN_T + ph,
            MARGIN_T + ph + 5.0,
            MARGIN_T + ph + 18.0,
            fmt_tick(t)
        )?;
    }
    for t in ticks(y0, y1) {
        let y = sy(t);
        let label = if style.log_y { format!("1e{}", fmt_tick(t)) } else { fmt_tick(t) };
        writeln!(
            s,
            r##"<line x1="{}" y1="{y:.2}" x2="{MARGIN_L}" y2="{y:.2}" stroke="#444"/><line x1="{MARGIN_L}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
            MARGIN_L - 5.0,
            MARGIN_L + pw,
            MARGIN_L - 8.0,
            y + 4.0,
            escape(&label)
        )?;
    }
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        MARGIN_L + pw / 2.0,
        HEIGHT - 14.0,
        escape(&style.x_label)
    )?;
    let y_label = if style.log_y {
        format!("{} (log scale)", style.y_label)
    } else {
        style.y_label.clone()
    };
    writeln!(
        s,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        MARGIN_T + ph / 2.0,
        escape(&y_label)
    )?;
    for (i, (ser, pts)) in series.iter().zip(&prepared).enumerate() {
        let color = COLORS[i % COLORS.len()];
        let dash = DASHES[(i / COLORS.len() + i) % DASHES.len()];
        let dash_attr = if dash.is_empty() {
            String::new()
        } else {
            format!(r#" stroke-dasharray="{dash}""#)
        };
        if !pts.is_empty() {
            let mut path = String::with_capacity(pts.len() * 16);
            for &(x, y) in pts {
                write!(path, "{:.2},{:.2} ", sx(x), sy(y))?;
            }
            writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash_attr} points="{}"/>"#,
                path.trim_end()
            )?;
        }
        let ly = MARGIN_T + 14.0 + 18.0 * i as f64;
        let lx = MARGIN_L + pw + 12.0;
        writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash_attr}/><text x="{}" y="{}">{}</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0,
            escape(&ser.label)
        )?;
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimation_keeps_extremes_and_bound() {
        let pts: Vec<(f64, f64)> = (0..1_000_000)
            .map(|i| {
                let t = i as f64 * 1e-5;
                (t, (7.0 * t).sin() + if i == 123_457 { 5.0 } else { 0.0 })
            })
            .collect();
        let d = decimate(&pts, MAX_PLOTTED_POINTS);
        assert!(d.len() <= MAX_PLOTTED_POINTS);
        let max = |v: &[(f64, f64)]| v.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
        assert_eq!(max(&d), max(&pts));
        assert_eq!(d.first(), pts.first());
        assert_eq!(d.last(), pts.last());
        assert!(d.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn short_series_are_untouched() {
        let pts = vec![(0.0, 1.0), (1.0, 2.0)];
        assert_eq!(decimate(&pts, 4000), pts);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(emit_svg_plot(&[], &PlotStyle::default()).is_err());
        assert!(emit_svg_plot(&[Series::new("a", vec![])], &PlotStyle::default()).is_err());
    }

    #[test]
    fn constant_series_plots_flat_line() {
        let svg = emit_svg_plot(
            &[Series::new("c", vec![(0.0, 2.0), (1.0, 2.0), (2.0, 2.0)])],
            &PlotStyle::default(),
        )
        .unwrap();
        let line = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        let pts = line.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
        let ys: Vec<&str> = pts.split(' ').map(|p| p.split(',').nth(1).unwrap()).collect();
        assert!(ys.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn overlay_uses_distinct_strokes_and_legend() {
        let svg = emit_svg_plot(
            &[
                Series::new("x_1", vec![(0.0, 0.0), (1.0, 1.0)]),
                Series::new("x*", vec![(0.0, 1.0), (1.0, 0.0)]),
            ],
            &PlotStyle {
                title: "a < b & c".into(),
                ..PlotStyle::default()
            },
        )
        .unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(COLORS[0]) && svg.contains(COLORS[1]));
        assert!(svg.contains(">x_1<") && svg.contains(">x*<"));
        assert!(svg.contains("a &lt; b &amp; c"));
    }
}
