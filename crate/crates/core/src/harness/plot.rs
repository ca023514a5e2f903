//! Log-linear convergence plots rendered as standalone SVG.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::trace::{parse_trace_csv, ParsedTrace, TraceMetric, XAxis};
use crate::error::{Result, SegaError};

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct PlotStyle {
    pub x: XAxis,
    pub y: TraceMetric,
    pub title: Option<String>,
    pub width: f64,
    pub height: f64,
}

impl Default for PlotStyle {
    fn default() -> Self {
        Self { x: XAxis::Iterations, y: TraceMetric::FGap, title: None, width: 720.0, height: 480.0 }
    }
}

/// One plotted series: a median line and, for several traces, a min/max band.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub median: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub runs: usize,
}

fn value_at(points: &[(f64, f64)], x: f64) -> Option<f64> {
    let last = points.last()?;
    if x > last.0 {
        return None;
    }
    let i = points.partition_point(|p| p.0 <= x);
    if i == 0 {
        None
    } else {
        Some(points[i - 1].1)
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Groups traces by label and reduces each group to median and min/max on the x grid
/// of its longest member. Rows with a nonpositive or missing y are skipped.
pub fn build_series(traces: &[(String, ParsedTrace)], style: &PlotStyle) -> Result<Vec<Series>> {
    if traces.is_empty() {
        return Err(SegaError::InvalidParameter("no traces to plot".into()));
    }
    let mut labels: Vec<&str> = Vec::new();
    for (l, _) in traces {
        if !labels.contains(&l.as_str()) {
            labels.push(l);
        }
    }
    let mut out = Vec::new();
    for label in labels {
        let runs: Vec<Vec<(f64, f64)>> = traces
            .iter()
            .filter(|(l, _)| l == label)
            .map(|(_, t)| {
                t.rows
                    .iter()
                    .filter_map(|r| r.metric(style.y).filter(|v| *v > 0.0 && v.is_finite()).map(|v| (r.axis(style.x), v)))
                    .collect()
            })
            .collect();
        let grid: Vec<f64> = runs.iter().max_by_key(|r| r.len()).map(|r| r.iter().map(|p| p.0).collect()).unwrap_or_default();
        let mut s = Series { label: label.to_string(), x: vec![], median: vec![], lo: vec![], hi: vec![], runs: runs.len() };
        for x in grid {
            let mut vals: Vec<f64> = runs.iter().filter_map(|r| value_at(r, x)).collect();
            if vals.is_empty() {
                continue;
            }
            s.lo.push(vals.iter().copied().fold(f64::INFINITY, f64::min));
            s.hi.push(vals.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            s.median.push(median(&mut vals));
            s.x.push(x);
        }
        out.push(s);
    }
    Ok(out)
}

fn axis_label(x: XAxis) -> &'static str {
    match x {
        XAxis::Iterations => "iterations",
        XAxis::OracleCalls => "oracle calls",
        XAxis::CostUnits => "cost units",
    }
}

fn metric_label(m: TraceMetric) -> &'static str {
    match m {
        TraceMetric::FGap => "f(x) - f*",
        TraceMetric::DistSq => "||x - x*||^2",
        TraceMetric::Lyapunov => "Lyapunov",
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders series to SVG text.
pub fn render_svg(series: &[Series], style: &PlotStyle) -> String {
    let (w, h) = (style.width, style.height);
    let (ml, mr, mt, mb) = (80.0, 170.0, 40.0, 50.0);
    let (pw, ph) = (w - ml - mr, h - mt - mb);
    let xs = series.iter().flat_map(|s| s.x.iter().copied());
    let xmax = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    let xmin = xs.fold(f64::INFINITY, f64::min);
    let ys = series.iter().flat_map(|s| s.lo.iter().chain(s.hi.iter()).copied());
    let ymin = ys.clone().fold(f64::INFINITY, f64::min);
    let ymax = ys.fold(f64::NEG_INFINITY, f64::max);
    let (xmin, xmax) = if xmin.is_finite() && xmax > xmin { (xmin, xmax) } else { (0.0, 1.0) };
    let (lmin, lmax) = if ymin.is_finite() && ymax.is_finite() {
        let (a, b) = (ymin.log10().floor(), ymax.log10().ceil());
        if b > a { (a, b) } else { (a - 1.0, a + 1.0) }
    } else {
        (-1.0, 1.0)
    };
    let px = |x: f64| ml + (x - xmin) / (xmax - xmin) * pw;
    let py = |y: f64| mt + (lmax - y.log10()) / (lmax - lmin) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    if let Some(t) = &style.title {
        let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, ml + pw / 2.0, esc(t));
    }
    let _ = writeln!(s, r#"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    let mut e = lmin;
    let step = ((lmax - lmin) / 10.0).ceil().max(1.0);
    while e <= lmax + 1e-9 {
        let y = py(10f64.powf(e));
        let _ = writeln!(s, r##"<line x1="{ml}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, ml + pw);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{}</text>"#, ml - 6.0, y + 4.0, e as i64);
        e += step;
    }
    for i in 0..=5 {
        let xv = xmin + (xmax - xmin) * i as f64 / 5.0;
        let x = px(xv);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, mt + ph + 18.0, fmt_tick(xv));
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, ml + pw / 2.0, h - 10.0, axis_label(style.x));
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        mt + ph / 2.0,
        mt + ph / 2.0,
        esc(metric_label(style.y))
    );
    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        if ser.runs > 1 && !ser.x.is_empty() {
            let mut pts: Vec<String> = ser.x.iter().zip(&ser.hi).map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y))).collect();
            pts.extend(ser.x.iter().zip(&ser.lo).rev().map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y))));
            let _ = writeln!(s, r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, pts.join(" "));
        }
        let pts: Vec<String> = ser.x.iter().zip(&ser.median).map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y))).collect();
        let _ = writeln!(s, r#"<polyline class="median" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, pts.join(" "));
        let ly = mt + 14.0 + 18.0 * k as f64;
        let lx = ml + pw + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#, lx + 22.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 28.0, ly + 4.0, esc(&ser.label));
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1e5 {
        format!("{v:.1e}")
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// Label of a parsed trace: its config name if present, else its method, else the file stem.
pub fn trace_label(path: &Path, t: &ParsedTrace) -> String {
    t.meta("config")
        .or_else(|| t.meta("method"))
        .map(str::to_string)
        .unwrap_or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
}

/// Reads CSV traces and writes one SVG to `out`.
pub fn emit_plot(paths: &[PathBuf], style: &PlotStyle, out: &Path) -> Result<()> {
    if paths.is_empty() {
        return Err(SegaError::InvalidParameter("no CSV files given".into()));
    }
    let mut traces = Vec::new();
    for p in paths {
        let text = std::fs::read_to_string(p)?;
        let t = parse_trace_csv(&text).map_err(|e| SegaError::InvalidParameter(format!("{}: {e}", p.display())))?;
        traces.push((trace_label(p, &t), t));
    }
    let series = build_series(&traces, style)?;
    std::fs::write(out, render_svg(&series, style))?;
    Ok(())
}
