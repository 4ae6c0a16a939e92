//! Static SVG figures: training curves and occupancy heatmaps.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::trainer::{moving_average, RunMetrics, SMOOTHING_WINDOW};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

/// Which curve to draw from a metrics CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    /// `-mean_return` per iteration on a log axis, with a moving average.
    NegativeReturn,
    /// `effective_lr` per iteration on a log axis, with a moving average.
    EffectiveLr,
}

/// Header of the occupancy CSV.
pub const OCCUPANCY_HEADER: [&str; 4] = ["row", "col", "count", "normalized"];

/// An occupancy histogram read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyTable {
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub counts: Vec<u64>,
    pub normalized: Vec<f64>,
}

impl OccupancyTable {
    /// Parses `row,col,count,normalized` lines; every cell of the implied
    /// `rows x cols` grid must appear exactly once.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| Error::Parse(format!("header: {e}")))?.clone();
        if header.iter().ne(OCCUPANCY_HEADER.iter().copied()) {
            return Err(Error::Parse(format!("header: expected `{}`", OCCUPANCY_HEADER.join(","))));
        }
        let mut cells = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let row = i + 1;
            let err = |msg: String| Error::Parse(format!("row {row}: {msg}"));
            let record = record.map_err(|e| err(e.to_string()))?;
            if record.len() != 4 {
                return Err(err(format!("expected 4 fields, found {}", record.len())));
            }
            let r: usize = record[0].trim().parse().map_err(|_| err(format!("bad row index {:?}", &record[0])))?;
            let c: usize = record[1].trim().parse().map_err(|_| err(format!("bad column index {:?}", &record[1])))?;
            let n: u64 = record[2].trim().parse().map_err(|_| err(format!("bad count {:?}", &record[2])))?;
            let p: f64 = record[3].trim().parse().map_err(|_| err(format!("bad normalized value {:?}", &record[3])))?;
            if !(p.is_finite() && p >= 0.0) {
                return Err(err(format!("normalized value {p} is not a nonnegative number")));
            }
            cells.push((r, c, n, p));
        }
        if cells.is_empty() {
            return Err(Error::Parse("occupancy CSV has no data rows".into()));
        }
        let n = cells.len();
        if let Some(i) = cells.iter().position(|c| c.0 >= n || c.1 >= n) {
            return Err(Error::Parse(format!("row {}: cell index out of range for {n} rows", i + 1)));
        }
        let rows = cells.iter().map(|c| c.0).max().unwrap_or(0) + 1;
        let cols = cells.iter().map(|c| c.1).max().unwrap_or(0) + 1;
        if rows.checked_mul(cols) != Some(cells.len()) {
            return Err(Error::Parse(format!("{} rows do not cover a {rows} x {cols} grid exactly once", cells.len())));
        }
        let mut counts = vec![0; cells.len()];
        let mut normalized = vec![0.0; cells.len()];
        let mut seen = vec![false; cells.len()];
        for (i, &(r, c, n, p)) in cells.iter().enumerate() {
            let idx = r * cols + c;
            if std::mem::replace(&mut seen[idx], true) {
                return Err(Error::Parse(format!("row {}: cell ({r}, {c}) appears twice", i + 1)));
            }
            counts[idx] = n;
            normalized[idx] = p;
        }
        Ok(Self { rows, cols, counts, normalized })
    }
}

fn svg_open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(out, "<text x=\"{}\" y=\"18\" text-anchor=\"middle\">{}</text>", WIDTH / 2.0, escape(title));
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn span(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        (lo - pad, hi + pad)
    }
}

/// Line plot of one metrics column against the iteration index.
pub fn curve_svg(metrics: &RunMetrics, kind: CurveKind) -> Result<String> {
    if metrics.is_empty() {
        return Err(Error::Parse("metrics have no rows to plot".into()));
    }
    let (title, ylabel, values) = match kind {
        CurveKind::NegativeReturn => ("negative expected return", "-mean_return", metrics.column(|r| -r.mean_return)),
        CurveKind::EffectiveLr => ("effective learning rate", "effective_lr", metrics.column(|r| r.effective_lr)),
    };
    let xs = metrics.column(|r| r.iter as f64);
    let smooth = moving_average(&values, SMOOTHING_WINDOW);
    let log = values.iter().all(|v| v.is_finite() && *v > 0.0);
    let ty = |v: f64| if log { v.log10() } else { v };
    let finite: Vec<f64> = values.iter().chain(&smooth).map(|&v| ty(v)).filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Err(Error::Parse("metrics contain no finite values to plot".into()));
    }
    let (y0, y1) = span(
        finite.iter().copied().fold(f64::INFINITY, f64::min),
        finite.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let (x0, x1) = span(xs[0], xs[xs.len() - 1].max(xs[0]));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut out = String::new();
    svg_open(&mut out, title);
    let _ =
        writeln!(out, "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"black\"/>");
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let yv = y0 + f * (y1 - y0);
        let label = if log { format!("{:.3e}", 10f64.powf(yv)) } else { format!("{yv:.3e}") };
        let _ =
            writeln!(out, "<text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">{label}</text>", LEFT - 4.0, py(yv) + 4.0);
        let xv = x0 + f * (x1 - x0);
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\">{xv:.0}</text>",
            px(xv),
            HEIGHT - BOTTOM + 16.0
        );
    }
    let scale = if log { " (log scale)" } else { "" };
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">iteration</text>",
        LEFT + pw / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        out,
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{ylabel}{scale}</text>",
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    for (series, style) in
        [(&values, "stroke=\"#1f77b4\" stroke-opacity=\"0.35\""), (&smooth, "stroke=\"#1f77b4\" stroke-width=\"2\"")]
    {
        let pts: Vec<String> = xs
            .iter()
            .zip(series.iter())
            .filter(|(_, v)| ty(**v).is_finite())
            .map(|(x, v)| format!("{:.2},{:.2}", px(*x), py(ty(*v))))
            .collect();
        if pts.len() == 1 {
            let (x, y) = pts[0].split_once(',').expect("formatted pair");
            let _ = writeln!(out, "<circle cx=\"{x}\" cy=\"{y}\" r=\"3\" fill=\"#1f77b4\"/>");
        } else {
            let _ = writeln!(out, "<polyline fill=\"none\" {style} points=\"{}\"/>", pts.join(" "));
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Color for a mass fraction `t` in `[0, 1]`, white to dark blue.
fn shade(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(255.0, 8.0), lerp(255.0, 48.0), lerp(255.0, 107.0))
}

/// Heatmap of an occupancy table; row 0 is drawn at the bottom.
pub fn occupancy_svg(table: &OccupancyTable) -> String {
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let cw = pw / table.cols as f64;
    let ch = ph / table.rows as f64;
    let max = table.normalized.iter().copied().fold(0.0, f64::max);
    let mut out = String::new();
    svg_open(&mut out, "empirical state-space density");
    for r in 0..table.rows {
        for c in 0..table.cols {
            let v = table.normalized[r * table.cols + c];
            let t = if max > 0.0 { v / max } else { 0.0 };
            let _ = writeln!(
                out,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                LEFT + c as f64 * cw,
                TOP + (table.rows - 1 - r) as f64 * ch,
                cw,
                ch,
                shade(t)
            );
        }
    }
    let _ =
        writeln!(out, "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"black\"/>");
    let _ =
        writeln!(out, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">column</text>", LEFT + pw / 2.0, HEIGHT - 10.0);
    let _ = writeln!(
        out,
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">row</text>",
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">max mass {max:.3e}</text>",
        WIDTH - RIGHT,
        HEIGHT - 10.0
    );
    out.push_str("</svg>\n");
    out
}
