use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{EvalError, Result};

/// Trailing window of the reward-rate curve, in env steps.
pub const WINDOW: u64 = 500;

/// One run's reward-rate curve.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    /// `(env step, windowed mean extrinsic reward per step)`.
    pub points: Vec<(f64, f64)>,
    /// Step at which fine-tuning begins, if the run has a fine-tune phase.
    pub finetune_start: Option<f64>,
}

/// A metrics row reduced to what the plot needs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateRow {
    pub step: u64,
    pub finetune: bool,
    pub r_ext_mean: f64,
}

pub fn read_rows(path: &Path) -> Result<Vec<RateRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?;
    parse_rows(&text).map_err(|msg| EvalError::Csv {
        path: path.display().to_string(),
        msg,
    })
}

pub fn parse_rows(text: &str) -> std::result::Result<Vec<RateRow>, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or("empty file")?.split(',').collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or(format!("missing column `{name}`"))
    };
    let (ci, cp, cr) = (col("step")?, col("phase")?, col("r_ext_mean")?);
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != header.len() {
            return Err(format!("row {} has {} fields, header has {}", i + 2, f.len(), header.len()));
        }
        let step = f[ci].trim().parse().map_err(|e| format!("row {}: step: {e}", i + 2))?;
        let r_ext_mean = f[cr].trim().parse().map_err(|e| format!("row {}: r_ext_mean: {e}", i + 2))?;
        rows.push(RateRow {
            step,
            finetune: f[cp].trim() == "finetune",
            r_ext_mean,
        });
    }
    if rows.is_empty() {
        return Err("no data rows".into());
    }
    Ok(rows)
}

/// Trailing-window mean of the per-step reward. Each row stands for the
/// steps since the previous row; rows ending within the last [`WINDOW`]
/// steps contribute, weighted by their length, so the opening stretch is
/// averaged over whatever prefix exists.
pub fn windowed(rows: &[RateRow]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let (mut num, mut den) = (0.0, 0.0);
        for j in (0..=i).rev() {
            if rows[j].step + WINDOW <= r.step {
                break;
            }
            let prev = if j == 0 { 0 } else { rows[j - 1].step };
            let len = rows[j].step.saturating_sub(prev) as f64;
            if rows[j].r_ext_mean.is_finite() {
                num += rows[j].r_ext_mean * len;
                den += len;
            }
        }
        if den > 0.0 {
            out.push((r.step as f64, num / den));
        }
    }
    out
}

pub fn series_from_rows(name: &str, rows: &[RateRow]) -> Series {
    let finetune_start = rows.iter().position(|r| r.finetune).map(|i| {
        if i == 0 {
            0.0
        } else {
            rows[i - 1].step as f64
        }
    });
    Series {
        name: name.to_string(),
        points: windowed(rows),
        finetune_start,
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
const W: f64 = 800.0;
const H: f64 = 450.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

/// Renders the curves as a standalone SVG document.
pub fn reward_rate_svg(series: &[Series]) -> Result<String> {
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if all.is_empty() {
        return Err(EvalError::Invalid("nothing to plot".into()));
    }
    let (mut x0, mut x1) = (0.0f64, all.iter().map(|p| p.0).fold(f64::MIN, f64::max));
    let mut y0 = all.iter().map(|p| p.1).fold(f64::MAX, f64::min);
    let mut y1 = all.iter().map(|p| p.1).fold(f64::MIN, f64::max);
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-9 {
        // flat data: centre it in a unit band
        y0 -= 0.5;
        y1 += 0.5;
    } else {
        let pad = 0.05 * (y1 - y0);
        y0 -= pad;
        y1 += pad;
    }
    x0 = x0.min(x1);
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let py = |y: f64| TOP + (y1 - y) / (y1 - y0) * (H - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    for st in series.iter().filter_map(|s| s.finetune_start) {
        let _ = writeln!(
            s,
            r##"<rect class="finetune" x="{:.2}" y="{TOP}" width="{:.2}" height="{:.2}" fill="#808080" fill-opacity="0.2"/>"##,
            px(st),
            (px(x1) - px(st)).max(0.0),
            H - TOP - BOTTOM
        );
    }
    // axes and ticks
    let _ = writeln!(
        s,
        r#"<path d="M{LEFT} {TOP} V{:.2} H{:.2}" stroke="black" fill="none"/>"#,
        H - BOTTOM,
        W - RIGHT
    );
    for i in 0..=5 {
        let fx = x0 + (x1 - x0) * i as f64 / 5.0;
        let fy = y0 + (y1 - y0) * i as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            px(fx),
            H - BOTTOM + 18.0,
            fx.round()
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.3}</text>"#,
            LEFT - 6.0,
            py(fy) + 4.0,
            fy
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">env steps</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">reward per step ({WINDOW}-step window)</text>"#,
        (TOP + H - BOTTOM) / 2.0,
        (TOP + H - BOTTOM) / 2.0
    );
    let _ = writeln!(s, r#"<text x="{LEFT}" y="24" font-size="14">Average reward rate</text>"#);
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = W - RIGHT - 180.0;
        let _ = writeln!(
            s,
            r#"<g class="legend"><line x1="{lx}" y1="{ly}" x2="{:.2}" y2="{ly}" stroke="{color}" stroke-width="3"/><text x="{:.2}" y="{:.2}">{}</text></g>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0,
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Reads each metrics CSV and writes the chart to `out`.
pub fn plot_reward_rate(paths: &[PathBuf], out: &Path) -> Result<()> {
    if paths.is_empty() {
        return Err(EvalError::Invalid("no metrics files given".into()));
    }
    let mut series = Vec::with_capacity(paths.len());
    for p in paths {
        let rows = read_rows(p)?;
        let name = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
        series.push(series_from_rows(&name, &rows));
    }
    let svg = reward_rate_svg(&series)?;
    std::fs::write(out, svg).map_err(|e| EvalError::io(out, e))
}
