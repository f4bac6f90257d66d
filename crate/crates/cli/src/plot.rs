use std::fmt::Write as _;

use serde::Deserialize;
use serde_json::Value;

use crate::config::Header;
use crate::error::{CliError, Result};

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn open(out: &mut String, w: f64, h: f64, header: &Header) {
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(
        out,
        "<!-- evdepth {} seed {} config {} -->",
        header.version, header.seed, header.config_hash
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
}

/// One polyline per training phase of `metric` against epoch.
pub fn curves(jsonl: &str, metric: &str, header: &Header) -> Result<String> {
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for (n, line) in jsonl.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: Value = serde_json::from_str(line).map_err(|e| CliError::domain(format!("log line {}: {e}", n + 1)))?;
        let phase = rec["phase"].as_str().unwrap_or("run").to_string();
        let Some(epoch) = rec["epoch"].as_f64() else {
            return Err(CliError::domain(format!("log line {}: missing epoch", n + 1)));
        };
        let Some(y) = rec.get(metric).and_then(Value::as_f64) else { continue };
        match series.iter_mut().find(|(p, _)| *p == phase) {
            Some((_, pts)) => pts.push((epoch, y)),
            None => series.push((phase, vec![(epoch, y)])),
        }
    }
    if series.is_empty() {
        return Err(CliError::domain(format!("no `{metric}` values in the log")));
    }
    // Phases are laid out one after another along the x axis.
    let mut offset = 0.0;
    for (_, pts) in series.iter_mut() {
        let first = pts[0].0;
        for p in pts.iter_mut() {
            p.0 = p.0 - first + offset;
        }
        offset = pts.last().map_or(offset, |p| p.0 + 1.0);
    }
    let all = series.iter().flat_map(|(_, p)| p.iter());
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(_, y) in all {
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    if ymax - ymin < 1e-12 {
        ymax = ymin + 1.0;
    }
    let xmax = (offset - 1.0).max(1.0);
    let sx = |x: f64| MARGIN + x / xmax * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - ymin) / (ymax - ymin) * (H - 2.0 * MARGIN);

    let mut out = String::new();
    open(&mut out, W, H, header);
    let _ = writeln!(
        out,
        r##"<path d="M{m} {t} V{b} H{r}" fill="none" stroke="#444"/>"##,
        m = MARGIN,
        t = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN
    );
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="12">{ymax:.4}</text>"#, 4.0, MARGIN);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="12">{ymin:.4}</text>"#, 4.0, H - MARGIN);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="14">{metric} per epoch</text>"#, W / 2.0 - 40.0, 24.0);
    for (i, (phase, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let d: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, d.join(" "));
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">{phase}</text>"#,
            W - MARGIN - 90.0,
            MARGIN + 16.0 * i as f64
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[derive(Deserialize)]
struct Map {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

fn ramp(t: f64) -> (u8, u8, u8) {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    (lerp(48.0, 253.0), lerp(18.0, 231.0), lerp(120.0, 37.0))
}

/// Cells coloured from dark blue (minimum) to yellow (maximum).
pub fn heatmap(json: &str, header: &Header) -> Result<String> {
    let m: Map = serde_json::from_str(json).map_err(|e| CliError::domain(format!("heatmap: {e}")))?;
    if m.height * m.width != m.data.len() || m.data.is_empty() {
        return Err(CliError::domain("heatmap: data length differs from height x width"));
    }
    let lo = m.data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = m.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi - lo > 1e-12 { hi - lo } else { 1.0 };
    let cell = (480.0 / m.width.max(m.height) as f64).max(1.0);
    let (w, h) = (cell * m.width as f64, cell * m.height as f64);
    let mut out = String::new();
    open(&mut out, w, h, header);
    for y in 0..m.height {
        for x in 0..m.width {
            let (r, g, b) = ramp((m.data[y * m.width + x] - lo) / span);
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{cell:.2}" height="{cell:.2}" fill="rgb({r},{g},{b})"/>"#,
                x as f64 * cell,
                y as f64 * cell
            );
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}
