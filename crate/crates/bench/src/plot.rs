//! Seed-averaged RMS curves as a standalone SVG document.
//!
//! One `<polyline>` per method through the mean RMS at each x value, with
//! min/max bars over seeds. The y axis is logarithmic. Output is a pure
//! function of the records, so regenerating from a table is byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context};

use crate::runner::ResultRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XAxis {
    Snr,
    Tf,
}

impl XAxis {
    fn label(&self) -> &'static str {
        match self {
            XAxis::Snr => "SNR",
            XAxis::Tf => "t_f",
        }
    }

    fn of(&self, r: &ResultRecord) -> f64 {
        match self {
            XAxis::Snr => r.snr,
            XAxis::Tf => r.tf,
        }
    }

    fn other(&self, r: &ResultRecord) -> f64 {
        match self {
            XAxis::Snr => r.tf,
            XAxis::Tf => r.snr,
        }
    }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPoint {
    pub x: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Per-method series in order of first appearance; failed records are skipped.
pub fn series(records: &[ResultRecord], x_axis: XAxis) -> anyhow::Result<Vec<(String, Vec<SeriesPoint>)>> {
    let Some(first) = records.first() else { bail!("no records to plot") };
    if records.iter().any(|r| r.system != first.system || r.h != first.h) {
        bail!("records mix systems or sampling steps");
    }
    if records.iter().any(|r| x_axis.other(r) != x_axis.other(first)) {
        bail!("records vary in more than the plotted axis ({})", x_axis.label());
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<(usize, u64), Vec<f64>> = BTreeMap::new();
    let mut xs: BTreeMap<u64, f64> = BTreeMap::new();
    for r in records {
        let idx = match order.iter().position(|m| *m == r.method) {
            Some(i) => i,
            None => {
                order.push(r.method.clone());
                order.len() - 1
            }
        };
        let x = x_axis.of(r);
        let key = ordered_bits(x);
        xs.insert(key, x);
        let entry = groups.entry((idx, key)).or_default();
        if let Some(rms) = r.rms() {
            entry.push(rms);
        }
    }
    let mut out = Vec::new();
    for (idx, method) in order.into_iter().enumerate() {
        let mut pts = Vec::new();
        for (&key, &x) in &xs {
            let Some(v) = groups.get(&(idx, key)) else { continue };
            if v.is_empty() {
                continue;
            }
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let min = v.iter().copied().fold(f64::INFINITY, f64::min);
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            pts.push(SeriesPoint { x, mean, min, max });
        }
        out.push((method, pts));
    }
    if out.iter().all(|(_, p)| p.is_empty()) {
        bail!("every selected record failed");
    }
    Ok(out)
}

/// Sort key for finite floats that preserves numeric order.
fn ordered_bits(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

pub fn render_svg(records: &[ResultRecord], x_axis: XAxis) -> anyhow::Result<String> {
    let series = series(records, x_axis)?;
    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in pts {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.min.max(1e-300));
        y1 = y1.max(p.max.max(1e-300));
    }
    if x1 == x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    let (ly0, ly1) = (y0.log10().floor(), y1.log10().ceil().max(y0.log10().floor() + 1.0));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (ly1 - y.max(1e-300).log10()) / (ly1 - ly0) * ph;

    let first = &records[0];
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let subtitle = match x_axis {
        XAxis::Snr => format!("t_f = {}", first.tf),
        XAxis::Tf => format!("SNR = {}", first.snr),
    };
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="18" text-anchor="middle">{} (h = {}, {subtitle})</text>"#,
        LEFT + pw / 2.0,
        first.system,
        first.h
    );
    let _ = writeln!(
        s,
        r#"<g class="axes" stroke="black" fill="none"><line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}"/></g>"#,
        TOP + ph,
        LEFT + pw,
        TOP + ph,
        TOP + ph
    );
    let mut decade = ly0;
    while decade <= ly1 {
        let y = sy(10f64.powf(decade));
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0,
            decade as i64
        );
        decade += 1.0;
    }
    let mut ticks: Vec<f64> = series.iter().flat_map(|(_, p)| p.iter().map(|q| q.x)).collect();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for x in ticks {
        let px = sx(x);
        let _ = writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{x}</text>"#,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0,
        x_axis.label()
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">RMS error</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    for (i, (method, points)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = points.iter().map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.mean))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-method="{method}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            coords.join(" ")
        );
        for p in points {
            let (px, py) = (sx(p.x), sy(p.mean));
            let _ = writeln!(
                s,
                r#"<line stroke="{color}" x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}"/><circle fill="{color}" cx="{px:.2}" cy="{py:.2}" r="3"/>"#,
                sy(p.min),
                sy(p.max)
            );
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            s,
            r#"<line stroke="{color}" stroke-width="2" x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}"/><text x="{:.2}" y="{:.2}">{method}</text>"#,
            lx + 20.0,
            lx + 25.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_plot(records: &[ResultRecord], x_axis: XAxis, output: &Path) -> anyhow::Result<()> {
    let svg = render_svg(records, x_axis)?;
    std::fs::write(output, svg).with_context(|| format!("writing {}", output.display()))
}
