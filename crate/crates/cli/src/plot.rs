//! Minimal standalone SVG line charts of metrics columns against `episode`.

use std::fmt::Write as _;

use anyhow::{anyhow, bail, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// One chart with a polyline per requested column; blank cells are skipped.
pub fn render_svg(csv_text: &str, columns: &[String]) -> Result<String> {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = reader.headers()?.clone();
    let x_at = headers
        .iter()
        .position(|h| h == "episode")
        .ok_or_else(|| anyhow!("metrics file has no `episode` column"))?;
    let mut indices = Vec::with_capacity(columns.len());
    for c in columns {
        let at = headers
            .iter()
            .position(|h| h == c)
            .ok_or_else(|| anyhow!("metrics file has no `{c}` column"))?;
        indices.push(at);
    }
    let mut series: Vec<Vec<(f64, f64)>> = vec![Vec::new(); columns.len()];
    let mut rows = 0;
    for record in reader.records() {
        let record = record?;
        rows += 1;
        let x: f64 = record[x_at].parse()?;
        for (s, &at) in series.iter_mut().zip(&indices) {
            let cell = record[at].trim();
            if !cell.is_empty() {
                s.push((x, cell.parse()?));
            }
        }
    }
    if rows == 0 {
        bail!("metrics file has no data rows");
    }

    let points = series.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        bail!("selected columns are empty");
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )?;
    writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
    writeln!(
        svg,
        r#"<path d="M{m} {m} V{b} H{r}" fill="none" stroke="black"/>"#,
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    )?;
    writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">episode</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0
    )?;
    for (value, anchor, x, y) in [
        (x0, "start", MARGIN, HEIGHT - MARGIN + 15.0),
        (x1, "end", WIDTH - MARGIN, HEIGHT - MARGIN + 15.0),
        (y0, "end", MARGIN - 5.0, HEIGHT - MARGIN),
        (y1, "end", MARGIN - 5.0, MARGIN + 4.0),
    ] {
        writeln!(
            svg,
            r#"<text x="{x}" y="{y}" font-size="11" text-anchor="{anchor}">{}</text>"#,
            format_tick(value)
        )?;
    }
    for (k, (name, s)) in columns.iter().zip(&series).enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = s.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        )?;
        writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">{name}</text>"#,
            MARGIN + 10.0,
            MARGIN + 15.0 * (k as f64 + 1.0)
        )?;
    }
    writeln!(svg, "</svg>")?;
    Ok(svg)
}

fn format_tick(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e9 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}
