//! Dependency-light SVG line plots driven by the CSV schemas the runner
//! emits. Pure functions of their input text.

use std::fmt::Write as _;

use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 140.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
}

/// Parse a CSV with optional `#` comment lines: header row of column names,
/// numeric data rows. Errors name the offending row.
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut header: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        match &header {
            None => header = Some(fields.iter().map(|s| s.to_string()).collect()),
            Some(h) => {
                if fields.len() != h.len() {
                    return Err(Error::invalid(format!(
                        "csv row {}: expected {} fields, got {}",
                        lineno + 1,
                        h.len(),
                        fields.len()
                    )));
                }
                let row: std::result::Result<Vec<f64>, _> =
                    fields.iter().map(|f| f.parse::<f64>()).collect();
                rows.push(row.map_err(|e| {
                    Error::invalid(format!("csv row {}: {e}", lineno + 1))
                })?);
            }
        }
    }
    let header = header.ok_or_else(|| Error::invalid("csv has no header row"))?;
    Ok((header, rows))
}

/// Interpret column 0 as x and every later column as a series.
pub fn series_from_csv(text: &str) -> Result<Vec<Series>> {
    let (header, rows) = parse_csv(text)?;
    if header.len() < 2 {
        return Ok(Vec::new());
    }
    let x: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    Ok(header[1..]
        .iter()
        .enumerate()
        .map(|(i, name)| Series {
            name: name.clone(),
            x: x.clone(),
            y: rows.iter().map(|r| r[i + 1]).collect(),
        })
        .collect())
}

fn axis_transform(lo: f64, hi: f64, log: bool) -> (f64, f64, impl Fn(f64) -> f64) {
    let map = move |v: f64| if log { v.max(1e-300).log10() } else { v };
    let (a, b) = (map(lo), map(hi));
    let span = if (b - a).abs() < 1e-12 { 1.0 } else { b - a };
    (a, span, map)
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-3) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

/// Render series into a self-contained SVG line plot. Empty input gives an
/// empty-axes frame.
pub fn render(spec: &PlotSpec, series: &[Series]) -> String {
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;

    let finite = |v: &f64| v.is_finite() && (!spec.log_y || *v > 0.0);
    let mut xs: Vec<f64> = series.iter().flat_map(|s| s.x.iter().copied()).filter(|v| v.is_finite()).collect();
    let mut ys: Vec<f64> = series.iter().flat_map(|s| s.y.iter().copied()).filter(finite).collect();
    if xs.is_empty() {
        xs = vec![0.0, 1.0];
    }
    if ys.is_empty() {
        ys = vec![0.0, 1.0];
    }
    let (xlo, xhi) = (xs.iter().cloned().fold(f64::MAX, f64::min), xs.iter().cloned().fold(f64::MIN, f64::max));
    let (ylo, yhi) = (ys.iter().cloned().fold(f64::MAX, f64::min), ys.iter().cloned().fold(f64::MIN, f64::max));
    let (xa, xspan, xmap) = axis_transform(xlo, xhi, spec.log_x);
    let (ya, yspan, ymap) = axis_transform(ylo, yhi, spec.log_y);
    let px = |v: f64| MARGIN_L + (xmap(v) - xa) / xspan * pw;
    let py = |v: f64| MARGIN_T + ph - (ymap(v) - ya) / yspan * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="16" font-family="sans-serif">{}</text>"#,
        MARGIN_L + pw / 2.0,
        spec.title
    );
    // frame
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    // ticks: 5 per axis in transformed coordinates
    for t in 0..=4 {
        let f = t as f64 / 4.0;
        let xv = xa + f * xspan;
        let yv = ya + f * yspan;
        let xval = if spec.log_x { 10f64.powf(xv) } else { xv };
        let yval = if spec.log_y { 10f64.powf(yv) } else { yv };
        let gx = MARGIN_L + f * pw;
        let gy = MARGIN_T + ph - f * ph;
        let _ = writeln!(
            svg,
            r#"<line x1="{gx}" y1="{}" x2="{gx}" y2="{}" stroke="black"/>"#,
            MARGIN_T + ph,
            MARGIN_T + ph + 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{gx}" y="{}" text-anchor="middle" font-size="11" font-family="sans-serif">{}</text>"#,
            MARGIN_T + ph + 18.0,
            fmt_tick(xval)
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{gy}" x2="{MARGIN_L}" y2="{gy}" stroke="black"/>"#,
            MARGIN_L - 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end" font-size="11" font-family="sans-serif">{}</text>"#,
            MARGIN_L - 8.0,
            gy + 4.0,
            fmt_tick(yval)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="13" font-family="sans-serif">{}</text>"#,
        MARGIN_L + pw / 2.0,
        HEIGHT - 12.0,
        spec.x_label
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" text-anchor="middle" font-size="13" font-family="sans-serif" transform="rotate(-90 18 {})">{}</text>"#,
        MARGIN_T + ph / 2.0,
        MARGIN_T + ph / 2.0,
        spec.y_label
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut path = String::new();
        let mut pen_up = true;
        for (&xv, &yv) in s.x.iter().zip(&s.y) {
            if !xv.is_finite() || !finite(&yv) || (spec.log_x && xv <= 0.0) {
                pen_up = true;
                continue;
            }
            let _ = write!(path, "{}{:.2},{:.2} ", if pen_up { "M" } else { "L" }, px(xv), py(yv));
            pen_up = false;
        }
        if !path.is_empty() {
            let _ = writeln!(
                svg,
                r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.6"/>"#,
                path.trim_end()
            );
        }
        let ly = MARGIN_T + 14.0 + 18.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            MARGIN_L + pw + 10.0,
            MARGIN_L + pw + 34.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="11" font-family="sans-serif">{}</text>"#,
            MARGIN_L + pw + 40.0,
            ly + 4.0,
            s.name
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// CSV in, SVG out; column 0 is the x axis.
pub fn plot_csv(text: &str, spec: &PlotSpec) -> Result<String> {
    let series = series_from_csv(text)?;
    Ok(render(spec, &series))
}
