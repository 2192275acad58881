use std::fmt::Write as _;
use std::path::Path;

use super::metrics::fmt_sig6;

#[derive(Debug, thiserror::Error)]
pub enum ChartError {
    #[error("column `{0}` not found")]
    MissingKey(String),
    #[error("non-numeric value `{value}` in column `{column}`")]
    BadValue { column: String, value: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 5;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn column(headers: &csv::StringRecord, key: &str) -> Option<usize> {
    headers.iter().position(|h| h == key)
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        (lo - pad, lo + pad)
    }
}

/// SVG line chart of `y_key` against `x_key`, one polyline per distinct
/// `series_key` value. `y_key` may name a summary metric without its
/// `_mean` suffix.
pub fn render_chart(csv_text: &str, x_key: &str, y_key: &str, series_key: &str) -> Result<String, ChartError> {
    let mut rd = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = rd.headers()?.clone();
    let xi = column(&headers, x_key).ok_or_else(|| ChartError::MissingKey(x_key.into()))?;
    let (yi, y_label) = match column(&headers, y_key) {
        Some(i) => (i, y_key.to_string()),
        None => {
            let mean = format!("{y_key}_mean");
            (column(&headers, &mean).ok_or_else(|| ChartError::MissingKey(y_key.into()))?, mean)
        }
    };
    let si = column(&headers, series_key).ok_or_else(|| ChartError::MissingKey(series_key.into()))?;

    let number = |row: &csv::StringRecord, i: usize| -> Result<f64, ChartError> {
        let raw = row.get(i).unwrap_or("");
        raw.trim().parse().map_err(|_| ChartError::BadValue {
            column: headers[i].to_string(),
            value: raw.to_string(),
        })
    };
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for row in rd.records() {
        let row = row?;
        let name = row.get(si).unwrap_or("").to_string();
        let point = (number(&row, xi)?, number(&row, yi)?);
        match series.iter_mut().find(|(n, _)| *n == name) {
            Some((_, pts)) => pts.push(point),
            None => series.push((name, vec![point])),
        }
    }
    for (_, pts) in &mut series {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }

    let all = || series.iter().flat_map(|(_, p)| p.iter());
    let (x0, x1) = padded_range(all().map(|p| p.0));
    let (y0, y1) = padded_range(all().map(|p| p.1));
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| TOP + plot_h - (y - y0) / (y1 - y0) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for k in 0..TICKS {
        let f = k as f64 / (TICKS - 1) as f64;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            svg,
            r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 20.0,
            escape(&fmt_sig6(xv))
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0,
            escape(&fmt_sig6(yv))
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0,
        escape(x_key)
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(&y_label)
    );

    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            coords.join(" ")
        );
        for &(x, y) in pts {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y));
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            lx + 25.0,
            ly + 4.0,
            escape(&format!("{series_key}={name}"))
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_chart(summary_csv: &Path, x_key: &str, y_key: &str, series_key: &str, out: &Path) -> Result<(), ChartError> {
    let text = std::fs::read_to_string(summary_csv)?;
    std::fs::write(out, render_chart(&text, x_key, y_key, series_key)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_SERIES: &str = "algorithm,n_flows,monetary_yen_mean\n\
        dp,1,1\ndp,2,2\ndp,3,3\ndp,4,4\n\
        heuristic,4,8\nheuristic,3,6\nheuristic,2,4\nheuristic,1,2\n";

    #[test]
    fn one_polyline_per_series() {
        let svg = render_chart(TWO_SERIES, "n_flows", "monetary_yen", "algorithm").unwrap();
        let lines: Vec<&str> = svg.lines().filter(|l| l.starts_with("<polyline")).collect();
        assert_eq!(lines.len(), 2);
        for l in lines {
            let points = l.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
            assert_eq!(points.split(' ').count(), 4);
        }
        assert!(svg.contains(">monetary_yen_mean</text>"));
        assert!(svg.contains(">n_flows</text>"));
    }

    #[test]
    fn single_point_chart() {
        let svg = render_chart("a,x,y\ns,1,5\n", "x", "y", "a").unwrap();
        assert_eq!(svg.matches("<circle").count(), 1);
        assert_eq!(svg.matches("<polyline").count(), 1);
    }

    #[test]
    fn deterministic_bytes() {
        let a = render_chart(TWO_SERIES, "n_flows", "monetary_yen", "algorithm").unwrap();
        let b = render_chart(TWO_SERIES, "n_flows", "monetary_yen", "algorithm").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_key_is_reported() {
        let err = render_chart(TWO_SERIES, "n_aps", "monetary_yen", "algorithm").unwrap_err();
        assert!(matches!(err, ChartError::MissingKey(k) if k == "n_aps"));
        let err = render_chart(TWO_SERIES, "n_flows", "energy", "algorithm").unwrap_err();
        assert!(matches!(err, ChartError::MissingKey(k) if k == "energy"));
    }
}
