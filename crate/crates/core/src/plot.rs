//! Minimal SVG line charts for CSV traces.

use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_Y: f64 = 50.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return None;
    }
    if hi - lo <= f64::EPSILON * lo.abs().max(1e-300) {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        return Some((lo - pad, hi + pad));
    }
    Some((lo, hi))
}

impl Chart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_x: false,
            series: Vec::new(),
        }
    }

    /// Renders the chart; non-finite points (and non-positive x on a log
    /// axis) are skipped.
    pub fn to_svg(&self) -> String {
        let tx = |x: f64| if self.log_x { x.log10() } else { x };
        let usable = |&(x, y): &(f64, f64)| x.is_finite() && y.is_finite() && (!self.log_x || x > 0.0);
        let xs = self.series.iter().flat_map(|s| s.points.iter().filter(|p| usable(p)).map(|p| tx(p.0)));
        let ys = self.series.iter().flat_map(|s| s.points.iter().filter(|p| usable(p)).map(|p| p.1));
        let (x0, x1) = bounds(xs).unwrap_or((0.0, 1.0));
        let (y0, y1) = bounds(ys).unwrap_or((0.0, 1.0));
        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - 2.0 * MARGIN_Y;
        let px = |x: f64| MARGIN_LEFT + (tx(x) - x0) / (x1 - x0) * plot_w;
        let py = |y: f64| MARGIN_Y + (1.0 - (y - y0) / (y1 - y0)) * plot_h;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_Y}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="25" text-anchor="middle" font-size="15">{}</text>"#,
            MARGIN_LEFT + plot_w / 2.0,
            escape(&self.title)
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let xv = x0 + f * (x1 - x0);
            let label = if self.log_x { format!("1e{xv:.1}") } else { format!("{xv:.3e}") };
            let x = MARGIN_LEFT + f * plot_w;
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{MARGIN_Y}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{label}</text>"##,
                MARGIN_Y + plot_h,
                MARGIN_Y + plot_h + 16.0
            );
            let yv = y0 + f * (y1 - y0);
            let y = py(yv);
            let _ = writeln!(
                s,
                r##"<line x1="{MARGIN_LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{yv:.3e}</text>"##,
                MARGIN_LEFT + plot_w,
                MARGIN_LEFT - 6.0,
                y + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT + plot_w / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
            MARGIN_Y + plot_h / 2.0,
            MARGIN_Y + plot_h / 2.0,
            escape(&self.y_label)
        );
        for (i, series) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let pts: Vec<String> = series
                .points
                .iter()
                .filter(|p| usable(p))
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
            let ly = MARGIN_Y + 14.0 + 16.0 * i as f64;
            let lx = MARGIN_LEFT + plot_w + 10.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                lx + 18.0,
                lx + 22.0,
                ly + 4.0,
                escape(&series.label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Chart of every column against the first one.
pub fn chart_from_columns(title: &str, header: &[String], rows: &[Vec<f64>], log_x: bool) -> Chart {
    let mut c = Chart::new(title, header.first().map_or("x", |s| s.as_str()), "value");
    c.log_x = log_x;
    for (j, label) in header.iter().enumerate().skip(1) {
        c.series.push(Series {
            label: label.clone(),
            points: rows.iter().map(|r| (r[0], r[j])).collect(),
        });
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_series_and_escapes() {
        let mut c = Chart::new("a < b", "t", "v");
        c.series.push(Series {
            label: "v(out)".into(),
            points: vec![(0.0, 0.0), (1.0, 1.0), (2.0, f64::NAN)],
        });
        let svg = c.to_svg();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn log_axis_skips_non_positive() {
        let mut c = Chart::new("bode", "f", "dB");
        c.log_x = true;
        c.series.push(Series {
            label: "h".into(),
            points: vec![(0.0, 1.0), (10.0, 0.0), (100.0, -3.0)],
        });
        let svg = c.to_svg();
        assert!(!svg.contains("inf") && !svg.contains("NaN"));
    }
}
