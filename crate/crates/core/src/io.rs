//! CSV and SVG writers for demo artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::array::Array;
use crate::error::Result;

const SIG_DIGITS: usize = 9;

/// Formats like C's `%.9g`: 9 significant digits, trailing zeros dropped,
/// scientific notation outside `[1e-4, 1e9)`.
pub fn format_sig(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIG_DIGITS - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= SIG_DIGITS as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// One CSV row per slice along the trailing axis. Scalars and 1-d arrays
/// give a single row.
pub fn array_to_csv(a: &Array) -> String {
    let width = a.shape().last().copied().unwrap_or(1).max(1);
    let mut out = String::new();
    for row in a.data().chunks(width) {
        let cells: Vec<String> = row.iter().map(|&v| format_sig(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// A header row followed by one row per index of equally long columns.
pub fn columns_to_csv(header: &[&str], columns: &[&[f64]]) -> String {
    let rows = columns.iter().map(|c| c.len()).max().unwrap_or(0);
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..rows {
        let cells: Vec<String> = columns
            .iter()
            .map(|c| c.get(i).map(|&v| format_sig(v)).unwrap_or_default())
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub dashed: bool,
}

impl Series {
    pub fn new(label: &str, xs: &[f64], ys: &[f64]) -> Self {
        Series {
            label: label.to_string(),
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            dashed: false,
        }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

/// Static line chart.
#[derive(Debug, Clone, Default)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Plot {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
        }
    }

    pub fn with_series(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let finite = |v: &&f64| v.is_finite();
        let xs = self.series.iter().flat_map(|s| s.xs.iter()).filter(finite);
        let ys = self.series.iter().flat_map(|s| s.ys.iter()).filter(finite);
        let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
        let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
        let widen = |lo: f64, hi: f64| {
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo <= 0.0 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        let (x0, x1) = widen(x0, x1);
        let (y0, y1) = widen(y0, y1);
        (x0, x1, y0, y1)
    }

    pub fn to_svg(&self) -> String {
        let (x0, x1, y0, y1) = self.bounds();
        let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
        let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );

        let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
        let _ = writeln!(
            svg,
            r#"<path d="M{left} {top} L{left} {bottom} L{right} {bottom}" fill="none" stroke="black"/>"#
        );
        for (x, label) in [(left, x0), (right, x1)] {
            let _ = writeln!(
                svg,
                r#"<text x="{x}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
                bottom + 16.0,
                format_tick(label)
            );
        }
        for (y, label) in [(bottom, y0), (top, y1)] {
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="11">{}</text>"#,
                left - 6.0,
                y + 4.0,
                format_tick(label)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 18.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(&self.y_label)
        );

        for (i, s) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let points: Vec<String> =
                s.xs.iter()
                    .zip(&s.ys)
                    .filter(|(x, y)| x.is_finite() && y.is_finite())
                    .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
                    .collect();
            let dash = if s.dashed {
                r#" stroke-dasharray="6 4""#
            } else {
                ""
            };
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                points.join(" ")
            );
            let ly = top + 14.0 + 16.0 * i as f64;
            let _ = writeln!(
                svg,
                r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                right - 150.0,
                right - 120.0
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
                right - 114.0,
                ly + 4.0,
                escape(&s.label)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn format_tick(v: f64) -> String {
    let s = format!("{v:.4}");
    trim_zeros(&s).to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig_formatting_matches_printf() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (0.5, "0.5"),
            (-2.25, "-2.25"),
            (1.0 / 3.0, "0.333333333"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (std::f64::consts::PI, "3.14159265"),
            (2.0 / 3.0 * 1e-7, "6.66666667e-08"),
            (9.999999999, "10"),
        ];
        for (v, expect) in cases {
            assert_eq!(format_sig(v), expect, "{v}");
        }
    }

    #[test]
    fn array_rows_follow_trailing_axis() {
        let a = Array::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
            .reshape(vec![2, 3])
            .unwrap();
        assert_eq!(array_to_csv(&a), "1,2,3\n4,5,6\n");
        assert_eq!(array_to_csv(&Array::scalar(0.25)), "0.25\n");
    }

    #[test]
    fn columns_have_header() {
        let csv = columns_to_csv(&["x", "y"], &[&[0.0, 1.0], &[2.0, 3.0]]);
        assert_eq!(csv, "x,y\n0,2\n1,3\n");
    }

    #[test]
    fn svg_has_both_styles_and_legend() {
        let svg = Plot::new("t", "x", "y")
            .with_series(Series::new("numeric", &[0.0, 1.0], &[0.0, 1.0]))
            .with_series(Series::new("analytic", &[0.0, 1.0], &[1.0, 0.0]).dashed())
            .to_svg();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("stroke-dasharray").count(), 2);
        assert!(svg.contains(">numeric<") && svg.contains(">analytic<"));
    }
}
