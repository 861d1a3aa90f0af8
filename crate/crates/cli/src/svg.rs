//! Minimal SVG line charts.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 45.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub color: &'static str,
    pub opacity: f64,
    pub dashed: bool,
}

impl Series {
    pub fn new(label: impl Into<String>, xs: Vec<f64>, ys: Vec<f64>, color: &'static str) -> Self {
        Series {
            label: label.into(),
            xs,
            ys,
            color,
            opacity: 1.0,
            dashed: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Base-10 log y axis; ignored if any finite value is not positive.
    pub log_y: bool,
    pub series: Vec<Series>,
}

fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.2e}")
    } else {
        format!("{}", (v * 1000.0).round() / 1000.0)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

impl Chart {
    pub fn new(
        title: impl Into<String>,
        x_label: impl Into<String>,
        y_label: impl Into<String>,
    ) -> Self {
        Chart {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_y: false,
            series: Vec::new(),
        }
    }

    pub fn render(&self) -> String {
        let finite = |v: &f64| v.is_finite();
        let ys = || {
            self.series
                .iter()
                .flat_map(|s| s.ys.iter().copied())
                .filter(finite)
        };
        let log = self.log_y && ys().all(|v| v > 0.0) && ys().next().is_some();
        let ty = |v: f64| if log { v.log10() } else { v };
        let range = |it: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                (a.min(v), b.max(v))
            });
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 * lo.abs().max(1.0) {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        let (x0, x1) = range(
            &mut self
                .series
                .iter()
                .flat_map(|s| s.xs.iter().copied())
                .filter(finite),
        );
        let (y0, y1) = range(&mut ys().map(ty));
        let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
        let py = |y: f64| H - BOTTOM - (ty(y) - y0) / (y1 - y0) * (H - TOP - BOTTOM);

        let mut s = String::new();
        writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        )
        .unwrap();
        writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
            W / 2.0,
            escape(&self.title)
        )
        .unwrap();
        let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
        writeln!(
            s,
            r#"<path d="M{l} {t}V{b}H{r}" fill="none" stroke="black" stroke-width="1"/>"#
        )
        .unwrap();
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let xv = x0 + f * (x1 - x0);
            let x = px(xv);
            writeln!(
                s,
                r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                b + 16.0,
                fmt_num(xv)
            )
            .unwrap();
            let yv = y0 + f * (y1 - y0);
            let y = b - f * (b - t);
            let label = if log { 10f64.powf(yv) } else { yv };
            writeln!(
                s,
                r##"<line x1="{l}" y1="{y:.2}" x2="{r}" y2="{y:.2}" stroke="#ddd" stroke-width="0.5"/>"##
            )
            .unwrap();
            writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                l - 6.0,
                y + 4.0,
                fmt_num(label)
            )
            .unwrap();
        }
        writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            (l + r) / 2.0,
            H - 8.0,
            escape(&self.x_label)
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
            (t + b) / 2.0,
            (t + b) / 2.0,
            escape(&self.y_label)
        )
        .unwrap();
        for (k, ser) in self.series.iter().enumerate() {
            let mut d = String::new();
            let mut pen_down = false;
            for (&x, &y) in ser.xs.iter().zip(&ser.ys) {
                if !(x.is_finite() && y.is_finite()) {
                    pen_down = false;
                    continue;
                }
                write!(
                    d,
                    "{}{:.2} {:.2}",
                    if pen_down { "L" } else { "M" },
                    px(x),
                    py(y)
                )
                .unwrap();
                pen_down = true;
            }
            let dash = if ser.dashed {
                r#" stroke-dasharray="6 3""#
            } else {
                ""
            };
            writeln!(
                s,
                r#"<path d="{d}" fill="none" stroke="{}" stroke-opacity="{}" stroke-width="1.5"{dash}/>"#,
                ser.color, ser.opacity
            )
            .unwrap();
            let ly = t + 14.0 * (k as f64 + 1.0);
            writeln!(
                s,
                r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{}" stroke-opacity="{}" stroke-width="2"{dash}/>"#,
                r - 150.0,
                r - 130.0,
                ser.color,
                ser.opacity
            )
            .unwrap();
            writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
                r - 125.0,
                ly + 4.0,
                escape(&ser.label)
            )
            .unwrap();
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Coordinates of the `d` attribute of the first path drawn for series `k`.
#[cfg(test)]
pub fn path_of(svg: &str, k: usize) -> &str {
    svg.match_indices("<path d=\"")
        .nth(k + 1)
        .map(|(i, m)| {
            let rest = &svg[i + m.len()..];
            &rest[..rest.find('"').unwrap()]
        })
        .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaps_break_the_line() {
        let mut c = Chart::new("t", "x", "y");
        c.series.push(Series::new(
            "a",
            vec![0.0, 1.0, 2.0, 3.0],
            vec![1.0, f64::NAN, 2.0, 3.0],
            color(0),
        ));
        let svg = c.render();
        assert_eq!(path_of(&svg, 0).matches('M').count(), 2);
    }

    #[test]
    fn log_axis_needs_positive_values() {
        let mut c = Chart::new("t", "x", "y");
        c.log_y = true;
        c.series.push(Series::new(
            "a",
            vec![0.0, 1.0],
            vec![1.0, 1000.0],
            color(0),
        ));
        let log = c.render();
        c.series[0].ys[0] = -1.0;
        let lin = c.render();
        assert!(log.contains(">31.623<") && !lin.contains(">31.623<"));
    }

    #[test]
    fn flat_series_still_renders() {
        let mut c = Chart::new("a<b", "x", "y");
        c.series
            .push(Series::new("c", vec![1.0], vec![2.0], color(1)));
        let svg = c.render();
        assert!(svg.contains("a&lt;b") && !svg.contains("NaN"));
    }
}
