//! Self-contained SVG line plots.

use std::fmt::Write;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Optional `(low, high)` interval drawn as a vertical bar at each point.
    pub intervals: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Horizontal dashed reference lines `(y, label)`.
    pub references: Vec<(f64, String)>,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const COLOURS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

impl LinePlot {
    fn bounds(&self) -> (f64, f64, f64, f64) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for s in &self.series {
            for (x, y) in &s.points {
                xs.push(*x);
                ys.push(*y);
            }
            for (lo, hi) in s.intervals.iter().flatten() {
                ys.push(*lo);
                ys.push(*hi);
            }
        }
        ys.extend(self.references.iter().map(|r| r.0));
        let finite = |v: &Vec<f64>| {
            v.iter()
                .copied()
                .filter(|x| x.is_finite())
                .collect::<Vec<_>>()
        };
        let (xs, ys) = (finite(&xs), finite(&ys));
        let span = |v: &[f64]| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        let (x0, x1) = span(&xs);
        let (y0, y1) = span(&ys);
        let pad = 0.08 * (y1 - y0);
        (x0, x1, (y0 - pad).min(0.0), y1 + pad)
    }

    pub fn render(&self) -> String {
        let (x0, x1, y0, y1) = self.bounds();
        let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
        let py = |y: f64| H - BOTTOM - (y - y0) / (y1 - y0) * (H - TOP - BOTTOM);
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            W / 2.0,
            escape(&self.title)
        );
        // axes
        let (ax0, ax1, ay0, ay1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
        let _ = writeln!(
            out,
            r#"<path d="M{} {} L{} {} L{} {}" fill="none" stroke="black"/>"#,
            fmt(ax0),
            fmt(ay1),
            fmt(ax0),
            fmt(ay0),
            fmt(ax1),
            fmt(ay0)
        );
        for i in 0..=5 {
            let xv = x0 + (x1 - x0) * i as f64 / 5.0;
            let yv = y0 + (y1 - y0) * i as f64 / 5.0;
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
                fmt(px(xv)),
                fmt(ay0 + 18.0),
                tick(xv)
            );
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                fmt(ax0 - 6.0),
                fmt(py(yv) + 4.0),
                tick(yv)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            fmt((ax0 + ax1) / 2.0),
            fmt(H - 14.0),
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
            fmt((ay0 + ay1) / 2.0),
            fmt((ay0 + ay1) / 2.0),
            escape(&self.y_label)
        );
        for (y, label) in &self.references {
            let _ = writeln!(
                out,
                r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#555" stroke-dasharray="6 4"/>"##,
                fmt(ax0),
                fmt(py(*y)),
                fmt(ax1),
                fmt(py(*y))
            );
            let _ = writeln!(
                out,
                r##"<text x="{}" y="{}" text-anchor="end" fill="#555">{}</text>"##,
                fmt(ax1 - 4.0),
                fmt(py(*y) - 5.0),
                escape(label)
            );
        }
        for (k, s) in self.series.iter().enumerate() {
            let colour = COLOURS[k % COLOURS.len()];
            let path: Vec<String> = s
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .enumerate()
                .map(|(i, (x, y))| {
                    format!(
                        "{}{} {}",
                        if i == 0 { 'M' } else { 'L' },
                        fmt(px(*x)),
                        fmt(py(*y))
                    )
                })
                .collect();
            let _ = writeln!(
                out,
                r#"<path d="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
                path.join(" ")
            );
            for (i, (x, y)) in s.points.iter().enumerate() {
                if !(x.is_finite() && y.is_finite()) {
                    continue;
                }
                if let Some((lo, hi)) = s.intervals.as_ref().and_then(|v| v.get(i)) {
                    let _ = writeln!(
                        out,
                        r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="{colour}"/>"#,
                        fmt(px(*x)),
                        fmt(py(*lo)),
                        fmt(py(*hi))
                    );
                }
                let _ = writeln!(
                    out,
                    r#"<circle cx="{}" cy="{}" r="3" fill="{colour}"/>"#,
                    fmt(px(*x)),
                    fmt(py(*y))
                );
            }
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" fill="{colour}">{}</text>"#,
                fmt(ax0 + 10.0),
                fmt(ay1 + 14.0 + 16.0 * k as f64),
                escape(&s.label)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plot() -> LinePlot {
        LinePlot {
            title: "d <estimate>".into(),
            x_label: "d_s".into(),
            y_label: "d_hat".into(),
            series: vec![Series {
                label: "TWO-NN".into(),
                points: vec![(3.0, 1.9), (4.0, 2.0), (5.0, f64::NAN)],
                intervals: Some(vec![(1.8, 2.0), (1.9, 2.1), (0.0, 0.0)]),
            }],
            references: vec![(3.0, "2 d_a + 1".into())],
        }
    }

    #[test]
    fn render_is_pure_and_self_contained() {
        let a = plot().render();
        assert_eq!(a, plot().render());
        assert!(a.starts_with("<svg"));
        assert!(a.trim_end().ends_with("</svg>"));
        assert!(a.contains("stroke-dasharray"));
        assert!(a.contains("&lt;estimate&gt;"));
        assert!(!a.contains("href"));
        assert!(!a.contains("NaN"));
    }
}
