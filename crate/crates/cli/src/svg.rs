//! Small self-contained SVG charts.

use std::fmt::Write;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];
const MARGIN: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(width: f64, height: f64, title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        width / 2.0,
        escape(title)
    );
    s
}

/// Maps data ranges onto a plotting rectangle.
struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xr: (f64, f64),
    yr: (f64, f64),
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        self.x0 + (v - self.xr.0) / (self.xr.1 - self.xr.0) * self.w
    }

    fn y(&self, v: f64) -> f64 {
        self.y0 + self.h - (v - self.yr.0) / (self.yr.1 - self.yr.0) * self.h
    }

    fn axes(&self, s: &mut String, x_label: &str, y_label: &str, x_ticks: bool) {
        let (x1, y1) = (self.x0 + self.w, self.y0 + self.h);
        let _ = writeln!(
            s,
            r#"<path d="M{:.1},{:.1} L{:.1},{:.1} L{:.1},{:.1}" fill="none" stroke="black"/>"#,
            self.x0, self.y0, self.x0, y1, x1, y1
        );
        for v in [self.xr.0, self.xr.1].into_iter().filter(|_| x_ticks) {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                self.x(v),
                y1 + 14.0,
                tick(v)
            );
        }
        for v in [self.yr.0, self.yr.1] {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                self.x0 - 4.0,
                self.y(v) + 4.0,
                tick(v)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            self.x0 + self.w / 2.0,
            y1 + 30.0,
            escape(x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" transform="rotate(-90 {:.1} {:.1})">{}</text>"#,
            self.x0 - 30.0,
            self.y0 + self.h / 2.0,
            self.x0 - 30.0,
            self.y0 + self.h / 2.0,
            escape(y_label)
        );
    }
}

fn tick(v: f64) -> String {
    format!("{:.3}", v).trim_end_matches('0').trim_end_matches('.').to_string()
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
    /// Palette index; series sharing it share a colour.
    pub color: usize,
}

/// Lines over a shared frame; `unit_square` fixes both axes to [0, 1] and
/// draws the 45-degree reference.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series], unit_square: bool) -> String {
    let (width, height) = (560.0, 420.0);
    let all = || series.iter().flat_map(|s| s.points.iter());
    let (xr, yr) = if unit_square {
        ((0.0, 1.0), (0.0, 1.0))
    } else {
        let (lo, hi) = padded_range(all().map(|p| p.0));
        let pad = (hi - lo) / 1.1 * 0.05;
        ((lo + pad, hi - pad), padded_range(all().map(|p| p.1)))
    };
    let frame = Frame {
        x0: MARGIN + 10.0,
        y0: 30.0,
        w: width - 2.0 * MARGIN - 110.0,
        h: height - 30.0 - MARGIN - 10.0,
        xr,
        yr,
    };
    let mut s = open(width, height, title);
    frame.axes(&mut s, x_label, y_label, true);
    if unit_square {
        let _ = writeln!(
            s,
            r##"<line class="reference" x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#999" stroke-dasharray="4 3"/>"##,
            frame.x(0.0),
            frame.y(0.0),
            frame.x(1.0),
            frame.y(1.0)
        );
    }
    for (k, series) in series.iter().enumerate() {
        let color = PALETTE[series.color % PALETTE.len()];
        let path: Vec<String> = series
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.1},{:.1}", frame.x(x), frame.y(y.clamp(yr.0, yr.1))))
            .collect();
        if path.is_empty() {
            continue;
        }
        let dash = if series.dashed { r#" stroke-dasharray="5 3""# } else { "" };
        let _ = writeln!(
            s,
            r#"<polyline class="series" points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            path.join(" ")
        );
        let ly = frame.y0 + 12.0 + 14.0 * k as f64;
        let lx = frame.x0 + frame.w + 10.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.1}" y="{ly:.1}">{}</text>"#,
            ly - 4.0,
            lx + 16.0,
            ly - 4.0,
            lx + 20.0,
            escape(&series.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn scatter(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    let (width, height) = (480.0, 400.0);
    let frame = Frame {
        x0: MARGIN + 10.0,
        y0: 30.0,
        w: width - 2.0 * MARGIN - 10.0,
        h: height - 30.0 - MARGIN - 10.0,
        xr: padded_range(points.iter().map(|p| p.0)),
        yr: padded_range(points.iter().map(|p| p.1)),
    };
    let mut s = open(width, height, title);
    frame.axes(&mut s, x_label, y_label, true);
    for &(x, y) in points {
        let _ = writeln!(
            s,
            r#"<circle class="point" cx="{:.1}" cy="{:.1}" r="3" fill="{}"/>"#,
            frame.x(x),
            frame.y(y),
            PALETTE[0]
        );
    }
    s.push_str("</svg>\n");
    s
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    pub bars: Vec<(String, f64)>,
}

/// One bar panel per entry, laid out in a row, sharing a y-axis scale.
pub fn bar_panels(title: &str, y_label: &str, panels: &[Panel]) -> String {
    let panel_w = 200.0;
    let (width, height) = (MARGIN + panel_w * panels.len().max(1) as f64 + 20.0, 360.0);
    let top = panels
        .iter()
        .flat_map(|p| p.bars.iter().map(|b| b.1))
        .fold(0.0f64, f64::max);
    let top = if top > 0.0 { top * 1.1 } else { 1.0 };
    let mut s = open(width, height, title);
    for (k, panel) in panels.iter().enumerate() {
        let frame = Frame {
            x0: MARGIN + panel_w * k as f64 + 10.0,
            y0: 50.0,
            w: panel_w - 30.0,
            h: height - 50.0 - MARGIN - 20.0,
            xr: (0.0, panel.bars.len().max(1) as f64),
            yr: (0.0, top),
        };
        let _ = writeln!(s, r#"<g class="panel">"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="40" text-anchor="middle">{}</text>"#,
            frame.x0 + frame.w / 2.0,
            escape(&panel.title)
        );
        frame.axes(&mut s, "", if k == 0 { y_label } else { "" }, false);
        for (b, (label, value)) in panel.bars.iter().enumerate() {
            let x = frame.x(b as f64 + 0.15);
            let w = frame.x(b as f64 + 0.85) - x;
            let y = frame.y(value.max(0.0));
            let _ = writeln!(
                s,
                r#"<rect class="bar" x="{x:.1}" y="{y:.1}" width="{w:.1}" height="{:.1}" fill="{}"><title>{} = {}</title></rect>"#,
                frame.y(0.0) - y,
                PALETTE[b % PALETTE.len()],
                escape(label),
                value
            );
            // one word per line keeps neighbouring labels apart
            for (line, word) in label.split(' ').enumerate() {
                let _ = writeln!(
                    s,
                    r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="9">{}</text>"#,
                    x + w / 2.0,
                    frame.y(0.0) + 12.0 + 11.0 * line as f64,
                    escape(word)
                );
            }
        }
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panels_and_bars_are_counted() {
        let panels: Vec<Panel> = (0..3)
            .map(|p| Panel {
                title: format!("p{p}"),
                bars: vec![("a".into(), 0.1), ("b".into(), 0.2)],
            })
            .collect();
        let svg = bar_panels("t", "y", &panels);
        assert_eq!(svg.matches(r#"class="panel""#).count(), 3);
        assert_eq!(svg.matches(r#"class="bar""#).count(), 6);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }

    #[test]
    fn labels_are_escaped() {
        let svg = scatter("a<b & c", "x", "y", &[(0.0, 1.0), (1.0, 2.0)]);
        assert!(svg.contains("a&lt;b &amp; c"));
        assert_eq!(svg.matches("<circle").count(), 2);
    }

    #[test]
    fn unit_square_draws_reference() {
        let series = [Series {
            label: "m".into(),
            points: vec![(0.1, 0.2), (0.5, 0.4)],
            dashed: false,
            color: 0,
        }];
        assert!(line_chart("c", "p", "o", &series, true).contains(r#"class="reference""#));
        assert!(!line_chart("c", "p", "o", &series, false).contains(r#"class="reference""#));
    }
}
