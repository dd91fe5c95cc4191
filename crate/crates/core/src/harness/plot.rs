//! Minimal SVG line plots. Every plot is written together with a CSV of the
//! data it draws.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Plot {
    pub title: String,
    pub xlabel: String,
    pub ylabel: String,
    pub logx: bool,
    pub logy: bool,
    pub series: Vec<Series>,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD: [f64; 4] = [70.0, 20.0, 40.0, 50.0]; // left, right, top, bottom
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Axis {
    log: bool,
    lo: f64,
    hi: f64,
}

impl Axis {
    fn new(vals: impl Iterator<Item = f64>, log: bool) -> Axis {
        let t = |v: f64| if log { v.log10() } else { v };
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in vals.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            lo = lo.min(t(v));
            hi = hi.max(t(v));
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            (lo, hi) = (lo - 0.5, hi + 0.5);
        }
        if log {
            (lo, hi) = (lo.floor(), hi.ceil());
        } else {
            let pad = 0.05 * (hi - lo);
            (lo, hi) = (lo - pad, hi + pad);
        }
        Axis { log, lo, hi }
    }
    fn frac(&self, v: f64) -> Option<f64> {
        if !v.is_finite() || (self.log && v <= 0.0) {
            return None;
        }
        let t = if self.log { v.log10() } else { v };
        Some((t - self.lo) / (self.hi - self.lo))
    }
    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            (self.lo as i64..=self.hi as i64).map(|e| ((e as f64 - self.lo) / (self.hi - self.lo), format!("1e{e}"))).collect()
        } else {
            (0..=4)
                .map(|i| {
                    let f = i as f64 / 4.0;
                    (f, format!("{:.3}", self.lo + f * (self.hi - self.lo)))
                })
                .collect()
        }
    }
}

impl Plot {
    pub fn to_svg(&self) -> String {
        let ax = Axis::new(self.series.iter().flat_map(|s| s.xs.iter().copied()), self.logx);
        let ay = Axis::new(self.series.iter().flat_map(|s| s.ys.iter().copied()), self.logy);
        let (pw, ph) = (W - PAD[0] - PAD[1], H - PAD[2] - PAD[3]);
        let px = |f: f64| PAD[0] + f * pw;
        let py = |f: f64| PAD[2] + (1.0 - f) * ph;
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(&self.title));
        let _ = writeln!(s, r#"<rect x="{}" y="{}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#, PAD[0], PAD[2]);
        for (f, l) in ax.ticks() {
            let _ = writeln!(s, r##"<line x1="{0:.1}" x2="{0:.1}" y1="{1}" y2="{2}" stroke="#ddd"/><text x="{0:.1}" y="{3}" text-anchor="middle">{4}</text>"##, px(f), PAD[2], PAD[2] + ph, PAD[2] + ph + 16.0, l);
        }
        for (f, l) in ay.ticks() {
            let _ = writeln!(s, r##"<line x1="{0}" x2="{1}" y1="{2:.1}" y2="{2:.1}" stroke="#ddd"/><text x="{3}" y="{4:.1}" text-anchor="end">{5}</text>"##, PAD[0], PAD[0] + pw, py(f), PAD[0] - 6.0, py(f) + 4.0, l);
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, PAD[0] + pw / 2.0, H - 10.0, esc(&self.xlabel));
        let _ = writeln!(s, r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#, PAD[2] + ph / 2.0, esc(&self.ylabel));
        for (n, se) in self.series.iter().enumerate() {
            let c = COLORS[n % COLORS.len()];
            let pts: Vec<(f64, f64)> = se
                .xs
                .iter()
                .zip(&se.ys)
                .filter_map(|(x, y)| Some((px(ax.frac(*x)?), py(ay.frac(*y)?))))
                .collect();
            let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
            for (x, y) in &pts {
                let _ = writeln!(s, r#"<circle cx="{x:.1}" cy="{y:.1}" r="3" fill="{c}"/>"#);
            }
            let ly = PAD[2] + 14.0 + 16.0 * n as f64;
            let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{c}" text-anchor="end">{}</text>"#, PAD[0] + pw - 8.0, esc(&se.label));
        }
        s.push_str("</svg>\n");
        s
    }

    /// Long format: one row per point.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("series,x,y\n");
        for se in &self.series {
            for (x, y) in se.xs.iter().zip(&se.ys) {
                let _ = writeln!(s, "{},{x:e},{y:e}", se.label.replace(',', ";"));
            }
        }
        s
    }

    /// Writes `<stem>.svg` and `<stem>.csv` into `dir`; returns both names.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<[String; 2]> {
        let (svg, csv) = (format!("{stem}.svg"), format!("{stem}.csv"));
        std::fs::write(dir.join(&svg), self.to_svg())?;
        std::fs::write(dir.join(&csv), self.to_csv())?;
        Ok([svg, csv])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_and_csv_carry_the_same_points() {
        let p = Plot {
            title: "defect <vs> lambda".into(),
            xlabel: "lambda".into(),
            ylabel: "|D|".into(),
            logx: true,
            logy: true,
            series: vec![Series { label: "a".into(), xs: vec![1.0, 10.0, 100.0], ys: vec![1.0, 0.1, 0.0] }],
        };
        let svg = p.to_svg();
        assert!(svg.starts_with("<svg") && svg.contains("&lt;vs&gt;"));
        // the zero cannot sit on a log axis: two markers, three CSV rows
        assert_eq!(svg.matches("<circle").count(), 2);
        assert_eq!(p.to_csv().lines().count(), 4);
    }
}
