//! Minimal deterministic SVG charts.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Half-widths of vertical error bars, one per point.
    pub errors: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Axes {
    pub log_x: bool,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    log_x: bool,
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone, log_x: bool) -> Self {
        let tx = |x: f64| if log_x { x.log10() } else { x };
        let (mut x0, mut x1) = range(xs.map(tx).filter(|v| v.is_finite()));
        let (mut y0, mut y1) = range(ys.filter(|v| v.is_finite()));
        if x1 <= x0 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 <= y0 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let pad = 0.05 * (y1 - y0);
        Self {
            x0,
            x1,
            y0: y0 - pad,
            y1: y1 + pad,
            log_x,
        }
    }

    fn px(&self, x: f64) -> f64 {
        let x = if self.log_x { x.log10() } else { x };
        MARGIN_L + (x - self.x0) / (self.x1 - self.x0) * (W - MARGIN_L - MARGIN_R)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN_B - (y - self.y0) / (self.y1 - self.y0) * (H - MARGIN_T - MARGIN_B)
    }
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

fn header(out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        (W - MARGIN_R + MARGIN_L) / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (W - MARGIN_R + MARGIN_L) / 2.0,
        H - 12.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
}

fn axes(out: &mut String, f: &Frame) {
    let (l, r, t, b) = (MARGIN_L, W - MARGIN_R, MARGIN_T, H - MARGIN_B);
    let _ = writeln!(
        out,
        r##"<path d="M{l} {t} L{l} {b} L{r} {b}" fill="none" stroke="#333"/>"##
    );
    for i in 0..=4 {
        let fx = f.x0 + (f.x1 - f.x0) * i as f64 / 4.0;
        let xv = if f.log_x { 10f64.powf(fx) } else { fx };
        let px = f.px(xv);
        let _ = writeln!(
            out,
            r##"<line x1="{px:.1}" y1="{b}" x2="{px:.1}" y2="{:.1}" stroke="#333"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
            b + 4.0,
            b + 18.0,
            tick(xv)
        );
        let yv = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
        let py = f.py(yv);
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{py:.1}" x2="{l}" y2="{py:.1}" stroke="#333"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            l - 4.0,
            l - 6.0,
            py + 4.0,
            tick(yv)
        );
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn legend(out: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = MARGIN_T + 10.0 + 18.0 * i as f64;
        let x = W - MARGIN_R + 12.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x}" y="{:.1}" width="12" height="12" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            y - 10.0,
            PALETTE[i % PALETTE.len()],
            x + 18.0,
            y,
            escape(name)
        );
    }
}

/// Polyline chart, one line per series, with optional error bars.
pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series], ax: Axes) -> String {
    let all = || series.iter().flat_map(|s| s.points.iter());
    let ys = series.iter().flat_map(|s| {
        s.points.iter().enumerate().flat_map(move |(i, p)| {
            let e = s.errors.as_ref().map_or(0.0, |e| e[i]);
            [p.1 - e, p.1 + e]
        })
    });
    let f = Frame::new(all().map(|p| p.0), ys, ax.log_x);
    let mut out = String::new();
    header(&mut out, title, xlabel, ylabel);
    axes(&mut out, &f);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.1.is_finite())
            .map(|&(x, y)| format!("{:.1},{:.1}", f.px(x), f.py(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        if let Some(errs) = &s.errors {
            for (&(x, y), e) in s.points.iter().zip(errs) {
                let px = f.px(x);
                let _ = writeln!(
                    out,
                    r#"<line x1="{px:.1}" y1="{:.1}" x2="{px:.1}" y2="{:.1}" stroke="{color}"/>"#,
                    f.py(y - e),
                    f.py(y + e)
                );
            }
        }
    }
    let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

/// Scatter of 2-D points with an optional shaded vertical band.
pub fn scatter(title: &str, groups: &[(String, Vec<(f64, f64)>)], band: Option<(f64, f64)>) -> String {
    let all = || groups.iter().flat_map(|g| g.1.iter());
    let f = Frame::new(all().map(|p| p.0), all().map(|p| p.1), false);
    let mut out = String::new();
    header(&mut out, title, "x1", "x2");
    if let Some((lo, hi)) = band {
        let a = f.px(lo.max(f.x0)).max(MARGIN_L);
        let b = f.px(hi.min(f.x1)).min(W - MARGIN_R);
        if b > a {
            let _ = writeln!(
                out,
                r##"<rect x="{a:.1}" y="{MARGIN_T}" width="{:.1}" height="{}" fill="#f2e6b3"/>"##,
                b - a,
                H - MARGIN_T - MARGIN_B
            );
        }
    }
    axes(&mut out, &f);
    for (i, (_, pts)) in groups.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for &(x, y) in pts {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.1}" cy="{:.1}" r="1.6" fill="{color}" fill-opacity="0.6"/>"#,
                f.px(x),
                f.py(y)
            );
        }
    }
    let names: Vec<&str> = groups.iter().map(|g| g.0.as_str()).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}
