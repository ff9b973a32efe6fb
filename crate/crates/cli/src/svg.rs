//! Minimal standalone SVG line charts.

use std::fmt::Write;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Half-width of a shaded band around `y`.
    pub std: Option<Vec<f64>>,
    /// Draw as a right-continuous staircase.
    pub step: bool,
}

impl Series {
    pub fn line(name: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Self {
        Series {
            name: name.into(),
            x,
            y,
            std: None,
            step: false,
        }
    }

    pub fn band(name: impl Into<String>, x: Vec<f64>, y: Vec<f64>, std: Vec<f64>) -> Self {
        Series {
            name: name.into(),
            x,
            y,
            std: Some(std),
            step: false,
        }
    }

    pub fn steps(name: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Self {
        Series {
            name: name.into(),
            x,
            y,
            std: None,
            step: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub title: String,
    pub panels: Vec<Panel>,
}

const WIDTH: f64 = 720.0;
const PANEL_H: f64 = 230.0;
const TOP: f64 = 40.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const PAD_T: f64 = 28.0;
const PAD_B: f64 = 42.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Round-number ticks covering `[lo, hi]`.
pub fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let raw = span / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e5).contains(&a) {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

struct Cleaned {
    x: Vec<f64>,
    y: Vec<f64>,
    std: Option<Vec<f64>>,
    dropped: usize,
}

fn clean(s: &Series) -> Cleaned {
    let mut c = Cleaned {
        x: vec![],
        y: vec![],
        std: s.std.as_ref().map(|_| vec![]),
        dropped: 0,
    };
    for k in 0..s.x.len().min(s.y.len()) {
        let sd = s
            .std
            .as_ref()
            .map(|v| v.get(k).copied().unwrap_or(f64::NAN));
        if !(s.x[k].is_finite() && s.y[k].is_finite() && sd.is_none_or(f64::is_finite)) {
            c.dropped += 1;
            continue;
        }
        c.x.push(s.x[k]);
        c.y.push(s.y[k]);
        if let (Some(v), Some(d)) = (c.std.as_mut(), sd) {
            v.push(d.abs());
        }
    }
    c.dropped += s.x.len().max(s.y.len()) - s.x.len().min(s.y.len());
    c
}

fn bounds(series: &[Cleaned]) -> ([f64; 2], [f64; 2]) {
    let (mut x, mut y) = (
        [f64::INFINITY, f64::NEG_INFINITY],
        [f64::INFINITY, f64::NEG_INFINITY],
    );
    for s in series {
        for k in 0..s.x.len() {
            let d = s.std.as_ref().map_or(0.0, |v| v[k]);
            x = [x[0].min(s.x[k]), x[1].max(s.x[k])];
            y = [y[0].min(s.y[k] - d), y[1].max(s.y[k] + d)];
        }
    }
    if !x[0].is_finite() {
        return ([0.0, 1.0], [0.0, 1.0]);
    }
    let widen = |b: [f64; 2]| {
        if b[1] - b[0] > 1e-12 * b[0].abs().max(b[1].abs()).max(1.0) {
            b
        } else {
            let h = 0.5 * b[0].abs().max(1.0);
            [b[0] - h, b[1] + h]
        }
    };
    let x = widen(x);
    let y = widen(y);
    let pad = 0.05 * (y[1] - y[0]);
    (x, [y[0] - pad, y[1] + pad])
}

/// Render the figure. Identical input gives identical text.
pub fn emit_svg(fig: &Figure) -> String {
    let height = TOP + PANEL_H * fig.panels.len().max(1) as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{height}" fill="white"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(&fig.title)
    );
    for (k, panel) in fig.panels.iter().enumerate() {
        render_panel(&mut out, panel, TOP + k as f64 * PANEL_H);
    }
    out.push_str("</svg>\n");
    out
}

fn render_panel(out: &mut String, panel: &Panel, y0: f64) {
    let cleaned: Vec<Cleaned> = panel.series.iter().map(clean).collect();
    let dropped: usize = cleaned.iter().map(|c| c.dropped).sum();
    if dropped > 0 {
        let _ = writeln!(out, "<!-- {dropped} non-finite points dropped -->");
    }
    let (xb, yb) = bounds(&cleaned);
    let (px0, px1) = (LEFT, WIDTH - RIGHT);
    let (py0, py1) = (y0 + PAD_T, y0 + PANEL_H - PAD_B);
    let sx = |x: f64| px0 + (x - xb[0]) / (xb[1] - xb[0]) * (px1 - px0);
    let sy = |y: f64| py1 - (y - yb[0]) / (yb[1] - yb[0]) * (py1 - py0);

    let _ = writeln!(out, r#"<g class="panel">"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{:.2}" text-anchor="middle" font-size="12">{}</text>"#,
        (px0 + px1) / 2.0,
        y0 + 18.0,
        escape(&panel.title)
    );
    let _ = writeln!(
        out,
        r#"<rect class="plot-area" x="{px0}" y="{py0:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        px1 - px0,
        py1 - py0
    );
    for t in nice_ticks(xb[0], xb[1], 6) {
        let x = sx(t);
        let _ = writeln!(
            out,
            r##"<line x1="{x:.2}" y1="{py1:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"##,
            py1 + 4.0
        );
        let _ = writeln!(
            out,
            r#"<text class="xtick" x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            py1 + 16.0,
            fmt_tick(t)
        );
    }
    for t in nice_ticks(yb[0], yb[1], 5) {
        let y = sy(t);
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{px0}" y2="{y:.2}" stroke="black"/>"##,
            px0 - 4.0
        );
        let _ = writeln!(
            out,
            r##"<line x1="{px0}" y1="{y:.2}" x2="{px1}" y2="{y:.2}" stroke="#dddddd" stroke-width="0.5"/>"##
        );
        let _ = writeln!(
            out,
            r#"<text class="ytick" x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            px0 - 6.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (px0 + px1) / 2.0,
        py1 + 32.0,
        escape(&panel.x_label)
    );
    let (lx, ly) = (22.0, (py0 + py1) / 2.0);
    let _ = writeln!(
        out,
        r#"<text x="{lx}" y="{ly:.2}" text-anchor="middle" transform="rotate(-90 {lx} {ly:.2})">{}</text>"#,
        escape(&panel.y_label)
    );

    for (k, c) in cleaned.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        if let Some(sd) = &c.std {
            if !c.x.is_empty() {
                let mut pts = String::new();
                for i in 0..c.x.len() {
                    let _ = write!(pts, "{:.2},{:.2} ", sx(c.x[i]), sy(c.y[i] + sd[i]));
                }
                for i in (0..c.x.len()).rev() {
                    let _ = write!(pts, "{:.2},{:.2} ", sx(c.x[i]), sy(c.y[i] - sd[i]));
                }
                let _ = writeln!(
                    out,
                    r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                    pts.trim_end()
                );
            }
        }
        let mut pts = String::new();
        for i in 0..c.x.len() {
            if panel.series[k].step && i > 0 {
                let _ = write!(pts, "{:.2},{:.2} ", sx(c.x[i]), sy(c.y[i - 1]));
            }
            let _ = write!(pts, "{:.2},{:.2} ", sx(c.x[i]), sy(c.y[i]));
        }
        let _ = writeln!(
            out,
            r#"<polyline class="series" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.trim_end()
        );
        let ly = py0 + 14.0 + 16.0 * k as f64;
        let lx = px1 + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#,
            ly - 4.0,
            lx + 18.0,
            ly - 4.0
        );
        let _ = writeln!(
            out,
            r#"<text class="legend" x="{:.2}" y="{ly:.2}">{}</text>"#,
            lx + 24.0,
            escape(&panel.series[k].name)
        );
    }
    let _ = writeln!(out, "</g>");
}
