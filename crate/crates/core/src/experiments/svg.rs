//! Minimal hand-written SVG charts.

use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"];

pub struct BoxGroup {
    pub label: String,
    /// One sample vector per series.
    pub series: Vec<Vec<f64>>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub(crate) fn five_numbers(values: &[f64]) -> [f64; 5] {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    [
        quantile(&v, 0.0),
        quantile(&v, 0.25),
        quantile(&v, 0.5),
        quantile(&v, 0.75),
        quantile(&v, 1.0),
    ]
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{title}</text>"#,
        W / 2.0
    );
    let _ = writeln!(
        out,
        r#"<line x1="{LEFT}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#,
        H - BOTTOM,
        W - RIGHT,
        H - BOTTOM,
        H - BOTTOM
    );
}

fn legend(out: &mut String, names: &[String]) {
    for (i, name) in names.iter().enumerate() {
        let x = W - RIGHT - 150.0;
        let y = TOP + 8.0 + 18.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{x}" y="{}" width="12" height="12" fill="{}"/><text x="{}" y="{}">{name}</text>"#,
            y - 10.0,
            COLORS[i % COLORS.len()],
            x + 18.0,
            y
        );
    }
}

/// Box plots on a log₁₀ axis, one group per x position.
pub fn box_plot(
    title: &str,
    y_label: &str,
    series_names: &[String],
    groups: &[BoxGroup],
) -> String {
    let floor = 1e-12;
    let all: Vec<f64> = groups
        .iter()
        .flat_map(|g| g.series.iter().flatten())
        .map(|v| v.max(floor).log10())
        .collect();
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min).floor();
    let mut hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max).ceil();
    if !(lo.is_finite() && hi.is_finite()) {
        return String::new();
    }
    if hi <= lo {
        hi = lo + 1.0;
    }
    let ypx = |v: f64| H - BOTTOM - (v.max(floor).log10() - lo) / (hi - lo) * (H - TOP - BOTTOM);
    let mut out = String::new();
    header(&mut out, title);
    let mut e = lo as i32;
    while e as f64 <= hi {
        let y = ypx(10f64.powi(e));
        let _ = writeln!(
            out,
            r##"<line x1="{}" y1="{y}" x2="{LEFT}" y2="{y}" stroke="black"/><text x="{}" y="{}" text-anchor="end">1e{e}</text>"##,
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0
        );
        e += 1;
    }
    let _ = writeln!(
        out,
        r#"<text transform="translate(18,{}) rotate(-90)" text-anchor="middle">{y_label}</text>"#,
        (H - BOTTOM + TOP) / 2.0
    );
    let gw = (W - LEFT - RIGHT) / groups.len().max(1) as f64;
    for (gi, g) in groups.iter().enumerate() {
        let gx = LEFT + gi as f64 * gw;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            gx + gw / 2.0,
            H - BOTTOM + 20.0,
            g.label
        );
        let bw = gw / (g.series.len() as f64 + 1.0);
        for (si, s) in g.series.iter().enumerate() {
            if s.is_empty() {
                continue;
            }
            let [mn, q1, md, q3, mx] = five_numbers(s);
            let cx = gx + bw * (si as f64 + 1.0);
            let half = bw * 0.35;
            let color = COLORS[si % COLORS.len()];
            let _ = writeln!(
                out,
                r#"<line x1="{cx}" y1="{}" x2="{cx}" y2="{}" stroke="{color}"/>"#,
                ypx(mn),
                ypx(mx)
            );
            let _ = writeln!(
                out,
                r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{color}" fill-opacity="0.35" stroke="{color}"/>"#,
                cx - half,
                ypx(q3),
                2.0 * half,
                (ypx(q1) - ypx(q3)).max(0.5)
            );
            let _ = writeln!(
                out,
                r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/>"#,
                cx - half,
                cx + half,
                y = ypx(md)
            );
        }
    }
    legend(&mut out, series_names);
    out.push_str("</svg>\n");
    out
}

/// Grouped bar chart of counts.
pub fn bar_chart(
    title: &str,
    y_label: &str,
    series_names: &[String],
    groups: &[(String, Vec<usize>)],
) -> String {
    let max = groups
        .iter()
        .flat_map(|g| g.1.iter())
        .copied()
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let ypx = |v: f64| H - BOTTOM - v / max * (H - TOP - BOTTOM - 20.0);
    let mut out = String::new();
    header(&mut out, title);
    let _ = writeln!(
        out,
        r#"<text transform="translate(18,{}) rotate(-90)" text-anchor="middle">{y_label}</text>"#,
        (H - BOTTOM + TOP) / 2.0
    );
    let gw = (W - LEFT - RIGHT) / groups.len().max(1) as f64;
    for (gi, (label, counts)) in groups.iter().enumerate() {
        let gx = LEFT + gi as f64 * gw;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{label}</text>"#,
            gx + gw / 2.0,
            H - BOTTOM + 20.0
        );
        let bw = gw / (counts.len() as f64 + 1.0);
        for (si, &c) in counts.iter().enumerate() {
            let x = gx + bw * (si as f64 + 0.5);
            let y = ypx(c as f64);
            let _ = writeln!(
                out,
                r#"<rect x="{x}" y="{y}" width="{}" height="{}" fill="{}"/><text x="{}" y="{}" text-anchor="middle">{c}</text>"#,
                bw * 0.9,
                H - BOTTOM - y,
                COLORS[si % COLORS.len()],
                x + bw * 0.45,
                y - 4.0
            );
        }
    }
    legend(&mut out, series_names);
    out.push_str("</svg>\n");
    out
}
