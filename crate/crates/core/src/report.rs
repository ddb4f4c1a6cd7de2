//! Plot data export: grouped click-rate bars and rate-versus-distance
//! curves, each as CSV and as self-contained SVG.

use std::fmt::Write as _;

use serde::Serialize;

use crate::characterize::{error_bars, RateTable};
use crate::photon::LinearityReport;
use crate::security::KeyRatePoint;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bar {
    pub pattern: String,
    pub rate: f64,
    pub se: f64,
}

/// Bars sharing one current label.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarGroup {
    pub label: String,
    pub bars: Vec<Bar>,
}

/// One group per current label, bars ordered by pattern index. Groups with
/// `T = 0` are left out, and so are labels left with no bars.
pub fn bar_groups(table: &RateTable, names: &[String]) -> Vec<BarGroup> {
    let se = error_bars(table);
    (0..table.p)
        .filter_map(|label| {
            let bars: Vec<Bar> = table
                .groups_with_current(label)
                .filter_map(|i| {
                    table.r[i].map(|rate| Bar { pattern: table.key(i).name(names), rate, se: se[i].unwrap_or(0.0) })
                })
                .collect();
            (!bars.is_empty()).then(|| BarGroup { label: names[label].clone(), bars })
        })
        .collect()
}

pub fn bars_csv(groups: &[BarGroup]) -> String {
    let mut s = String::from("current,pattern,R,se\n");
    for g in groups {
        for b in &g.bars {
            writeln!(s, "{},{},{:.6e},{:.6e}", g.label, b.pattern, b.rate, b.se).unwrap();
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// One series per `delta_max`, `(distance, skr)` points.
pub fn curve_series(curves: &[(f64, Vec<KeyRatePoint>)]) -> Vec<Series> {
    curves
        .iter()
        .map(|(delta, pts)| Series {
            name: format!("delta={delta}"),
            points: pts.iter().map(|p| (p.distance, p.skr)).collect(),
        })
        .collect()
}

/// Wide CSV: first column `x_name`, one column per series. All series must
/// share the same x values.
pub fn series_csv(series: &[Series], x_name: &str) -> String {
    let mut s = String::from(x_name);
    for se in series {
        write!(s, ",{}", se.name).unwrap();
    }
    s.push('\n');
    let n = series.first().map_or(0, |s| s.points.len());
    for i in 0..n {
        write!(s, "{}", series[0].points[i].0).unwrap();
        for se in series {
            write!(s, ",{:.6e}", se.points[i].1).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn linearity_csv(report: &LinearityReport) -> String {
    let mut s = String::from("m,P,fit,deviation\n");
    for r in &report.rows {
        writeln!(s, "{},{:.10e},{:.10e},{:.6e}", r.m, r.p_click, r.fit, r.deviation).unwrap();
    }
    s
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
const W: f64 = 720.0;
const H: f64 = 420.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 20.0, 40.0, 60.0); // left, right, top, bottom

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#).unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title)).unwrap();
    s
}

fn axes(s: &mut String, y_max: f64, y_label: &str) {
    let (l, r, t, b) = MARGIN;
    writeln!(s, r#"<line x1="{l}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, H - b, W - r, H - b).unwrap();
    writeln!(s, r#"<line x1="{l}" y1="{t}" x2="{l}" y2="{}" stroke="black"/>"#, H - b).unwrap();
    for i in 0..=4 {
        let v = y_max * i as f64 / 4.0;
        let y = H - b - (H - t - b) * i as f64 / 4.0;
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.2e}</text>"#, l - 4.0, y + 4.0).unwrap();
    }
    writeln!(
        s,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    )
    .unwrap();
}

/// Grouped bar chart with one-standard-error whiskers.
pub fn bars_svg(groups: &[BarGroup], title: &str) -> String {
    let (l, r, t, b) = MARGIN;
    let mut s = svg_open(title);
    let y_max = groups.iter().flat_map(|g| &g.bars).map(|b| b.rate + b.se).fold(0.0, f64::max).max(f64::MIN_POSITIVE) * 1.1;
    axes(&mut s, y_max, "click rate");
    let plot_w = W - l - r;
    let plot_h = H - t - b;
    let slot = plot_w / groups.len().max(1) as f64;
    for (gi, g) in groups.iter().enumerate() {
        let x0 = l + slot * gi as f64;
        let bw = slot * 0.8 / g.bars.len() as f64;
        for (bi, bar) in g.bars.iter().enumerate() {
            let x = x0 + slot * 0.1 + bw * bi as f64;
            let h = plot_h * bar.rate / y_max;
            let colour = PALETTE[bi % PALETTE.len()];
            writeln!(
                s,
                r#"<rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="{colour}"><title>{} {:.4e}</title></rect>"#,
                H - b - h,
                bw * 0.9,
                escape(&bar.pattern),
                bar.rate
            )
            .unwrap();
            let cx = x + bw * 0.45;
            let lo = H - b - plot_h * (bar.rate - bar.se).max(0.0) / y_max;
            let hi = H - b - plot_h * (bar.rate + bar.se) / y_max;
            writeln!(s, r#"<line x1="{cx:.2}" y1="{lo:.2}" x2="{cx:.2}" y2="{hi:.2}" stroke="black"/>"#).unwrap();
        }
        writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#, x0 + slot / 2.0, H - b + 18.0, escape(&g.label))
            .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Line plot of several series on shared axes.
pub fn series_svg(series: &[Series], title: &str, x_label: &str, y_label: &str) -> String {
    let (l, r, t, b) = MARGIN;
    let mut s = svg_open(title);
    let pts = || series.iter().flat_map(|s| &s.points);
    let x_min = pts().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let x_max = pts().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let y_max = pts().map(|p| p.1).fold(0.0, f64::max).max(f64::MIN_POSITIVE) * 1.05;
    let x_span = if x_max > x_min { x_max - x_min } else { 1.0 };
    axes(&mut s, y_max, y_label);
    let px = |x: f64| l + (W - l - r) * (x - x_min) / x_span;
    let py = |y: f64| H - b - (H - t - b) * y / y_max;
    for i in 0..=4 {
        let x = x_min + x_span * i as f64 / 4.0;
        writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{x:.4}</text>"#, px(x), H - b + 16.0).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, l + (W - l - r) / 2.0, H - 12.0, escape(x_label)).unwrap();
    for (i, se) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = se.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        writeln!(s, r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#, path.join(" ")).unwrap();
        let ly = t + 14.0 * (i as f64 + 1.0);
        writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/>"#, W - r - 140.0, W - r - 120.0)
            .unwrap();
        writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, W - r - 115.0, ly + 4.0, escape(&se.name)).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Click probability against mean photon number for several efficiencies.
pub fn linearity_series(reports: &[LinearityReport]) -> Vec<Series> {
    reports
        .iter()
        .map(|r| Series { name: format!("eta={}", r.eta), points: r.rows.iter().map(|row| (row.m, row.p_click)).collect() })
        .collect()
}
