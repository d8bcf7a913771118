//! Static SVG figures. Output depends only on the input values, so repeated
//! runs produce identical files.

use std::fmt::Write;

use crate::eval::OverlapReport;
use crate::training::EpochMetrics;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

fn header(out: &mut String, w: f64, h: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Epoch-mean loss against epoch, with the learning rate as a dashed trace on
/// a secondary axis.
pub fn loss_curve(metrics: &[EpochMetrics]) -> String {
    let mut out = String::new();
    header(&mut out, WIDTH, HEIGHT);
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">epoch</text>"#, (x0 + x1) / 2.0, HEIGHT - 16.0);
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">mean loss</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    if metrics.is_empty() {
        out.push_str("</svg>\n");
        return out;
    }
    let n = metrics.len();
    let lo = metrics.iter().map(|m| m.loss).fold(f64::INFINITY, f64::min).min(0.0);
    let hi = metrics.iter().map(|m| m.loss).fold(f64::NEG_INFINITY, f64::max);
    let hi = if hi > lo { hi } else { lo + 1.0 };
    let lr_hi = metrics.iter().map(|m| m.lr).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let x = |i: usize| {
        if n == 1 {
            (x0 + x1) / 2.0
        } else {
            x0 + (x1 - x0) * i as f64 / (n - 1) as f64
        }
    };
    let y = |v: f64| y0 - (y0 - y1) * (v - lo) / (hi - lo);
    let y_lr = |v: f64| y0 - (y0 - y1) * v / lr_hi;

    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{v:.3}</text>"#, x0 - 6.0, y(v) + 4.0);
    }
    let loss_pts: Vec<String> = metrics.iter().enumerate().map(|(i, m)| format!("{:.2},{:.2}", x(i), y(m.loss))).collect();
    let lr_pts: Vec<String> = metrics.iter().enumerate().map(|(i, m)| format!("{:.2},{:.2}", x(i), y_lr(m.lr))).collect();
    let _ = writeln!(
        out,
        r##"<polyline points="{}" fill="none" stroke="#999999" stroke-dasharray="4 3"/>"##,
        lr_pts.join(" ")
    );
    let _ = writeln!(
        out,
        r##"<polyline points="{}" fill="none" stroke="#1f5fa8" stroke-width="2"/>"##,
        loss_pts.join(" ")
    );
    for (i, m) in metrics.iter().enumerate() {
        if n <= 10 || i % (n / 10).max(1) == 0 || i + 1 == n {
            let _ = writeln!(out, r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#, x(i), y0 + 16.0, m.epoch);
        }
    }
    let _ = writeln!(
        out,
        r#"<text x="{x1}" y="{}" text-anchor="end" fill="gray">dashed: learning rate (max {lr_hi:.3})</text>"#,
        y1 - 10.0
    );
    out.push_str("</svg>\n");
    out
}

/// Task-by-task overlap as a white-to-blue grid with the value in each cell.
pub fn overlap_heatmap(report: &OverlapReport) -> String {
    let k = report.tasks.len();
    let cell = 48.0;
    let left = 24.0 + 7.0 * report.tasks.iter().map(|t| t.len()).max().unwrap_or(0) as f64;
    let top = left;
    let w = left + cell * k as f64 + 24.0;
    let h = top + cell * k as f64 + 24.0;
    let mut out = String::new();
    header(&mut out, w, h);
    for (i, name) in report.tasks.iter().enumerate() {
        let name = escape(name);
        let c = cell * i as f64 + cell / 2.0;
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{name}</text>"#, left - 6.0, top + c + 4.0);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{}" transform="rotate(-90 {:.2} {})">{name}</text>"#,
            left + c + 4.0,
            top - 6.0,
            left + c + 4.0,
            top - 6.0
        );
    }
    for (i, row) in report.matrix.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let (x, y) = (left + cell * j as f64, top + cell * i as f64);
            let (fill, label) = match v {
                Some(v) => {
                    let t = v.clamp(0.0, 1.0);
                    let r = (255.0 * (1.0 - 0.85 * t)).round() as u8;
                    let g = (255.0 * (1.0 - 0.6 * t)).round() as u8;
                    (format!("#{r:02x}{g:02x}ff"), format!("{v:.2}"))
                }
                None => ("#eeeeee".to_string(), "n/a".to_string()),
            };
            let _ = writeln!(
                out,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{cell}" height="{cell}" fill="{fill}" stroke="white"/>"#
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    out.push_str("</svg>\n");
    out
}
