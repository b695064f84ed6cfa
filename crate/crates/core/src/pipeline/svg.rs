//! Plain-text SVG rendering of evaluation reports.

use std::fmt::Write;

use crate::metrics::EvalReport;

const SIZE: f64 = 400.0;
const MARGIN: f64 = 40.0;
const PLOT: f64 = SIZE - 2.0 * MARGIN;
pub(crate) const STROKE: f64 = 1.5;

fn x(p: f64) -> f64 {
    MARGIN + PLOT * p
}

fn y(p: f64) -> f64 {
    SIZE - MARGIN - PLOT * p
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn frame(out: &mut String, title: &str, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(
        out,
        r##"<rect class="frame" x="{MARGIN}" y="{MARGIN}" width="{PLOT}" height="{PLOT}" fill="none" stroke="#999"/>"##
    );
    for t in 0..=4 {
        let v = f64::from(t) / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">{v}</text>"#,
            x(v),
            SIZE - MARGIN + 14.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.3}" y="{:.3}" text-anchor="end">{v}</text>"#,
            MARGIN - 4.0,
            y(v) + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">{}</text>"#,
        SIZE / 2.0,
        SIZE - 8.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="12" y="{:.3}" text-anchor="middle" transform="rotate(-90 12 {:.3})">{}</text>"#,
        SIZE / 2.0,
        SIZE / 2.0,
        escape(y_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.3}" y="24" text-anchor="middle" font-size="13">{}</text>"#,
        SIZE / 2.0,
        escape(title)
    );
}

fn identity_line(out: &mut String) {
    let _ = writeln!(
        out,
        r##"<line class="identity" x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="#d62728" stroke-width="{STROKE}" stroke-dasharray="4 3"/>"##,
        x(0.0),
        y(0.0),
        x(1.0),
        y(1.0)
    );
}

/// Per-bin accuracy bars centred on the bin's mean confidence; opacity grows with bin count.
pub fn reliability_svg(report: &EvalReport) -> String {
    let mut out = String::new();
    frame(&mut out, &format!("Reliability: {}", report.method), "confidence", "accuracy");
    let width = PLOT / report.m_bins.max(1) as f64;
    let max_count = report.reliability.iter().map(|r| r.count).max().unwrap_or(0).max(1);
    for row in report.reliability.iter().filter(|r| r.count > 0) {
        let opacity = 0.15 + 0.85 * row.count as f64 / max_count as f64;
        let _ = writeln!(
            out,
            r##"<rect class="bar" data-bin="{}" data-count="{}" x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="#1f77b4" fill-opacity="{:.3}"/>"##,
            row.bin,
            row.count,
            x(row.conf) - width / 2.0,
            y(row.acc),
            width,
            PLOT * row.acc,
            opacity
        );
    }
    identity_line(&mut out);
    out.push_str("</svg>\n");
    out
}

/// Mean score against accuracy for every non-empty group.
pub fn group_scatter_svg(report: &EvalReport) -> String {
    let mut out = String::new();
    frame(&mut out, &format!("Groups: {}", report.method), "mean score", "accuracy");
    identity_line(&mut out);
    for g in &report.groups {
        if let (Some(score), Some(acc)) = (g.mean_score, g.accuracy) {
            let radius = 3.0 + 9.0 * g.mass.sqrt();
            let _ = writeln!(
                out,
                r##"<circle class="group" cx="{:.3}" cy="{:.3}" r="{:.3}" fill="#ff7f0e" fill-opacity="0.6"><title>{} (n={})</title></circle>"##,
                x(score),
                y(acc),
                radius,
                escape(&g.group),
                g.count
            );
        }
    }
    out.push_str("</svg>\n");
    out
}
