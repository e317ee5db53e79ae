use std::fmt::Write as _;

use super::DistributionRow;
use crate::registry::Criterion;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 48.0;
const BOTTOM: f64 = 56.0;
/// Aggregates live on 1..=105 at every level.
const Y_MAX: f64 = 105.0;
const COLORS: [&str; 4] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn y(v: f64) -> f64 {
    let plot = HEIGHT - TOP - BOTTOM;
    TOP + plot * (1.0 - v.clamp(0.0, Y_MAX) / Y_MAX)
}

/// Box plots of the aggregate score per level, side by side on a shared axis,
/// with the mean and its 95% interval marked.
pub(super) fn distribution_figure(criterion: &Criterion, rows: &[&DistributionRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{} score distribution by model</text>"#,
        WIDTH / 2.0,
        escape(criterion.as_str())
    );

    // axis and grid
    let _ = writeln!(
        s,
        r##"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}" stroke="#333"/>"##,
        HEIGHT - BOTTOM
    );
    for tick in (0..=105).step_by(15) {
        let ty = y(f64::from(tick));
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{ty:.2}" x2="{:.2}" y2="{ty:.2}" stroke="#ddd"/>"##,
            WIDTH - RIGHT
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{tick}</text>"#,
            LEFT - 6.0,
            ty + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">Aggregate score</text>"#,
        (TOP + HEIGHT - BOTTOM) / 2.0,
        (TOP + HEIGHT - BOTTOM) / 2.0
    );

    let slot = (WIDTH - LEFT - RIGHT) / rows.len().max(1) as f64;
    let half_box = (slot * 0.25).min(40.0);
    for (i, r) in rows.iter().enumerate() {
        let cx = LEFT + slot * (i as f64 + 0.5);
        let color = COLORS[(r.level.get() as usize - 1) % COLORS.len()];
        let _ = writeln!(s, r#"<g stroke="{color}" fill="none" stroke-width="1.5">"#);
        // whiskers
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}"/>"#,
            y(r.max),
            y(r.q3)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}"/>"#,
            y(r.q1),
            y(r.min)
        );
        for v in [r.min, r.max] {
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#,
                cx - half_box / 2.0,
                y(v),
                cx + half_box / 2.0,
                y(v)
            );
        }
        // box and median
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.2"/>"#,
            cx - half_box,
            y(r.q3),
            2.0 * half_box,
            y(r.q1) - y(r.q3)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke-width="2.5"/>"#,
            cx - half_box,
            y(r.median),
            cx + half_box,
            y(r.median)
        );
        // mean with its interval, offset to the right of the box
        let mx = cx + half_box + 10.0;
        if let Some((lo, hi)) = r.ci95 {
            let _ = writeln!(
                s,
                r#"<line x1="{mx:.2}" y1="{:.2}" x2="{mx:.2}" y2="{:.2}"/>"#,
                y(hi),
                y(lo)
            );
        }
        let _ = writeln!(
            s,
            r#"<circle cx="{mx:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
            y(r.mean)
        );
        let _ = writeln!(s, "</g>");
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            HEIGHT - BOTTOM + 20.0,
            r.level.model_label()
        );
        let _ = writeln!(
            s,
            r##"<text x="{cx:.2}" y="{:.2}" text-anchor="middle" fill="#666">n={}</text>"##,
            HEIGHT - BOTTOM + 36.0,
            r.n
        );
    }
    s.push_str("</svg>\n");
    s
}
