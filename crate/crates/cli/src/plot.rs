//! Static SVG renderings of attention weights.

use std::fmt::Write;

const BAR_W: f64 = 28.0;
const CHART_H: f64 = 160.0;
const MARGIN: f64 = 36.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Vertical bars, one per weight, scaled to a fixed [0, 1] axis.
pub fn bar_chart(title: &str, labels: &[String], weights: &[f64]) -> String {
    let w = 2.0 * MARGIN + BAR_W * weights.len().max(1) as f64;
    let h = CHART_H + 2.0 * MARGIN;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(svg, r#"<text x="{MARGIN}" y="16" font-size="12">{}</text>"#, escape(title));
    let base = MARGIN + CHART_H;
    let _ = writeln!(
        svg,
        r#"<line x1="{MARGIN}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#,
        w - MARGIN
    );
    for (i, &p) in weights.iter().enumerate() {
        let bh = p.clamp(0.0, 1.0) * CHART_H;
        let x = MARGIN + BAR_W * i as f64 + 3.0;
        let _ = writeln!(
            svg,
            r##"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{bh:.1}" fill="#3a6ea5"><title>{p:.4}</title></rect>"##,
            base - bh,
            BAR_W - 6.0
        );
        let label = labels.get(i).map_or_else(|| i.to_string(), |s| escape(s));
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{label}</text>"#,
            x + (BAR_W - 6.0) / 2.0,
            base + 12.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Grid of cells shaded by weight; rows are decoding steps.
pub fn heatmap(title: &str, row_labels: &[String], col_labels: &[String], rows: &[Vec<f64>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0).max(1);
    let cell = 22.0;
    let left = 2.0 * MARGIN;
    let w = left + MARGIN + cell * cols as f64;
    let h = 2.0 * MARGIN + cell * rows.len().max(1) as f64 + 14.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(svg, r#"<text x="{MARGIN}" y="16" font-size="12">{}</text>"#, escape(title));
    for (r, row) in rows.iter().enumerate() {
        let y = MARGIN + cell * r as f64;
        let label = row_labels.get(r).map_or_else(|| r.to_string(), |s| escape(s));
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{label}</text>"#,
            left - 4.0,
            y + cell * 0.65
        );
        for (c, &p) in row.iter().enumerate() {
            let shade = (255.0 * (1.0 - p.clamp(0.0, 1.0))).round() as u8;
            let _ = writeln!(
                svg,
                r#"<rect x="{:.1}" y="{y:.1}" width="{cell}" height="{cell}" fill="rgb({shade},{shade},255)" stroke="white"><title>{p:.4}</title></rect>"#,
                left + cell * c as f64
            );
        }
    }
    let y = MARGIN + cell * rows.len() as f64 + 12.0;
    for c in 0..cols {
        let label = col_labels.get(c).map_or_else(|| c.to_string(), |s| escape(s));
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{y:.1}" text-anchor="middle">{label}</text>"#,
            left + cell * c as f64 + cell / 2.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}
