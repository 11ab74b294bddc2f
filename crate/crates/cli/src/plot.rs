//! ROC curve as a standalone SVG document.

use std::fmt::Write as _;

use bcosfire::eval::RocCurve;

const SIZE: f64 = 400.0;
const MARGIN: f64 = 50.0;

fn px(fpr: f64, tpr: f64) -> (f64, f64) {
    (MARGIN + fpr * SIZE, MARGIN + (1.0 - tpr) * SIZE)
}

/// Curve in TPR-vs-FPR axes, with a square on the point at `marked`.
pub fn roc_svg(curve: &RocCurve, marked: Option<f64>, title: &str) -> String {
    let full = SIZE + 2.0 * MARGIN;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{full}" height="{full}" viewBox="0 0 {full} {full}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{full}" height="{full}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r##"<line x1="{MARGIN}" y1="{}" x2="{}" y2="{MARGIN}" stroke="#bbbbbb" stroke-dasharray="4 4"/>"##,
        MARGIN + SIZE,
        MARGIN + SIZE
    );
    for k in 0..=5 {
        let v = k as f64 / 5.0;
        let (x, _) = px(v, 0.0);
        let (_, y) = px(0.0, v);
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" font-size="11" text-anchor="middle">{v:.1}</text>"#,
            MARGIN + SIZE + 16.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{v:.1}</text>"#,
            MARGIN - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">False positive rate</text>"#,
        MARGIN + SIZE / 2.0,
        MARGIN + SIZE + 36.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" font-size="13" text-anchor="middle" transform="rotate(-90 14 {:.1})">True positive rate</text>"#,
        MARGIN + SIZE / 2.0,
        MARGIN + SIZE / 2.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="30" font-size="14" text-anchor="middle">{}</text>"#,
        MARGIN + SIZE / 2.0,
        escape(title)
    );

    let mut pts: Vec<(f64, f64)> = curve.points().iter().map(|p| (p.fpr, p.tpr)).collect();
    pts.push((0.0, 0.0));
    pts.push((1.0, 1.0));
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let path: Vec<String> = pts
        .iter()
        .map(|&(f, t)| {
            let (x, y) = px(f, t);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    let _ = writeln!(
        s,
        r##"<polyline class="roc" fill="none" stroke="#1f4e99" stroke-width="2" points="{}"/>"##,
        path.join(" ")
    );

    if let Some(p) = marked.and_then(|t| curve.at_threshold(t)) {
        let (x, y) = px(p.fpr, p.tpr);
        let _ = writeln!(
            s,
            r##"<rect class="chosen" x="{:.2}" y="{:.2}" width="10" height="10" fill="none" stroke="#c0392b" stroke-width="2"/>"##,
            x - 5.0,
            y - 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="12">t = {}</text>"#,
            x + 9.0,
            y + 16.0,
            p.threshold
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use bcosfire::eval::RocPoint;

    #[test]
    fn marks_the_chosen_point() {
        let curve = RocCurve::new(vec![
            RocPoint { threshold: 0.0, fpr: 1.0, tpr: 1.0 },
            RocPoint { threshold: 35.0, fpr: 0.25, tpr: 0.75 },
        ])
        .unwrap();
        let svg = roc_svg(&curve, Some(35.0), "a < b");
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains(r#"class="chosen""#));
        assert!(svg.contains("t = 35"));
        assert!(svg.contains("a &lt; b"));
        assert!(!roc_svg(&curve, Some(7.0), "").contains("chosen"));
    }
}
