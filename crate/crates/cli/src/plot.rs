//! Static SVG scatter of a Toda scan: filled dots pass, crosses fail,
//! grey rings mark points that could not be classified.

use isomono::tt::ScanRecord;
use std::fmt::Write;

const W: f64 = 480.0;
const PAD: f64 = 48.0;

pub fn scatter_svg(recs: &[ScanRecord]) -> String {
    let span = |f: fn(&ScanRecord) -> f64| {
        let lo = recs.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = recs.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if lo.is_finite() && hi > lo {
            (lo, hi)
        } else if lo.is_finite() {
            (lo - 1.0, lo + 1.0)
        } else {
            (-1.0, 1.0)
        }
    };
    let (g0, g1) = span(|r| r.gamma);
    let (d0, d1) = span(|r| r.delta);
    let x = |g: f64| PAD + (g - g0) / (g1 - g0) * (W - 2.0 * PAD);
    let y = |d: f64| W - PAD - (d - d0) / (d1 - d0) * (W - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{W}" viewBox="0 0 {W} {W}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{w}" height="{w}" fill="none" stroke="black"/>"#,
        w = W - 2.0 * PAD
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">gamma</text>"#, W / 2.0, W - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" font-size="14" transform="rotate(-90 14 {})">delta</text>"#,
        W / 2.0,
        W / 2.0
    );
    for (v, px) in [(g0, x(g0)), (g1, x(g1))] {
        let _ = writeln!(s, r#"<text x="{px:.1}" y="{}" text-anchor="middle" font-size="11">{v}</text>"#, W - PAD + 16.0);
    }
    for (v, py) in [(d0, y(d0)), (d1, y(d1))] {
        let _ = writeln!(s, r#"<text x="{}" y="{py:.1}" text-anchor="end" font-size="11">{v}</text>"#, PAD - 6.0);
    }
    for r in recs {
        let (px, py) = (x(r.gamma), y(r.delta));
        if r.error.is_some() {
            let _ = writeln!(s, r#"<circle cx="{px:.1}" cy="{py:.1}" r="3" fill="none" stroke="grey"/>"#);
        } else if r.verdict {
            let _ = writeln!(s, r#"<circle cx="{px:.1}" cy="{py:.1}" r="3" fill="steelblue"/>"#);
        } else {
            let _ = writeln!(
                s,
                r#"<path d="M{a:.1},{b:.1}L{c:.1},{d:.1}M{a:.1},{d:.1}L{c:.1},{b:.1}" stroke="crimson" stroke-width="1.5"/>"#,
                a = px - 4.0,
                b = py - 4.0,
                c = px + 4.0,
                d = py + 4.0
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
