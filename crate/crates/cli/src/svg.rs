//! Minimal line plot: one polyline per attribution curve.

use std::fmt::Write;

use survint::InteractionExplanation;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 450.0;
const MARGIN: f64 = 50.0;
const LEGEND: f64 = 120.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

pub fn render(expl: &InteractionExplanation, title: &str) -> String {
    let ts = expl.grid().points();
    let (t0, t1) = (ts[0], ts[ts.len() - 1]);
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    for v in expl.values().values().flatten() {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let plot_w = WIDTH - 2.0 * MARGIN - LEGEND;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let x = |t: f64| MARGIN + (t - t0) / (t1 - t0).max(f64::MIN_POSITIVE) * plot_w;
    let y = |v: f64| MARGIN + (hi - v) / (hi - lo) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="{:.1}">{}</text>"#, MARGIN / 2.0, escape(title));
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{plot_w:.1}" height="{plot_h:.1}" fill="none" stroke="#999"/>"##
    );
    if lo < 0.0 && hi > 0.0 {
        let _ = writeln!(
            s,
            r##"<line x1="{MARGIN}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}" stroke="#ccc" stroke-dasharray="4 3"/>"##,
            y(0.0),
            MARGIN + plot_w
        );
    }
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="{:.1}">t = {t0}</text>"#, HEIGHT - MARGIN / 2.0);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="end">t = {t1}</text>"#,
        MARGIN + plot_w,
        HEIGHT - MARGIN / 2.0
    );
    let _ = writeln!(s, r#"<text x="4" y="{:.1}">{hi:.3}</text>"#, MARGIN + 4.0);
    let _ = writeln!(s, r#"<text x="4" y="{:.1}">{lo:.3}</text>"#, MARGIN + plot_h);

    for (i, (c, curve)) in expl.values().iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = ts
            .iter()
            .zip(curve)
            .map(|(&t, &v)| format!("{:.2},{:.2}", x(t), y(v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"><title>{{{c}}}</title></polyline>"#,
            pts.join(" ")
        );
        let ly = MARGIN + 16.0 * i as f64;
        let lx = WIDTH - LEGEND - MARGIN / 2.0 + 10.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{{{c}}}</text>"#,
            lx + 18.0,
            lx + 24.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
