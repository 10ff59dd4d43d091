//! Mode timelines as a plain SVG document, one panel per user.

use std::fmt::Write;

const WIDTH: f64 = 860.0;
const LEFT: f64 = 110.0;
const RIGHT: f64 = 20.0;
const PANEL: f64 = 120.0;
const PAD: f64 = 24.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Step plot of mode index against step index for each `(user, modes)`.
pub fn timelines(panels: &[(&str, &[usize])], mode_names: &[String]) -> String {
    let l = mode_names.len().max(1);
    let height = PAD + panels.len() as f64 * (PANEL + PAD);
    let plot_w = WIDTH - LEFT - RIGHT;
    let inner = PANEL - 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (p, (user, modes)) in panels.iter().enumerate() {
        let top = PAD + p as f64 * (PANEL + PAD);
        let y_of = |k: usize| -> f64 {
            if l == 1 {
                top + 10.0 + inner / 2.0
            } else {
                top + 10.0 + inner * (1.0 - k as f64 / (l - 1) as f64)
            }
        };
        let n = modes.len().max(1) as f64;
        let x_of = |t: usize| LEFT + plot_w * t as f64 / n;
        let _ = writeln!(
            s,
            r##"<rect x="{LEFT}" y="{top}" width="{plot_w}" height="{PANEL}" fill="none" stroke="#999"/>"##
        );
        let _ = writeln!(
            s,
            r#"<text x="{LEFT}" y="{:.2}" font-weight="bold">{}</text>"#,
            top - 6.0,
            escape(user)
        );
        for (k, name) in mode_names.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end" fill="{}">{}</text>"#,
                LEFT - 6.0,
                y_of(k) + 4.0,
                COLORS[k % COLORS.len()],
                escape(name)
            );
        }
        if modes.is_empty() {
            continue;
        }
        let mut d = format!("M{:.2},{:.2}", x_of(0), y_of(modes[0]));
        for t in 1..modes.len() {
            if modes[t] != modes[t - 1] {
                let _ = write!(d, " H{:.2} V{:.2}", x_of(t), y_of(modes[t]));
            }
        }
        let _ = write!(d, " H{:.2}", x_of(modes.len()));
        let _ = writeln!(s, r#"<path d="{d}" fill="none" stroke="black" stroke-width="1.5"/>"#);
        let _ = writeln!(
            s,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="end" fill="#555">{} steps</text>"##,
            WIDTH - RIGHT,
            top + PANEL + 14.0,
            modes.len()
        );
    }
    s.push_str("</svg>\n");
    s
}
