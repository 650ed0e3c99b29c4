//! Minimal SVG scatter plots for the report visualisations.

pub struct ScatterSpec<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    /// Free-text hint rendered under the title ("lower-left is better", ...).
    pub hint: &'a str,
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 70.0;

/// Labeled scatter; axes auto-scale with 10% padding.
pub fn scatter_svg(spec: &ScatterSpec<'_>, points: &[(String, f64, f64)]) -> String {
    assert!(!points.is_empty(), "scatter needs at least one point");
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, x, y) in points {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    let pad = |lo: &mut f64, hi: &mut f64| {
        let span = (*hi - *lo).abs();
        let p = if span == 0.0 { lo.abs().max(1.0) * 0.1 } else { span * 0.1 };
        *lo -= p;
        *hi += p;
    };
    pad(&mut x0, &mut x1);
    pad(&mut y0, &mut y1);

    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\">\n"
    ));
    s.push_str(&format!(
        "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n\
         <text x=\"{}\" y=\"46\" text-anchor=\"middle\" font-size=\"11\" fill=\"#666\">{}</text>\n",
        W / 2.0,
        spec.title,
        W / 2.0,
        spec.hint
    ));
    // axes
    s.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN,
        t = MARGIN
    ));
    // axis labels and extrema ticks
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
        W / 2.0,
        H - 18.0,
        spec.x_label
    ));
    s.push_str(&format!(
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\" \
         transform=\"rotate(-90 18 {})\">{}</text>\n",
        H / 2.0,
        H / 2.0,
        spec.y_label
    ));
    for (v, x, y, anchor) in [
        (x0, MARGIN, H - MARGIN + 18.0, "middle"),
        (x1, W - MARGIN, H - MARGIN + 18.0, "middle"),
    ] {
        s.push_str(&format!(
            "<text x=\"{x}\" y=\"{y}\" text-anchor=\"{anchor}\" font-size=\"10\">{v:.3}</text>\n"
        ));
    }
    for (v, y) in [(y0, H - MARGIN), (y1, MARGIN)] {
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"10\">{v:.3}</text>\n",
            MARGIN - 6.0,
            y + 4.0
        ));
    }
    // points
    let palette = ["#2a9d8f", "#e76f51", "#264653", "#f4a261", "#8338ec", "#006d77"];
    for (i, (label, x, y)) in points.iter().enumerate() {
        let color = palette[i % palette.len()];
        let (px, py) = (sx(*x), sy(*y));
        s.push_str(&format!(
            "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"5\" fill=\"{color}\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\">{label}</text>\n",
            px + 8.0,
            py - 6.0
        ));
    }
    s.push_str("</svg>\n");
    s
}
