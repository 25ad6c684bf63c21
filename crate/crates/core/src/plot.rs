//! Minimal self-contained SVG emission: histogram bars, grouped bar panels,
//! and ternary scatter plots. No external assets, deterministic output
//! (fixed-precision coordinates), suitable for byte-equality checks.

use crate::metrics::Histogram;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;

/// Fixed color cycle shared by all plots.
pub const PALETTE: [&str; 6] = [
    "#4878cf", "#d65f5f", "#59a14f", "#ee8f3b", "#8c69b8", "#6b6b6b",
];

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

fn esc(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Svg {
    body: String,
    width: f64,
    height: f64,
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        Self {
            body: String::new(),
            width,
            height,
        }
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        self.body.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>\n",
            fmt(x),
            fmt(y),
            fmt(w.max(0.0)),
            fmt(h.max(0.0)),
            fill
        ));
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64) {
        self.body.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333333\" stroke-width=\"1\"/>\n",
            fmt(x1),
            fmt(y1),
            fmt(x2),
            fmt(y2)
        ));
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        self.body.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{}\" fill-opacity=\"0.7\"/>\n",
            fmt(x),
            fmt(y),
            fmt(r),
            fill
        ));
    }

    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, content: &str) {
        self.body.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"{}\" font-family=\"sans-serif\" \
             fill=\"#222222\" text-anchor=\"{}\">{}</text>\n",
            fmt(x),
            fmt(y),
            fmt(size),
            anchor,
            esc(content)
        ));
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
             viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"#ffffff\"/>\n{body}</svg>\n",
            w = fmt(self.width),
            h = fmt(self.height),
            body = self.body
        )
    }
}

/// Histogram bar chart; bar heights are proportional to densities.
pub fn histogram_svg(hist: &Histogram, title: &str, x_label: &str) -> String {
    let mut svg = Svg::new(WIDTH, HEIGHT);
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let max_density = hist.densities.iter().cloned().fold(0.0_f64, f64::max).max(1e-12);
    let bar_w = plot_w / hist.bins as f64;
    for (i, &d) in hist.densities.iter().enumerate() {
        let h = d / max_density * plot_h;
        svg.rect(
            MARGIN_L + i as f64 * bar_w,
            MARGIN_T + plot_h - h,
            bar_w * 0.92,
            h,
            PALETTE[0],
        );
    }
    svg.line(MARGIN_L, MARGIN_T + plot_h, MARGIN_L + plot_w, MARGIN_T + plot_h);
    svg.line(MARGIN_L, MARGIN_T, MARGIN_L, MARGIN_T + plot_h);
    svg.text(WIDTH / 2.0, MARGIN_T - 14.0, 15.0, "middle", title);
    svg.text(WIDTH / 2.0, HEIGHT - 12.0, 12.0, "middle", x_label);
    svg.text(MARGIN_L, MARGIN_T - 2.0, 10.0, "end", &format!("{max_density:.4}"));
    // a few x ticks
    for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let value = hist.lo + frac * (hist.hi - hist.lo);
        let x = MARGIN_L + frac * plot_w;
        svg.line(x, MARGIN_T + plot_h, x, MARGIN_T + plot_h + 4.0);
        svg.text(x, MARGIN_T + plot_h + 18.0, 10.0, "middle", &format!("{value:.2}"));
    }
    svg.finish()
}

/// Two-column `center density` table, one row per bin, for gnuplot.
pub fn histogram_gnuplot(hist: &Histogram) -> String {
    let mut out = String::from("# bin_center density\n");
    for i in 0..hist.bins {
        out.push_str(&format!("{} {}\n", hist.bin_center(i), hist.densities[i]));
    }
    out
}

/// One panel per metric: grouped bars over the same corpus labels.
pub fn multi_panel_bars(panels: &[(String, Vec<(String, f64)>)], title: &str) -> String {
    let panel_w = 300.0;
    let width = panel_w * panels.len() as f64 + MARGIN_L;
    let mut svg = Svg::new(width, HEIGHT);
    svg.text(width / 2.0, 20.0, 15.0, "middle", title);
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    for (p, (panel_title, bars)) in panels.iter().enumerate() {
        let x0 = MARGIN_L + p as f64 * panel_w;
        let finite_max = bars
            .iter()
            .map(|(_, v)| if v.is_finite() { *v } else { 0.0 })
            .fold(0.0_f64, f64::max)
            .max(1e-12);
        let bar_w = (panel_w - 60.0) / bars.len() as f64;
        for (i, (label, value)) in bars.iter().enumerate() {
            let v = if value.is_finite() { *value } else { finite_max };
            let h = (v / finite_max * plot_h).max(0.0);
            let x = x0 + i as f64 * bar_w;
            svg.rect(x, MARGIN_T + plot_h - h, bar_w * 0.85, h, PALETTE[i % PALETTE.len()]);
            svg.text(
                x + bar_w * 0.42,
                MARGIN_T + plot_h + 14.0,
                9.0,
                "middle",
                label,
            );
            let shown = if value.is_finite() {
                format!("{value:.3}")
            } else {
                "inf".to_string()
            };
            svg.text(x + bar_w * 0.42, MARGIN_T + plot_h - h - 4.0, 9.0, "middle", &shown);
        }
        svg.line(x0, MARGIN_T + plot_h, x0 + panel_w - 60.0, MARGIN_T + plot_h);
        svg.text(x0 + (panel_w - 60.0) / 2.0, MARGIN_T - 6.0, 12.0, "middle", panel_title);
    }
    svg.finish()
}

/// Ternary scatter: points are (x, y) in simplex coordinates (x in [0,1],
/// y in [0, √3/2]) with a color class per point (argmax language).
pub fn ternary_svg(
    points: &[(f64, f64, usize)],
    labels: &[String],
    title: &str,
) -> String {
    let size = 480.0;
    let mut svg = Svg::new(size, size);
    let margin = 50.0;
    let side = size - 2.0 * margin;
    let h = side * 3.0_f64.sqrt() / 2.0;
    let base_y = (size + h) / 2.0;
    // simplex frame
    let (ax, ay) = (margin, base_y);
    let (bx, by) = (margin + side, base_y);
    let (cx, cy) = (margin + side / 2.0, base_y - h);
    svg.line(ax, ay, bx, by);
    svg.line(bx, by, cx, cy);
    svg.line(cx, cy, ax, ay);
    for (x, y, class) in points {
        let px = margin + x * side;
        let py = base_y - y * side;
        svg.circle(px, py, 2.4, PALETTE[class % PALETTE.len()]);
    }
    // vertex labels in class colors
    let vertices = [(ax - 8.0, ay + 16.0), (bx + 8.0, by + 16.0), (cx, cy - 10.0)];
    for (i, label) in labels.iter().enumerate().take(3) {
        let (x, y) = vertices[i];
        svg.body.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" font-family=\"sans-serif\" \
             fill=\"{}\" text-anchor=\"middle\">{}</text>\n",
            fmt(x),
            fmt(y),
            PALETTE[i % PALETTE.len()],
            esc(label)
        ));
    }
    svg.text(size / 2.0, 24.0, 15.0, "middle", title);
    svg.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::histogram;

    #[test]
    fn histogram_svg_is_self_contained_and_deterministic() {
        let hist = histogram(&[0.1, 0.4, 0.4, 0.9], 4, (0.0, 1.0)).unwrap();
        let a = histogram_svg(&hist, "density", "H");
        let b = histogram_svg(&hist, "density", "H");
        assert_eq!(a, b);
        assert!(a.starts_with("<svg xmlns="));
        assert!(a.trim_end().ends_with("</svg>"));
        assert!(!a.contains("http://") || a.matches("http://").count() == 1); // only the xmlns
        assert!(!a.contains("href"));
    }

    #[test]
    fn bar_heights_proportional_to_density() {
        let hist = histogram(&[0.1, 0.1, 0.9], 2, (0.0, 1.0)).unwrap();
        let svg = histogram_svg(&hist, "t", "x");
        // two bars: first density double the second -> heights 330 and 165
        let heights: Vec<f64> = svg
            .lines()
            .filter(|l| l.starts_with("<rect") && l.contains(PALETTE[0]))
            .map(|l| {
                let key = "height=\"";
                let start = l.find(key).unwrap() + key.len();
                let end = l[start..].find('"').unwrap() + start;
                l[start..end].parse::<f64>().unwrap()
            })
            .collect();
        assert_eq!(heights.len(), 2);
        assert!((heights[0] - 2.0 * heights[1]).abs() < 1e-6);
    }

    #[test]
    fn gnuplot_table_lists_bin_centers() {
        let hist = histogram(&[0.25, 0.75], 2, (0.0, 1.0)).unwrap();
        let table = histogram_gnuplot(&hist);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0.25 "));
        assert!(lines[2].starts_with("0.75 "));
    }

    #[test]
    fn ternary_escapes_labels() {
        let svg = ternary_svg(&[(0.5, 0.28, 0)], &["a<b".into(), "c".into(), "d".into()], "t");
        assert!(svg.contains("a&lt;b"));
    }
}
