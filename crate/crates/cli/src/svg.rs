//! Minimal SVG output: line plots, a heatmap embedded as a PNG image, and
//! point markers. Every document carries the provenance record in a
//! `<metadata>` element.

use std::fmt::Write as _;

use base64::Engine as _;
use obslab_core::io::Provenance;
use obslab_core::{NodalField, Vec3};

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 60.0;

pub struct Series {
    pub name: String,
    pub color: &'static str,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

impl Series {
    pub fn new(name: impl Into<String>, color: &'static str, points: Vec<(f64, f64)>) -> Self {
        Self { name: name.into(), color, points, dashed: false }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(prov: &Provenance, title: &str) -> String {
    let meta = serde_json::to_string(prov).expect("provenance serializes");
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <metadata>{}</metadata>\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        escape(&meta),
        W / 2.0,
        escape(title)
    )
}

/// Linear map `[a, b] -> [c, d]`, padding degenerate ranges.
struct Axis {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, c: f64, d: f64) -> Self {
        let (lo, hi) = if hi - lo > 1e-300 * lo.abs().max(1.0) && hi > lo {
            (lo, hi)
        } else {
            let pad = 0.5 * lo.abs().max(1e-12);
            (lo - pad, hi + pad)
        };
        Self { a: lo, b: hi, c, d }
    }

    fn map(&self, v: f64) -> f64 {
        self.c + (v - self.a) / (self.b - self.a) * (self.d - self.c)
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn frame(out: &mut String, xa: &Axis, ya: &Axis, xlabel: &str, ylabel: &str) {
    let (x0, x1, y0, y1) = (MARGIN, W - MARGIN, H - MARGIN, MARGIN);
    let _ = writeln!(
        out,
        "<rect x=\"{x0}\" y=\"{y1}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        x1 - x0,
        y0 - y1
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let xv = xa.a + t * (xa.b - xa.a);
        let yv = ya.a + t * (ya.b - ya.a);
        let px = xa.map(xv);
        let py = ya.map(yv);
        let _ = writeln!(
            out,
            "<text x=\"{px:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            y0 + 16.0,
            tick(xv)
        );
        let _ = writeln!(out, "<text x=\"{:.1}\" y=\"{py:.1}\" text-anchor=\"end\">{}</text>", x0 - 4.0, tick(yv));
    }
    let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>", W / 2.0, H - 16.0, escape(xlabel));
    let _ = writeln!(
        out,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>",
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
}

fn tick(v: f64) -> String {
    if v == 0.0 || (1e-2..1e4).contains(&v.abs()) {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

/// Line plot of one or more series.
pub fn line_plot(prov: &Provenance, title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let (xlo, xhi) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (ylo, yhi) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let (xlo, xhi) = if xlo.is_finite() { (xlo, xhi) } else { (0.0, 1.0) };
    let (ylo, yhi) = if ylo.is_finite() { (ylo, yhi) } else { (0.0, 1.0) };
    let pad = 0.05 * (yhi - ylo);
    let xa = Axis::new(xlo, xhi, MARGIN, W - MARGIN);
    let ya = Axis::new(ylo - pad, yhi + pad, H - MARGIN, MARGIN);
    let mut out = header(prov, title);
    frame(&mut out, &xa, &ya, xlabel, ylabel);
    for (k, s) in series.iter().enumerate() {
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|p| format!("{:.2},{:.2}", xa.map(p.0), ya.map(p.1)))
            .collect();
        let dash = if s.dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"{dash}/>",
            pts.join(" "),
            s.color
        );
        for p in &pts {
            let (x, y) = p.split_once(',').expect("formatted pair");
            let _ = writeln!(out, "<circle cx=\"{x}\" cy=\"{y}\" r=\"2.5\" fill=\"{}\"/>", s.color);
        }
        let ly = MARGIN + 16.0 + 16.0 * k as f64;
        let _ = writeln!(
            out,
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{}\" stroke-width=\"2\"{dash}/>\
             <text x=\"{}\" y=\"{}\">{}</text>",
            W - MARGIN - 150.0,
            W - MARGIN - 126.0,
            s.color,
            W - MARGIN - 120.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Piecewise-linear colormap from dark blue through teal to yellow.
fn color(t: f64) -> [u8; 3] {
    const STOPS: [[f64; 3]; 4] = [[68.0, 1.0, 84.0], [49.0, 104.0, 142.0], [53.0, 183.0, 121.0], [253.0, 231.0, 37.0]];
    let t = t.clamp(0.0, 1.0) * 3.0;
    let k = (t.floor() as usize).min(2);
    let s = t - k as f64;
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (STOPS[k][c] + s * (STOPS[k + 1][c] - STOPS[k][c])).round() as u8;
    }
    out
}

fn png_data_uri(width: usize, height: usize, rgb: &[u8]) -> String {
    let mut bytes = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut bytes, width as u32, height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().expect("png header");
        w.write_image_data(rgb).expect("png data");
    }
    format!("data:image/png;base64,{}", base64::engine::general_purpose::STANDARD.encode(bytes))
}

/// Heatmap of `u` with free-boundary points overlaid. 1D fields are drawn
/// as a line plot, 3D fields by their middle `x3` slice.
pub fn heatmap(prov: &Provenance, title: &str, u: &NodalField, gamma: &[Vec3]) -> String {
    let grid = u.grid();
    if grid.dim() == 1 {
        let pts = (0..grid.len()).map(|i| (grid.coord(i)[0], u.values()[i])).collect();
        let mut s = line_plot(prov, title, "x", "u", &[Series::new("u", "#1f77b4", pts)]);
        let zeros: String = gamma
            .iter()
            .map(|p| format!("<text x=\"{:.1}\" y=\"{:.1}\" fill=\"red\" text-anchor=\"middle\">|</text>\n", {
                let (lo, hi) = (grid.domain().lower(0), grid.domain().upper(0));
                MARGIN + (p[0] - lo) / (hi - lo) * (W - 2.0 * MARGIN)
            }, H - MARGIN - 4.0))
            .collect();
        s.truncate(s.len() - "</svg>\n".len());
        s.push_str(&zeros);
        s.push_str("</svg>\n");
        return s;
    }
    let (nx, ny) = (grid.count(0), grid.count(1));
    let kz = if grid.dim() == 3 { grid.count(2) / 2 } else { 0 };
    let step = nx.max(ny).div_ceil(512).max(1);
    let (px, py) = (nx.div_ceil(step), ny.div_ceil(step));
    let umax = u.values().iter().cloned().fold(0.0f64, f64::max).max(1e-300);
    let mut rgb = Vec::with_capacity(3 * px * py);
    for jy in (0..py).rev() {
        for jx in 0..px {
            let v = u.values()[grid.index([jx * step, jy * step, kz])];
            rgb.extend_from_slice(&if v <= 0.0 { [235, 235, 235] } else { color(v / umax) });
        }
    }
    let d = grid.domain();
    let (lx, ux, ly, uy) = (d.lower(0), d.upper(0), d.lower(1), d.upper(1));
    let scale = ((W - 2.0 * MARGIN) / (ux - lx)).min((H - 2.0 * MARGIN) / (uy - ly));
    let (iw, ih) = ((ux - lx) * scale, (uy - ly) * scale);
    let (ox, oy) = (MARGIN, MARGIN);
    let mut out = header(prov, title);
    let _ = writeln!(
        out,
        "<image x=\"{ox}\" y=\"{oy}\" width=\"{iw:.1}\" height=\"{ih:.1}\" preserveAspectRatio=\"none\" \
         style=\"image-rendering:pixelated\" href=\"{}\"/>",
        png_data_uri(px, py, &rgb)
    );
    let _ = writeln!(out, "<rect x=\"{ox}\" y=\"{oy}\" width=\"{iw:.1}\" height=\"{ih:.1}\" fill=\"none\" stroke=\"black\"/>");
    for p in gamma {
        if grid.dim() == 3 && (p[2] - grid.coord(grid.index([0, 0, kz]))[2]).abs() > grid.h_max() {
            continue;
        }
        let _ = writeln!(
            out,
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"1.2\" fill=\"red\"/>",
            ox + (p[0] - lx) * scale,
            oy + (uy - p[1]) * scale
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\">max u = {}</text>",
        ox + iw + 8.0,
        oy + 12.0,
        tick(umax)
    );
    out.push_str("</svg>\n");
    out
}

/// Labeled points (e.g. regular/singular free-boundary points) in the
/// `x1, x2` plane. `labels` pairs a legend entry with a color.
pub fn point_map(
    prov: &Provenance,
    title: &str,
    lower: [f64; 2],
    upper: [f64; 2],
    points: &[(Vec3, usize)],
    labels: &[(&str, &str)],
) -> String {
    let scale = ((W - 2.0 * MARGIN) / (upper[0] - lower[0])).min((H - 2.0 * MARGIN) / (upper[1] - lower[1]));
    let mut out = header(prov, title);
    let _ = writeln!(
        out,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\"/>",
        (upper[0] - lower[0]) * scale,
        (upper[1] - lower[1]) * scale
    );
    for (p, k) in points {
        let _ = writeln!(
            out,
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{}\"/>",
            MARGIN + (p[0] - lower[0]) * scale,
            MARGIN + (upper[1] - p[1]) * scale,
            labels[*k].1
        );
    }
    for (k, (name, c)) in labels.iter().enumerate() {
        let y = MARGIN + 12.0 + 16.0 * k as f64;
        let _ = writeln!(
            out,
            "<circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"{c}\"/><text x=\"{}\" y=\"{}\">{}</text>",
            W - 110.0,
            y,
            W - 100.0,
            y + 4.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use obslab_core::{Domain, Grid};

    fn prov(g: &Grid) -> Provenance {
        Provenance::new("h", "t", g, 1e-8, 0)
    }

    #[test]
    fn heatmap_embeds_png() {
        let g = Grid::new(Domain::centered_cube(2, 1.0).unwrap(), &[17, 17]).unwrap();
        let u = NodalField::from_fn(g.clone(), |x| x.norm_squared());
        let s = heatmap(&prov(&g), "u", &u, &[Vec3::zeros()]);
        assert!(s.starts_with("<svg"));
        assert!(s.contains("data:image/png;base64,"));
        assert!(s.contains("<metadata>{"));
        assert!(s.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn line_plot_handles_flat_series() {
        let g = Grid::new(Domain::centered_cube(1, 1.0).unwrap(), &[5]).unwrap();
        let s = line_plot(&prov(&g), "Phi", "r", "Phi", &[Series::new("a<b", "red", vec![(0.1, 1.0), (0.2, 1.0)])]);
        assert!(s.contains("a&lt;b"));
        assert!(!s.contains("NaN"));
    }
}
