use std::fmt::Write as _;

use crate::graph::{BoxCovering, CyclicDecomposition};
use crate::periodic::{Crossing, ManifoldCurve, Stability};
use crate::surgery::{PerturbationDomain, SurgeryResult};
use crate::system::Domain;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 640.0;
const STRIP: f64 = 120.0;
const MARGIN: f64 = 20.0;
/// Smallest drawn radius, so that balls far below the pixel size stay visible.
const MIN_PIXELS: f64 = 2.0;

/// Fill colour of cyclic class `k` of recurrent class `c` with period `period`.
fn class_colour(c: usize, k: usize, period: usize) -> String {
    let hue = 360.0 * k as f64 / period.max(1) as f64 + 23.0 * c as f64;
    format!("hsl({:.0},{}%,{}%)", hue % 360.0, 55 + 10 * (c % 3), 60 - 8 * (c % 2))
}

/// Affine map from a box in data space to the drawing area.
struct Canvas {
    lo: [f64; 2],
    hi: [f64; 2],
    width: f64,
    height: f64,
    body: String,
}

impl Canvas {
    fn new(lo: [f64; 2], hi: [f64; 2], width: f64, height: f64) -> Self {
        Self { lo, hi, width, height, body: String::new() }
    }

    fn for_domain(domain: &Domain) -> Self {
        let a = &domain.axes;
        if a.len() == 1 {
            Self::new([a[0].lo, 0.0], [a[0].hi, 1.0], WIDTH, STRIP)
        } else {
            Self::new([a[0].lo, a[1].lo], [a[0].hi, a[1].hi], WIDTH, HEIGHT)
        }
    }

    fn scale(&self) -> [f64; 2] {
        [
            (self.width - 2.0 * MARGIN) / (self.hi[0] - self.lo[0]),
            (self.height - 2.0 * MARGIN) / (self.hi[1] - self.lo[1]),
        ]
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        let s = self.scale();
        (MARGIN + (x - self.lo[0]) * s[0], self.height - MARGIN - (y - self.lo[1]) * s[1])
    }

    fn rect(&mut self, lo: [f64; 2], hi: [f64; 2], style: &str) {
        let (x0, y1) = self.px(lo[0], lo[1]);
        let (x1, y0) = self.px(hi[0], hi[1]);
        let _ = writeln!(
            self.body,
            r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" {style}/>"#,
            (x1 - x0).max(0.5),
            (y1 - y0).max(0.5)
        );
    }

    fn circle(&mut self, c: [f64; 2], r: f64, style: &str) {
        let (x, y) = self.px(c[0], c[1]);
        let r = (r * self.scale()[0]).max(MIN_PIXELS);
        let _ = writeln!(self.body, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r:.2}" {style}/>"#);
    }

    /// Polyline in data space, broken where consecutive points are more than `jump` apart.
    fn polyline(&mut self, pts: &[[f64; 2]], jump: f64, style: &str) {
        let mut run: Vec<(f64, f64)> = Vec::new();
        let mut prev: Option<[f64; 2]> = None;
        for p in pts {
            if let Some(q) = prev {
                if (p[0] - q[0]).abs() > jump || (p[1] - q[1]).abs() > jump {
                    self.flush(&mut run, style);
                }
            }
            run.push(self.px(p[0], p[1]));
            prev = Some(*p);
        }
        self.flush(&mut run, style);
    }

    fn flush(&mut self, run: &mut Vec<(f64, f64)>, style: &str) {
        if run.len() >= 2 {
            let pts: Vec<String> = run.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(self.body, r#"<polyline points="{}" fill="none" {style}/>"#, pts.join(" "));
        }
        run.clear();
    }

    fn text(&mut self, x: f64, y: f64, s: &str) {
        let _ = writeln!(self.body, r#"<text x="{x:.1}" y="{y:.1}" font-size="11" font-family="sans-serif">{s}</text>"#);
    }

    fn finish(self, title: &str) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<title>{title}</title>\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

fn point2(x: &[f64]) -> [f64; 2] {
    [x[0], x.get(1).copied().unwrap_or(0.5)]
}

/// Boxes of a covering in one or two dimensions, coloured by cyclic class.
pub fn covering_svg(covering: &BoxCovering, decompositions: &[CyclicDecomposition]) -> String {
    let mut canvas = Canvas::for_domain(&covering.domain);
    let mut colour = vec![None; covering.len()];
    for (c, dec) in decompositions.iter().enumerate() {
        for (k, part) in dec.classes.iter().enumerate() {
            for &u in part {
                colour[u] = Some(class_colour(c, k, dec.period));
            }
        }
    }
    for (u, cell) in covering.cells.iter().enumerate() {
        let fill = colour[u].clone().unwrap_or_else(|| "#eeeeee".into());
        canvas.rect(point_lo(&cell.lo), point_hi(&cell.hi), &format!(r##"fill="{fill}" stroke="#ffffff" stroke-width="0.3""##));
    }
    canvas.finish("covering coloured by cyclic class")
}

fn point_lo(x: &[f64]) -> [f64; 2] {
    [x[0], x.get(1).copied().unwrap_or(0.0)]
}

fn point_hi(x: &[f64]) -> [f64; 2] {
    [x[0], x.get(1).copied().unwrap_or(1.0)]
}

/// Non-spatial view: one row per recurrent class, one block per cyclic class, widths by size.
pub fn classes_svg(decompositions: &[CyclicDecomposition]) -> String {
    let row = 36.0;
    let height = MARGIN * 2.0 + row * decompositions.len().max(1) as f64;
    let mut canvas = Canvas::new([0.0, 0.0], [1.0, 1.0], WIDTH, height);
    for (c, dec) in decompositions.iter().enumerate() {
        let y = MARGIN + row * c as f64;
        let total: usize = dec.classes.iter().map(Vec::len).sum();
        let usable = WIDTH - 2.0 * MARGIN - 120.0;
        let mut x = MARGIN + 120.0;
        canvas.text(MARGIN, y + 18.0, &format!("class {c}: l = {}", dec.period));
        for (k, part) in dec.classes.iter().enumerate() {
            let w = usable * part.len() as f64 / total.max(1) as f64;
            let _ = writeln!(
                canvas.body,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{:.2}" fill="{}" stroke="white"/>"#,
                row - 8.0,
                class_colour(c, k, dec.period)
            );
            x += w;
        }
    }
    canvas.finish("cyclic classes per recurrent class")
}

/// Manifold branches of a planar map with crossing markers.
pub fn manifolds_svg(domain: &Domain, curves: &[ManifoldCurve], crossings: &[Crossing], anchors: &[Vec<f64>]) -> String {
    let mut canvas = Canvas::for_domain(domain);
    let jump = 0.5 * domain.axes.iter().map(|a| a.width()).fold(f64::INFINITY, f64::min);
    for c in curves {
        let colour = match c.stability {
            Stability::Unstable => "#c0392b",
            Stability::Stable => "#2c6fbb",
        };
        let pts: Vec<[f64; 2]> = c.points.iter().map(|p| point2(p)).collect();
        canvas.polyline(&pts, jump, &format!(r#"stroke="{colour}" stroke-width="0.8""#));
    }
    for x in crossings {
        let style = if x.transverse { r##"class="crossing" fill="#222222""## } else { r##"class="crossing" fill="none" stroke="#e67e22""## };
        canvas.circle(point2(&x.point), 0.0, style);
    }
    for a in anchors {
        let (x, y) = canvas.px(a[0], a[1]);
        let _ = writeln!(canvas.body, r#"<rect x="{:.2}" y="{:.2}" width="6" height="6" fill="black"/>"#, x - 3.0, y - 3.0);
    }
    canvas.finish("unstable (red) and stable (blue) manifolds with crossings")
}

/// Extent of the charts of a domain, widened by 5% on the first axis.
fn tile_extent(dom: &PerturbationDomain) -> ([f64; 2], [f64; 2]) {
    let d = dom.dim();
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for c in &dom.charts {
        for j in 0..d.min(2) {
            lo[j] = lo[j].min(c.lo[j]);
            hi[j] = hi[j].max(c.hi[j]);
        }
    }
    if d == 1 {
        lo[1] = 0.0;
        hi[1] = 1.0;
    }
    let pad = 0.05 * (hi[0] - lo[0]);
    lo[0] -= pad;
    hi[0] += pad;
    (lo, hi)
}

fn tile_box(dom: &PerturbationDomain, t: usize, band: (f64, f64)) -> ([f64; 2], [f64; 2]) {
    let tile = &dom.tiles[t];
    let h = 0.5 * tile.edge;
    if dom.dim() == 1 {
        ([tile.center[0] - h, band.0], [tile.center[0] + h, band.1])
    } else {
        ([tile.center[0] - h, tile.center[1] - h], [tile.center[0] + h, tile.center[1] + h])
    }
}

/// Tiles with their adjacency graph drawn between centres.
pub fn tiles_svg(dom: &PerturbationDomain, adjacency: &[Vec<usize>]) -> String {
    let (lo, hi) = tile_extent(dom);
    let height = if dom.dim() == 1 { STRIP } else { HEIGHT };
    let mut canvas = Canvas::new(lo, hi, WIDTH, height);
    for t in 0..dom.tiles.len() {
        let (a, b) = tile_box(dom, t, (0.3, 0.7));
        canvas.rect(a, b, r##"fill="#f4f1e8" stroke="#555555" stroke-width="0.6""##);
    }
    let centre = |t: usize| point2(&dom.tiles[t].center);
    for (t, adj) in adjacency.iter().enumerate() {
        for &u in adj.iter().filter(|&&u| u > t) {
            let (a, b) = (centre(t), centre(u));
            if dom.dim() == 1 {
                let mid = [0.5 * (a[0] + b[0]), 0.8];
                canvas.polyline(&[[a[0], 0.5], mid, [b[0], 0.5]], f64::INFINITY, r##"stroke="#8e44ad" stroke-width="0.8""##);
            } else {
                canvas.polyline(&[a, b], f64::INFINITY, r##"stroke="#8e44ad" stroke-width="0.8""##);
            }
        }
    }
    canvas.finish("tiles and adjacency")
}

/// Before/after view of a surgery: input points above, final balls below (d = 1), or
/// tiles with input points and final balls overlaid (d = 2).
pub fn surgery_svg(domain: &Domain, dom: &PerturbationDomain, input: &[Vec<f64>], result: &SurgeryResult) -> String {
    let (lo, hi) = tile_extent(dom);
    let one = dom.dim() == 1;
    let height = if one { 2.0 * STRIP } else { HEIGHT };
    let mut canvas = Canvas::new(lo, hi, WIDTH, height);
    // chart coordinates of the nearest chart
    let lift = |x: &[f64]| -> [f64; 2] {
        let nearest = (0..dom.charts.len())
            .min_by(|&a, &b| {
                let da = domain.distance(x, &domain.wrapped(&dom.charts[a].center()));
                let db = domain.distance(x, &domain.wrapped(&dom.charts[b].center()));
                da.total_cmp(&db)
            })
            .unwrap_or(0);
        let p = if dom.charts.is_empty() { x.to_vec() } else { dom.to_chart(domain, nearest, x) };
        point2(&p)
    };
    for t in 0..dom.tiles.len() {
        let bands: &[(f64, f64)] = if one { &[(0.58, 0.9), (0.1, 0.42)] } else { &[(0.0, 1.0)] };
        for &band in bands {
            let (a, b) = tile_box(dom, t, band);
            canvas.rect(a, b, r##"fill="#f4f1e8" stroke="#999999" stroke-width="0.5""##);
        }
    }
    for x in input {
        let mut p = lift(x);
        if one {
            p[1] = 0.74;
        }
        canvas.circle(p, 0.0, r##"fill="#444444""##);
    }
    for seq in &result.sequences {
        for ball in &seq.balls {
            let mut p = lift(&ball.center);
            if one {
                p[1] = 0.26;
            }
            canvas.circle(p, ball.radius, r##"fill="#e74c3c" fill-opacity="0.4" stroke="#c0392b""##);
        }
    }
    if one {
        canvas.text(MARGIN, 14.0, "input pseudo-orbit");
        canvas.text(MARGIN, STRIP + 14.0, "final balls");
    }
    canvas.finish("surgery: input points and final balls")
}

/// Closing view: balls of the perturbation and the closed orbit.
pub fn closing_svg(domain: &Domain, balls: &[(Vec<f64>, f64)], orbit: &[Vec<f64>]) -> String {
    let mut canvas = Canvas::for_domain(domain);
    for (c, r) in balls {
        canvas.circle(point2(c), *r, r##"fill="#e74c3c" fill-opacity="0.4" stroke="#c0392b""##);
    }
    for p in orbit {
        canvas.circle(point2(p), 0.0, r##"fill="#1a5276""##);
    }
    canvas.finish("perturbation balls and closed orbit")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, cyclic_classes, recurrent_classes, GraphParams, Padding};
    use crate::models;

    #[test]
    fn rotation_covering_has_four_colours() {
        let sys = models::rotation(0.25);
        let params = GraphParams { samples_per_axis: 1, padding: Padding::None };
        let (cov, g) = build_graph(&sys, 2, None, &params).unwrap();
        let decs: Vec<_> = recurrent_classes(&g).iter().map(|c| cyclic_classes(&g, c).unwrap()).collect();
        let svg = covering_svg(&cov, &decs);
        let mut fills: Vec<&str> = svg.match_indices("fill=\"hsl(").map(|(i, _)| &svg[i..i + 20]).collect();
        fills.sort();
        fills.dedup();
        assert_eq!(fills.len(), 4);
    }
}
