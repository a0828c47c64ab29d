use serde::{Deserialize, Serialize};

use crate::system::{Domain, MapSystem};

/// Slack, relative to a tile edge, for boundary and containment tests.
pub const TILE_TOL: f64 = 1e-12;

/// Axis-aligned chart. Chart coordinates are lifts of domain points near the chart centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Chart {
    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        y.iter()
            .enumerate()
            .all(|(j, v)| *v >= self.lo[j] - tol && *v <= self.hi[j] + tol)
    }
}

/// Cube `center +- edge / 2` in the coordinates of `chart`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tile {
    pub chart: usize,
    pub center: Vec<f64>,
    pub edge: f64,
}

impl Tile {
    pub fn diameter(&self) -> f64 {
        self.edge * (self.center.len() as f64).sqrt()
    }

    /// Sup-norm offset of `y` from the centre, in units of half the edge.
    pub fn scaled_offset(&self, y: &[f64]) -> f64 {
        y.iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c).abs())
            .fold(0.0, f64::max)
            / (0.5 * self.edge)
    }

    /// Membership in the closed cube `lambda * C`.
    pub fn in_scaled(&self, y: &[f64], lambda: f64) -> bool {
        self.scaled_offset(y) <= lambda * (1.0 + TILE_TOL)
    }

    fn lo(&self, j: usize) -> f64 {
        self.center[j] - 0.5 * self.edge
    }

    fn hi(&self, j: usize) -> f64 {
        self.center[j] + 0.5 * self.edge
    }
}

/// Charts tiled by cubes, with the constants `N`, `theta`, `delta` and `eta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationDomain {
    pub charts: Vec<Chart>,
    pub tiles: Vec<Tile>,
    /// Adjacency lists; computed from tile geometry when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<Vec<Vec<usize>>>,
    pub n: usize,
    pub theta: f64,
    pub delta: f64,
    /// Declared `eta`; must equal `(theta / 4)^(4^d)` unless `eta_override` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_override: Option<f64>,
}

pub fn default_eta(theta: f64, d: usize) -> f64 {
    (theta / 4.0).powi(4i32.pow(d as u32))
}

impl PerturbationDomain {
    pub fn dim(&self) -> usize {
        self.charts.first().map_or(0, |c| c.lo.len())
    }

    pub fn default_eta(&self) -> f64 {
        default_eta(self.theta, self.dim())
    }

    /// The `eta` in force: the override when present, else the default constant.
    pub fn eta(&self) -> f64 {
        self.eta_override.unwrap_or_else(|| self.default_eta())
    }

    pub fn max_adjacent(&self) -> usize {
        4usize.pow(self.dim() as u32)
    }

    /// Chart coordinates of `x`.
    pub fn to_chart(&self, domain: &Domain, chart: usize, x: &[f64]) -> Vec<f64> {
        domain.lift_near(x, &self.charts[chart].center())
    }

    fn touching(&self, a: usize, b: usize) -> bool {
        let (ta, tb) = (&self.tiles[a], &self.tiles[b]);
        let tol = TILE_TOL * ta.edge.max(tb.edge);
        ta.chart == tb.chart && (0..ta.center.len()).all(|j| ta.lo(j) <= tb.hi(j) + tol && tb.lo(j) <= ta.hi(j) + tol)
    }

    fn interiors_overlap(&self, domain: &Domain, a: usize, b: usize) -> bool {
        let (ta, tb) = (&self.tiles[a], &self.tiles[b]);
        let ca = &ta.center;
        let cb = self.to_chart(domain, ta.chart, &domain.wrapped(&tb.center));
        let tol = TILE_TOL * ta.edge.max(tb.edge);
        (0..ca.len()).all(|j| (ca[j] - cb[j]).abs() < 0.5 * (ta.edge + tb.edge) - tol)
    }

    /// Adjacency from geometry: distinct tiles of one chart whose closed cubes meet.
    pub fn computed_adjacency(&self) -> Vec<Vec<usize>> {
        let m = self.tiles.len();
        (0..m)
            .map(|a| (0..m).filter(|&b| b != a && self.touching(a, b)).collect())
            .collect()
    }

    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        self.adjacency.clone().unwrap_or_else(|| self.computed_adjacency())
    }

    /// Tile containing `x`. A point on a shared boundary goes to the lowest-index
    /// tile whose closed cube holds it, which fixes a unique tile per point.
    pub fn tile_of(&self, domain: &Domain, x: &[f64]) -> Option<usize> {
        (0..self.tiles.len()).find(|&t| {
            let tile = &self.tiles[t];
            let y = self.to_chart(domain, tile.chart, x);
            tile.in_scaled(&y, 1.0)
        })
    }

    /// `x` lies in the closed cube `lambda * C_tile`.
    pub fn in_scaled_tile(&self, domain: &Domain, tile: usize, x: &[f64], lambda: f64) -> bool {
        let t = &self.tiles[tile];
        t.in_scaled(&self.to_chart(domain, t.chart, x), lambda)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tiles: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub charts: Vec<usize>,
}

impl Violation {
    fn new(kind: &str, message: String, tiles: Vec<usize>, charts: Vec<usize>) -> Self {
        Self {
            kind: kind.into(),
            message,
            tiles,
            charts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
    pub theta: f64,
    pub delta: f64,
    pub n: usize,
    pub eta: f64,
    pub eta_default: f64,
    pub eta_overridden: bool,
    pub adjacency: Vec<Vec<usize>>,
}

/// Samples of a chart: a grid with `s` points per axis including the corners.
fn chart_samples(chart: &Chart, s: usize) -> Vec<Vec<f64>> {
    let d = chart.lo.len();
    (0..s.pow(d as u32))
        .map(|mut lin| {
            (0..d)
                .map(|j| {
                    let i = lin % s;
                    lin /= s;
                    chart.lo[j] + (chart.hi[j] - chart.lo[j]) * i as f64 / (s - 1) as f64
                })
                .collect()
        })
        .collect()
}

struct Image {
    chart: usize,
    k: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

/// Checks the tiled-domain axioms by sampling and reports every violation found.
pub fn validate_domain(dom: &PerturbationDomain, sys: &MapSystem) -> DomainReport {
    let mut v = Vec::new();
    let d = sys.dimension();
    let space = sys.domain();
    if !(dom.theta > 0.0 && dom.theta < 1.0) {
        v.push(Violation::new("constant", format!("theta = {} is outside (0, 1)", dom.theta), vec![], vec![]));
    }
    if !(dom.delta > 0.0) {
        v.push(Violation::new("constant", format!("delta = {} must be positive", dom.delta), vec![], vec![]));
    }
    if dom.n == 0 {
        v.push(Violation::new("constant", "N must be at least 1".into(), vec![], vec![]));
    }
    if dom.charts.is_empty() {
        v.push(Violation::new("constant", "no charts".into(), vec![], vec![]));
    }
    if let Some(e) = dom.eta_override {
        if !(e > 0.0 && e < 1.0) {
            v.push(Violation::new("eta", format!("eta override {e} is outside (0, 1)"), vec![], vec![]));
        }
    }
    if let (Some(e), None) = (dom.eta, dom.eta_override) {
        let expected = dom.default_eta();
        if (e - expected).abs() > 1e-12 * expected {
            v.push(Violation::new(
                "eta",
                format!("declared eta = {e:e} differs from (theta/4)^(4^d) = {expected:e} and no override is set"),
                vec![],
                vec![],
            ));
        }
    }
    let dims_ok = dom.charts.iter().all(|c| c.lo.len() == d && c.hi.len() == d && c.lo.iter().zip(&c.hi).all(|(a, b)| a < b))
        && dom.tiles.iter().all(|t| t.center.len() == d && t.edge > 0.0 && t.chart < dom.charts.len());
    if !dims_ok {
        v.push(Violation::new("shape", "chart or tile has wrong dimension, empty extent or unknown chart".into(), vec![], vec![]));
        return finish(dom, v, Vec::new());
    }

    // chart images f^k(V_s), 0 <= k < N: every layer holding balls
    let mut images: Vec<Image> = Vec::new();
    for (s, chart) in dom.charts.iter().enumerate() {
        let samples: Vec<Vec<f64>> = chart_samples(chart, 9).into_iter().map(|x| space.wrapped(&x)).collect();
        let center = space.wrapped(&chart.center());
        for k in 0..dom.n {
            let Ok(ck) = sys.power(&center, k as i64) else { continue };
            let pts: Vec<Vec<f64>> = samples
                .iter()
                .filter_map(|x| sys.power(x, k as i64).ok())
                .map(|y| space.lift_near(&y, &ck))
                .collect();
            if pts.is_empty() {
                continue;
            }
            let mut lo = pts[0].clone();
            let mut hi = pts[0].clone();
            for p in &pts {
                for j in 0..d {
                    lo[j] = lo[j].min(p[j]);
                    hi[j] = hi[j].max(p[j]);
                }
            }
            let mut diameter: f64 = 0.0;
            for a in &pts {
                for b in &pts {
                    diameter = diameter.max(space.distance(a, b));
                }
            }
            if diameter >= dom.delta {
                v.push(Violation::new(
                    "chart_diameter",
                    format!("f^{k}(V_{s}) has sampled diameter {diameter:e} >= delta = {:e}", dom.delta),
                    vec![],
                    vec![s],
                ));
            }
            images.push(Image { chart: s, k, lo, hi });
        }
    }
    for a in 0..images.len() {
        for b in a + 1..images.len() {
            let (ia, ib) = (&images[a], &images[b]);
            let ca: Vec<f64> = ia.lo.iter().zip(&ia.hi).map(|(l, h)| 0.5 * (l + h)).collect();
            let cb: Vec<f64> = ib.lo.iter().zip(&ib.hi).map(|(l, h)| 0.5 * (l + h)).collect();
            let off = space.delta(&ca, &cb);
            let overlap = (0..d).all(|j| {
                off[j].abs() < 0.5 * ((ia.hi[j] - ia.lo[j]) + (ib.hi[j] - ib.lo[j]))
            });
            if overlap {
                v.push(Violation::new(
                    "chart_overlap",
                    format!("f^{}(V_{}) and f^{}(V_{}) overlap", ia.k, ia.chart, ib.k, ib.chart),
                    vec![],
                    vec![ia.chart, ib.chart],
                ));
            }
        }
    }

    // tiles
    for (t, tile) in dom.tiles.iter().enumerate() {
        let chart = &dom.charts[tile.chart];
        let tol = TILE_TOL * tile.edge;
        let inside = (0..d).all(|j| tile.lo(j) >= chart.lo[j] - tol && tile.hi(j) <= chart.hi[j] + tol);
        if !inside {
            v.push(Violation::new("tile_outside_chart", format!("tile {t} is not inside chart {}", tile.chart), vec![t], vec![tile.chart]));
        }
    }
    for a in 0..dom.tiles.len() {
        for b in a + 1..dom.tiles.len() {
            if dom.interiors_overlap(space, a, b) {
                v.push(Violation::new("tile_overlap", format!("tiles {a} and {b} have overlapping interiors"), vec![a, b], vec![]));
            }
        }
    }
    let computed = dom.computed_adjacency();
    let adjacency = dom.adjacency_lists();
    if adjacency.len() != dom.tiles.len() || adjacency.iter().flatten().any(|&b| b >= dom.tiles.len()) {
        v.push(Violation::new("adjacency", "adjacency lists do not match the tile count".into(), vec![], vec![]));
        return finish(dom, v, computed);
    }
    for (a, succ) in computed.iter().enumerate() {
        for &b in succ {
            if !adjacency[a].contains(&b) {
                v.push(Violation::new("missing_adjacency", format!("tiles {a} and {b} touch but are not listed as adjacent"), vec![a, b], vec![]));
            }
        }
    }
    let limit = dom.max_adjacent();
    for (a, succ) in adjacency.iter().enumerate() {
        if succ.len() > limit {
            v.push(Violation::new(
                "adjacency_count",
                format!("tile {a} is adjacent to {} tiles, more than 4^d = {limit}", succ.len()),
                vec![a],
                vec![],
            ));
        }
        for &b in succ {
            if a < b || !adjacency[b].contains(&a) {
                let ratio = dom.tiles[b].diameter() / dom.tiles[a].diameter();
                if !(0.5..=2.0).contains(&ratio) {
                    v.push(Violation::new(
                        "diameter_ratio",
                        format!("adjacent tiles {a} and {b} have diameter ratio {ratio}"),
                        vec![a, b],
                        vec![],
                    ));
                }
            }
        }
    }
    // each chart is the union of its tiles
    for (s, chart) in dom.charts.iter().enumerate() {
        let uncovered = chart_samples(chart, 17)
            .into_iter()
            .map(|x| {
                // pull sample slightly inside so corners are not on the chart boundary
                x.iter()
                    .zip(chart.center())
                    .map(|(a, c)| a + (c - a) * 1e-9)
                    .collect::<Vec<f64>>()
            })
            .find(|y| {
                !dom.tiles
                    .iter()
                    .any(|t| t.chart == s && t.in_scaled(y, 1.0))
            });
        if let Some(y) = uncovered {
            v.push(Violation::new("chart_not_tiled", format!("chart {s} point {y:?} lies in no tile"), vec![], vec![s]));
        }
    }
    finish(dom, v, adjacency)
}

fn finish(dom: &PerturbationDomain, violations: Vec<Violation>, adjacency: Vec<Vec<usize>>) -> DomainReport {
    DomainReport {
        valid: violations.is_empty(),
        violations,
        theta: dom.theta,
        delta: dom.delta,
        n: dom.n,
        eta: dom.eta(),
        eta_default: dom.default_eta(),
        eta_overridden: dom.eta_override.is_some(),
        adjacency,
    }
}
