use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::system::{norm, Domain};

/// Crossings at a smaller angle than this, in degrees, are near-tangencies.
pub const TRANSVERSE_DEG: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub point: Vec<f64>,
    /// Segment `segment_a` of the first polyline, at parameter `s` in `[0, 1)`.
    pub segment_a: usize,
    pub s: f64,
    pub segment_b: usize,
    pub t: f64,
    /// Acute angle between the two segments, in degrees.
    pub angle_deg: f64,
    pub transverse: bool,
}

struct Grid {
    cell: Vec<f64>,
    dims: Vec<i64>,
    periodic: Vec<bool>,
    lo: Vec<f64>,
}

impl Grid {
    /// Cells of at least `cell` per side that tile each axis exactly.
    fn new(domain: &Domain, cell: f64) -> Self {
        let dims: Vec<i64> = domain
            .axes
            .iter()
            .map(|a| ((a.width() / cell).floor() as i64).max(1))
            .collect();
        Self {
            cell: domain.axes.iter().zip(&dims).map(|(a, &n)| a.width() / n as f64).collect(),
            dims,
            periodic: domain.axes.iter().map(|a| a.periodic).collect(),
            lo: domain.axes.iter().map(|a| a.lo).collect(),
        }
    }

    /// Cells overlapped by the slightly inflated bounding box of the lifted segment `p -> p + d`.
    fn cells(&self, p: &[f64], d: &[f64]) -> Vec<(i64, i64)> {
        let range = |j: usize| {
            let eps = 1e-9 * self.cell[j];
            let lo = p[j].min(p[j] + d[j]) - eps;
            let hi = p[j].max(p[j] + d[j]) + eps;
            let f = |v: f64| ((v - self.lo[j]) / self.cell[j]).floor() as i64;
            (f(lo), f(hi))
        };
        let wrap = |j: usize, i: i64| {
            if self.periodic[j] {
                i.rem_euclid(self.dims[j])
            } else {
                i
            }
        };
        let (a0, a1) = range(0);
        let (b0, b1) = range(1);
        let mut out = Vec::new();
        for i in a0..=a1 {
            for j in b0..=b1 {
                out.push((wrap(0, i), wrap(1, j)));
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// All crossings between two planar polylines of wrapped points, using a uniform hash grid
/// and minimal-image lifts. Segments must be shorter than half a period.
pub fn find_crossings(domain: &Domain, a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Crossing> {
    assert_eq!(domain.dim(), 2, "crossing detection is planar");
    if a.len() < 2 || b.len() < 2 {
        return Vec::new();
    }
    let seg_len = |pts: &[Vec<f64>]| {
        pts.windows(2)
            .map(|w| norm(&domain.delta(&w[0], &w[1])))
            .fold(0.0, f64::max)
    };
    let min_width = domain.axes.iter().map(|a| a.width()).fold(f64::INFINITY, f64::min);
    let cell = seg_len(a).max(seg_len(b)).max(min_width / 4096.0);
    let grid = Grid::new(domain, cell);
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (j, w) in b.windows(2).enumerate() {
        let d = domain.delta(&w[0], &w[1]);
        for c in grid.cells(&w[0], &d) {
            buckets.entry(c).or_default().push(j);
        }
    }
    let mut out = Vec::new();
    let mut seen: Vec<usize> = Vec::new();
    for (i, w) in a.windows(2).enumerate() {
        let p = &w[0];
        let r = domain.delta(&w[0], &w[1]);
        seen.clear();
        for c in grid.cells(p, &r) {
            if let Some(list) = buckets.get(&c) {
                seen.extend(list);
            }
        }
        seen.sort_unstable();
        seen.dedup();
        for &j in &seen {
            let q = domain.lift_near(&b[j], p);
            let s_vec = domain.delta(&b[j], &b[j + 1]);
            let denom = r[0] * s_vec[1] - r[1] * s_vec[0];
            if denom == 0.0 {
                continue;
            }
            let qp = [q[0] - p[0], q[1] - p[1]];
            let s = (qp[0] * s_vec[1] - qp[1] * s_vec[0]) / denom;
            let t = (qp[0] * r[1] - qp[1] * r[0]) / denom;
            if !((0.0..1.0).contains(&s) && (0.0..1.0).contains(&t)) {
                continue;
            }
            let sin = denom.abs() / (norm(&r) * norm(&s_vec));
            let angle_deg = sin.clamp(0.0, 1.0).asin().to_degrees();
            let point = domain.wrapped(&[p[0] + s * r[0], p[1] + s * r[1]]);
            out.push(Crossing {
                point,
                segment_a: i,
                s,
                segment_b: j,
                t,
                angle_deg,
                transverse: angle_deg > TRANSVERSE_DEG,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perpendicular_segments_cross_once() {
        let dom = Domain::unit_torus(2);
        let a = vec![vec![0.1, 0.5], vec![0.3, 0.5]];
        let b = vec![vec![0.2, 0.4], vec![0.2, 0.6]];
        let c = find_crossings(&dom, &a, &b);
        assert_eq!(c.len(), 1);
        assert!((c[0].point[0] - 0.2).abs() < 1e-15 && (c[0].point[1] - 0.5).abs() < 1e-15);
        assert!((c[0].angle_deg - 90.0).abs() < 1e-9);
        assert!(c[0].transverse);
    }

    #[test]
    fn crossing_across_the_seam() {
        let dom = Domain::unit_torus(2);
        let a = vec![vec![0.95, 0.5], vec![0.05, 0.5]];
        let b = vec![vec![0.0, 0.45], vec![0.0, 0.55]];
        let c = find_crossings(&dom, &a, &b);
        assert_eq!(c.len(), 1);
        assert!(c[0].point[0].abs() < 1e-12);
    }

    #[test]
    fn shallow_crossing_is_a_near_tangency() {
        let dom = Domain::unit_torus(2);
        let a = vec![vec![0.1, 0.5], vec![0.3, 0.5]];
        let tilt = 2f64.to_radians().tan() * 0.1;
        let b = vec![vec![0.1, 0.5 - tilt], vec![0.3, 0.5 + tilt]];
        let c = find_crossings(&dom, &a, &b);
        assert_eq!(c.len(), 1);
        assert!(!c[0].transverse);
    }

    #[test]
    fn parallel_and_disjoint_segments_do_not_cross() {
        let dom = Domain::unit_torus(2);
        let a = vec![vec![0.1, 0.5], vec![0.3, 0.5]];
        let b = vec![vec![0.1, 0.6], vec![0.3, 0.6]];
        assert!(find_crossings(&dom, &a, &b).is_empty());
    }

    #[test]
    fn matches_brute_force_on_zigzags() {
        let dom = Domain::unit_torus(2);
        let a: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64 * 0.005, 0.5 + 0.01 * ((i % 2) as f64)]).collect();
        let b: Vec<Vec<f64>> = (0..200).map(|i| vec![0.5 + 0.01 * ((i % 3) as f64), i as f64 * 0.005]).collect();
        let fast = find_crossings(&dom, &a, &b).len();
        let mut brute = 0;
        for i in 0..a.len() - 1 {
            for j in 0..b.len() - 1 {
                brute += find_crossings(&dom, &a[i..i + 2], &b[j..j + 2]).len();
            }
        }
        assert_eq!(fast, brute);
        assert!(fast > 0);
    }
}
