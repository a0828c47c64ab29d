use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::domain::PerturbationDomain;
use super::pseudo_orbit::{pullback, OrbitState};
use super::SurgeryError;
use crate::periodic::TAU_ORB;
use crate::system::MapSystem;

/// Relative slack on the defect and a-priori radius inequalities.
pub const BOUND_SLACK: f64 = 1e-9;
/// Relative tolerance for the Jacobian of `f^k` to count as constant on `3/2 C`.
pub const AFFINE_TOL: f64 = 1e-8;
/// Largest `N` tried when reporting the minimal workable sequence length.
pub const MINIMAL_N_CAP: usize = 100_000;

/// The ball `B(center, radius)`; `target = f^{-1}(a_{k+1})` is where the perturbation sends `center`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    /// Input index of the jump whose sequence supplied the centre.
    pub owner: usize,
    pub k: usize,
    pub tile: usize,
    pub center: Vec<f64>,
    pub target: Vec<f64>,
    pub radius: f64,
    /// Distance from `f^k(5/4 C)` to the complement of `f^k(3/2 C)`.
    pub margin: f64,
    /// Distance from the centre to the complement of `f^k(V_s)`.
    pub containment: f64,
    pub merges: usize,
}

impl Ball {
    pub fn id(&self) -> (usize, usize) {
        (self.owner, self.k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectingSequence {
    /// Input index of the jump start `y_i`.
    pub jump: usize,
    pub tile: usize,
    pub chart: usize,
    /// `a_0 .. a_N`.
    pub points: Vec<Vec<f64>>,
    /// `B_0 .. B_{N-1}`.
    pub balls: Vec<Ball>,
}

/// Linear part of `f^k` near a tile, with the images of the tile and chart centres.
pub(crate) struct Linear {
    inv: DMatrix<f64>,
    row_norms: Vec<f64>,
    tile_image: Vec<f64>,
    chart_image: Vec<f64>,
}

impl Linear {
    fn coords(&self, sys: &MapSystem, p: &[f64], base: &[f64]) -> DVector<f64> {
        &self.inv * DVector::from_vec(sys.domain().delta(base, p))
    }

    pub(crate) fn margin(&self, edge: f64) -> f64 {
        edge / 8.0 / self.row_norms.iter().cloned().fold(0.0, f64::max)
    }

    /// Smallest `lambda` with `p` in `f^k(lambda C)`.
    pub(crate) fn scaled_offset(&self, sys: &MapSystem, p: &[f64], edge: f64) -> f64 {
        self.coords(sys, p, &self.tile_image).amax() / (0.5 * edge)
    }

    /// Distance from `p` to the complement of `f^k(V)`, exact for affine `f^k`.
    pub(crate) fn containment(&self, sys: &MapSystem, p: &[f64], half: &[f64]) -> f64 {
        let y = self.coords(sys, p, &self.chart_image);
        (0..half.len())
            .map(|j| (half[j] - y[j].abs()) / self.row_norms[j])
            .fold(f64::INFINITY, f64::min)
    }
}

pub(crate) fn linearize(
    sys: &MapSystem,
    dom: &PerturbationDomain,
    tile: usize,
    n: usize,
) -> Result<Vec<Linear>, SurgeryError> {
    let space = sys.domain();
    let t = &dom.tiles[tile];
    let tile_center = space.wrapped(&t.center);
    let chart_center = space.wrapped(&dom.charts[t.chart].center());
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let l = sys.jacobian_power(&tile_center, k)?;
        let inv = l.clone().try_inverse().ok_or(SurgeryError::Singular { tile })?;
        let row_norms = (0..inv.nrows()).map(|r| inv.row(r).norm()).collect();
        out.push(Linear {
            inv,
            row_norms,
            tile_image: sys.power(&tile_center, k as i64)?,
            chart_image: sys.power(&chart_center, k as i64)?,
        });
    }
    Ok(out)
}

/// Rejects tiles on whose `3/2`-cube some `f^k`, `k < N`, is visibly not affine.
fn check_affine(sys: &MapSystem, dom: &PerturbationDomain, tile: usize) -> Result<(), SurgeryError> {
    let space = sys.domain();
    let t = &dom.tiles[tile];
    let d = t.center.len();
    let center = space.wrapped(&t.center);
    for k in 1..dom.n {
        let l0 = sys.jacobian_power(&center, k)?;
        let scale = 1.0 + l0.amax();
        for corner in 0..1usize << d {
            let x: Vec<f64> = (0..d)
                .map(|j| {
                    let s = if corner >> j & 1 == 1 { 0.75 } else { -0.75 };
                    t.center[j] + s * t.edge
                })
                .collect();
            let x = space.wrapped(&x);
            if !space.contains(&x) {
                continue;
            }
            if let Ok(l) = sys.jacobian_power(&x, k) {
                if (l - &l0).amax() > AFFINE_TOL * scale {
                    return Err(SurgeryError::NotAffine { tile });
                }
            }
        }
    }
    Ok(())
}

/// Balls of a sequence `a_0 .. a_N` with `targets[k] = f^{-1}(a_{k+1})`, checking the defect bound and the initial a-priori radius.
pub(crate) fn build_balls(
    sys: &MapSystem,
    dom: &PerturbationDomain,
    tile: usize,
    owner: usize,
    points: &[Vec<f64>],
    targets: &[Vec<f64>],
    lin: &[Linear],
) -> Result<Vec<Ball>, SurgeryError> {
    let space = sys.domain();
    let t = &dom.tiles[tile];
    let chart = &dom.charts[t.chart];
    let half: Vec<f64> = chart.lo.iter().zip(&chart.hi).map(|(a, b)| 0.5 * (b - a)).collect();
    let eta = dom.eta();
    let mut balls = Vec::with_capacity(dom.n);
    for k in 0..dom.n {
        let center = points[k].clone();
        let target = targets[k].clone();
        let defect = space.distance(&center, &target);
        let margin = lin[k].margin(t.edge);
        let bound = eta * margin;
        if defect > bound * (1.0 + BOUND_SLACK) {
            return Err(SurgeryError::BoundUnsatisfiable {
                jump: owner,
                k,
                defect,
                bound,
                n: dom.n,
                minimal_n: None,
            });
        }
        let radius = defect / dom.theta;
        if radius > margin * (1.0 + BOUND_SLACK) {
            return Err(SurgeryError::InitialRadius { jump: owner, k, radius, margin });
        }
        balls.push(Ball {
            owner,
            k,
            tile,
            containment: lin[k].containment(sys, &center, &half),
            center,
            target,
            radius,
            margin,
            merges: 0,
        });
    }
    Ok(balls)
}

/// Smallest `N` for which the straight-line sequence from `a` to `a + displacement` meets the defect bound.
pub fn minimal_n(
    sys: &MapSystem,
    dom: &PerturbationDomain,
    tile: usize,
    displacement: &[f64],
) -> Option<usize> {
    let t = &dom.tiles[tile];
    let eta = dom.eta();
    let d = displacement.len();
    let mut y = sys.domain().wrapped(&t.center);
    let mut l = DMatrix::<f64>::identity(d, d);
    let v = DVector::from_column_slice(displacement);
    let mut worst: f64 = 0.0;
    for k in 0..MINIMAL_N_CAP {
        let inv = l.clone().try_inverse()?;
        let row = (0..d).map(|r| inv.row(r).norm()).fold(0.0, f64::max);
        worst = worst.max((&l * &v).norm() * row / (t.edge / 8.0));
        let n = k + 1;
        if worst <= n as f64 * eta * (1.0 + BOUND_SLACK) {
            return Some(n);
        }
        l = sys.jacobian(&y).ok()? * l;
        y = sys.evaluate(&y).ok()?;
    }
    None
}

/// Straight-line connecting sequence from `a` to `b`, both in `5/4 C`, pushed forward by `f^k`.
pub fn connect_points(
    sys: &MapSystem,
    dom: &PerturbationDomain,
    tile: usize,
    a: &[f64],
    b: &[f64],
    owner: usize,
) -> Result<ConnectingSequence, SurgeryError> {
    let space = sys.domain();
    let t = &dom.tiles[tile];
    let n = dom.n;
    check_affine(sys, dom, tile)?;
    let ac = dom.to_chart(space, t.chart, a);
    let bc = space.lift_near(b, &ac);
    if !t.in_scaled(&ac, 1.25) || !t.in_scaled(&bc, 1.25) {
        return Err(SurgeryError::OutsideScaledTile { jump: owner });
    }
    let c: Vec<Vec<f64>> = (0..=n)
        .map(|k| {
            let s = k as f64 / n as f64;
            let c: Vec<f64> = ac.iter().zip(&bc).map(|(p, q)| p + s * (q - p)).collect();
            space.wrapped(&c)
        })
        .collect();
    // f^{-1}(a_{k+1}) = f^k(c_{k+1}) without a round trip through the inverse
    let mut points = Vec::with_capacity(n + 1);
    let mut targets = Vec::with_capacity(n);
    for k in 0..=n {
        points.push(sys.power(&c[k], k as i64)?);
        if k < n {
            targets.push(sys.power(&c[k + 1], k as i64)?);
        }
    }
    let lin = linearize(sys, dom, tile, n)?;
    let balls = build_balls(sys, dom, tile, owner, &points, &targets, &lin).map_err(|e| match e {
        SurgeryError::BoundUnsatisfiable { jump, k, defect, bound, n, .. } => {
            let disp: Vec<f64> = ac.iter().zip(&bc).map(|(p, q)| q - p).collect();
            SurgeryError::BoundUnsatisfiable {
                jump,
                k,
                defect,
                bound,
                n,
                minimal_n: minimal_n(sys, dom, tile, &disp),
            }
        }
        e => e,
    })?;
    Ok(ConnectingSequence {
        jump: owner,
        tile,
        chart: t.chart,
        points,
        balls,
    })
}

/// Connecting sequence for the jump leaving position `i` of `state`.
pub fn connect(
    sys: &MapSystem,
    dom: &PerturbationDomain,
    state: &OrbitState,
    i: usize,
) -> Result<ConnectingSequence, SurgeryError> {
    let n = state.len();
    let tile = state.tiles[i].ok_or(SurgeryError::JumpOutsideTile { index: state.origins[i] })?;
    let b = pullback(sys, &state.points[i], &state.points[(i + 1) % n])?;
    connect_points(sys, dom, tile, &state.points[i], &b, state.origins[i])
}

/// Checks an externally supplied sequence for the jump at position `i` and builds its balls.
pub fn validate_sequence(
    sys: &MapSystem,
    dom: &PerturbationDomain,
    state: &OrbitState,
    i: usize,
    points: &[Vec<f64>],
) -> Result<ConnectingSequence, SurgeryError> {
    let space = sys.domain();
    let owner = state.origins[i];
    let mismatch = |reason: &str| SurgeryError::SequenceMismatch {
        jump: owner,
        reason: reason.into(),
    };
    let n = dom.n;
    let tile = state.tiles[i].ok_or(SurgeryError::JumpOutsideTile { index: owner })?;
    if points.len() != n + 1 {
        return Err(mismatch("expected N + 1 points"));
    }
    let points: Vec<Vec<f64>> = points.iter().map(|p| space.wrapped(p)).collect();
    if space.distance(&points[0], &state.points[i]) >= TAU_ORB {
        return Err(mismatch("a_0 differs from y_i"));
    }
    let next = &state.points[(i + 1) % state.len()];
    let end = sys.power(next, n as i64 - 1)?;
    if space.distance(&points[n], &end) >= TAU_ORB {
        return Err(mismatch("a_N differs from f^(N-1)(y_(i+1))"));
    }
    let lin = linearize(sys, dom, tile, n)?;
    let edge = dom.tiles[tile].edge;
    for (k, p) in points.iter().enumerate().take(n) {
        if lin[k].scaled_offset(sys, p, edge) > 1.25 * (1.0 + BOUND_SLACK) {
            return Err(mismatch(&format!("a_{k} is outside f^{k}(5/4 C)")));
        }
    }
    let targets = (0..n)
        .map(|k| pullback(sys, &points[k], &points[k + 1]))
        .collect::<Result<Vec<_>, _>>()?;
    let balls = build_balls(sys, dom, tile, owner, &points, &targets, &lin)?;
    Ok(ConnectingSequence {
        jump: owner,
        tile,
        chart: dom.tiles[tile].chart,
        points,
        balls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surgery::domain::{Chart, Tile};
    use crate::system::{Axis, Domain, MapSpec};

    fn shift_line() -> MapSystem {
        let spec = MapSpec {
            name: "shift".into(),
            map: vec!["x1 + 10".into()],
            inverse: Some(vec!["x1 - 10".into()]),
            jacobian: Some(vec![vec!["1".into()]]),
            ..Default::default()
        };
        let domain = Domain::new(vec![Axis { lo: -1.0, hi: 1000.0, periodic: false }]).unwrap();
        MapSystem::from_spec(domain, spec).unwrap()
    }

    fn unit_tile(n: usize) -> PerturbationDomain {
        PerturbationDomain {
            charts: vec![Chart { lo: vec![-0.5], hi: vec![1.5] }],
            tiles: vec![Tile { chart: 0, center: vec![0.5], edge: 1.0 }],
            adjacency: None,
            n,
            theta: 0.4,
            delta: 5.0,
            eta: None,
            eta_override: Some(0.5),
        }
    }

    #[test]
    fn equal_endpoints_give_the_orbit() {
        let sys = shift_line();
        let seq = connect_points(&sys, &unit_tile(3), 0, &[0.3], &[0.3], 0).unwrap();
        for (k, p) in seq.points.iter().enumerate() {
            assert!((p[0] - (0.3 + 10.0 * k as f64)).abs() < 1e-12);
        }
        assert!(seq.balls.iter().all(|b| b.radius == 0.0));
    }

    #[test]
    fn two_step_sequence() {
        let sys = shift_line();
        let dom = unit_tile(2);
        let seq = connect_points(&sys, &dom, 0, &[0.1], &[0.2], 7).unwrap();
        assert_eq!(seq.points.len(), 3);
        assert!((seq.points[1][0] - 10.15).abs() < 1e-12);
        assert!((seq.points[2][0] - 20.2).abs() < 1e-12);
        for b in &seq.balls {
            let defect = (b.target[0] - b.center[0]).abs();
            assert!((defect - 0.05).abs() < 1e-12);
            assert!((b.radius - 0.125).abs() < 1e-12);
            assert!((b.margin - 0.125).abs() < 1e-15);
            assert!(defect <= dom.eta() * b.margin);
            // the chart image f^k([-0.5, 1.5]) contains the ball
            assert!(b.radius <= b.containment);
            assert_eq!(b.owner, 7);
        }
    }

    #[test]
    fn one_step_across_the_enlarged_tile_reports_minimal_n() {
        let sys = shift_line();
        match connect_points(&sys, &unit_tile(1), 0, &[-0.125], &[1.125], 0) {
            Err(SurgeryError::BoundUnsatisfiable { n: 1, minimal_n, defect, .. }) => {
                assert!((defect - 1.25).abs() < 1e-12);
                // 1.25 / N <= 0.5 * 1/8
                assert_eq!(minimal_n, Some(20));
            }
            other => panic!("{other:?}"),
        }
        // with eta = 0.5 > theta the initial radius can exceed the margin, and that is refused
        assert!(matches!(
            connect_points(&sys, &unit_tile(20), 0, &[-0.125], &[1.125], 0),
            Err(SurgeryError::InitialRadius { .. })
        ));
    }

    #[test]
    fn endpoints_outside_five_quarters_are_rejected() {
        let sys = shift_line();
        assert!(matches!(
            connect_points(&sys, &unit_tile(2), 0, &[0.5], &[1.2], 0),
            Err(SurgeryError::OutsideScaledTile { .. })
        ));
    }

    #[test]
    fn curved_maps_are_refused() {
        let spec = MapSpec {
            name: "cubic".into(),
            map: vec!["x1 + x1^3/10".into()],
            ..Default::default()
        };
        let domain = Domain::new(vec![Axis { lo: -2.0, hi: 2.0, periodic: false }]).unwrap();
        let sys = MapSystem::from_spec(domain, spec).unwrap();
        assert!(matches!(
            connect_points(&sys, &unit_tile(2), 0, &[0.1], &[0.2], 0),
            Err(SurgeryError::NotAffine { tile: 0 })
        ));
    }
}
