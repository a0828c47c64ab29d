use serde::{Deserialize, Serialize};

use super::PeriodicError;
use crate::system::{norm, MapSystem, SystemError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManifoldParams {
    /// Offset of the first point from the anchor along the eigenvector.
    pub delta_loc: f64,
    /// Largest gap between consecutive polyline points.
    pub h_man: f64,
    /// Largest turning angle between consecutive segments, in degrees.
    pub angle_deg: f64,
    /// Default arclength budget per branch.
    pub arclength: f64,
    pub max_points: usize,
}

impl Default for ManifoldParams {
    fn default() -> Self {
        Self {
            delta_loc: 1e-6,
            h_man: 1e-3,
            angle_deg: 10.0,
            arclength: 4.0,
            max_points: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
}

/// Linearisation of `f^period` at a planar saddle point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleData {
    pub point: Vec<f64>,
    pub period: usize,
    pub lambda_u: f64,
    pub lambda_s: f64,
    /// Unit eigenvectors, oriented with a positive first nonzero entry.
    pub v_u: [f64; 2],
    pub v_s: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldCurve {
    pub anchor: Vec<f64>,
    pub period: usize,
    pub stability: Stability,
    pub branch: i8,
    /// Wrapped points; consecutive points are closer than `h_man` in the minimal image.
    pub points: Vec<Vec<f64>>,
    pub arclength: f64,
    /// The branch left a non-periodic domain, so it is traced in full.
    pub complete: bool,
}

fn eigvec(j: &nalgebra::DMatrix<f64>, lambda: f64) -> [f64; 2] {
    let a = [j[(0, 1)], lambda - j[(0, 0)]];
    let b = [lambda - j[(1, 1)], j[(1, 0)]];
    let v = if norm(&a) >= norm(&b) { a } else { b };
    let n = norm(&v);
    let mut v = [v[0] / n, v[1] / n];
    if v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0) {
        v = [-v[0], -v[1]];
    }
    v
}

pub fn saddle_data(sys: &MapSystem, x: &[f64], period: usize) -> Result<SaddleData, PeriodicError> {
    if sys.dimension() != 2 {
        return Err(PeriodicError::UnsupportedDimension(sys.dimension()));
    }
    let j = sys.jacobian_power(x, period)?;
    let tr = j[(0, 0)] + j[(1, 1)];
    let det = j.determinant();
    let disc = tr * tr - 4.0 * det;
    let not_saddle = |re: [f64; 2], im: f64| {
        PeriodicError::NotSaddle(vec![[re[0], im], [re[1], -im]])
    };
    if disc <= 0.0 {
        let im = (-disc).sqrt() / 2.0;
        return Err(not_saddle([tr / 2.0, tr / 2.0], im));
    }
    let s = disc.sqrt();
    let (l1, l2) = ((tr + s) / 2.0, (tr - s) / 2.0);
    let (lu, ls) = if l1.abs() >= l2.abs() { (l1, l2) } else { (l2, l1) };
    if !(lu.abs() > 1.0 && ls.abs() < 1.0) {
        return Err(not_saddle([lu, ls], 0.0));
    }
    Ok(SaddleData {
        point: x.to_vec(),
        period,
        lambda_u: lu,
        lambda_s: ls,
        v_u: eigvec(&j, lu),
        v_s: eigvec(&j, ls),
    })
}

/// Grows one branch of `W^u` or `W^s` of the saddle `anchor` of period `period`.
///
/// The first fundamental segment is the straight piece from `q0 = anchor + branch * delta_loc * v`
/// to `G(q0)`, with `G = f^{+-period}` (squared for a negative multiplier). Each later piece is the
/// `G`-image of the previous one, refined by bisection in the parameter of the first segment.
pub fn grow_manifold(
    sys: &MapSystem,
    anchor: &[f64],
    period: usize,
    stability: Stability,
    branch: i8,
    budget: f64,
    params: &ManifoldParams,
) -> Result<ManifoldCurve, PeriodicError> {
    let sd = saddle_data(sys, anchor, period)?;
    if stability == Stability::Stable && !sys.has_inverse() {
        return Err(SystemError::MissingInverse.into());
    }
    let dom = sys.domain();
    let (lambda, v, sign) = match stability {
        Stability::Unstable => (sd.lambda_u, sd.v_u, 1i64),
        Stability::Stable => (sd.lambda_s, sd.v_s, -1i64),
    };
    let steps = sign * period as i64 * if lambda < 0.0 { 2 } else { 1 };
    let b = if branch < 0 { -1.0 } else { 1.0 };
    let q0: Vec<f64> = anchor
        .iter()
        .zip(v)
        .map(|(a, vi)| a + b * params.delta_loc * vi)
        .collect();
    let mut curve = ManifoldCurve {
        anchor: anchor.to_vec(),
        period,
        stability,
        branch: if branch < 0 { -1 } else { 1 },
        points: Vec::new(),
        arclength: 0.0,
        complete: false,
    };
    if !dom.contains(&q0) {
        curve.complete = true;
        return Ok(curve);
    }
    let q0 = dom.wrapped(&q0);
    let q1 = dom.lift_near(&sys.power(&q0, steps)?, &q0);
    let seg = |t: f64| -> Vec<f64> {
        let x: Vec<f64> = q0.iter().zip(&q1).map(|(a, c)| a + t * (c - a)).collect();
        dom.wrapped(&x)
    };
    let eval = |t: f64, level: i64| -> Option<Vec<f64>> {
        let y = sys.power(&seg(t), steps * level).ok()?;
        dom.contains(&y).then_some(y)
    };
    let cos_max = params.angle_deg.to_radians().cos();
    let mut piece: Vec<(f64, Vec<f64>)> = vec![(0.0, q0.clone()), (1.0, dom.wrapped(&q1))];
    let mut level = 0i64;
    loop {
        refine(&mut piece, level, params.h_man, cos_max, sys, &eval);
        let skip = usize::from(!curve.points.is_empty());
        for (_, p) in piece.iter().skip(skip) {
            if let Some(last) = curve.points.last() {
                curve.arclength += dom.distance(last, p);
            }
            curve.points.push(p.clone());
            if curve.arclength >= budget || curve.points.len() >= params.max_points {
                return Ok(curve);
            }
        }
        let mut next = Vec::with_capacity(piece.len());
        for (t, p) in &piece {
            match sys.power(p, steps).ok().filter(|y| dom.contains(y)) {
                Some(y) => next.push((*t, y)),
                None => {
                    curve.complete = true;
                    break;
                }
            }
        }
        level += 1;
        if curve.complete {
            if next.len() > 1 {
                refine(&mut next, level, params.h_man, cos_max, sys, &eval);
                for (_, p) in next.iter().skip(1) {
                    curve.arclength += dom.distance(curve.points.last().unwrap(), p);
                    curve.points.push(p.clone());
                }
            }
            return Ok(curve);
        }
        piece = next;
    }
}

fn refine<F>(piece: &mut Vec<(f64, Vec<f64>)>, level: i64, h: f64, cos_max: f64, sys: &MapSystem, eval: &F)
where
    F: Fn(f64, i64) -> Option<Vec<f64>>,
{
    let dom = sys.domain();
    for _ in 0..64 {
        let n = piece.len();
        let mut split = vec![false; n.saturating_sub(1)];
        let deltas: Vec<Vec<f64>> = (0..n - 1).map(|i| dom.delta(&piece[i].1, &piece[i + 1].1)).collect();
        for (i, d) in deltas.iter().enumerate() {
            if norm(d) >= h {
                split[i] = true;
            }
        }
        for i in 1..n - 1 {
            let (a, c) = (&deltas[i - 1], &deltas[i]);
            let na = norm(a);
            let nc = norm(c);
            if na > 0.0 && nc > 0.0 && (a[0] * c[0] + a[1] * c[1]) / (na * nc) < cos_max {
                split[i - 1] = true;
                split[i] = true;
            }
        }
        let mut changed = false;
        let mut out = Vec::with_capacity(n * 2);
        for i in 0..n - 1 {
            out.push(piece[i].clone());
            let (t0, t1) = (piece[i].0, piece[i + 1].0);
            if split[i] && t1 - t0 > 1e-14 {
                let tm = 0.5 * (t0 + t1);
                if let Some(p) = eval(tm, level) {
                    out.push((tm, p));
                    changed = true;
                }
            }
        }
        out.push(piece[n - 1].clone());
        *piece = out;
        if !changed {
            break;
        }
    }
}
