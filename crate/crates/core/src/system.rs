//! Maps on boxes and tori: evaluation, iteration, Jacobians.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expr, ExprError};

/// Tolerance for `f(f^{-1}(x)) = x` on the verification grid.
pub const TAU_INV: f64 = 1e-8;
/// Tolerance for explicit Jacobians against central differences.
pub const TAU_JAC: f64 = 1e-8;
/// Central-difference step.
pub const H_FD: f64 = 1e-6;
/// Safety factor applied to the sampled Jacobian norm when estimating `L`.
pub const LIPSCHITZ_SAFETY: f64 = 1.5;

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("{field}[{index}]: {source}")]
    Parse {
        field: String,
        index: usize,
        source: ExprError,
    },
    #[error("expression evaluation failed at {x:?}")]
    Evaluation { x: Vec<f64> },
    #[error("point {x:?} lies outside the non-periodic domain")]
    OutsideDomain { x: Vec<f64> },
    #[error("inverse map requested but none was supplied")]
    MissingInverse,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("map and inverse disagree: max |f(f^-1(x)) - x| = {max_error:e} exceeds {tolerance:e}")]
    InverseMismatch { max_error: f64, tolerance: f64 },
    #[error("explicit Jacobian disagrees with finite differences: max error {max_error:e} exceeds {tolerance:e}")]
    JacobianMismatch { max_error: f64, tolerance: f64 },
    #[error("Newton preimage search failed near {guess:?}")]
    PreimageFailed { guess: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub periodic: bool,
}

impl Axis {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// A rectangular box; periodic axes turn it into a (partial) torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub axes: Vec<Axis>,
}

impl Domain {
    pub fn new(axes: Vec<Axis>) -> Result<Self, SystemError> {
        if axes.is_empty() {
            return Err(SystemError::InvalidDomain("dimension must be positive".into()));
        }
        for (i, a) in axes.iter().enumerate() {
            if !(a.lo.is_finite() && a.hi.is_finite() && a.lo < a.hi) {
                return Err(SystemError::InvalidDomain(format!(
                    "axis {i} has bounds [{}, {}]",
                    a.lo, a.hi
                )));
            }
        }
        Ok(Self { axes })
    }

    pub fn unit_torus(dim: usize) -> Self {
        Self {
            axes: vec![
                Axis {
                    lo: 0.0,
                    hi: 1.0,
                    periodic: true
                };
                dim
            ],
        }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// Wraps periodic coordinates into `[lo, hi)`.
    pub fn wrap(&self, x: &mut [f64]) {
        for (v, a) in x.iter_mut().zip(&self.axes) {
            if a.periodic {
                *v = wrap_scalar(*v, a.lo, a.hi);
            }
        }
    }

    pub fn wrapped(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        self.wrap(&mut y);
        y
    }

    /// Whether `x` is inside the domain; periodic axes accept any value.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.axes)
            .all(|(v, a)| v.is_finite() && (a.periodic || (*v >= a.lo && *v <= a.hi)))
    }

    /// Displacement `b - a`, using the minimal image on periodic axes.
    pub fn delta(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(b)
            .zip(&self.axes)
            .map(|((p, q), ax)| {
                let d = q - p;
                if ax.periodic {
                    minimal_image(d, ax.width())
                } else {
                    d
                }
            })
            .collect()
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        norm(&self.delta(a, b))
    }

    /// Representative of `x` closest to `reference` (periodic axes shifted by whole periods).
    pub fn lift_near(&self, x: &[f64], reference: &[f64]) -> Vec<f64> {
        let d = self.delta(reference, x);
        reference.iter().zip(d).map(|(r, d)| r + d).collect()
    }

    pub fn diameter(&self) -> f64 {
        self.axes
            .iter()
            .map(|a| {
                let w = if a.periodic { a.width() / 2.0 } else { a.width() };
                w * w
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Cell-centred grid with `per_axis` points along every axis.
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        let total = per_axis.pow(d as u32);
        (0..total)
            .map(|mut idx| {
                (0..d)
                    .map(|j| {
                        let i = idx % per_axis;
                        idx /= per_axis;
                        let a = &self.axes[j];
                        a.lo + (i as f64 + 0.5) / per_axis as f64 * a.width()
                    })
                    .collect()
            })
            .collect()
    }
}

pub fn wrap_scalar(v: f64, lo: f64, hi: f64) -> f64 {
    let w = hi - lo;
    let r = lo + (v - lo).rem_euclid(w);
    if r >= hi {
        lo
    } else {
        r
    }
}

pub fn minimal_image(d: f64, period: f64) -> f64 {
    d - period * (d / period).round()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Per-axis count giving roughly `target` grid points in dimension `d`.
pub fn per_axis_for(target: usize, d: usize) -> usize {
    let n = (target as f64).powf(1.0 / d as f64).ceil() as usize;
    n.max(2)
}

#[derive(Debug, Clone)]
pub struct CompiledExpr {
    pub source: String,
    pub expr: Expr,
}

#[derive(Debug, Clone)]
struct ExprMap {
    forward: Vec<CompiledExpr>,
    inverse: Option<Vec<CompiledExpr>>,
    jacobian: Option<Vec<Vec<CompiledExpr>>>,
}

/// Radial C^1 bump translation: `x -> x + phi(|x - c| / r) * displacement`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Vec<f64>,
    pub radius: f64,
    pub displacement: Vec<f64>,
}

/// `phi(rho) = (1 - rho^2)^2` on `[0, 1)`, zero outside.
pub fn bump_profile(rho: f64) -> f64 {
    if rho >= 1.0 {
        0.0
    } else {
        let s = 1.0 - rho * rho;
        s * s
    }
}

/// Largest slope of the bump profile, attained at `rho = 1/sqrt(3)`.
pub const BUMP_MAX_SLOPE: f64 = 1.539_600_717_839_002; // 8 / (3 sqrt 3)

#[derive(Debug, Clone)]
struct PerturbedMap {
    base: Arc<MapSystem>,
    bumps: Vec<Bump>,
}

#[derive(Debug, Clone)]
enum MapKind {
    Expr(ExprMap),
    Perturbed(PerturbedMap),
}

/// A map `f` on a box or torus. Immutable once built.
#[derive(Debug, Clone)]
pub struct MapSystem {
    name: String,
    domain: Domain,
    kind: MapKind,
    lipschitz: f64,
    lipschitz_estimated: bool,
}

/// Builder input for an expression-defined map.
#[derive(Debug, Clone, Default)]
pub struct MapSpec {
    pub name: String,
    pub map: Vec<String>,
    pub inverse: Option<Vec<String>>,
    pub jacobian: Option<Vec<Vec<String>>>,
    pub lipschitz: Option<f64>,
    pub params: BTreeMap<String, f64>,
}

fn compile(
    field: &str,
    sources: &[String],
    dim: usize,
    params: &BTreeMap<String, f64>,
) -> Result<Vec<CompiledExpr>, SystemError> {
    sources
        .iter()
        .enumerate()
        .map(|(index, src)| {
            Expr::parse(src, dim, params)
                .map(|expr| CompiledExpr {
                    source: src.clone(),
                    expr,
                })
                .map_err(|source| SystemError::Parse {
                    field: field.to_string(),
                    index,
                    source,
                })
        })
        .collect()
}

impl MapSystem {
    /// Builds and verifies an expression map: the inverse (if any) must match to
    /// `TAU_INV` and the Jacobian (if any) must match central differences to `TAU_JAC`
    /// on a fixed grid of about 10^3 points.
    pub fn from_spec(domain: Domain, spec: MapSpec) -> Result<Self, SystemError> {
        let d = domain.dim();
        if spec.map.len() != d {
            return Err(SystemError::DimensionMismatch {
                expected: d,
                got: spec.map.len(),
            });
        }
        let forward = compile("map", &spec.map, d, &spec.params)?;
        let inverse = match &spec.inverse {
            Some(inv) if inv.len() != d => {
                return Err(SystemError::DimensionMismatch {
                    expected: d,
                    got: inv.len(),
                })
            }
            Some(inv) => Some(compile("inverse", inv, d, &spec.params)?),
            None => None,
        };
        let jacobian = match &spec.jacobian {
            Some(rows) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(SystemError::DimensionMismatch {
                        expected: d,
                        got: rows.len(),
                    });
                }
                let mut out = Vec::with_capacity(d);
                for (i, row) in rows.iter().enumerate() {
                    out.push(compile(&format!("jacobian[{i}]"), row, d, &spec.params)?);
                }
                Some(out)
            }
            None => None,
        };
        if let Some(l) = spec.lipschitz {
            if !(l > 0.0 && l.is_finite()) {
                return Err(SystemError::InvalidDomain(format!(
                    "lipschitz bound must be positive, got {l}"
                )));
            }
        }
        let mut sys = MapSystem {
            name: spec.name,
            domain,
            kind: MapKind::Expr(ExprMap {
                forward,
                inverse,
                jacobian,
            }),
            lipschitz: spec.lipschitz.unwrap_or(1.0),
            lipschitz_estimated: spec.lipschitz.is_none(),
        };
        sys.verify()?;
        if spec.lipschitz.is_none() {
            sys.lipschitz = sys.estimate_lipschitz();
        }
        Ok(sys)
    }

    /// `g = f o h`, where `h` is the composition of disjointly supported bump translations.
    pub fn perturbed(base: Arc<MapSystem>, bumps: Vec<Bump>) -> Self {
        let max_slope = bumps
            .iter()
            .map(|b| BUMP_MAX_SLOPE * norm(&b.displacement) / b.radius)
            .fold(0.0, f64::max);
        MapSystem {
            name: format!("{} (perturbed)", base.name),
            domain: base.domain.clone(),
            lipschitz: base.lipschitz * (1.0 + max_slope),
            lipschitz_estimated: base.lipschitz_estimated,
            kind: MapKind::Perturbed(PerturbedMap { base, bumps }),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn lipschitz_estimated(&self) -> bool {
        self.lipschitz_estimated
    }

    pub fn has_inverse(&self) -> bool {
        match &self.kind {
            MapKind::Expr(m) => m.inverse.is_some(),
            MapKind::Perturbed(p) => p.base.has_inverse(),
        }
    }

    pub fn has_explicit_jacobian(&self) -> bool {
        match &self.kind {
            MapKind::Expr(m) => m.jacobian.is_some(),
            MapKind::Perturbed(_) => true,
        }
    }

    /// Bumps of a perturbed system; empty for expression maps.
    pub fn bumps(&self) -> &[Bump] {
        match &self.kind {
            MapKind::Expr(_) => &[],
            MapKind::Perturbed(p) => &p.bumps,
        }
    }

    pub fn base(&self) -> Option<&Arc<MapSystem>> {
        match &self.kind {
            MapKind::Expr(_) => None,
            MapKind::Perturbed(p) => Some(&p.base),
        }
    }

    /// Source strings `(map, inverse, jacobian)` for expression systems.
    pub fn sources(&self) -> Option<(Vec<String>, Option<Vec<String>>, Option<Vec<Vec<String>>>)> {
        match &self.kind {
            MapKind::Expr(m) => Some((
                m.forward.iter().map(|c| c.source.clone()).collect(),
                m.inverse
                    .as_ref()
                    .map(|v| v.iter().map(|c| c.source.clone()).collect()),
                m.jacobian.as_ref().map(|rows| {
                    rows.iter()
                        .map(|r| r.iter().map(|c| c.source.clone()).collect())
                        .collect()
                }),
            )),
            MapKind::Perturbed(_) => None,
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<Vec<f64>, SystemError> {
        if x.len() != self.dimension() {
            return Err(SystemError::DimensionMismatch {
                expected: self.dimension(),
                got: x.len(),
            });
        }
        if !self.domain.contains(x) {
            return Err(SystemError::OutsideDomain { x: x.to_vec() });
        }
        Ok(self.domain.wrapped(x))
    }

    fn eval_exprs(&self, exprs: &[CompiledExpr], x: &[f64]) -> Result<Vec<f64>, SystemError> {
        let mut y: Vec<f64> = exprs.iter().map(|e| e.expr.eval(x)).collect();
        if y.iter().any(|v| !v.is_finite()) {
            return Err(SystemError::Evaluation { x: x.to_vec() });
        }
        self.domain.wrap(&mut y);
        Ok(y)
    }

    /// `f(x)` with periodic axes wrapped. Images may leave a non-periodic box;
    /// feeding such a point back in fails with `OutsideDomain`.
    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>, SystemError> {
        let x = self.check_input(x)?;
        match &self.kind {
            MapKind::Expr(m) => self.eval_exprs(&m.forward, &x),
            MapKind::Perturbed(p) => p.base.evaluate(&p.apply_bumps(&self.domain, &x)),
        }
    }

    pub fn evaluate_inverse(&self, x: &[f64]) -> Result<Vec<f64>, SystemError> {
        let x = self.check_input(x)?;
        match &self.kind {
            MapKind::Expr(m) => match &m.inverse {
                Some(inv) => self.eval_exprs(inv, &x),
                None => Err(SystemError::MissingInverse),
            },
            MapKind::Perturbed(p) => {
                let y = p.base.evaluate_inverse(&x)?;
                Ok(p.invert_bumps(&self.domain, &y))
            }
        }
    }

    /// Orbit segment of length `|n|`; negative `n` iterates the inverse.
    pub fn iterate(&self, x: &[f64], n: i64) -> Result<OrbitSegment, SystemError> {
        if n < 0 && !self.has_inverse() {
            return Err(SystemError::MissingInverse);
        }
        let mut points = Vec::with_capacity(n.unsigned_abs() as usize + 1);
        points.push(self.check_input(x)?);
        for _ in 0..n.unsigned_abs() {
            let last = points.last().unwrap();
            let next = if n >= 0 {
                self.evaluate(last)?
            } else {
                self.evaluate_inverse(last)?
            };
            points.push(next);
        }
        Ok(OrbitSegment {
            base: x.to_vec(),
            points,
        })
    }

    /// `f^n(x)` without keeping the intermediate points.
    pub fn power(&self, x: &[f64], n: i64) -> Result<Vec<f64>, SystemError> {
        let mut y = self.check_input(x)?;
        for _ in 0..n.unsigned_abs() {
            y = if n >= 0 {
                self.evaluate(&y)?
            } else {
                self.evaluate_inverse(&y)?
            };
        }
        Ok(y)
    }

    /// Explicit Jacobian when available, else central differences with step `H_FD`.
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, SystemError> {
        let xw = self.check_input(x)?;
        match &self.kind {
            MapKind::Expr(m) => match &m.jacobian {
                Some(rows) => {
                    let d = self.dimension();
                    let mut jac = DMatrix::zeros(d, d);
                    for (i, row) in rows.iter().enumerate() {
                        for (j, e) in row.iter().enumerate() {
                            let v = e.expr.eval(&xw);
                            if !v.is_finite() {
                                return Err(SystemError::Evaluation { x: xw });
                            }
                            jac[(i, j)] = v;
                        }
                    }
                    Ok(jac)
                }
                None => self.fd_jacobian(&xw),
            },
            MapKind::Perturbed(p) => {
                let hx = p.apply_bumps(&self.domain, &xw);
                let dh = p.bump_jacobian(&self.domain, &xw);
                Ok(p.base.jacobian(&hx)? * dh)
            }
        }
    }

    /// Central-difference Jacobian; differences use the minimal image on periodic axes.
    pub fn fd_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, SystemError> {
        let d = self.dimension();
        let mut jac = DMatrix::zeros(d, d);
        for j in 0..d {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += H_FD;
            xm[j] -= H_FD;
            let ax = &self.domain.axes[j];
            if !ax.periodic {
                xp[j] = xp[j].min(ax.hi);
                xm[j] = xm[j].max(ax.lo);
            }
            let h = xp[j] - xm[j];
            let fp = self.evaluate(&xp)?;
            let fm = self.evaluate(&xm)?;
            let diff = self.domain.delta(&fm, &fp);
            for i in 0..d {
                jac[(i, j)] = diff[i] / h;
            }
        }
        Ok(jac)
    }

    /// Jacobian of `f^n` at `x` by the chain rule along the orbit.
    pub fn jacobian_power(&self, x: &[f64], n: usize) -> Result<DMatrix<f64>, SystemError> {
        let d = self.dimension();
        let mut acc = DMatrix::identity(d, d);
        let mut y = self.check_input(x)?;
        for _ in 0..n {
            acc = self.jacobian(&y)? * acc;
            y = self.evaluate(&y)?;
        }
        Ok(acc)
    }

    /// Solves `f(x) = y` by Newton's method starting at `guess`.
    pub fn preimage_near(&self, y: &[f64], guess: &[f64]) -> Result<Vec<f64>, SystemError> {
        if self.has_inverse() {
            return self.evaluate_inverse(y);
        }
        let mut x = self.domain.wrapped(guess);
        for _ in 0..60 {
            let fx = self.evaluate(&x)?;
            let r = self.domain.delta(y, &fx);
            if norm(&r) < 1e-15 {
                return Ok(x);
            }
            let jac = self.jacobian(&x)?;
            let step = jac
                .lu()
                .solve(&nalgebra::DVector::from_vec(r))
                .ok_or_else(|| SystemError::PreimageFailed {
                    guess: guess.to_vec(),
                })?;
            for (xi, s) in x.iter_mut().zip(step.iter()) {
                *xi -= s;
            }
            self.domain.wrap(&mut x);
        }
        let fx = self.evaluate(&x)?;
        if self.domain.distance(&fx, y) < 1e-12 {
            Ok(x)
        } else {
            Err(SystemError::PreimageFailed {
                guess: guess.to_vec(),
            })
        }
    }

    fn verify(&self) -> Result<(), SystemError> {
        let MapKind::Expr(m) = &self.kind else {
            return Ok(());
        };
        let grid = self.domain.grid(per_axis_for(1000, self.dimension()));
        if m.inverse.is_some() {
            let mut worst: f64 = 0.0;
            for x in &grid {
                let Ok(xi) = self.evaluate_inverse(x) else { continue };
                let Ok(back) = self.evaluate(&xi) else { continue };
                worst = worst.max(self.domain.distance(&back, x));
            }
            if worst >= TAU_INV {
                return Err(SystemError::InverseMismatch {
                    max_error: worst,
                    tolerance: TAU_INV,
                });
            }
        }
        if m.jacobian.is_some() {
            let mut worst: f64 = 0.0;
            for x in &grid {
                let (Ok(exact), Ok(fd)) = (self.jacobian(x), self.fd_jacobian(x)) else {
                    continue;
                };
                let scale = exact.amax().max(1.0);
                worst = worst.max((exact - fd).amax() / scale);
            }
            if worst >= TAU_JAC {
                return Err(SystemError::JacobianMismatch {
                    max_error: worst,
                    tolerance: TAU_JAC,
                });
            }
        }
        Ok(())
    }

    /// 1.5 x the largest operator norm of the Jacobian over a 10^d grid.
    fn estimate_lipschitz(&self) -> f64 {
        let grid = self.domain.grid(10);
        let worst = grid
            .iter()
            .filter_map(|x| self.jacobian(x).ok())
            .map(|j| operator_norm(&j))
            .fold(0.0, f64::max);
        if worst > 0.0 {
            LIPSCHITZ_SAFETY * worst
        } else {
            LIPSCHITZ_SAFETY
        }
    }
}

pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

impl PerturbedMap {
    fn apply_bumps(&self, domain: &Domain, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for b in &self.bumps {
            let rho = domain.distance(&b.center, x) / b.radius;
            let w = bump_profile(rho);
            if w > 0.0 {
                for (yi, di) in y.iter_mut().zip(&b.displacement) {
                    *yi += w * di;
                }
            }
        }
        domain.wrap(&mut y);
        y
    }

    fn bump_jacobian(&self, domain: &Domain, x: &[f64]) -> DMatrix<f64> {
        let d = x.len();
        let mut jac = DMatrix::identity(d, d);
        for b in &self.bumps {
            let delta = domain.delta(&b.center, x);
            let rho = norm(&delta) / b.radius;
            if rho >= 1.0 {
                continue;
            }
            // grad phi = -4 (1 - rho^2) delta / r^2
            let c = -4.0 * (1.0 - rho * rho) / (b.radius * b.radius);
            for i in 0..d {
                for j in 0..d {
                    jac[(i, j)] += b.displacement[i] * c * delta[j];
                }
            }
        }
        jac
    }

    /// Inverts `h` by fixed-point iteration; `h - id` is a contraction when
    /// `BUMP_MAX_SLOPE * |displacement| / radius < 1`.
    fn invert_bumps(&self, domain: &Domain, z: &[f64]) -> Vec<f64> {
        let mut y = z.to_vec();
        for _ in 0..500 {
            let mut next = z.to_vec();
            for b in &self.bumps {
                let w = bump_profile(domain.distance(&b.center, &y) / b.radius);
                for (ni, di) in next.iter_mut().zip(&b.displacement) {
                    *ni -= w * di;
                }
            }
            domain.wrap(&mut next);
            let change = domain.distance(&next, &y);
            y = next;
            if change < 1e-16 {
                break;
            }
        }
        y
    }
}

/// `points[k + 1] = f(points[k])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitSegment {
    pub base: Vec<f64>,
    pub points: Vec<Vec<f64>>,
}

impl OrbitSegment {
    pub fn len(&self) -> usize {
        self.points.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn last(&self) -> &[f64] {
        self.points.last().expect("segment always holds its base point")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn evaluate_examples() {
        let dbl = models::doubling();
        assert!(close(&dbl.evaluate(&[0.3]).unwrap(), &[0.6], 1e-15));
        let cat = models::cat_map();
        assert_eq!(cat.evaluate(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(cat.evaluate(&[0.5, 0.5]).unwrap(), vec![0.5, 0.0]);
    }

    #[test]
    fn evaluate_rejects_points_outside_box() {
        let saddle = models::linear_saddle();
        assert!(matches!(
            saddle.evaluate(&[1.5, 0.0]),
            Err(SystemError::OutsideDomain { .. })
        ));
        assert!(saddle.evaluate(&[0.75, 0.0]).is_ok());
    }

    #[test]
    fn iterate_examples() {
        let dbl = models::doubling();
        let seg = dbl.iterate(&[0.1], 3).unwrap();
        assert_eq!(seg.len(), 3);
        assert!((seg.last()[0] - 0.8).abs() < 1e-15);
        let seg = dbl.iterate(&[0.1], 0).unwrap();
        assert_eq!(seg.points, vec![vec![0.1]]);
        let rot = models::rotation(0.25);
        let seg = rot.iterate(&[0.0], 4).unwrap();
        assert_eq!(seg.last(), &[0.0]);
    }

    #[test]
    fn backward_iteration_needs_inverse() {
        let dbl = models::doubling();
        assert!(matches!(dbl.iterate(&[0.1], -1), Err(SystemError::MissingInverse)));
        let cat = models::cat_map();
        let seg = cat.iterate(&[0.2, 0.7], -3).unwrap();
        let fwd = cat.power(seg.last(), 3).unwrap();
        assert!(cat.domain().distance(&fwd, &[0.2, 0.7]) < 1e-12);
    }

    #[test]
    fn jacobian_examples() {
        let cat = models::cat_map();
        let j = cat.jacobian(&[0.3, 0.9]).unwrap();
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]));
        let dbl = models::doubling();
        let j = dbl.jacobian(&[0.4]).unwrap();
        assert!((j[(0, 0)] - 2.0).abs() < 1e-8);
        // k = 0 standard map, analytic derivative [[1,1],[0,1]]
        let std0 = models::standard_map(0.0);
        let j = std0.jacobian(&[0.37, 0.81]).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!((j - expected).amax() < 1e-12);
    }

    #[test]
    fn fd_jacobian_handles_wraparound() {
        let cat = models::cat_map();
        // x near the seam: f(x +- h) straddles 0 / 1
        let j = cat.fd_jacobian(&[0.0, 0.0]).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
        assert!((j - expected).amax() < TAU_JAC);
    }

    #[test]
    fn mismatched_inverse_is_rejected() {
        let spec = MapSpec {
            name: "bad".into(),
            map: vec!["2*x1".into()],
            inverse: Some(vec!["x1/3".into()]),
            ..Default::default()
        };
        let err = MapSystem::from_spec(Domain::unit_torus(1), spec).unwrap_err();
        assert!(matches!(err, SystemError::InverseMismatch { .. }));
    }

    #[test]
    fn mismatched_jacobian_is_rejected() {
        let spec = MapSpec {
            name: "bad".into(),
            map: vec!["2*x1".into()],
            jacobian: Some(vec![vec!["3".into()]]),
            ..Default::default()
        };
        let err = MapSystem::from_spec(Domain::unit_torus(1), spec).unwrap_err();
        assert!(matches!(err, SystemError::JacobianMismatch { .. }));
    }

    #[test]
    fn lipschitz_is_estimated_with_safety_factor() {
        let cat = models::cat_map();
        let phi2 = (3.0 + 5f64.sqrt()) / 2.0;
        assert!((cat.lipschitz() - 1.5 * phi2).abs() < 1e-9);
        let dbl = models::doubling();
        assert!((dbl.lipschitz() - 3.0).abs() < 1e-6);
    }

    #[test]
    fn perturbed_map_moves_bump_center_exactly() {
        let base = Arc::new(models::rotation(0.25));
        let bump = Bump {
            center: vec![0.5],
            radius: 0.01,
            displacement: vec![0.003],
        };
        let g = MapSystem::perturbed(base.clone(), vec![bump]);
        let y = g.evaluate(&[0.5]).unwrap();
        assert!((y[0] - 0.753).abs() < 1e-15);
        // outside the ball nothing changes
        assert_eq!(g.evaluate(&[0.52]).unwrap(), base.evaluate(&[0.52]).unwrap());
        // inverse round trip inside the ball
        let x = [0.505];
        let back = g.evaluate_inverse(&g.evaluate(&x).unwrap()).unwrap();
        assert!((back[0] - x[0]).abs() < 1e-14);
        // analytic Jacobian against differences
        let exact = g.jacobian(&[0.504]).unwrap();
        let fd = g.fd_jacobian(&[0.504]).unwrap();
        assert!((exact - fd).amax() < 1e-6);
    }

    #[test]
    fn domain_helpers() {
        let t = Domain::unit_torus(1);
        assert_eq!(t.delta(&[0.95], &[0.05]), vec![0.10000000000000009]);
        assert_eq!(t.lift_near(&[0.02], &[0.99]), vec![1.02]);
        assert_eq!(wrap_scalar(-1e-17, 0.0, 1.0), 0.0);
        assert_eq!(wrap_scalar(1.0, 0.0, 1.0), 0.0);
        assert_eq!(t.grid(4), vec![vec![0.125], vec![0.375], vec![0.625], vec![0.875]]);
    }
}
