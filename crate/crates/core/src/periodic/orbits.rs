use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PeriodicError;
use crate::graph::RegionBox;
use crate::system::{norm, per_axis_for, Domain, MapSystem};

/// Residual bound for accepted periodic orbits.
pub const TAU_ORB: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitParams {
    /// Seeds per axis; `0` picks about 400 seeds in total.
    pub seeds_per_axis: usize,
    pub max_newton_iter: usize,
    /// Seed displacement as a fraction of the seed spacing, drawn from the run seed.
    pub jitter: f64,
}

impl Default for OrbitParams {
    fn default() -> Self {
        Self {
            seeds_per_axis: 0,
            max_newton_iter: 60,
            jitter: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub period: usize,
    /// `points[i + 1] = f(points[i])`; `points[0]` is the lexicographically smallest.
    pub points: Vec<Vec<f64>>,
    /// Eigenvalues of `D f^period` at `points[0]`, by decreasing modulus.
    pub multipliers: Vec<Complex64>,
    pub residual: f64,
}

impl PeriodicOrbit {
    pub fn dimension(&self) -> usize {
        self.points[0].len()
    }

    /// `min_i |f(points[i]) - y|` style distance from `y` to the orbit.
    pub fn distance_to(&self, domain: &Domain, y: &[f64]) -> f64 {
        self.points
            .iter()
            .map(|p| domain.distance(p, y))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitSearch {
    pub orbits: Vec<PeriodicOrbit>,
    pub seeds: usize,
    /// Seeds abandoned because `D f^r - I` was singular.
    pub singular_seeds: usize,
    /// Seeds abandoned because Newton left the domain or did not converge.
    pub failed_seeds: usize,
}

enum SeedOutcome {
    Converged(Vec<f64>),
    Singular,
    Failed,
}

fn newton(sys: &MapSystem, seed: &[f64], r: usize, max_iter: usize) -> SeedOutcome {
    let dom = sys.domain();
    let d = sys.dimension();
    let mut x = dom.wrapped(seed);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..=max_iter {
        let Ok(fx) = sys.power(&x, r as i64) else {
            return SeedOutcome::Failed;
        };
        let res = dom.delta(&x, &fx);
        let rn = norm(&res);
        if best.as_ref().is_none_or(|(b, _)| rn < *b) {
            best = Some((rn, x.clone()));
        }
        if rn < 1e-14 {
            break;
        }
        let Ok(jac) = sys.jacobian_power(&x, r) else {
            return SeedOutcome::Failed;
        };
        let dfm = jac - DMatrix::identity(d, d);
        let Some(step) = dfm.clone().lu().solve(&DVector::from_vec(res)) else {
            return if rn < TAU_ORB {
                break_with(best)
            } else {
                SeedOutcome::Singular
            };
        };
        if step.iter().any(|v| !v.is_finite()) || dfm.determinant().abs() < 1e-12 {
            return if rn < TAU_ORB {
                break_with(best)
            } else {
                SeedOutcome::Singular
            };
        }
        for (xi, s) in x.iter_mut().zip(step.iter()) {
            *xi -= s;
        }
        if !dom.contains(&x) {
            return SeedOutcome::Failed;
        }
        dom.wrap(&mut x);
    }
    break_with(best)
}

fn break_with(best: Option<(f64, Vec<f64>)>) -> SeedOutcome {
    match best {
        Some((rn, x)) if rn < TAU_ORB => SeedOutcome::Converged(x),
        _ => SeedOutcome::Failed,
    }
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    a.partial_cmp(b) == Some(std::cmp::Ordering::Less)
}

/// Builds the orbit through `x` at its minimal period dividing `r`.
fn assemble(sys: &MapSystem, x: &[f64], r: usize) -> Result<Option<PeriodicOrbit>, PeriodicError> {
    let dom = sys.domain();
    let mut period = r;
    for p in 1..r {
        if r.is_multiple_of(p) && dom.distance(&sys.power(x, p as i64)?, x) < TAU_ORB {
            period = p;
            break;
        }
    }
    let seg = sys.iterate(x, period as i64)?;
    let mut pts: Vec<Vec<f64>> = seg.points[..period].to_vec();
    let start = (0..period)
        .reduce(|a, b| if lex_less(&pts[b], &pts[a]) { b } else { a })
        .unwrap();
    pts.rotate_left(start);
    let mut residual: f64 = 0.0;
    for i in 0..period {
        let img = sys.evaluate(&pts[i])?;
        residual = residual.max(dom.distance(&img, &pts[(i + 1) % period]));
    }
    if residual >= TAU_ORB {
        return Ok(None);
    }
    let jac = sys.jacobian_power(&pts[0], period)?;
    let mut multipliers: Vec<Complex64> = jac.complex_eigenvalues().iter().cloned().collect();
    multipliers.sort_by(|a, b| {
        b.norm()
            .partial_cmp(&a.norm())
            .unwrap()
            .then(b.re.partial_cmp(&a.re).unwrap())
            .then(b.im.partial_cmp(&a.im).unwrap())
    });
    Ok(Some(PeriodicOrbit {
        period,
        points: pts,
        multipliers,
        residual,
    }))
}

fn seeds(sys: &MapSystem, params: &OrbitParams, region: Option<&[RegionBox]>, seed: u64) -> Vec<Vec<f64>> {
    let dom = sys.domain();
    let d = dom.dim();
    let per_axis = if params.seeds_per_axis == 0 {
        per_axis_for(400, d)
    } else {
        params.seeds_per_axis
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dom.grid(per_axis)
        .into_iter()
        .map(|mut x| {
            if params.jitter > 0.0 {
                for (v, a) in x.iter_mut().zip(&dom.axes) {
                    let h = a.width() / per_axis as f64;
                    *v += params.jitter * h * (rng.gen::<f64>() - 0.5);
                }
            }
            x
        })
        .filter(|x| region.is_none_or(|boxes| in_region(boxes, x)))
        .collect()
}

pub(crate) fn in_region(boxes: &[RegionBox], x: &[f64]) -> bool {
    boxes.iter().any(|b| {
        x.iter()
            .enumerate()
            .all(|(j, v)| *v >= b.lo[j] && *v <= b.hi[j])
    })
}

/// Newton's method on `f^r - id` from a seed grid, for `r = 1..=max_period`.
/// Orbits are reported once, at their minimal period, ordered by period and first point.
pub fn find_periodic_orbits(
    sys: &MapSystem,
    max_period: usize,
    region: Option<&[RegionBox]>,
    params: &OrbitParams,
    seed: u64,
) -> Result<OrbitSearch, PeriodicError> {
    if max_period == 0 {
        return Err(PeriodicError::InvalidPeriod);
    }
    let dom = sys.domain();
    let seed_points = seeds(sys, params, region, seed);
    let mut search = OrbitSearch {
        orbits: Vec::new(),
        seeds: seed_points.len(),
        singular_seeds: 0,
        failed_seeds: 0,
    };
    for r in 1..=max_period {
        let outcomes: Vec<SeedOutcome> = seed_points
            .par_iter()
            .map(|s| newton(sys, s, r, params.max_newton_iter))
            .collect();
        for (s, outcome) in seed_points.iter().zip(outcomes) {
            let x = match outcome {
                SeedOutcome::Converged(x) => x,
                SeedOutcome::Singular => {
                    log::debug!("period {r}: singular Newton system at seed {s:?}, skipped");
                    search.singular_seeds += 1;
                    continue;
                }
                SeedOutcome::Failed => {
                    search.failed_seeds += 1;
                    continue;
                }
            };
            let Some(orbit) = assemble(sys, &x, r)? else {
                search.failed_seeds += 1;
                continue;
            };
            if let Some(boxes) = region {
                if !orbit.points.iter().any(|p| in_region(boxes, p)) {
                    continue;
                }
            }
            let duplicate = search.orbits.iter().any(|o| {
                o.period == orbit.period && o.distance_to(dom, &orbit.points[0]) < 10.0 * TAU_ORB
            });
            if !duplicate {
                search.orbits.push(orbit);
            }
        }
    }
    search.orbits.sort_by(|a, b| {
        a.period
            .cmp(&b.period)
            .then(a.points[0].partial_cmp(&b.points[0]).unwrap())
    });
    Ok(search)
}

/// Orbits of period not divisible by `ell`, lying entirely in `region` when given.
pub fn k_set(
    sys: &MapSystem,
    ell: usize,
    region: Option<&[RegionBox]>,
    max_period: usize,
    params: &OrbitParams,
    seed: u64,
) -> Result<Vec<PeriodicOrbit>, PeriodicError> {
    if ell == 0 {
        return Err(PeriodicError::InvalidPeriod);
    }
    let search = find_periodic_orbits(sys, max_period, region, params, seed)?;
    Ok(search
        .orbits
        .into_iter()
        .filter(|o| o.period % ell != 0)
        .filter(|o| region.is_none_or(|b| o.points.iter().all(|p| in_region(b, p))))
        .collect())
}
