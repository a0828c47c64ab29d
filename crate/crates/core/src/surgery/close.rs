use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::domain::{validate_domain, PerturbationDomain};
use super::pseudo_orbit::PseudoOrbit;
use super::secondary::{run_surgery, SurgeryResult};
use super::SurgeryError;
use crate::graph::RegionBox;
use crate::periodic::TAU_ORB;
use crate::system::{operator_norm, per_axis_for, Bump, MapSystem, SystemError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloseParams {
    /// Largest return time searched, and largest period tested for `x` itself.
    pub budget: usize,
    /// Grid samples for the size and support checks.
    pub samples: usize,
    pub eps_c0: f64,
    pub eps_c1: f64,
}

impl Default for CloseParams {
    fn default() -> Self {
        Self {
            budget: 50,
            samples: 4096,
            eps_c0: 1e-6,
            eps_c1: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloseStatus {
    /// `x` is already periodic with a period that is not a multiple of `ell`.
    Unchanged,
    Closed,
    /// No return time outside `ell Z` within the budget.
    Inconclusive,
    /// A perturbation was built but a certificate did not hold.
    CertificateFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedOrbit {
    pub points: Vec<Vec<f64>>,
    pub period: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSize {
    /// Sampled `sup |g - f|`.
    pub c0: f64,
    /// Sampled `sup ||Dg - Df||` in the operator norm.
    pub c1: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportCheck {
    pub samples: usize,
    /// Samples outside every ball where `g != f`.
    pub changed_outside: usize,
    /// Samples inside a ball with non-zero displacement where `g == f`.
    pub unchanged_inside: usize,
    pub exact: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CloseResult {
    pub status: CloseStatus,
    pub point: Vec<f64>,
    pub ell: usize,
    pub return_time: Option<usize>,
    /// `z = f^{-n}(x)`.
    pub preimage: Option<Vec<f64>>,
    pub surgery: Option<SurgeryResult>,
    pub bumps: Vec<Bump>,
    pub orbit: Option<ClosedOrbit>,
    pub size: Option<PerturbationSize>,
    pub within_budget: Option<bool>,
    pub support: Option<SupportCheck>,
    pub region_ok: Option<bool>,
    pub params: CloseParams,
    pub message: Option<String>,
    #[serde(skip)]
    pub perturbed: Option<Arc<MapSystem>>,
}

impl CloseResult {
    fn empty(status: CloseStatus, point: Vec<f64>, ell: usize, params: &CloseParams) -> Self {
        Self {
            status,
            point,
            ell,
            return_time: None,
            preimage: None,
            surgery: None,
            bumps: Vec::new(),
            orbit: None,
            size: None,
            within_budget: None,
            support: None,
            region_ok: None,
            params: params.clone(),
            message: None,
            perturbed: None,
        }
    }
}

fn in_region(boxes: &[RegionBox], x: &[f64]) -> bool {
    boxes
        .iter()
        .any(|b| x.iter().enumerate().all(|(j, v)| *v >= b.lo[j] && *v <= b.hi[j]))
}

/// Points inside and just outside each bump, along the coordinate axes.
fn bump_samples(bumps: &[Bump]) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for b in bumps {
        out.push(b.center.clone());
        for j in 0..b.center.len() {
            for rho in [0.25, 0.5, 1.0 / 3f64.sqrt(), 0.9, 1.1, 2.0] {
                for sign in [-1.0, 1.0] {
                    let mut p = b.center.clone();
                    p[j] += sign * rho * b.radius;
                    out.push(p);
                }
            }
        }
    }
    out
}

fn samples_for(f: &MapSystem, g: &MapSystem, budget: usize) -> Vec<Vec<f64>> {
    let space = f.domain();
    let mut samples = space.grid(per_axis_for(budget.max(1), f.dimension()));
    samples.extend(bump_samples(g.bumps()).into_iter().map(|p| space.wrapped(&p)).filter(|p| space.contains(p)));
    samples
}

/// Sampled C^0 and C^1 distances between two maps on a shared domain.
pub fn perturbation_size(f: &MapSystem, g: &MapSystem, budget: usize) -> Result<PerturbationSize, SystemError> {
    let samples = samples_for(f, g, budget);
    let mut c0: f64 = 0.0;
    let mut c1: f64 = 0.0;
    for x in &samples {
        c0 = c0.max(f.domain().distance(&f.evaluate(x)?, &g.evaluate(x)?));
        c1 = c1.max(operator_norm(&(g.jacobian(x)? - f.jacobian(x)?)));
    }
    Ok(PerturbationSize {
        c0,
        c1,
        samples: samples.len(),
    })
}

/// Sampled check that `g` differs from `f` exactly on the union of the bump balls.
pub fn support_check(f: &MapSystem, g: &MapSystem, budget: usize) -> Result<SupportCheck, SystemError> {
    let space = f.domain();
    let samples = samples_for(f, g, budget);
    let mut changed_outside = 0;
    let mut unchanged_inside = 0;
    for x in &samples {
        let inside = g
            .bumps()
            .iter()
            .any(|b| b.displacement.iter().any(|v| *v != 0.0) && space.distance(x, &b.center) < b.radius);
        let same = f.evaluate(x)? == g.evaluate(x)?;
        match (inside, same) {
            (true, true) => unchanged_inside += 1,
            (false, false) => changed_outside += 1,
            _ => {}
        }
    }
    Ok(SupportCheck {
        samples: samples.len(),
        changed_outside,
        unchanged_inside,
        exact: changed_outside == 0 && unchanged_inside == 0,
    })
}

fn genuine_period(sys: &MapSystem, x: &[f64], budget: usize) -> Result<Option<usize>, SystemError> {
    let mut y = x.to_vec();
    for p in 1..=budget {
        y = sys.evaluate(&y)?;
        if sys.domain().distance(&y, x) < TAU_ORB {
            return Ok(Some(p));
        }
    }
    Ok(None)
}

/// Builds a perturbation `g = f o h` with a periodic orbit through `x` whose period is not a
/// multiple of `ell`, from a return of the backward orbit of `x` to its tile.
pub fn close_orbit(
    sys: Arc<MapSystem>,
    dom: &PerturbationDomain,
    x: &[f64],
    ell: usize,
    region: Option<&[RegionBox]>,
    params: &CloseParams,
) -> Result<CloseResult, SurgeryError> {
    if ell == 0 {
        return Err(SurgeryError::InvalidEll);
    }
    let report = validate_domain(dom, &sys);
    if !report.valid {
        return Err(SurgeryError::InvalidDomain(Box::new(report)));
    }
    if !sys.has_inverse() {
        return Err(SystemError::MissingInverse.into());
    }
    let space = sys.domain().clone();
    let x = space.wrapped(x);
    if let Some(p) = genuine_period(&sys, &x, params.budget)? {
        if p % ell == 0 {
            return Err(SurgeryError::PeriodicMultiple { period: p });
        }
        let seg = sys.iterate(&x, p as i64)?;
        let mut res = CloseResult::empty(CloseStatus::Unchanged, x.clone(), ell, params);
        res.orbit = Some(ClosedOrbit {
            residual: space.distance(seg.last(), &x),
            points: seg.points[..p].to_vec(),
            period: p,
        });
        res.size = Some(PerturbationSize { c0: 0.0, c1: 0.0, samples: 0 });
        res.within_budget = Some(true);
        res.region_ok = region.map(|r| res.orbit.as_ref().unwrap().points.iter().all(|p| in_region(r, p)));
        res.perturbed = Some(sys);
        return Ok(res);
    }
    let tile = dom.tile_of(&space, &x).ok_or_else(|| SurgeryError::NoTile(x.clone()))?;

    let mut z = x.clone();
    let mut found = None;
    let mut last_err = None;
    for n in 1..=params.budget {
        z = sys.evaluate_inverse(&z)?;
        if n % ell == 0 || n < dom.n || !dom.in_scaled_tile(&space, tile, &z, 1.0) {
            continue;
        }
        let mut points = vec![x.clone()];
        let mut y = z.clone();
        for _ in 1..n {
            y = sys.evaluate(&y)?;
            points.push(y.clone());
        }
        match run_surgery(&sys, dom, &PseudoOrbit::new(points), Some(ell), None) {
            Ok(s) => {
                found = Some((n, z.clone(), s));
                break;
            }
            Err(e @ SurgeryError::BoundUnsatisfiable { .. }) => last_err = Some(e.to_string()),
            Err(e) => return Err(e),
        }
    }
    let Some((n, z, surgery)) = found else {
        let mut res = CloseResult::empty(CloseStatus::Inconclusive, x.clone(), ell, params);
        res.message = Some(match last_err {
            Some(e) => format!("returns to the tile exist but none is usable: {e}"),
            None => format!("no return to the tile outside {ell}Z within {} steps", params.budget),
        });
        return Ok(res);
    };

    let len = surgery.orbit.len();
    let jumps = surgery.orbit.jump_positions();
    if let Some(gap) = (0..jumps.len())
        .map(|a| (jumps[(a + 1) % jumps.len()] + len - jumps[a] - 1) % len + 1)
        .find(|&gap| gap < dom.n)
    {
        return Err(SurgeryError::JumpsTooClose { gap, n: dom.n });
    }
    let bumps: Vec<Bump> = surgery
        .sequences
        .iter()
        .flat_map(|s| &s.balls)
        .filter(|b| b.radius > 0.0)
        .map(|b| Bump {
            center: b.center.clone(),
            radius: b.radius,
            displacement: space.delta(&b.center, &b.target),
        })
        .collect();
    let g = Arc::new(MapSystem::perturbed(sys.clone(), bumps.clone()));

    let start = surgery.orbit.points[0].clone();
    let seg = g.iterate(&start, len as i64)?;
    let residual = space.distance(seg.last(), &start);
    let period = (1..=len)
        .filter(|p| len % p == 0)
        .find(|&p| space.distance(&seg.points[p], &start) < TAU_ORB)
        .unwrap_or(len);
    let orbit = ClosedOrbit {
        points: seg.points[..period].to_vec(),
        period,
        residual,
    };
    let size = perturbation_size(&sys, &g, params.samples)?;
    let support = support_check(&sys, &g, params.samples)?;
    let within_budget = size.c0 <= params.eps_c0 && size.c1 <= params.eps_c1;
    let region_ok = region.map(|r| orbit.points.iter().all(|p| in_region(r, p)));

    let mut problems = Vec::new();
    if !surgery.certificates.all_hold() {
        problems.push("surgery certificates do not hold".to_string());
    }
    if residual >= TAU_ORB {
        problems.push(format!("perturbed orbit residual {residual:e} is not below {TAU_ORB:e}"));
    }
    if period % ell == 0 {
        problems.push(format!("period {period} is a multiple of {ell}"));
    }
    if !support.exact {
        problems.push("perturbation support differs from the balls".into());
    }
    if !within_budget {
        problems.push(format!(
            "perturbation size (C0 {:e}, C1 {:e}) exceeds the budget ({:e}, {:e})",
            size.c0, size.c1, params.eps_c0, params.eps_c1
        ));
    }
    if region_ok == Some(false) {
        problems.push("orbit leaves the region".into());
    }
    let status = if problems.is_empty() {
        CloseStatus::Closed
    } else {
        CloseStatus::CertificateFailed
    };
    Ok(CloseResult {
        status,
        point: x,
        ell,
        return_time: Some(n),
        preimage: Some(z),
        surgery: Some(surgery),
        bumps,
        orbit: Some(orbit),
        size: Some(size),
        within_budget: Some(within_budget),
        support: Some(support),
        region_ok,
        params: params.clone(),
        message: (!problems.is_empty()).then(|| problems.join("; ")),
        perturbed: Some(g),
    })
}
