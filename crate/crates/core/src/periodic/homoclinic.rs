use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{find_crossings, grow_manifold, Crossing, ManifoldCurve, ManifoldParams, PeriodicError, PeriodicOrbit, Stability, TAU_ORB};
use crate::graph::gcd;
use crate::system::MapSystem;

/// Crossings found for one time `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeRecord {
    pub n: i64,
    pub transverse: usize,
    pub tangencies: usize,
}

/// Times `n` in `[-n_max, n_max]` with a transverse crossing of `W^u(f^n(q))` and `W^s(p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionTimeSet {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub period_p: usize,
    pub period_q: usize,
    pub n_max: i64,
    pub times: Vec<i64>,
    pub records: Vec<TimeRecord>,
    /// Gcd of `times`; 0 when no time was detected.
    pub ell: usize,
    /// No crossing at any tested time: absence within the budget proves nothing.
    pub inconclusive: bool,
    /// `ell` combined with the periods of orbits shown to be related by cycles.
    pub ell_with_related: Option<usize>,
    pub budget: f64,
}

impl IntersectionTimeSet {
    pub fn contains(&self, n: i64) -> bool {
        self.times.binary_search(&n).is_ok()
    }

    /// Records the gcd of `ell` with the periods of related orbits.
    pub fn relate(&mut self, periods: &[usize]) {
        let g = periods
            .iter()
            .fold(self.ell as u64, |acc, &p| gcd(acc, p as u64));
        self.ell_with_related = Some(g as usize);
    }
}

/// Pairs `(n, m)` of detected times with `n + m` in range but undetected.
pub fn closure_violations(set: &IntersectionTimeSet) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    for &n in &set.times {
        for &m in &set.times {
            let s = n + m;
            if n <= m && s.abs() <= set.n_max && !set.contains(s) {
                out.push((n, m));
            }
        }
    }
    out
}

/// Detected times `n` with `n + r` or `n - r` in range but undetected.
pub fn translation_violations(set: &IntersectionTimeSet, r: usize) -> Vec<i64> {
    let r = r as i64;
    set.times
        .iter()
        .cloned()
        .filter(|&n| [n + r, n - r].iter().any(|&m| m.abs() <= set.n_max && !set.contains(m)))
        .collect()
}

fn both_branches(
    sys: &MapSystem,
    anchor: &[f64],
    period: usize,
    stability: Stability,
    budget: f64,
    params: &ManifoldParams,
) -> Result<Vec<ManifoldCurve>, PeriodicError> {
    [-1i8, 1]
        .iter()
        .map(|&b| grow_manifold(sys, anchor, period, stability, b, budget, params))
        .collect()
}

fn all_crossings(sys: &MapSystem, unstable: &[ManifoldCurve], stable: &[ManifoldCurve]) -> Vec<Crossing> {
    let mut out = Vec::new();
    for u in unstable {
        for s in stable {
            out.extend(find_crossings(sys.domain(), &u.points, &s.points));
        }
    }
    out
}

pub fn intersection_times(
    sys: &MapSystem,
    p: &PeriodicOrbit,
    q: &PeriodicOrbit,
    n_max: i64,
    budget: f64,
    params: &ManifoldParams,
) -> Result<IntersectionTimeSet, PeriodicError> {
    let n_max = n_max.abs();
    let stable = both_branches(sys, &p.points[0], p.period, Stability::Stable, budget, params)?;
    let records = (-n_max..=n_max)
        .into_par_iter()
        .map(|n| {
            let qn = sys.power(&q.points[0], n)?;
            let unstable = both_branches(sys, &qn, q.period, Stability::Unstable, budget, params)?;
            let cs = all_crossings(sys, &unstable, &stable);
            let transverse = cs.iter().filter(|c| c.transverse).count();
            Ok(TimeRecord {
                n,
                transverse,
                tangencies: cs.len() - transverse,
            })
        })
        .collect::<Result<Vec<_>, PeriodicError>>()?;
    let times: Vec<i64> = records.iter().filter(|r| r.transverse > 0).map(|r| r.n).collect();
    let ell = times.iter().fold(0u64, |acc, &n| gcd(acc, n.unsigned_abs())) as usize;
    Ok(IntersectionTimeSet {
        p: p.points[0].clone(),
        q: q.points[0].clone(),
        period_p: p.period,
        period_q: q.period,
        n_max,
        inconclusive: times.is_empty(),
        times,
        records,
        ell,
        ell_with_related: None,
        budget,
    })
}

/// Finite sample of the pointwise class of `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseClass {
    pub anchor: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub transverse_crossings: usize,
    pub unstable_budget: f64,
    pub stable_budget: f64,
}

/// Transverse crossings of `W^u(p)` and `W^s(q)`, plus `p` itself when `p = q`.
pub fn pointwise_class(
    sys: &MapSystem,
    p: (&[f64], usize),
    q: (&[f64], usize),
    budgets: (f64, f64),
    params: &ManifoldParams,
) -> Result<PointwiseClass, PeriodicError> {
    let (unstable_budget, stable_budget) = budgets;
    let unstable = both_branches(sys, p.0, p.1, Stability::Unstable, unstable_budget, params)?;
    let stable = both_branches(sys, q.0, q.1, Stability::Stable, stable_budget, params)?;
    let cs: Vec<Crossing> = all_crossings(sys, &unstable, &stable)
        .into_iter()
        .filter(|c| c.transverse)
        .collect();
    if cs.is_empty() {
        return Err(PeriodicError::NoIntersection);
    }
    let dom = sys.domain();
    let mut points: Vec<Vec<f64>> = Vec::new();
    if dom.distance(p.0, q.0) < TAU_ORB {
        points.push(p.0.to_vec());
    }
    for c in &cs {
        if points.iter().all(|x| dom.distance(x, &c.point) > 1e-12) {
            points.push(c.point.clone());
        }
    }
    Ok(PointwiseClass {
        anchor: p.0.to_vec(),
        points,
        transverse_crossings: cs.len(),
        unstable_budget,
        stable_budget,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum DirectionVerdict {
    Found { transverse: usize },
    /// Every branch involved left the domain without crossing.
    Absent,
    Inconclusive { tangencies: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleVerdict {
    Cycle,
    NoCycle,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    /// `W^u(O)` against `W^s(O')`.
    pub forward: DirectionVerdict,
    /// `W^u(O')` against `W^s(O)`.
    pub backward: DirectionVerdict,
    pub verdict: CycleVerdict,
    /// A cycle with `period(O')` outside `ell * Z`; `None` when `ell` was not supplied.
    pub period_drop_candidate: Option<bool>,
    pub budget: f64,
}

fn direction(
    sys: &MapSystem,
    from: &PeriodicOrbit,
    to: &PeriodicOrbit,
    budget: f64,
    params: &ManifoldParams,
) -> Result<DirectionVerdict, PeriodicError> {
    let mut unstable = Vec::new();
    for x in &from.points {
        unstable.extend(both_branches(sys, x, from.period, Stability::Unstable, budget, params)?);
    }
    let mut stable = Vec::new();
    for x in &to.points {
        stable.extend(both_branches(sys, x, to.period, Stability::Stable, budget, params)?);
    }
    let cs = all_crossings(sys, &unstable, &stable);
    let transverse = cs.iter().filter(|c| c.transverse).count();
    let complete = unstable.iter().chain(&stable).all(|c| c.complete);
    Ok(if transverse > 0 {
        DirectionVerdict::Found { transverse }
    } else if complete && cs.is_empty() {
        DirectionVerdict::Absent
    } else {
        DirectionVerdict::Inconclusive {
            tangencies: cs.len(),
        }
    })
}

/// Looks for crossings in both directions between two saddle orbits.
pub fn detect_cycle(
    sys: &MapSystem,
    o: &PeriodicOrbit,
    o2: &PeriodicOrbit,
    budget: f64,
    ell: Option<usize>,
    params: &ManifoldParams,
) -> Result<CycleReport, PeriodicError> {
    let forward = direction(sys, o, o2, budget, params)?;
    let backward = direction(sys, o2, o, budget, params)?;
    let verdict = match (&forward, &backward) {
        (DirectionVerdict::Found { .. }, DirectionVerdict::Found { .. }) => CycleVerdict::Cycle,
        (DirectionVerdict::Absent, _) | (_, DirectionVerdict::Absent) => CycleVerdict::NoCycle,
        _ => CycleVerdict::Inconclusive,
    };
    Ok(CycleReport {
        period_drop_candidate: ell.map(|l| verdict == CycleVerdict::Cycle && !o2.period.is_multiple_of(l.max(1))),
        forward,
        backward,
        verdict,
        budget,
    })
}
