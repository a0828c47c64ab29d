use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::PeriodicOrbit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResonanceParams {
    /// Multipliers with `||lambda| - 1| <= tau_unit` count as unit-modulus.
    pub tau_unit: f64,
    /// Largest exponent tried for each unit eigenvalue.
    pub k_max: u32,
    /// A product within `tau_rel` of 1 is a relation.
    pub tau_rel: f64,
}

impl Default for ResonanceParams {
    fn default() -> Self {
        Self {
            tau_unit: 1e-6,
            k_max: 6,
            tau_rel: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Hyperbolic,
    NonResonant,
    Resonant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceReport {
    pub unit_modulus: Vec<Complex64>,
    /// Parallel to `unit_modulus`.
    pub simple: Vec<bool>,
    /// One representative per conjugate pair, in the order exponents refer to.
    pub representatives: Vec<Complex64>,
    pub relation: Option<Vec<u32>>,
    pub verdict: Verdict,
    pub params: ResonanceParams,
}

pub fn classify(orbit: &PeriodicOrbit, params: &ResonanceParams) -> ResonanceReport {
    classify_multipliers(&orbit.multipliers, params)
}

/// Bounded search for multiplicative relations among unit-modulus multipliers.
pub fn classify_multipliers(multipliers: &[Complex64], params: &ResonanceParams) -> ResonanceReport {
    let unit: Vec<Complex64> = multipliers
        .iter()
        .filter(|m| (m.norm() - 1.0).abs() <= params.tau_unit)
        .cloned()
        .collect();
    let simple: Vec<bool> = unit
        .iter()
        .map(|u| {
            multipliers
                .iter()
                .filter(|m| (*m - u).norm() <= params.tau_unit)
                .count()
                == 1
        })
        .collect();
    let mut representatives: Vec<Complex64> = Vec::new();
    for u in &unit {
        if u.im < -params.tau_unit {
            continue;
        }
        if representatives.iter().all(|r| (r - u).norm() > params.tau_unit) {
            representatives.push(*u);
        }
    }
    let mut report = ResonanceReport {
        unit_modulus: unit.clone(),
        simple: simple.clone(),
        representatives: representatives.clone(),
        relation: None,
        verdict: Verdict::Hyperbolic,
        params: params.clone(),
    };
    if unit.is_empty() {
        return report;
    }
    report.relation = find_relation(&representatives, params);
    report.verdict = if report.relation.is_some() || simple.iter().any(|s| !s) {
        Verdict::Resonant
    } else {
        Verdict::NonResonant
    };
    report
}

/// First exponent tuple, by total degree then lexicographically, with
/// `|prod lambda_i^k_i - 1| < tau_rel`.
fn find_relation(reps: &[Complex64], params: &ResonanceParams) -> Option<Vec<u32>> {
    let s = reps.len();
    let k_max = params.k_max;
    for total in 1..=(s as u32 * k_max) {
        let mut k = vec![0u32; s];
        if let Some(found) = search_degree(reps, &mut k, 0, total, k_max, params.tau_rel) {
            return Some(found);
        }
    }
    None
}

fn search_degree(reps: &[Complex64], k: &mut Vec<u32>, i: usize, left: u32, k_max: u32, tol: f64) -> Option<Vec<u32>> {
    if i == reps.len() {
        if left != 0 {
            return None;
        }
        let prod = reps
            .iter()
            .zip(k.iter())
            .fold(Complex64::new(1.0, 0.0), |acc, (l, &e)| acc * l.powu(e));
        return ((prod - 1.0).norm() < tol).then(|| k.clone());
    }
    for e in (0..=left.min(k_max)).rev() {
        k[i] = e;
        if let Some(found) = search_degree(reps, k, i + 1, left - e, k_max, tol) {
            return Some(found);
        }
    }
    k[i] = 0;
    None
}
