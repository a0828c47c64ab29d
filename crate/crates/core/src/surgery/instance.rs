use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::domain::{default_eta, Chart, PerturbationDomain, Tile};
use super::pseudo_orbit::PseudoOrbit;
use crate::config::{Periodicity, SystemConfig};
use crate::graph::gcd;
use crate::periodic::TAU_ORB;
use crate::system::{minimal_image, wrap_scalar};

/// A surgery problem: map, tiled domain, pseudo-orbit and optional period constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurgeryInstance {
    pub system: SystemConfig,
    pub domain: PerturbationDomain,
    pub pseudo_orbit: PseudoOrbit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell: Option<usize>,
    /// Connecting sequences supplied for jumps, keyed by input index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequences: Option<BTreeMap<usize, Vec<Vec<f64>>>>,
}

/// Shape of random circle-rotation instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceParams {
    pub min_jumps: usize,
    pub max_jumps: usize,
    pub min_tiles_per_chart: usize,
    pub max_tiles_per_chart: usize,
    pub min_charts: usize,
    /// Allowed values of `N`.
    pub n_choices: Vec<usize>,
    /// Allowed rotation denominators.
    pub q_choices: Vec<u32>,
    /// Probability of a reflection instance whose orbit alternates across one tile boundary.
    pub reflection_share: f64,
}

impl Default for InstanceParams {
    fn default() -> Self {
        Self {
            min_jumps: 3,
            max_jumps: 12,
            min_tiles_per_chart: 3,
            max_tiles_per_chart: 8,
            min_charts: 1,
            n_choices: vec![1, 2, 3],
            q_choices: vec![3, 4, 5, 7],
            reflection_share: 0.5,
        }
    }
}

/// Half-width of the offset band holding every charted point, as a share of the smallest
/// jump limit `N eta edge / 8`; any two points of one tile then differ by less than that limit.
const BAND_SHARE: f64 = 0.2;
/// Each chart spans this fraction of the gap `1/q` between orbit positions.
const CHART_SPAN: f64 = 0.8;
/// Generated jumps are at least this many multiples of the jump threshold.
const MIN_JUMP: f64 = 5.0;

struct ChartLayout {
    /// Orbit index of the chart.
    index: usize,
    /// Offset of the middle boundary from the orbit position.
    boundary: f64,
    /// Tile edges left of the boundary, nearest first.
    left: Vec<f64>,
    right: Vec<f64>,
}

fn edges<R: Rng>(rng: &mut R, count: usize, first: f64, total: f64) -> Vec<f64> {
    let mut e = vec![first];
    for _ in 1..count {
        let last = *e.last().unwrap();
        e.push(last * rng.gen_range(0.7..1.4));
    }
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v * total / s).collect()
}

/// A random valid instance on the circle, of one of two kinds.
///
/// Laps: the rotation `x -> x + p/q` with charts centred on orbit points, middle tile
/// boundaries inside a narrow band around the orbit, and jumps that move within the band
/// without crossing a boundary. Reflection: `x -> c - x` about a point next to a tile boundary,
/// one chart, and a pseudo-orbit alternating across that boundary, so that balls of different
/// jumps meet.
pub fn random_instance(seed: u64, params: &InstanceParams) -> SurgeryInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let reflect = params.n_choices.contains(&1) && rng.gen_bool(params.reflection_share.clamp(0.0, 1.0));
        let inst = if reflect { reflection_attempt(&mut rng, params) } else { lap_attempt(&mut rng, params) };
        if let Some(inst) = inst {
            return inst;
        }
    }
}

fn rotation_system(name: String, alpha: f64) -> SystemConfig {
    let mut params = BTreeMap::new();
    params.insert("alpha".to_string(), alpha);
    SystemConfig {
        name,
        dimension: 1,
        domain: vec![[0.0, 1.0]],
        periodic: Periodicity::All(true),
        map: vec!["mod(x1 + alpha, 1)".into()],
        inverse: Some(vec!["mod(x1 - alpha, 1)".into()]),
        jacobian: Some(vec![vec!["1".into()]]),
        lipschitz: Some(1.0),
        params,
    }
}

/// `ell` in {2, 3} not dividing `len`.
fn pick_ell<R: Rng>(rng: &mut R, len: usize) -> Option<usize> {
    let options: Vec<usize> = [2, 3].into_iter().filter(|l| !len.is_multiple_of(*l)).collect();
    options.choose(rng).copied()
}

fn reflection_attempt<R: Rng>(rng: &mut R, params: &InstanceParams) -> Option<SurgeryInstance> {
    // f moves V onto itself, so only N = 1 keeps the chart images disjoint
    let n = 1;
    let theta = rng.gen_range(0.3..0.8);
    let eta = default_eta(theta, 1);
    let m = rng.gen_range(params.min_tiles_per_chart.max(2)..=params.max_tiles_per_chart.max(2));
    let span = rng.gen_range(0.3..0.45);
    let lo = rng.gen_range(0.0..1.0);
    let first = rng.gen_range(0.5..2.0);
    let e = edges(rng, m, first, span);
    let s = rng.gen_range(1..m);
    let beta = lo + e[..s].iter().sum::<f64>();
    let band = BAND_SHARE * eta * e[s - 1].min(e[s]) / 8.0;
    let min_jump = MIN_JUMP * TAU_ORB;
    if band < 8.0 * min_jump {
        return None;
    }
    // f(beta + u) = beta + gamma - u
    let gamma = rng.gen_range(-0.25..0.25) * band;
    let reach = band - gamma.abs();
    let f = |x: f64| 2.0 * beta + gamma - x;
    let side = |x: f64| x >= beta;

    let jumps = rng.gen_range(params.min_jumps.max(1)..=params.max_jumps.max(1));
    let y0 = beta + rng.gen_range(-reach..reach);
    let mut points = vec![y0];
    let mut y = y0;
    let mut made = 0;
    let mut natural = false;
    loop {
        let closing = made + 1 == jumps;
        // two natural steps in a row return to the same point
        natural = !closing && !natural && rng.gen_bool(0.5);
        if natural {
            y = f(y);
            points.push(y);
            continue;
        }
        // jump: f^{-1}(next) stays in the tile of y
        let target = if closing {
            f(y0)
        } else {
            // fourth powers crowd targets near beta, where balls of both sides meet
            let u = reach * rng.gen_range(0.0f64..1.0).powi(4);
            if side(y) { beta + u } else { beta - u }
        };
        if side(target) != side(y) || (target - y).abs() < min_jump {
            return None;
        }
        made += 1;
        if closing {
            break;
        }
        y = f(target);
        points.push(y);
    }
    // points and pulled-back targets keep clear of the boundary
    if points.iter().any(|&x| (x - beta).abs() < min_jump || (f(x) - beta).abs() < min_jump) {
        return None;
    }
    let len = points.len();
    if len % 6 == 0 {
        return None;
    }
    let ell = pick_ell(rng, len)?;
    let mut tiles = Vec::new();
    let mut cursor = lo;
    for edge in &e {
        tiles.push(Tile { chart: 0, center: vec![cursor + 0.5 * edge], edge: *edge });
        cursor += edge;
    }
    let c = wrap_scalar(2.0 * beta + gamma, 0.0, 1.0);
    let mut param_map = BTreeMap::new();
    param_map.insert("c".to_string(), c);
    let wrap = |x: f64| vec![wrap_scalar(x, 0.0, 1.0)];
    Some(SurgeryInstance {
        system: SystemConfig {
            name: "reflection".into(),
            dimension: 1,
            domain: vec![[0.0, 1.0]],
            periodic: Periodicity::All(true),
            map: vec!["mod(c - x1, 1)".into()],
            inverse: Some(vec!["mod(c - x1, 1)".into()]),
            jacobian: Some(vec![vec!["-1".into()]]),
            lipschitz: Some(1.0),
            params: param_map,
        },
        domain: PerturbationDomain {
            charts: vec![Chart { lo: vec![lo], hi: vec![lo + span] }],
            tiles,
            adjacency: None,
            n,
            theta,
            delta: 0.5,
            eta: Some(eta),
            eta_override: None,
        },
        pseudo_orbit: PseudoOrbit::new(points.into_iter().map(wrap).collect()),
        ell: Some(ell),
        sequences: None,
    })
}

fn lap_attempt<R: Rng>(rng: &mut R, params: &InstanceParams) -> Option<SurgeryInstance> {
    let q = *params.q_choices.choose(rng)? as usize;
    let p = loop {
        let p = rng.gen_range(1..q);
        if gcd(p as u64, q as u64) == 1 {
            break p;
        }
    };
    let alpha = p as f64 / q as f64;
    let n = *params.n_choices.choose(rng)?;
    let theta = rng.gen_range(0.3..0.8);
    let eta = default_eta(theta, 1);

    // orbit indices carrying charts, at least N apart so that the images f^k(V), k < N, stay disjoint
    let mut indices: Vec<usize> = (0..q).collect();
    indices.shuffle(rng);
    let want = rng.gen_range(params.min_charts.min(q)..=q);
    let mut chosen: Vec<usize> = Vec::new();
    for t in indices {
        let clash = chosen.iter().any(|&s| (1..n).any(|g| (s + g) % q == t || (t + g) % q == s));
        if chosen.len() < want && !clash {
            chosen.push(t);
        }
    }
    if chosen.len() < params.min_charts.min(q) {
        return None;
    }
    chosen.sort();

    let half = 0.5 * CHART_SPAN / q as f64;
    let mut layouts: Vec<ChartLayout> = Vec::new();
    for &index in &chosen {
        let m = rng.gen_range(params.min_tiles_per_chart.max(2)..=params.max_tiles_per_chart.max(2));
        let ml = rng.gen_range(1..m);
        let left = edges(rng, ml, 1.0, half);
        let right = edges(rng, m - ml, 1.0, half);
        let ratio = right[0] / left[0];
        if !(0.5..=2.0).contains(&ratio) {
            return None;
        }
        layouts.push(ChartLayout { index, boundary: 0.0, left, right });
    }
    let smallest = layouts
        .iter()
        .map(|l| l.left[0].min(l.right[0]))
        .fold(f64::INFINITY, f64::min);
    let band = BAND_SHARE * n as f64 * eta * smallest / 8.0;
    let min_jump = MIN_JUMP * TAU_ORB;
    if band < 4.0 * min_jump {
        return None;
    }
    for l in &mut layouts {
        l.boundary = 0.5 * band * [-1.0, 0.0, 1.0][rng.gen_range(0..3)];
    }
    let layout_of = |t: usize| layouts.iter().find(|l| l.index == t);

    let u: f64 = rng.gen_range(0.0..1.0);
    let position = |t: usize| wrap_scalar(u + (t * p % q) as f64 / q as f64, 0.0, 1.0);
    let rot = |x: f64| wrap_scalar(x + alpha, 0.0, 1.0);
    let offset = |x: f64, t: usize| minimal_image(x - position(t), 1.0);

    let jumps = rng.gen_range(params.min_jumps.max(1)..=params.max_jumps.max(1));
    let t0 = chosen[rng.gen_range(0..chosen.len())];
    let o0 = rng.gen_range(-band..band);
    let y0 = wrap_scalar(position(t0) + o0, 0.0, 1.0);
    let mut points = Vec::new();
    let mut t = t0;
    let mut y = y0;
    for jump in 0..jumps {
        let layout = layout_of(t)?;
        let o = offset(y, t);
        let right = o >= layout.boundary;
        let last = jump + 1 == jumps;
        points.push(vec![y]);
        // steps to the next chart; the last leg returns to t0
        let m = if last {
            (t0 + q - t) % q
        } else {
            let options: Vec<usize> = (1..=q).filter(|m| layout_of((t + m) % q).is_some()).collect();
            *options.choose(rng)?
        };
        let m = if m == 0 { q } else { m };
        let target = if last {
            o0
        } else {
            let (lo, hi) = if right { (layout.boundary, band) } else { (-band, layout.boundary) };
            rng.gen_range(lo..hi)
        };
        if (target >= layout.boundary) != right || (target - o).abs() < min_jump {
            return None;
        }
        let mut x = wrap_scalar(position(t) + target, 0.0, 1.0);
        for step in 0..m {
            x = rot(x);
            if step + 1 < m {
                points.push(vec![x]);
            }
        }
        y = x;
        t = (t + m) % q;
    }
    let len = points.len();
    if len % 6 == 0 {
        return None;
    }
    let ell = pick_ell(rng, len)?;

    let mut charts = Vec::new();
    let mut tiles = Vec::new();
    for (s, l) in layouts.iter().enumerate() {
        let mid = position(l.index) + l.boundary;
        let lo = mid - l.left.iter().sum::<f64>();
        let hi = mid + l.right.iter().sum::<f64>();
        charts.push(Chart { lo: vec![lo], hi: vec![hi] });
        let mut cursor = lo;
        for e in l.left.iter().rev().chain(l.right.iter()) {
            tiles.push(Tile {
                chart: s,
                center: vec![cursor + 0.5 * e],
                edge: *e,
            });
            cursor += e;
        }
    }
    Some(SurgeryInstance {
        system: rotation_system(format!("rotation {p}/{q}"), alpha),
        domain: PerturbationDomain {
            charts,
            tiles,
            adjacency: None,
            n,
            theta,
            delta: 1.0 / q as f64,
            eta: Some(eta),
            eta_override: None,
        },
        pseudo_orbit: PseudoOrbit::new(points),
        ell: Some(ell),
        sequences: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surgery::{analyze, run_surgery, validate_domain, TraceEvent};

    #[test]
    fn generated_instances_are_valid_and_deterministic() {
        for seed in 0..40 {
            let inst = random_instance(seed, &InstanceParams::default());
            assert_eq!(inst, random_instance(seed, &InstanceParams::default()));
            let sys = inst.system.build().unwrap();
            let rep = validate_domain(&inst.domain, &sys);
            assert!(rep.valid, "seed {seed}: {:?}", rep.violations);
            let state = analyze(&sys, &inst.domain, &inst.pseudo_orbit).unwrap();
            assert!(!state.jump_positions().is_empty(), "seed {seed}");
            assert_ne!(inst.pseudo_orbit.points.len() % inst.ell.unwrap(), 0);
        }
    }

    #[test]
    fn ten_jumps_over_thirty_tiles() {
        let params = InstanceParams {
            min_jumps: 10,
            max_jumps: 10,
            min_tiles_per_chart: 6,
            max_tiles_per_chart: 8,
            min_charts: 5,
            n_choices: vec![1],
            q_choices: vec![5, 7],
            reflection_share: 0.0,
        };
        for seed in 0..20 {
            let inst = random_instance(seed, &params);
            assert!(inst.domain.tiles.len() >= 30);
            let sys = inst.system.build().unwrap();
            let res = run_surgery(&sys, &inst.domain, &inst.pseudo_orbit, inst.ell, None).unwrap();
            assert!(res.certificates.all_hold(), "seed {seed}: {:?}", res.certificates);
        }
    }

    #[test]
    fn reflected_orbits_merge_balls() {
        let params = InstanceParams { reflection_share: 1.0, ..InstanceParams::default() };
        let mut secondary = 0;
        for seed in 0..40 {
            let inst = random_instance(seed, &params);
            assert_eq!(inst.system.name, "reflection");
            let sys = inst.system.build().unwrap();
            let res = run_surgery(&sys, &inst.domain, &inst.pseudo_orbit, inst.ell, None)
                .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
            assert!(res.certificates.all_hold(), "seed {seed}: {:?}", res.certificates);
            secondary += res.trace.iter().filter(|e| matches!(e, TraceEvent::Secondary { .. })).count();
        }
        assert!(secondary >= 10, "only {secondary} secondary shortcuts");
    }
}
