use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::connect::{connect, validate_sequence, Ball, ConnectingSequence, BOUND_SLACK};
use super::domain::{validate_domain, PerturbationDomain};
use super::pseudo_orbit::{
    analyze, apply_shortcut, check_requestable, choose_branch, kept_positions, primary_shortcuts, Branch,
    OrbitState, PseudoOrbit, TraceEvent,
};
use super::SurgeryError;
use crate::periodic::TAU_ORB;
use crate::system::MapSystem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificates {
    /// Every ball lies in its chart image.
    pub condition1: bool,
    /// The final balls are pairwise disjoint.
    pub condition2: bool,
    /// The final length is not a multiple of `ell`; absent when `ell` was not requested.
    pub condition3: Option<bool>,
    pub intersecting_pairs: usize,
    pub max_merges: usize,
    pub merge_limit: usize,
}

impl Certificates {
    pub fn all_hold(&self) -> bool {
        self.condition1 && self.condition2 && self.condition3.unwrap_or(true)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurgeryConstants {
    pub theta: f64,
    pub delta: f64,
    pub n: usize,
    pub eta: f64,
    pub eta_default: f64,
    pub eta_overridden: bool,
    pub tau_orb: f64,
    pub bound_slack: f64,
}

impl SurgeryConstants {
    pub fn of(dom: &PerturbationDomain) -> Self {
        Self {
            theta: dom.theta,
            delta: dom.delta,
            n: dom.n,
            eta: dom.eta(),
            eta_default: dom.default_eta(),
            eta_overridden: dom.eta_override.is_some(),
            tau_orb: TAU_ORB,
            bound_slack: BOUND_SLACK,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurgeryResult {
    pub input_length: usize,
    pub ell: Option<usize>,
    pub orbit: OrbitState,
    /// One per remaining jump, in orbit order.
    pub sequences: Vec<ConnectingSequence>,
    pub trace: Vec<TraceEvent>,
    pub certificates: Certificates,
    pub constants: SurgeryConstants,
}

impl SurgeryResult {
    /// Position in the final orbit of the jump a sequence belongs to.
    pub fn position(&self, seq: &ConnectingSequence) -> Option<usize> {
        self.orbit.origins.iter().position(|&o| o == seq.jump)
    }
}

fn intersect(sys: &MapSystem, a: &Ball, b: &Ball) -> bool {
    a.radius > 0.0 && b.radius > 0.0 && sys.domain().distance(&a.center, &b.center) < a.radius + b.radius
}

/// `(a_{first,0..k}, a_{second,k+1..N})` with the ball at `k` re-centred on `a_{first,k}`.
fn splice(sys: &MapSystem, theta: f64, first: &ConnectingSequence, second: &ConnectingSequence, k: usize) -> ConnectingSequence {
    let old = &first.balls[k];
    let target = second.balls[k].target.clone();
    let radius = sys.domain().distance(&old.center, &target) / theta;
    let merged = Ball {
        target,
        radius,
        merges: old.merges + 1,
        ..old.clone()
    };
    let mut balls: Vec<Ball> = first.balls[..k].to_vec();
    balls.push(merged);
    balls.extend_from_slice(&second.balls[k + 1..]);
    let mut points: Vec<Vec<f64>> = first.points[..=k].to_vec();
    points.extend_from_slice(&second.points[k + 1..]);
    ConnectingSequence {
        jump: first.jump,
        tile: first.tile,
        chart: first.chart,
        points,
        balls,
    }
}

fn first_intersection(sys: &MapSystem, seqs: &[Option<ConnectingSequence>], n: usize) -> Option<(usize, usize, usize)> {
    let pos: Vec<usize> = (0..seqs.len()).filter(|&p| seqs[p].is_some()).collect();
    for (a, &i) in pos.iter().enumerate() {
        for &j in &pos[a + 1..] {
            let (si, sj) = (seqs[i].as_ref().unwrap(), seqs[j].as_ref().unwrap());
            if let Some(k) = (0..n).find(|&k| intersect(sys, &si.balls[k], &sj.balls[k])) {
                return Some((i, j, k));
            }
        }
    }
    None
}

/// Merges intersecting balls by shortcuts until the balls of equal index are pairwise disjoint.
/// `sequences` must hold one sequence per jump of `state`.
pub fn secondary_shortcuts(
    sys: &MapSystem,
    dom: &PerturbationDomain,
    state: &OrbitState,
    sequences: Vec<ConnectingSequence>,
    ell: Option<usize>,
) -> Result<(OrbitState, Vec<ConnectingSequence>, Vec<TraceEvent>), SurgeryError> {
    check_requestable(state.len(), ell)?;
    let limit = dom.max_adjacent();
    let mut seqs: Vec<Option<ConnectingSequence>> = vec![None; state.len()];
    for s in sequences {
        let p = state
            .origins
            .iter()
            .position(|&o| o == s.jump)
            .filter(|&p| state.jumps[p])
            .ok_or(SurgeryError::SequenceMismatch {
                jump: s.jump,
                reason: "no jump leaves this point".into(),
            })?;
        seqs[p] = Some(s);
    }
    if let Some(p) = state.jump_positions().into_iter().find(|&p| seqs[p].is_none()) {
        return Err(SurgeryError::SequenceMismatch {
            jump: state.origins[p],
            reason: "jump without a connecting sequence".into(),
        });
    }
    let mut state = state.clone();
    let mut trace = Vec::new();
    while let Some((i, j, k)) = first_intersection(sys, &seqs, dom.n) {
        let len = state.len();
        let (kept, outer_length, inner_length) = choose_branch(len, i, j, ell);
        let (si, sj) = (seqs[i].as_ref().unwrap(), seqs[j].as_ref().unwrap());
        let (radius_i, radius_j) = (si.balls[k].radius, sj.balls[k].radius);
        let merged = match kept {
            Branch::Outer => splice(sys, dom.theta, si, sj, k),
            Branch::Inner => splice(sys, dom.theta, sj, si, k),
        };
        let ball = merged.balls[k].clone();
        let bound = 2.0 / dom.theta * (radius_i + radius_j);
        let (next, removed, new_step) = apply_shortcut(sys, &state, i, j, kept)?;
        trace.push(TraceEvent::Secondary {
            k,
            i,
            j,
            origin_i: state.origins[i],
            origin_j: state.origins[j],
            ball: ball.id(),
            radius_i,
            radius_j,
            radius_after: ball.radius,
            bound,
            merges: ball.merges,
            parent_length: len,
            outer_length,
            inner_length,
            kept,
            removed,
        });
        if ball.radius > bound * (1.0 + BOUND_SLACK) {
            return Err(SurgeryError::RadiusRule {
                ball: ball.id(),
                radius: ball.radius,
                bound,
                trace: Box::new(trace),
            });
        }
        if ball.merges > limit {
            return Err(SurgeryError::MergeLimit {
                ball: ball.id(),
                merges: ball.merges,
                limit,
                trace: Box::new(trace),
            });
        }
        if ball.radius > ball.margin * (1.0 + BOUND_SLACK) {
            return Err(SurgeryError::APriori {
                ball: ball.id(),
                radius: ball.radius,
                margin: ball.margin,
                trace: Box::new(trace),
            });
        }
        let keep = kept_positions(len, i, j, kept);
        let mut moved: Vec<Option<ConnectingSequence>> = keep.iter().map(|&p| seqs[p].take()).collect();
        moved[new_step] = next.jumps[new_step].then_some(merged);
        seqs = moved;
        state = next;
    }
    let sequences = seqs.into_iter().flatten().collect();
    Ok((state, sequences, trace))
}

/// Independent certificate scan over the final balls.
pub fn certify(
    sys: &MapSystem,
    dom: &PerturbationDomain,
    state: &OrbitState,
    sequences: &[ConnectingSequence],
    ell: Option<usize>,
) -> Certificates {
    let balls: Vec<&Ball> = sequences.iter().flat_map(|s| &s.balls).collect();
    let condition1 = balls
        .iter()
        .all(|b| b.radius == 0.0 || b.radius <= b.containment * (1.0 + BOUND_SLACK));
    let mut intersecting_pairs = 0;
    for a in 0..balls.len() {
        for b in a + 1..balls.len() {
            if intersect(sys, balls[a], balls[b]) {
                intersecting_pairs += 1;
            }
        }
    }
    Certificates {
        condition1,
        condition2: intersecting_pairs == 0,
        condition3: ell.map(|l| !state.len().is_multiple_of(l)),
        intersecting_pairs,
        max_merges: balls.iter().map(|b| b.merges).max().unwrap_or(0),
        merge_limit: dom.max_adjacent(),
    }
}

/// Full shortcut process: validation, primary shortcuts, connecting sequences, secondary shortcuts.
/// `external` maps input indices of jumps to supplied sequences `a_0 .. a_N`.
pub fn run_surgery(
    sys: &MapSystem,
    dom: &PerturbationDomain,
    po: &PseudoOrbit,
    ell: Option<usize>,
    external: Option<&BTreeMap<usize, Vec<Vec<f64>>>>,
) -> Result<SurgeryResult, SurgeryError> {
    let report = validate_domain(dom, sys);
    if !report.valid {
        return Err(SurgeryError::InvalidDomain(Box::new(report)));
    }
    let initial = analyze(sys, dom, po)?;
    check_requestable(initial.len(), ell)?;
    let (state, mut trace) = primary_shortcuts(sys, dom, &initial, ell)?;
    let mut sequences = Vec::new();
    for p in state.jump_positions() {
        let seq = match external.and_then(|m| m.get(&state.origins[p])) {
            Some(points) => validate_sequence(sys, dom, &state, p, points)?,
            None => connect(sys, dom, &state, p)?,
        };
        sequences.push(seq);
    }
    let (state, sequences, secondary) = secondary_shortcuts(sys, dom, &state, sequences, ell)?;
    trace.extend(secondary);
    let certificates = certify(sys, dom, &state, &sequences, ell);
    Ok(SurgeryResult {
        input_length: initial.len(),
        ell,
        orbit: state,
        sequences,
        trace,
        certificates,
        constants: SurgeryConstants::of(dom),
    })
}
