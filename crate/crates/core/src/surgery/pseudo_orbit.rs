use serde::{Deserialize, Serialize};

use super::domain::PerturbationDomain;
use super::SurgeryError;
use crate::periodic::TAU_ORB;
use crate::system::MapSystem;

/// Periodic pseudo-orbit `y_0 .. y_{n-1}`; step `i` goes from `y_i` to `y_{(i+1) mod n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoOrbit {
    pub points: Vec<Vec<f64>>,
    /// Declared jump flags; checked against the map when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jumps: Option<Vec<bool>>,
}

impl PseudoOrbit {
    pub fn new(points: Vec<Vec<f64>>) -> Self {
        Self { points, jumps: None }
    }
}

/// A pseudo-orbit with the bookkeeping the shortcut process needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitState {
    pub points: Vec<Vec<f64>>,
    /// Index of each point in the input pseudo-orbit.
    pub origins: Vec<usize>,
    /// `jumps[i]`: step `i` is not a genuine step of the map.
    pub jumps: Vec<bool>,
    pub tiles: Vec<Option<usize>>,
}

impl OrbitState {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn jump_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.jumps[i]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `(y_0 .. y_i, y_{j+1} .. y_{n-1})`, holding the base point.
    Outer,
    /// `(y_{i+1} .. y_j)`.
    Inner,
}

/// Keeps the outer branch unless condition 3 forces the inner one.
pub fn choose_branch(n: usize, i: usize, j: usize, ell: Option<usize>) -> (Branch, usize, usize) {
    let inner = j - i;
    let outer = n - inner;
    let branch = match ell {
        Some(l) if outer.is_multiple_of(l) && !inner.is_multiple_of(l) => Branch::Inner,
        _ => Branch::Outer,
    };
    (branch, outer, inner)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEvent {
    Primary {
        tile: usize,
        i: usize,
        j: usize,
        origin_i: usize,
        origin_j: usize,
        parent_length: usize,
        outer_length: usize,
        inner_length: usize,
        kept: Branch,
        removed: Vec<usize>,
    },
    Secondary {
        k: usize,
        i: usize,
        j: usize,
        origin_i: usize,
        origin_j: usize,
        /// `(owner, k)` of the merged ball.
        ball: (usize, usize),
        radius_i: f64,
        radius_j: f64,
        radius_after: f64,
        bound: f64,
        merges: usize,
        parent_length: usize,
        outer_length: usize,
        inner_length: usize,
        kept: Branch,
        removed: Vec<usize>,
    },
}

pub(crate) fn is_jump(sys: &MapSystem, y: &[f64], next: &[f64]) -> Result<bool, SurgeryError> {
    let fy = sys.evaluate(y)?;
    Ok(sys.domain().distance(&fy, next) >= TAU_ORB)
}

/// Preimage of `next` near `y`.
pub(crate) fn pullback(sys: &MapSystem, y: &[f64], next: &[f64]) -> Result<Vec<f64>, SurgeryError> {
    Ok(sys.preimage_near(next, y)?)
}

fn check_jump(sys: &MapSystem, dom: &PerturbationDomain, state: &OrbitState, i: usize) -> Result<(), SurgeryError> {
    let n = state.len();
    let tile = state.tiles[i].ok_or(SurgeryError::JumpOutsideTile { index: state.origins[i] })?;
    let b = pullback(sys, &state.points[i], &state.points[(i + 1) % n])?;
    if !dom.in_scaled_tile(sys.domain(), tile, &b, 1.0) {
        return Err(SurgeryError::JumpOutsideTile { index: state.origins[i] });
    }
    Ok(())
}

/// Flags jumps, assigns tiles and checks that each jump stays inside one tile.
pub fn analyze(sys: &MapSystem, dom: &PerturbationDomain, po: &PseudoOrbit) -> Result<OrbitState, SurgeryError> {
    let n = po.points.len();
    if n == 0 {
        return Err(SurgeryError::EmptyPseudoOrbit);
    }
    let d = sys.dimension();
    let space = sys.domain();
    let mut points = Vec::with_capacity(n);
    for p in &po.points {
        if p.len() != d {
            return Err(SurgeryError::Dimension { expected: d, found: p.len() });
        }
        points.push(space.wrapped(p));
    }
    let mut jumps = Vec::with_capacity(n);
    for i in 0..n {
        jumps.push(is_jump(sys, &points[i], &points[(i + 1) % n])?);
    }
    if let Some(declared) = &po.jumps {
        if declared.len() != n || *declared != jumps {
            return Err(SurgeryError::JumpFlags);
        }
    }
    let tiles = points.iter().map(|p| dom.tile_of(space, p)).collect();
    let state = OrbitState {
        points,
        origins: (0..n).collect(),
        jumps,
        tiles,
    };
    for i in state.jump_positions() {
        check_jump(sys, dom, &state, i)?;
    }
    Ok(state)
}

pub(crate) fn check_requestable(n: usize, ell: Option<usize>) -> Result<(), SurgeryError> {
    match ell {
        Some(0) => Err(SurgeryError::InvalidEll),
        Some(l) if n.is_multiple_of(l) => Err(SurgeryError::Condition3NotRequestable { length: n, ell: l }),
        _ => Ok(()),
    }
}

/// Index map of a shortcut on `(i, j)`: positions of the kept points in the parent.
pub(crate) fn kept_positions(n: usize, i: usize, j: usize, branch: Branch) -> Vec<usize> {
    match branch {
        Branch::Outer => (0..=i).chain(j + 1..n).collect(),
        Branch::Inner => (i + 1..=j).collect(),
    }
}

/// Applies a shortcut and recomputes the one step that changed.
pub(crate) fn apply_shortcut(
    sys: &MapSystem,
    state: &OrbitState,
    i: usize,
    j: usize,
    branch: Branch,
) -> Result<(OrbitState, Vec<usize>, usize), SurgeryError> {
    let n = state.len();
    let keep = kept_positions(n, i, j, branch);
    let pick = |v: &[usize]| -> Vec<usize> { keep.iter().map(|&p| v[p]).collect() };
    let mut next = OrbitState {
        points: keep.iter().map(|&p| state.points[p].clone()).collect(),
        origins: pick(&state.origins),
        jumps: keep.iter().map(|&p| state.jumps[p]).collect(),
        tiles: keep.iter().map(|&p| state.tiles[p]).collect(),
    };
    // the new step leaves y_i (outer) or y_j (inner)
    let new_step = match branch {
        Branch::Outer => i,
        Branch::Inner => next.len() - 1,
    };
    let m = next.len();
    next.jumps[new_step] = is_jump(sys, &next.points[new_step], &next.points[(new_step + 1) % m])?;
    let removed = (0..n).filter(|p| !keep.contains(p)).map(|p| state.origins[p]).collect();
    Ok((next, removed, new_step))
}

/// Removes repeated visits to a tile, lowest index first, until every tile is visited at most once.
pub fn primary_shortcuts(
    sys: &MapSystem,
    dom: &PerturbationDomain,
    state: &OrbitState,
    ell: Option<usize>,
) -> Result<(OrbitState, Vec<TraceEvent>), SurgeryError> {
    check_requestable(state.len(), ell)?;
    let mut state = state.clone();
    let mut trace = Vec::new();
    while let Some((i, j, tile)) = first_repeat(&state) {
        let n = state.len();
        let (kept, outer_length, inner_length) = choose_branch(n, i, j, ell);
        let (next, removed, new_step) = apply_shortcut(sys, &state, i, j, kept)?;
        if next.jumps[new_step] {
            check_jump(sys, dom, &next, new_step)?;
        }
        trace.push(TraceEvent::Primary {
            tile,
            i,
            j,
            origin_i: state.origins[i],
            origin_j: state.origins[j],
            parent_length: n,
            outer_length,
            inner_length,
            kept,
            removed,
        });
        state = next;
    }
    Ok((state, trace))
}

fn first_repeat(state: &OrbitState) -> Option<(usize, usize, usize)> {
    let n = state.len();
    (0..n).find_map(|i| {
        let t = state.tiles[i]?;
        (i + 1..n).find(|&j| state.tiles[j] == Some(t)).map(|j| (i, j, t))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surgery::domain::{Chart, Tile};
    use crate::system::{Axis, Domain, MapSpec};

    /// `x -> x + 1` on the circle `[0, 3)`.
    fn circle_shift() -> MapSystem {
        let spec = MapSpec {
            name: "shift".into(),
            map: vec!["mod(x1 + 1, 3)".into()],
            inverse: Some(vec!["mod(x1 - 1, 3)".into()]),
            jacobian: Some(vec![vec!["1".into()]]),
            ..Default::default()
        };
        let domain = Domain::new(vec![Axis { lo: 0.0, hi: 3.0, periodic: true }]).unwrap();
        MapSystem::from_spec(domain, spec).unwrap()
    }

    fn tiles_at(centers: &[f64]) -> PerturbationDomain {
        PerturbationDomain {
            charts: centers.iter().map(|c| Chart { lo: vec![c - 0.25], hi: vec![c + 0.25] }).collect(),
            tiles: centers
                .iter()
                .enumerate()
                .map(|(s, c)| Tile { chart: s, center: vec![*c], edge: 0.5 })
                .collect(),
            adjacency: None,
            n: 1,
            theta: 0.5,
            delta: 1.0,
            eta: None,
            eta_override: None,
        }
    }

    /// `laps` turns around the circle, drifting by 0.02 per turn, closed by a jump.
    fn laps(laps: usize) -> PseudoOrbit {
        PseudoOrbit::new(
            (0..3 * laps)
                .map(|i| vec![0.1 + (i % 3) as f64 + 0.02 * (i / 3) as f64])
                .collect(),
        )
    }

    fn first_event(trace: &[TraceEvent]) -> (usize, usize, usize, usize, Branch) {
        match &trace[0] {
            TraceEvent::Primary { i, j, outer_length, inner_length, kept, .. } => {
                (*i, *j, *outer_length, *inner_length, *kept)
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn distinct_tiles_leave_the_orbit_alone() {
        let sys = circle_shift();
        let dom = tiles_at(&[0.0, 1.0, 2.0]);
        let state = analyze(&sys, &dom, &laps(1)).unwrap();
        assert!(state.jump_positions().is_empty());
        let state = analyze(&sys, &dom, &PseudoOrbit::new(vec![vec![0.1], vec![1.12], vec![2.12]])).unwrap();
        assert_eq!(state.jump_positions(), vec![0, 2]);
        let (out, trace) = primary_shortcuts(&sys, &dom, &state, Some(2)).unwrap();
        assert!(trace.is_empty());
        assert_eq!(out, state);
    }

    #[test]
    fn jumps_must_stay_in_a_tile() {
        let sys = circle_shift();
        let dom = tiles_at(&[0.0, 1.0, 2.0]);
        let po = PseudoOrbit::new(vec![vec![0.1], vec![1.1], vec![2.1], vec![0.4], vec![1.4], vec![2.4]]);
        assert!(matches!(analyze(&sys, &dom, &po), Err(SurgeryError::JumpOutsideTile { index: 2 })));
    }

    #[test]
    fn condition_three_forces_the_inner_branch() {
        let sys = circle_shift();
        let dom = tiles_at(&[0.0, 1.0, 2.0]);
        let state = analyze(&sys, &dom, &laps(3)).unwrap();
        assert_eq!(state.jump_positions(), vec![2, 5, 8]);
        let (out, trace) = primary_shortcuts(&sys, &dom, &state, Some(2)).unwrap();
        assert_eq!(first_event(&trace), (0, 3, 6, 3, Branch::Inner));
        assert_eq!(out.len(), 3);
        assert_eq!(out.origins, vec![1, 2, 3]);
        assert_eq!(out.jump_positions(), vec![1, 2]);
    }

    #[test]
    fn outer_branch_is_preferred() {
        let sys = circle_shift();
        let dom = tiles_at(&[0.0, 1.0, 2.0]);
        let state = analyze(&sys, &dom, &laps(3)).unwrap();
        let (out, trace) = primary_shortcuts(&sys, &dom, &state, Some(4)).unwrap();
        assert_eq!(first_event(&trace), (0, 3, 6, 3, Branch::Outer));
        assert_eq!(trace.len(), 2);
        assert_eq!(out.origins, vec![0, 7, 8]);
        for e in &trace {
            if let TraceEvent::Primary { parent_length, outer_length, inner_length, .. } = e {
                assert_eq!(outer_length + inner_length, *parent_length);
            }
        }
    }

    #[test]
    fn multiple_of_ell_is_not_requestable() {
        let sys = circle_shift();
        let dom = tiles_at(&[0.0, 1.0, 2.0]);
        let state = analyze(&sys, &dom, &laps(2)).unwrap();
        assert!(matches!(
            primary_shortcuts(&sys, &dom, &state, Some(2)),
            Err(SurgeryError::Condition3NotRequestable { length: 6, ell: 2 })
        ));
        let (out, _) = primary_shortcuts(&sys, &dom, &state, None).unwrap();
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn branch_rule() {
        assert_eq!(choose_branch(5, 0, 2, Some(2)), (Branch::Outer, 3, 2));
        assert_eq!(choose_branch(5, 0, 3, Some(2)), (Branch::Inner, 2, 3));
        assert_eq!(choose_branch(5, 0, 3, None), (Branch::Outer, 2, 3));
    }
}
