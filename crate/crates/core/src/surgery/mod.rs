//! Tiled perturbation domains, pseudo-orbits with jumps, the shortcut process with
//! period control, and closing by bump-supported local translations.

mod close;
mod connect;
mod domain;
mod instance;
mod pseudo_orbit;
mod secondary;

use thiserror::Error;

use crate::system::SystemError;

pub use close::{
    close_orbit, perturbation_size, support_check, CloseParams, CloseResult, CloseStatus, ClosedOrbit,
    PerturbationSize, SupportCheck,
};
pub use connect::{
    connect, connect_points, minimal_n, validate_sequence, Ball, ConnectingSequence, AFFINE_TOL, BOUND_SLACK,
    MINIMAL_N_CAP,
};
pub use domain::{default_eta, validate_domain, Chart, DomainReport, PerturbationDomain, Tile, Violation, TILE_TOL};
pub use instance::{random_instance, InstanceParams, SurgeryInstance};
pub use pseudo_orbit::{analyze, choose_branch, primary_shortcuts, Branch, OrbitState, PseudoOrbit, TraceEvent};
pub use secondary::{certify, run_surgery, secondary_shortcuts, Certificates, SurgeryConstants, SurgeryResult};

#[derive(Debug, Error)]
pub enum SurgeryError {
    #[error("perturbation domain is invalid ({} violations)", .0.violations.len())]
    InvalidDomain(Box<DomainReport>),
    #[error("pseudo-orbit is empty")]
    EmptyPseudoOrbit,
    #[error("point has dimension {found}, expected {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("declared jump flags do not match the map")]
    JumpFlags,
    #[error("ell must be at least 1")]
    InvalidEll,
    #[error("jump leaving point {index} is not contained in one tile")]
    JumpOutsideTile { index: usize },
    #[error("condition 3 cannot be requested: length {length} is a multiple of ell = {ell}")]
    Condition3NotRequestable { length: usize, ell: usize },
    #[error("jump {jump}: endpoints are not in 5/4 of the tile")]
    OutsideScaledTile { jump: usize },
    #[error("jump {jump}: defect {defect:e} at k = {k} exceeds eta * margin = {bound:e} with N = {n}; minimal N: {}", minimal_n.map_or("none found".to_string(), |m| m.to_string()))]
    BoundUnsatisfiable {
        jump: usize,
        k: usize,
        defect: f64,
        bound: f64,
        n: usize,
        minimal_n: Option<usize>,
    },
    #[error("jump {jump}: initial radius {radius:e} at k = {k} exceeds the margin {margin:e}")]
    InitialRadius { jump: usize, k: usize, radius: f64, margin: f64 },
    #[error("f^k is not affine on 3/2 of tile {tile}")]
    NotAffine { tile: usize },
    #[error("linear part of f^k is singular near tile {tile}")]
    Singular { tile: usize },
    #[error("connecting sequence for jump {jump}: {reason}")]
    SequenceMismatch { jump: usize, reason: String },
    #[error("merged radius {radius:e} of ball {ball:?} exceeds 2 (r_i + r_j) / theta = {bound:e}")]
    RadiusRule {
        ball: (usize, usize),
        radius: f64,
        bound: f64,
        trace: Box<Vec<TraceEvent>>,
    },
    #[error("ball {ball:?} merged {merges} times, more than 4^d = {limit}")]
    MergeLimit {
        ball: (usize, usize),
        merges: usize,
        limit: usize,
        trace: Box<Vec<TraceEvent>>,
    },
    #[error("merged radius {radius:e} of ball {ball:?} exceeds the a-priori bound {margin:e}")]
    APriori {
        ball: (usize, usize),
        radius: f64,
        margin: f64,
        trace: Box<Vec<TraceEvent>>,
    },
    #[error("point {0:?} is not in any tile")]
    NoTile(Vec<f64>),
    #[error("point is periodic with period {period}, a multiple of ell")]
    PeriodicMultiple { period: usize },
    #[error("consecutive jumps are {gap} steps apart, fewer than N = {n}")]
    JumpsTooClose { gap: usize, n: usize },
    #[error(transparent)]
    System(#[from] SystemError),
}

impl SurgeryError {
    /// Stable snake_case name of the variant, used in reports.
    pub fn kind(&self) -> &'static str {
        match self {
            SurgeryError::InvalidDomain(_) => "invalid_domain",
            SurgeryError::EmptyPseudoOrbit => "empty_pseudo_orbit",
            SurgeryError::Dimension { .. } => "dimension",
            SurgeryError::JumpFlags => "jump_flags",
            SurgeryError::InvalidEll => "invalid_ell",
            SurgeryError::JumpOutsideTile { .. } => "jump_outside_tile",
            SurgeryError::Condition3NotRequestable { .. } => "condition3_not_requestable",
            SurgeryError::OutsideScaledTile { .. } => "outside_scaled_tile",
            SurgeryError::BoundUnsatisfiable { .. } => "bound_unsatisfiable",
            SurgeryError::InitialRadius { .. } => "initial_radius",
            SurgeryError::NotAffine { .. } => "not_affine",
            SurgeryError::Singular { .. } => "singular",
            SurgeryError::SequenceMismatch { .. } => "sequence_mismatch",
            SurgeryError::RadiusRule { .. } => "radius_rule",
            SurgeryError::MergeLimit { .. } => "merge_limit",
            SurgeryError::APriori { .. } => "a_priori",
            SurgeryError::NoTile(_) => "no_tile",
            SurgeryError::PeriodicMultiple { .. } => "periodic_multiple",
            SurgeryError::JumpsTooClose { .. } => "jumps_too_close",
            SurgeryError::System(_) => "system",
        }
    }

    /// Shortcut trace up to a hard failure.
    pub fn trace(&self) -> Option<&[TraceEvent]> {
        match self {
            SurgeryError::RadiusRule { trace, .. } | SurgeryError::MergeLimit { trace, .. } | SurgeryError::APriori { trace, .. } => {
                Some(trace)
            }
            _ => None,
        }
    }

    /// Failures the proof rules out; they point at an invalid domain or a bug.
    pub fn is_hard_failure(&self) -> bool {
        matches!(
            self,
            SurgeryError::RadiusRule { .. } | SurgeryError::MergeLimit { .. } | SurgeryError::APriori { .. }
        )
    }
}
