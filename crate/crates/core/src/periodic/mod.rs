//! Periodic orbits, resonance, invariant manifolds and homoclinic intersections.

mod crossings;
mod homoclinic;
mod manifold;
mod orbits;
mod resonance;

pub use crossings::{find_crossings, Crossing, TRANSVERSE_DEG};
pub use homoclinic::{
    closure_violations, detect_cycle, intersection_times, pointwise_class, translation_violations,
    CycleReport, CycleVerdict, DirectionVerdict, IntersectionTimeSet, PointwiseClass, TimeRecord,
};
pub use manifold::{grow_manifold, saddle_data, ManifoldCurve, ManifoldParams, SaddleData, Stability};
pub use orbits::{find_periodic_orbits, k_set, OrbitParams, OrbitSearch, PeriodicOrbit, TAU_ORB};
pub use resonance::{classify, classify_multipliers, ResonanceParams, ResonanceReport, Verdict};

use thiserror::Error;

use crate::system::SystemError;

#[derive(Debug, Error)]
pub enum PeriodicError {
    #[error("max_period must be at least 1")]
    InvalidPeriod,
    #[error("operation requires dimension 2, system has dimension {0}")]
    UnsupportedDimension(usize),
    #[error("orbit is not a saddle: multipliers {0:?}")]
    NotSaddle(Vec<[f64; 2]>),
    #[error("no transverse intersection between W^u(p) and W^s(q) was detected")]
    NoIntersection,
    #[error(transparent)]
    System(#[from] SystemError),
}
