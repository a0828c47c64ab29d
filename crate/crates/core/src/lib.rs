//! Recurrent-class decomposition of maps on boxes and tori, homoclinic periods,
//! and pseudo-orbit surgery with period control.

pub mod config;
pub mod expr;
pub mod graph;
pub mod models;
pub mod periodic;
pub mod report;
pub mod surgery;
pub mod system;

pub use system::{Axis, Bump, Domain, MapSpec, MapSystem, OrbitSegment, SystemError};
