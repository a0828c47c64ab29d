use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphParams, Padding, RegionBox};
use crate::periodic::{ManifoldParams, OrbitParams, ResonanceParams};
use crate::surgery::PerturbationDomain;
use crate::system::{Axis, Domain, MapSpec, MapSystem, SystemError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{line}:{column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    System(#[from] SystemError),
}

/// Periodicity of the axes: one flag for all of them or one per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Periodicity {
    All(bool),
    PerAxis(Vec<bool>),
}

impl Default for Periodicity {
    fn default() -> Self {
        Periodicity::All(false)
    }
}

/// Expression map on a box or torus, as written in configs and surgery instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default)]
    pub name: String,
    pub dimension: usize,
    pub domain: Vec<[f64; 2]>,
    #[serde(default)]
    pub periodic: Periodicity,
    pub map: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jacobian: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl SystemConfig {
    pub fn build_domain(&self) -> Result<Domain, ConfigError> {
        let d = self.dimension;
        if self.domain.len() != d {
            return Err(ConfigError::Invalid(format!(
                "domain has {} intervals for dimension {d}",
                self.domain.len()
            )));
        }
        let flags = match &self.periodic {
            Periodicity::All(p) => vec![*p; d],
            Periodicity::PerAxis(v) if v.len() == d => v.clone(),
            Periodicity::PerAxis(v) => {
                return Err(ConfigError::Invalid(format!(
                    "periodic has {} flags for dimension {d}",
                    v.len()
                )))
            }
        };
        let axes = self
            .domain
            .iter()
            .zip(flags)
            .map(|(iv, periodic)| Axis {
                lo: iv[0],
                hi: iv[1],
                periodic,
            })
            .collect();
        Ok(Domain::new(axes)?)
    }

    pub fn build(&self) -> Result<MapSystem, ConfigError> {
        let domain = self.build_domain()?;
        let spec = MapSpec {
            name: if self.name.is_empty() { "map".into() } else { self.name.clone() },
            map: self.map.clone(),
            inverse: self.inverse.clone(),
            jacobian: self.jacobian.clone(),
            lipschitz: self.lipschitz,
            params: self.params.clone(),
        };
        Ok(MapSystem::from_spec(domain, spec)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSection {
    pub depth: u32,
    pub samples_per_axis: usize,
    pub padding: Padding,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region: Option<Vec<RegionBox>>,
}

impl Default for GraphSection {
    fn default() -> Self {
        let p = GraphParams::default();
        Self {
            depth: 6,
            samples_per_axis: p.samples_per_axis,
            padding: p.padding,
            region: None,
        }
    }
}

impl GraphSection {
    pub fn params(&self) -> GraphParams {
        GraphParams {
            samples_per_axis: self.samples_per_axis,
            padding: self.padding,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitSection {
    pub max_period: usize,
    pub seeds_per_axis: usize,
    pub max_newton_iter: usize,
    pub jitter: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region: Option<Vec<RegionBox>>,
}

impl Default for OrbitSection {
    fn default() -> Self {
        let p = OrbitParams::default();
        Self {
            max_period: 4,
            seeds_per_axis: p.seeds_per_axis,
            max_newton_iter: p.max_newton_iter,
            jitter: p.jitter,
            region: None,
        }
    }
}

impl OrbitSection {
    pub fn params(&self) -> OrbitParams {
        OrbitParams {
            seeds_per_axis: self.seeds_per_axis,
            max_newton_iter: self.max_newton_iter,
            jitter: self.jitter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomoclinicSection {
    pub n_max: i64,
    /// Fold the periods of orbits found in cycles with the target into the reported ell.
    pub include_related: bool,
}

impl Default for HomoclinicSection {
    fn default() -> Self {
        Self {
            n_max: 3,
            include_related: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CloseSection {
    pub budget: usize,
    pub eps_c0: f64,
    pub eps_c1: f64,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region: Option<Vec<RegionBox>>,
}

impl Default for CloseSection {
    fn default() -> Self {
        Self {
            budget: 50,
            eps_c0: 1e-6,
            eps_c1: 0.2,
            samples: 4096,
            region: None,
        }
    }
}

/// A full run configuration: the map plus optional per-stage tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub name: String,
    pub dimension: usize,
    pub domain: Vec<[f64; 2]>,
    #[serde(default)]
    pub periodic: Periodicity,
    pub map: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jacobian: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub graph: GraphSection,
    #[serde(default)]
    pub orbits: OrbitSection,
    #[serde(default)]
    pub manifold: ManifoldParams,
    #[serde(default)]
    pub resonance: ResonanceParams,
    #[serde(default)]
    pub homoclinic: HomoclinicSection,
    #[serde(default)]
    pub close: CloseSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationDomain>,
}

/// 1-based line and column of a byte offset.
fn line_column(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

impl Config {
    pub fn parse(src: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(src).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_column(src, s.start));
            ConfigError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        if cfg.map.len() != cfg.dimension {
            return Err(ConfigError::Invalid(format!(
                "map has {} components for dimension {}",
                cfg.map.len(),
                cfg.dimension
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&src)
    }

    pub fn system_config(&self) -> SystemConfig {
        SystemConfig {
            name: self.name.clone(),
            dimension: self.dimension,
            domain: self.domain.clone(),
            periodic: self.periodic.clone(),
            map: self.map.clone(),
            inverse: self.inverse.clone(),
            jacobian: self.jacobian.clone(),
            lipschitz: self.lipschitz,
            params: self.params.clone(),
        }
    }

    pub fn build_system(&self) -> Result<MapSystem, ConfigError> {
        self.system_config().build()
    }
}
