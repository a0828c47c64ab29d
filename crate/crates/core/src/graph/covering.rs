use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{GraphError, Provenance, TransitionGraph};
use crate::system::{minimal_image, Domain, MapSystem};

/// Upper bound on the number of grid cells of a covering.
pub const MAX_CELLS: usize = 1 << 22;
/// Slack, relative to the smallest box width, when testing closed box distances.
pub const EDGE_TOL: f64 = 1e-12;

/// Padding added around sample images.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Padding {
    /// `L * diam(B) / 2` with the system's Lipschitz bound.
    #[default]
    Lipschitz,
    None,
    Fixed(f64),
}

impl Serialize for Padding {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Padding::Lipschitz => s.serialize_str("lipschitz"),
            Padding::None => s.serialize_str("none"),
            Padding::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Padding {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Name(String),
            Value(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Name(n) if n == "lipschitz" => Ok(Padding::Lipschitz),
            Raw::Name(n) if n == "none" => Ok(Padding::None),
            Raw::Name(n) => Err(serde::de::Error::custom(format!(
                "padding must be \"lipschitz\", \"none\" or a number, got \"{n}\""
            ))),
            Raw::Value(v) if v >= 0.0 && v.is_finite() => Ok(Padding::Fixed(v)),
            Raw::Value(v) => Err(serde::de::Error::custom(format!(
                "padding must be non-negative, got {v}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphParams {
    pub samples_per_axis: usize,
    pub padding: Padding,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            samples_per_axis: 3,
            padding: Padding::Lipschitz,
        }
    }
}

/// Axis-aligned box restricting a covering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl RegionBox {
    fn overlaps(&self, lo: &[f64], hi: &[f64]) -> bool {
        (0..lo.len()).all(|j| self.lo[j] < hi[j] && lo[j] < self.hi[j])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub coords: Vec<usize>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Cell {
    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }
}

/// `2^depth` cells per axis; node ids index `cells`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxCovering {
    pub depth: u32,
    pub per_axis: usize,
    pub domain: Domain,
    pub cells: Vec<Cell>,
    /// Linear grid index (axis 0 fastest) to node id; `None` outside the region.
    pub index: Vec<Option<usize>>,
}

impl BoxCovering {
    pub fn new(domain: &Domain, depth: u32, region: Option<&[RegionBox]>) -> Result<Self, GraphError> {
        if depth == 0 {
            return Err(GraphError::InvalidDepth);
        }
        let d = domain.dim();
        let per_axis = 1usize
            .checked_shl(depth)
            .filter(|_| depth < 32)
            .ok_or(GraphError::CoveringTooLarge {
                cells: usize::MAX,
                limit: MAX_CELLS,
            })?;
        let total = (0..d).try_fold(1usize, |acc, _| acc.checked_mul(per_axis));
        let total = match total {
            Some(t) if t <= MAX_CELLS => t,
            _ => {
                return Err(GraphError::CoveringTooLarge {
                    cells: total.unwrap_or(usize::MAX),
                    limit: MAX_CELLS,
                })
            }
        };
        if let Some(boxes) = region {
            for b in boxes {
                if b.lo.len() != d || b.hi.len() != d {
                    return Err(GraphError::RegionDimension {
                        expected: d,
                        got: b.lo.len().max(b.hi.len()),
                    });
                }
            }
        }
        let mut cells = Vec::new();
        let mut index = vec![None; total];
        for (lin, slot) in index.iter_mut().enumerate() {
            let coords = unravel(lin, per_axis, d);
            let (lo, hi): (Vec<f64>, Vec<f64>) = coords
                .iter()
                .zip(&domain.axes)
                .map(|(&i, a)| {
                    let w = a.width() / per_axis as f64;
                    (a.lo + i as f64 * w, a.lo + (i + 1) as f64 * w)
                })
                .unzip();
            let keep = region.is_none_or(|boxes| boxes.iter().any(|b| b.overlaps(&lo, &hi)));
            if keep {
                *slot = Some(cells.len());
                cells.push(Cell { coords, lo, hi });
            }
        }
        if cells.is_empty() {
            return Err(GraphError::RegionOutsideDomain);
        }
        Ok(Self {
            depth,
            per_axis,
            domain: domain.clone(),
            cells,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn box_widths(&self) -> Vec<f64> {
        self.domain
            .axes
            .iter()
            .map(|a| a.width() / self.per_axis as f64)
            .collect()
    }

    pub fn box_diameter(&self) -> f64 {
        self.box_widths().iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    /// Node whose half-open box contains `x`.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        if !self.domain.contains(x) {
            return None;
        }
        let x = self.domain.wrapped(x);
        let mut lin = 0;
        let mut stride = 1;
        for (v, a) in x.iter().zip(&self.domain.axes) {
            let t = ((v - a.lo) / a.width() * self.per_axis as f64).floor() as isize;
            let i = t.clamp(0, self.per_axis as isize - 1) as usize;
            lin += i * stride;
            stride *= self.per_axis;
        }
        self.index[lin]
    }

    /// Cell-interior sample points `(j + 1/2) / s` along each axis.
    pub fn samples(&self, node: usize, per_axis: usize) -> Vec<Vec<f64>> {
        let cell = &self.cells[node];
        let d = cell.lo.len();
        (0..per_axis.pow(d as u32))
            .map(|lin| {
                unravel(lin, per_axis, d)
                    .iter()
                    .enumerate()
                    .map(|(j, &i)| {
                        cell.lo[j] + (i as f64 + 0.5) / per_axis as f64 * (cell.hi[j] - cell.lo[j])
                    })
                    .collect()
            })
            .collect()
    }

    /// Euclidean distance from `y` to the closed box of `node`, using minimal images.
    pub fn distance_to_cell(&self, y: &[f64], node: usize) -> f64 {
        let cell = &self.cells[node];
        y.iter()
            .enumerate()
            .map(|(j, &v)| {
                let a = &self.domain.axes[j];
                let c = 0.5 * (cell.lo[j] + cell.hi[j]);
                let half = 0.5 * (cell.hi[j] - cell.lo[j]);
                let off = if a.periodic {
                    minimal_image(v - c, a.width())
                } else {
                    v - c
                };
                let e = (off.abs() - half).max(0.0);
                e * e
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Nodes whose closed box lies within `pad` of `y`.
    fn nodes_near(&self, y: &[f64], pad: f64, tol: f64) -> Vec<usize> {
        let n = self.per_axis as isize;
        let mut ranges = Vec::with_capacity(y.len());
        for (v, a) in y.iter().zip(&self.domain.axes) {
            let w = a.width() / self.per_axis as f64;
            let lo = ((v - pad - tol - a.lo) / w).floor() as isize;
            let hi = ((v + pad + tol - a.lo) / w).floor() as isize;
            let mut idx: Vec<usize> = if a.periodic {
                if hi - lo + 1 >= n {
                    (0..self.per_axis).collect()
                } else {
                    (lo..=hi).map(|i| i.rem_euclid(n) as usize).collect()
                }
            } else {
                (lo.max(0)..=hi.min(n - 1)).map(|i| i as usize).collect()
            };
            if idx.is_empty() {
                return Vec::new();
            }
            idx.sort_unstable();
            idx.dedup();
            ranges.push(idx);
        }
        let mut out = Vec::new();
        let mut pos = vec![0usize; ranges.len()];
        'outer: loop {
            let mut lin = 0;
            let mut stride = 1;
            for (r, &p) in ranges.iter().zip(&pos) {
                lin += r[p] * stride;
                stride *= self.per_axis;
            }
            if let Some(node) = self.index[lin] {
                if self.distance_to_cell(y, node) <= pad + tol {
                    out.push(node);
                }
            }
            for (k, p) in pos.iter_mut().enumerate() {
                *p += 1;
                if *p < ranges[k].len() {
                    continue 'outer;
                }
                *p = 0;
            }
            break;
        }
        out
    }
}

fn unravel(mut lin: usize, per_axis: usize, d: usize) -> Vec<usize> {
    (0..d)
        .map(|_| {
            let i = lin % per_axis;
            lin /= per_axis;
            i
        })
        .collect()
}

/// Outer approximation of the transition relation: `B -> B'` whenever the image of a
/// sample point of `B` lies within the padding distance of the closed box `B'`.
pub fn build_graph(
    sys: &MapSystem,
    depth: u32,
    region: Option<&[RegionBox]>,
    params: &GraphParams,
) -> Result<(BoxCovering, TransitionGraph), GraphError> {
    let covering = BoxCovering::new(sys.domain(), depth, region)?;
    let pad = match params.padding {
        Padding::Lipschitz => sys.lipschitz() * covering.box_diameter() / 2.0,
        Padding::None => 0.0,
        Padding::Fixed(v) => v,
    };
    let tol = EDGE_TOL * covering.box_widths().iter().cloned().fold(f64::INFINITY, f64::min);
    let s = params.samples_per_axis.max(1);
    let adjacency = (0..covering.len())
        .into_par_iter()
        .map(|u| {
            let mut succ = Vec::new();
            for x in covering.samples(u, s) {
                let y = sys.evaluate(&x)?;
                succ.extend(covering.nodes_near(&y, pad, tol));
            }
            Ok(succ)
        })
        .collect::<Result<Vec<_>, GraphError>>()?;
    let mut graph = TransitionGraph::from_adjacency(adjacency);
    graph.provenance = Some(Provenance {
        depth,
        samples_per_axis: s,
        padding: pad,
        padding_rule: match params.padding {
            Padding::Lipschitz => "lipschitz".into(),
            Padding::None => "none".into(),
            Padding::Fixed(_) => "fixed".into(),
        },
    });
    Ok((covering, graph))
}
