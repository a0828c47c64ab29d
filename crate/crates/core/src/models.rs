//! Built-in model systems used by tests, examples and goldens.

use std::collections::BTreeMap;

use crate::system::{Axis, Domain, MapSpec, MapSystem};

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn build(name: &str, domain: Domain, map: &[&str], inverse: Option<&[&str]>, jac: Option<&[&[&str]]>, params: &[(&str, f64)]) -> MapSystem {
    let spec = MapSpec {
        name: name.to_string(),
        map: strings(map),
        inverse: inverse.map(strings),
        jacobian: jac.map(|rows| rows.iter().map(|r| strings(r)).collect()),
        lipschitz: None,
        params: params
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect::<BTreeMap<_, _>>(),
    };
    MapSystem::from_spec(domain, spec).expect("built-in model must verify")
}

/// `x -> 2x mod 1`.
pub fn doubling() -> MapSystem {
    build("doubling", Domain::unit_torus(1), &["mod(2*x1, 1)"], None, Some(&[&["2"]]), &[])
}

/// `x -> x + alpha mod 1`.
pub fn rotation(alpha: f64) -> MapSystem {
    build(
        "rotation",
        Domain::unit_torus(1),
        &["mod(x1 + alpha, 1)"],
        Some(&["mod(x1 - alpha, 1)"]),
        Some(&[&["1"]]),
        &[("alpha", alpha)],
    )
}

/// Arnold's cat map `(2x + y, x + y) mod 1`.
pub fn cat_map() -> MapSystem {
    build(
        "cat",
        Domain::unit_torus(2),
        &["mod(2*x1 + x2, 1)", "mod(x1 + x2, 1)"],
        Some(&["mod(x1 - x2, 1)", "mod(2*x2 - x1, 1)"]),
        Some(&[&["2", "1"], &["1", "1"]]),
        &[],
    )
}

/// Chirikov standard map on the unit torus with kick strength `k`.
pub fn standard_map(k: f64) -> MapSystem {
    build(
        "standard",
        Domain::unit_torus(2),
        &[
            "mod(x1 + x2 + k/tau*sin(tau*x1), 1)",
            "mod(x2 + k/tau*sin(tau*x1), 1)",
        ],
        Some(&[
            "mod(x1 - x2, 1)",
            "mod(x2 - k/tau*sin(tau*(x1 - x2)), 1)",
        ]),
        Some(&[&["1 + k*cos(tau*x1)", "1"], &["k*cos(tau*x1)", "1"]]),
        &[("k", k)],
    )
}

/// `(x, y) -> (2x, y/2)` on `[-1, 1]^2`.
pub fn linear_saddle() -> MapSystem {
    let axis = Axis {
        lo: -1.0,
        hi: 1.0,
        periodic: false,
    };
    build(
        "linear-saddle",
        Domain::new(vec![axis, axis]).unwrap(),
        &["2*x1", "x2/2"],
        Some(&["x1/2", "2*x2"]),
        Some(&[&["2", "0"], &["0", "0.5"]]),
        &[],
    )
}

/// Two half-circles exchanged: `[0, 1/2)` is translated onto `[1/2, 1)`, which is
/// folded back onto `[0, 1/2)` with slope 2. The square acts as doubling on each half.
pub fn swap() -> MapSystem {
    build(
        "swap",
        Domain::unit_torus(1),
        &["(1 - floor(2*x1))*(x1 + 0.5) + floor(2*x1)*mod(2*x1 - 1, 0.5)"],
        None,
        None,
        &[],
    )
}

pub fn identity(dim: usize) -> MapSystem {
    let map: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    let jac: Vec<Vec<String>> = (0..dim)
        .map(|i| (0..dim).map(|j| if i == j { "1".into() } else { "0".into() }).collect())
        .collect();
    let spec = MapSpec {
        name: "identity".into(),
        map: map.clone(),
        inverse: Some(map),
        jacobian: Some(jac),
        lipschitz: None,
        params: BTreeMap::new(),
    };
    MapSystem::from_spec(Domain::unit_torus(dim), spec).expect("identity verifies")
}
