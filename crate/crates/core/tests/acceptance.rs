//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero on any failure.
//! Every derived quantity is checked against an oracle written here, not against library helpers.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use mixdec_core::config::Config;
use mixdec_core::graph::{cyclic_classes, recurrent_classes, RecurrentClass, TransitionGraph};
use mixdec_core::report::{execute, Command, Format, RunOptions};
use mixdec_core::surgery::{close_orbit, random_instance, run_surgery, CloseParams, CloseStatus, InstanceParams, TraceEvent};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

const GRAPH_SEED: u64 = 20_240_601;
const GRAPHS: usize = 1000;
const MAX_NODES: usize = 12;
const SURGERY_INSTANCES: u64 = 500;
const ORBIT_SEED: u64 = 0;

const MULTIPLIER_TOL: f64 = 1e-10;
const RESIDUAL_TOL: f64 = 1e-10;
/// Relative slack on the merge radius bound and the C0/C1 budgets.
const BOUND_SLACK: f64 = 1e-9;
/// Iterates closer than this count as a return.
const RETURN_TOL: f64 = 1e-3;

struct Outcome {
    pass: bool,
    detail: String,
    /// Deterministic record of the run, compared byte for byte by criterion 7.
    report: Vec<u8>,
}

fn bytes<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec_pretty(value).expect("acceptance records serialize")
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn opts() -> RunOptions {
    RunOptions { seed: ORBIT_SEED, out_dir: PathBuf::from("unused"), format: Format::Json }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Boolean adjacency restricted to the nodes of `c`, in the order of `c.nodes`.
fn restricted(g: &TransitionGraph, nodes: &[usize]) -> Vec<Vec<bool>> {
    nodes
        .iter()
        .map(|&u| nodes.iter().map(|&v| g.successors(u).contains(&v)).collect())
        .collect()
}

fn bool_product(a: &[Vec<bool>], b: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).any(|k| a[i][k] && b[k][j])).collect())
        .collect()
}

fn bool_power(a: &[Vec<bool>], e: usize) -> Vec<Vec<bool>> {
    let n = a.len();
    let mut out: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| i == j).collect()).collect();
    for _ in 0..e {
        out = bool_product(&out, a);
    }
    out
}

/// Gcd of all cycle lengths. Every closed walk splits into simple cycles of length at most
/// `m`, so the closed walks of length `1..=m` already generate the same gcd.
fn period_by_closed_walks(g: &TransitionGraph, c: &RecurrentClass) -> usize {
    let a = restricted(g, &c.nodes);
    let m = a.len();
    let mut power = a.clone();
    let mut period = 0;
    for k in 1..=m {
        if (0..m).any(|i| power[i][i]) {
            period = gcd(period, k);
        }
        power = bool_product(&power, &a);
    }
    period
}

fn random_digraph(rng: &mut ChaCha8Rng) -> TransitionGraph {
    let n = rng.gen_range(1..=MAX_NODES);
    let density = rng.gen_range(0.1..=0.5);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if rng.gen_bool(density) {
                edges.push((u, v));
            }
        }
    }
    TransitionGraph::from_edges(n, &edges)
}

fn corpus() -> Vec<TransitionGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(GRAPH_SEED);
    (0..GRAPHS).map(|_| random_digraph(&mut rng)).collect()
}

fn criterion1() -> Outcome {
    let start = Instant::now();
    let mut classes = 0;
    let mut mismatches = Vec::new();
    let mut periods = Vec::new();
    for (i, g) in corpus().iter().enumerate() {
        for c in recurrent_classes(g) {
            classes += 1;
            let oracle = period_by_closed_walks(g, &c);
            let got = cyclic_classes(g, &c).map(|d| d.period).unwrap_or(0);
            periods.push(got);
            if got != oracle {
                mismatches.push(json!({ "graph": i, "nodes": c.nodes, "period": got, "oracle": oracle }));
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: mismatches.is_empty() && classes > 0 && elapsed < Duration::from_secs(30),
        detail: format!("{GRAPHS} graphs, {classes} classes, {} mismatches, {elapsed:.2?}", mismatches.len()),
        report: bytes(&json!({ "classes": classes, "periods": periods, "mismatches": mismatches })),
    }
}

fn criterion2() -> Outcome {
    let start = Instant::now();
    let mut checked = 0;
    let mut failures = Vec::new();
    let mut exponents = Vec::new();
    for (i, g) in corpus().iter().enumerate() {
        for c in recurrent_classes(g) {
            let dec = match cyclic_classes(g, &c) {
                Ok(d) => d,
                Err(e) => {
                    failures.push(json!({ "graph": i, "error": e.to_string() }));
                    continue;
                }
            };
            let l = dec.period;
            // partition of the class into l parts
            let mut covered: Vec<usize> = dec.classes.concat();
            covered.sort_unstable();
            if covered != c.nodes || dec.classes.len() != l || dec.classes.iter().any(Vec::is_empty) {
                failures.push(json!({ "graph": i, "check": "partition" }));
                continue;
            }
            let part_of = |u: usize| dec.classes.iter().position(|p| p.contains(&u));
            for &u in &c.nodes {
                let k = part_of(u).unwrap();
                for &v in g.successors(u).iter().filter(|v| c.contains(**v)) {
                    if part_of(v) != Some((k + 1) % l) {
                        failures.push(json!({ "graph": i, "check": "edge", "edge": [u, v] }));
                    }
                }
            }
            let a = restricted(g, &c.nodes);
            let index = |u: usize| c.nodes.iter().position(|&x| x == u).unwrap();
            for (part, cert) in dec.classes.iter().zip(&dec.mixing) {
                checked += 1;
                let m = part.len();
                let wielandt = (m - 1) * (m - 1) + 1;
                let Some(e) = cert.exponent() else {
                    failures.push(json!({ "graph": i, "check": "certificate", "certificate": cert }));
                    continue;
                };
                exponents.push(e);
                // every pair of the part joined by a walk of length exactly e * l
                let walks = bool_power(&a, e * l);
                let primitive = part.iter().all(|&u| part.iter().all(|&v| walks[index(u)][index(v)]));
                if e > wielandt || !primitive {
                    failures.push(json!({ "graph": i, "check": "mixing", "exponent": e, "bound": wielandt }));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: failures.is_empty() && checked > 0 && elapsed < Duration::from_secs(60),
        detail: format!("{checked} cyclic classes, {} failures, {elapsed:.2?}", failures.len()),
        report: bytes(&json!({ "cyclic_classes": checked, "exponents": exponents, "failures": failures })),
    }
}

fn decompose(name: &str) -> Result<(serde_json::Value, Vec<u8>, Duration), String> {
    let start = Instant::now();
    let cmd = Command::Decompose { config: config(name), depth: None, region: None, orbits: false };
    let product = execute(&cmd, &opts()).map_err(|e| e.to_string())?;
    let value = serde_json::from_slice(product.report()).map_err(|e| e.to_string())?;
    Ok((value, product.report().to_vec(), start.elapsed()))
}

/// Closed-walk periods of the recurrent classes of the graph built from a config.
fn oracle_periods(name: &str) -> Vec<usize> {
    let cfg = Config::load(&config(name)).unwrap();
    let sys = cfg.build_system().unwrap();
    let (_, g) = mixdec_core::graph::build_graph(&sys, cfg.graph.depth, None, &cfg.graph.params()).unwrap();
    recurrent_classes(&g).iter().map(|c| period_by_closed_walks(&g, c)).collect()
}

fn criterion3() -> Outcome {
    let goldens: [(&str, usize, &[usize]); 3] = [
        ("doubling.toml", 1, &[64]),
        ("rotation-quarter.toml", 4, &[1, 1, 1, 1]),
        ("swap.toml", 2, &[32, 32]),
    ];
    let mut pass = true;
    let mut lines = Vec::new();
    let mut reports = Vec::new();
    for (name, period, sizes) in goldens {
        match decompose(name) {
            Ok((r, raw, elapsed)) => {
                let classes = r["classes"].as_array().unwrap();
                let got_sizes: Vec<usize> = classes
                    .first()
                    .map(|c| c["cyclic_class_sizes"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap() as usize).collect())
                    .unwrap_or_default();
                let mixing = classes.first().is_some_and(|c| {
                    c["mixing"].as_array().unwrap().iter().all(|m| m["status"] == "exponent")
                });
                let ok = classes.len() == 1
                    && classes[0]["period"] == period
                    && got_sizes == sizes
                    && mixing
                    && oracle_periods(name) == vec![period]
                    && elapsed < Duration::from_secs(10);
                pass &= ok;
                lines.push(format!("{name}: {} class, period {}, {:.2?}", classes.len(), classes.first().map_or(0, |c| c["period"].as_u64().unwrap()), elapsed));
                reports.push(raw);
            }
            Err(e) => {
                pass = false;
                lines.push(format!("{name}: {e}"));
            }
        }
    }
    Outcome { pass, detail: lines.join("; "), report: reports.concat() }
}

fn criterion4() -> Outcome {
    let start = Instant::now();
    let cmd = Command::Homoclinic { config: config("cat.toml"), orbit_id: 0, partner: None, n_max: Some(3) };
    let product = match execute(&cmd, &opts()) {
        Ok(p) => p,
        Err(e) => return Outcome { pass: false, detail: e.to_string(), report: Vec::new() },
    };
    let r: serde_json::Value = serde_json::from_slice(product.report()).unwrap();
    let root5 = 5f64.sqrt();
    let expected = [(3.0 + root5) / 2.0, (3.0 - root5) / 2.0];
    let multipliers: Vec<[f64; 2]> = serde_json::from_value(r["p"]["multipliers"].clone()).unwrap();
    let fixed = r["p"]["period"] == 1 && r["p"]["points"][0].as_array().unwrap().iter().all(|c| c.as_f64().unwrap().abs() < 1e-9);
    let multiplier_error = multipliers
        .iter()
        .zip(expected)
        .map(|(z, e)| (z[0] - e).abs().max(z[1].abs()))
        .fold(0.0, f64::max);
    let times: Vec<i64> = serde_json::from_value(r["intersection_times"]["times"].clone()).unwrap();
    let contains = |n: i64| times.contains(&n);
    let n_max = 3;
    let mut closure = 0;
    for &a in &times {
        for &b in &times {
            if (a + b).abs() <= n_max && !contains(a + b) {
                closure += 1;
            }
        }
    }
    // the period of p is 1, so every translate by +-1 inside the range must be present
    let translation = times.iter().flat_map(|&n| [n - 1, n + 1]).filter(|m| m.abs() <= n_max && !contains(*m)).count();
    let ell = times.iter().fold(0usize, |acc, &n| gcd(acc, n.unsigned_abs() as usize));
    let reported_clean = r["closure_violations"].as_array().unwrap().is_empty()
        && r["translation_violations"].as_array().unwrap().is_empty();
    let elapsed = start.elapsed();
    let pass = fixed
        && multiplier_error < MULTIPLIER_TOL
        && ell == 1
        && r["ell"] == 1
        && closure == 0
        && translation == 0
        && reported_clean
        && elapsed < Duration::from_secs(120);
    Outcome {
        pass,
        detail: format!(
            "multiplier error {multiplier_error:.1e}, times {times:?}, ell {ell}, {closure} closure and {translation} translation violations, {elapsed:.2?}"
        ),
        report: product.report().to_vec(),
    }
}

fn circle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

fn criterion5() -> Outcome {
    let start = Instant::now();
    let params = InstanceParams::default();
    let mut failures = Vec::new();
    let mut records = Vec::new();
    let (mut merges_seen, mut ell_checks) = (0, 0);
    for seed in 0..SURGERY_INSTANCES {
        let inst = random_instance(seed, &params);
        let mut fail = |why: String| failures.push(json!({ "seed": seed, "failure": why }));
        let d = inst.domain.dim();
        let default_eta = (inst.domain.theta / 4.0).powi(4i32.pow(d as u32));
        if d != 1 || inst.domain.eta_override.is_some() || (inst.domain.eta() - default_eta).abs() > 0.0 {
            fail(format!("instance is not 1-D with the default eta: d = {d}, eta = {}", inst.domain.eta()));
            continue;
        }
        let sys = inst.system.build().unwrap();
        let result = match run_surgery(&sys, &inst.domain, &inst.pseudo_orbit, inst.ell, None) {
            Ok(r) => r,
            Err(e) => {
                fail(e.to_string());
                continue;
            }
        };
        let balls: Vec<_> = result.sequences.iter().flat_map(|s| &s.balls).filter(|b| b.radius > 0.0).collect();
        let limit = 4usize.pow(d as u32);
        for (i, a) in balls.iter().enumerate() {
            if a.merges > limit {
                fail(format!("ball {:?} merged {} times", (a.owner, a.k), a.merges));
            }
            for b in &balls[i + 1..] {
                if circle_distance(a.center[0], b.center[0]) < a.radius + b.radius {
                    fail(format!("balls {:?} and {:?} intersect", (a.owner, a.k), (b.owner, b.k)));
                }
            }
        }
        let theta = inst.domain.theta;
        for event in &result.trace {
            if let TraceEvent::Secondary { radius_i, radius_j, radius_after, merges, .. } = event {
                merges_seen += 1;
                if *radius_after > 2.0 / theta * (radius_i + radius_j) * (1.0 + BOUND_SLACK) {
                    fail(format!("merged radius {radius_after} exceeds 2/theta ({radius_i} + {radius_j})"));
                }
                if *merges > limit {
                    fail(format!("merge count {merges} above {limit}"));
                }
            }
        }
        let n = inst.pseudo_orbit.points.len();
        let final_len = result.orbit.len();
        if let Some(l) = inst.ell {
            if [2, 3].contains(&l) && !n.is_multiple_of(l) {
                ell_checks += 1;
                if final_len % l == 0 {
                    fail(format!("final length {final_len} is a multiple of {l}"));
                }
            }
        }
        records.push(json!({ "seed": seed, "length": [n, final_len], "ell": inst.ell, "balls": balls.len(), "shortcuts": result.trace.len() }));
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: failures.is_empty() && elapsed < Duration::from_secs(120),
        detail: format!(
            "{SURGERY_INSTANCES} instances, {merges_seen} merges, {ell_checks} length checks, {} violations, {elapsed:.2?}",
            failures.len()
        ),
        report: bytes(&json!({ "runs": records, "failures": failures })),
    }
}

fn criterion6() -> Outcome {
    let start = Instant::now();
    let path = config("rotation-third-close.toml");
    let cfg = Config::load(&path).unwrap();
    let f = Arc::new(cfg.build_system().unwrap());
    let dom = cfg.perturbation.clone().unwrap();
    let params = CloseParams {
        budget: cfg.close.budget,
        samples: cfg.close.samples,
        eps_c0: cfg.close.eps_c0,
        eps_c1: cfg.close.eps_c1,
    };
    let target = [0.0];
    let res = match close_orbit(f.clone(), &dom, &target, 2, None, &params) {
        Ok(r) => r,
        Err(e) => return Outcome { pass: false, detail: e.to_string(), report: Vec::new() },
    };
    let Some(g) = res.perturbed.clone().filter(|_| res.status == CloseStatus::Closed) else {
        return Outcome { pass: false, detail: format!("status {:?}: {:?}", res.status, res.message), report: Vec::new() };
    };
    // genuine period: g^3 returns, g and g^2 do not
    let mut x = target.to_vec();
    let mut returns = Vec::new();
    for k in 1..=3 {
        x = g.evaluate(&x).unwrap();
        returns.push((k, circle_distance(x[0], target[0])));
    }
    let residual = returns[2].1;
    let period3 = residual < RESIDUAL_TOL && returns[..2].iter().all(|(_, d)| *d > RETURN_TOL);
    // support: identical outside the balls, changed at every ball centre
    let inside = |y: f64| res.bumps.iter().any(|b| circle_distance(y, b.center[0]) < b.radius);
    let grid = 200_000;
    let mut leaks = 0;
    let mut c0: f64 = 0.0;
    for i in 0..grid {
        let y = i as f64 / grid as f64;
        let (fy, gy) = (f.evaluate(&[y]).unwrap()[0], g.evaluate(&[y]).unwrap()[0]);
        if !inside(y) && fy != gy {
            leaks += 1;
        }
        c0 = c0.max(circle_distance(fy, gy));
    }
    let mut c1: f64 = 0.0;
    let mut silent = 0;
    for b in &res.bumps {
        let c = b.center[0];
        let (fc, gc) = (f.evaluate(&[c]).unwrap()[0], g.evaluate(&[c]).unwrap()[0]);
        if fc == gc {
            silent += 1;
        }
        let h = b.radius * 1e-3;
        for i in 0..=2000 {
            let y = c - b.radius + 2.0 * b.radius * i as f64 / 2000.0;
            let diff = |s: f64| {
                let (fs, gs) = (f.evaluate(&[s]).unwrap()[0], g.evaluate(&[s]).unwrap()[0]);
                // displacement g - f, wrapped to the nearest representative
                (gs - fs + 0.5).rem_euclid(1.0) - 0.5
            };
            c0 = c0.max(diff(y).abs());
            c1 = c1.max(((diff(y + h) - diff(y - h)) / (2.0 * h)).abs());
        }
    }
    let elapsed = start.elapsed();
    let pass = period3
        && leaks == 0
        && silent == 0
        && !res.bumps.is_empty()
        && c0 <= params.eps_c0 * (1.0 + BOUND_SLACK)
        && c1 <= params.eps_c1 * (1.0 + BOUND_SLACK)
        && elapsed < Duration::from_secs(30);
    let cmd = Command::Close { config: path, point: target.to_vec(), ell: 2, budget: None };
    let report = execute(&cmd, &opts()).map(|p| p.report().to_vec()).unwrap_or_default();
    Outcome {
        pass,
        detail: format!(
            "residual {residual:.1e}, {} balls, {leaks} changes outside, C0 {c0:.2e} <= {:.0e}, C1 {c1:.3} <= {}, {elapsed:.2?}",
            res.bumps.len(),
            params.eps_c0,
            params.eps_c1
        ),
        report,
    }
}

type Criterion = fn() -> Outcome;

const CRITERIA: [(&str, Criterion); 6] = [
    ("period-oracle equivalence", criterion1),
    ("decomposition structure", criterion2),
    ("model-system goldens", criterion3),
    ("cat-map homoclinic suite", criterion4),
    ("surgery property suite", criterion5),
    ("closing end-to-end", criterion6),
];

fn line(k: usize, name: &str, pass: bool, detail: &str) {
    println!("criterion {k} {} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}

fn main() -> ExitCode {
    let mut first = Vec::new();
    let mut all = true;
    for (k, (name, run)) in CRITERIA.iter().enumerate() {
        let outcome = run();
        line(k + 1, name, outcome.pass, &outcome.detail);
        all &= outcome.pass;
        first.push(outcome.report);
    }
    let start = Instant::now();
    let differing: Vec<usize> = CRITERIA
        .iter()
        .enumerate()
        .filter(|(k, (_, run))| run().report != first[*k])
        .map(|(k, _)| k + 1)
        .collect();
    let deterministic = differing.is_empty() && first.iter().all(|r| !r.is_empty());
    let detail = format!(
        "{} report bytes rerun, differing criteria {differing:?}, {:.2?}",
        first.iter().map(Vec::len).sum::<usize>(),
        start.elapsed()
    );
    line(7, "determinism", deterministic, &detail);
    all &= deterministic;
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
