use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::manifest::{now, sha256_hex, Outputs, RunManifest};
use super::svg;
use super::RunError;
use crate::config::{Config, ConfigError, SystemConfig};
use crate::graph::{
    build_graph, cyclic_classes, recurrent_classes, trapping_regions, wielandt_bound, CyclicDecomposition,
    MixingCertificate, RegionBox, TransitionGraph, EDGE_TOL, MIXING_NODE_LIMIT,
};
use crate::periodic::{
    classify, closure_violations, detect_cycle, find_crossings, find_periodic_orbits, grow_manifold,
    intersection_times, k_set, pointwise_class, saddle_data, translation_violations, Crossing, CycleVerdict,
    IntersectionTimeSet, ManifoldCurve, ManifoldParams, PeriodicOrbit, ResonanceParams, SaddleData, Stability,
    Verdict, TAU_ORB, TRANSVERSE_DEG,
};
use crate::surgery::{
    close_orbit, random_instance, run_surgery, validate_domain, CloseParams, CloseResult, CloseStatus, DomainReport,
    InstanceParams, PerturbationDomain, PseudoOrbit, SurgeryConstants, SurgeryError, SurgeryInstance, SurgeryResult,
    TraceEvent, AFFINE_TOL, BOUND_SLACK, MINIMAL_N_CAP, TILE_TOL,
};
use crate::system::{MapSystem, BUMP_MAX_SLOPE, H_FD, LIPSCHITZ_SAFETY, TAU_INV, TAU_JAC};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_COMPUTATION: i32 = 2;
pub const EXIT_CERTIFICATE: i32 = 3;

/// Format of tabular side outputs. JSON reports are always written.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Decompose {
        config: PathBuf,
        depth: Option<u32>,
        region: Option<RegionBox>,
        orbits: bool,
    },
    Orbits {
        config: PathBuf,
        max_period: Option<usize>,
    },
    Homoclinic {
        config: PathBuf,
        orbit_id: usize,
        partner: Option<usize>,
        n_max: Option<i64>,
    },
    Kset {
        config: PathBuf,
        ell: usize,
        max_period: Option<usize>,
    },
    Surgery {
        /// `None` generates an instance from the seed.
        instance: Option<PathBuf>,
        ell: Option<usize>,
    },
    Close {
        config: PathBuf,
        point: Vec<f64>,
        ell: usize,
        budget: Option<usize>,
    },
    ValidateDomain {
        input: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Decompose { .. } => "decompose",
            Command::Orbits { .. } => "orbits",
            Command::Homoclinic { .. } => "homoclinic",
            Command::Kset { .. } => "kset",
            Command::Surgery { .. } => "surgery",
            Command::Close { .. } => "close",
            Command::ValidateDomain { .. } => "validate-domain",
        }
    }

    fn input(&self) -> Option<&Path> {
        match self {
            Command::Decompose { config, .. }
            | Command::Orbits { config, .. }
            | Command::Homoclinic { config, .. }
            | Command::Kset { config, .. }
            | Command::Close { config, .. } => Some(config),
            Command::Surgery { instance, .. } => instance.as_deref(),
            Command::ValidateDomain { input } => Some(input),
        }
    }
}

/// Files and status of a finished computation, before anything is written.
#[derive(Debug, Clone)]
pub struct Product {
    pub subcommand: String,
    pub input: Option<String>,
    pub input_sha256: Option<String>,
    pub seed: u64,
    pub parameters: serde_json::Value,
    /// `(file name, kind, contents)`; the first entry is the main report.
    pub files: Vec<(String, String, Vec<u8>)>,
    pub exit_code: i32,
    pub summary: Vec<String>,
    pub notices: Vec<String>,
}

impl Product {
    /// Main JSON report.
    pub fn report(&self) -> &[u8] {
        &self.files[0].2
    }

    fn json<T: Serialize>(&mut self, name: &str, kind: &str, value: &T) {
        let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
        text.push('\n');
        self.files.push((name.into(), kind.into(), text.into_bytes()));
    }

    fn text(&mut self, name: &str, kind: &str, text: String) {
        self.files.push((name.into(), kind.into(), text.into_bytes()));
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub exit_code: i32,
    pub summary: Vec<String>,
}

/// Header shared by every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub input_sha256: Option<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSummary {
    pub name: String,
    pub dimension: usize,
    pub domain: Vec<[f64; 2]>,
    pub periodic: Vec<bool>,
    pub lipschitz: f64,
    pub lipschitz_estimated: bool,
    pub inverse: bool,
    pub explicit_jacobian: bool,
    pub params: BTreeMap<String, f64>,
}

impl SystemSummary {
    fn of(sys: &MapSystem, cfg: &SystemConfig) -> Self {
        Self {
            name: sys.name().to_string(),
            dimension: sys.dimension(),
            domain: sys.domain().axes.iter().map(|a| [a.lo, a.hi]).collect(),
            periodic: sys.domain().axes.iter().map(|a| a.periodic).collect(),
            lipschitz: sys.lipschitz(),
            lipschitz_estimated: sys.lipschitz_estimated(),
            inverse: sys.has_inverse(),
            explicit_jacobian: sys.has_explicit_jacobian(),
            params: cfg.params.clone(),
        }
    }
}

/// Every fixed tolerance of the library, embedded in each report.
pub fn tolerances() -> BTreeMap<String, f64> {
    [
        ("tau_orb", TAU_ORB),
        ("tau_inv", TAU_INV),
        ("tau_jac", TAU_JAC),
        ("h_fd", H_FD),
        ("lipschitz_safety", LIPSCHITZ_SAFETY),
        ("edge_tol", EDGE_TOL),
        ("transverse_deg", TRANSVERSE_DEG),
        ("tile_tol", TILE_TOL),
        ("bound_slack", BOUND_SLACK),
        ("affine_tol", AFFINE_TOL),
        ("bump_max_slope", BUMP_MAX_SLOPE),
        ("mixing_node_limit", MIXING_NODE_LIMIT as f64),
        ("minimal_n_cap", MINIMAL_N_CAP as f64),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub depth: u32,
    pub boxes_per_axis: usize,
    pub nodes: usize,
    pub edges: usize,
    pub samples_per_axis: usize,
    pub padding: f64,
    pub padding_rule: String,
    pub region: Option<Vec<RegionBox>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRecord {
    pub id: usize,
    pub size: usize,
    pub period: usize,
    pub cyclic_class_sizes: Vec<usize>,
    pub wielandt_bounds: Vec<usize>,
    pub mixing: Vec<MixingCertificate>,
    /// Every edge inside the class steps from cyclic class `i` to `i + 1 mod period`.
    pub rotation_consistent: bool,
    pub nodes: Vec<usize>,
    pub cyclic_classes: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    pub id: usize,
    pub period: usize,
    pub points: Vec<Vec<f64>>,
    /// `[re, im]` pairs by decreasing modulus.
    pub multipliers: Vec<[f64; 2]>,
    pub residual: f64,
    pub verdict: Verdict,
}

impl OrbitRecord {
    fn of(id: usize, o: &PeriodicOrbit, params: &ResonanceParams) -> Self {
        Self {
            id,
            period: o.period,
            points: o.points.clone(),
            multipliers: o.multipliers.iter().map(|z| [z.re, z.im]).collect(),
            residual: o.residual,
            verdict: classify(o, params).verdict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub meta: ReportMeta,
    pub system: SystemSummary,
    pub tolerances: BTreeMap<String, f64>,
    pub graph: GraphSummary,
    pub class_count: usize,
    pub classes: Vec<ClassRecord>,
    pub trapping_regions: Vec<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub periodic_orbits: Option<Vec<OrbitRecord>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitsReport {
    pub meta: ReportMeta,
    pub system: SystemSummary,
    pub tolerances: BTreeMap<String, f64>,
    pub max_period: usize,
    pub search: crate::config::OrbitSection,
    pub resonance: ResonanceParams,
    pub seeds: usize,
    pub singular_seeds: usize,
    pub failed_seeds: usize,
    pub orbits: Vec<OrbitRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelatedOrbit {
    pub id: usize,
    pub period: usize,
    pub verdict: CycleVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomoclinicReport {
    pub meta: ReportMeta,
    pub system: SystemSummary,
    pub tolerances: BTreeMap<String, f64>,
    pub manifold: ManifoldParams,
    pub p: OrbitRecord,
    pub q: OrbitRecord,
    pub saddle: SaddleData,
    pub intersection_times: IntersectionTimeSet,
    pub ell: usize,
    pub ell_with_related: Option<usize>,
    pub related: Vec<RelatedOrbit>,
    /// Pairs `(n, m)` of times whose sum is in range but undetected.
    pub closure_violations: Vec<(i64, i64)>,
    /// Times whose translate by a period is in range but undetected.
    pub translation_violations: Vec<i64>,
    pub pointwise_class_size: Option<usize>,
    pub crossings: Vec<Crossing>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsetReport {
    pub meta: ReportMeta,
    pub system: SystemSummary,
    pub tolerances: BTreeMap<String, f64>,
    pub ell: usize,
    pub max_period: usize,
    pub region: Option<Vec<RegionBox>>,
    pub orbits: Vec<OrbitRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceEvent>>,
}

impl ErrorRecord {
    fn of(e: &SurgeryError) -> Self {
        Self {
            kind: e.kind().into(),
            message: e.to_string(),
            trace: e.trace().map(<[TraceEvent]>::to_vec),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurgeryReport {
    pub meta: ReportMeta,
    pub system: SystemSummary,
    pub tolerances: BTreeMap<String, f64>,
    pub generated: bool,
    pub constants: SurgeryConstants,
    pub domain: DomainReport,
    pub input: PseudoOrbit,
    pub ell: Option<usize>,
    pub certified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<SurgeryResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CloseReport {
    pub meta: ReportMeta,
    pub system: SystemSummary,
    pub tolerances: BTreeMap<String, f64>,
    pub constants: SurgeryConstants,
    pub domain: DomainReport,
    pub certified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<CloseResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainValidationReport {
    pub meta: ReportMeta,
    pub system: SystemSummary,
    pub tolerances: BTreeMap<String, f64>,
    pub constants: SurgeryConstants,
    pub report: DomainReport,
    pub domain: PerturbationDomain,
}

fn computation(context: &str, e: impl std::fmt::Display) -> RunError {
    RunError::Computation {
        context: context.into(),
        message: e.to_string(),
    }
}

fn read_input(path: &Path) -> Result<(String, String), RunError> {
    let src = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let hash = sha256_hex(src.as_bytes());
    Ok((src, hash))
}

struct Loaded {
    cfg: Config,
    sys: MapSystem,
    product: Product,
}

fn start(command: &Command, opts: &RunOptions, input: Option<(&Path, &str)>, parameters: serde_json::Value) -> Product {
    Product {
        subcommand: command.name().into(),
        input: input.map(|(p, _)| p.display().to_string()),
        input_sha256: input.map(|(_, h)| h.to_string()),
        seed: opts.seed,
        parameters,
        files: Vec::new(),
        exit_code: EXIT_OK,
        summary: Vec::new(),
        notices: Vec::new(),
    }
}

fn load_config(command: &Command, opts: &RunOptions, path: &Path, parameters: serde_json::Value) -> Result<Loaded, RunError> {
    let (src, hash) = read_input(path)?;
    let cfg = Config::parse(&src)?;
    let sys = cfg.build_system()?;
    let product = start(command, opts, Some((path, &hash)), parameters);
    Ok(Loaded { cfg, sys, product })
}

fn meta(p: &Product) -> ReportMeta {
    ReportMeta {
        tool: "mixdec".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: p.subcommand.clone(),
        input_sha256: p.input_sha256.clone(),
        seed: p.seed,
    }
}

fn spatial(p: &mut Product, d: usize, what: &str) -> bool {
    if d <= 2 {
        true
    } else {
        let notice = format!("{what} skipped: spatial plots need dimension <= 2, got {d}");
        log::info!("{notice}");
        p.notices.push(notice);
        false
    }
}

fn rotation_consistent(g: &TransitionGraph, dec: &CyclicDecomposition) -> bool {
    let mut index = BTreeMap::new();
    for (k, part) in dec.classes.iter().enumerate() {
        for &u in part {
            index.insert(u, k);
        }
    }
    dec.classes.len() == dec.period
        && index.iter().all(|(&u, &k)| {
            g.successors(u)
                .iter()
                .filter_map(|v| index.get(v))
                .all(|&kv| kv == (k + 1) % dec.period)
        })
}

fn orbit_csv(orbits: &[OrbitRecord]) -> String {
    let d = orbits.first().map_or(0, |o| o.points[0].len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["orbit".to_string(), "period".into(), "index".into()];
    header.extend((1..=d).map(|j| format!("x{j}")));
    header.extend(["residual".into(), "max_modulus".into(), "verdict".into()]);
    w.write_record(&header).expect("in-memory csv");
    for o in orbits {
        let modulus = o.multipliers.iter().map(|z| z[0].hypot(z[1])).fold(0.0, f64::max);
        let verdict = serde_json::to_value(o.verdict).expect("verdict serializes");
        for (i, p) in o.points.iter().enumerate() {
            let mut row = vec![o.id.to_string(), o.period.to_string(), i.to_string()];
            row.extend(p.iter().map(|v| v.to_string()));
            row.extend([o.residual.to_string(), modulus.to_string(), verdict.as_str().unwrap_or("").to_string()]);
            w.write_record(&row).expect("in-memory csv");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}

fn decompose(command: &Command, opts: &RunOptions) -> Result<Product, RunError> {
    let Command::Decompose { config, depth, region, orbits } = command else { unreachable!() };
    let params = serde_json::json!({ "depth": depth, "region": region, "orbits": orbits });
    let Loaded { cfg, sys, mut product } = load_config(command, opts, config, params)?;
    let depth = depth.unwrap_or(cfg.graph.depth);
    let region: Option<Vec<RegionBox>> = region.clone().map(|r| vec![r]).or_else(|| cfg.graph.region.clone());
    let (covering, graph) =
        build_graph(&sys, depth, region.as_deref(), &cfg.graph.params()).map_err(|e| computation("decompose", e))?;
    let classes = recurrent_classes(&graph);
    let decs = classes
        .iter()
        .map(|c| cyclic_classes(&graph, c))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| computation("decompose", e))?;
    let records: Vec<ClassRecord> = decs
        .iter()
        .enumerate()
        .map(|(id, dec)| ClassRecord {
            id,
            size: dec.class.nodes.len(),
            period: dec.period,
            cyclic_class_sizes: dec.classes.iter().map(Vec::len).collect(),
            wielandt_bounds: dec.classes.iter().map(|c| wielandt_bound(c.len())).collect(),
            mixing: dec.mixing.clone(),
            rotation_consistent: rotation_consistent(&graph, dec),
            nodes: dec.class.nodes.clone(),
            cyclic_classes: dec.classes.clone(),
        })
        .collect();
    let periodic_orbits = if *orbits {
        let search = find_periodic_orbits(&sys, cfg.orbits.max_period, cfg.orbits.region.as_deref(), &cfg.orbits.params(), opts.seed)
            .map_err(|e| computation("orbits", e))?;
        Some(search.orbits.iter().enumerate().map(|(i, o)| OrbitRecord::of(i, o, &cfg.resonance)).collect::<Vec<_>>())
    } else {
        None
    };
    let prov = graph.provenance.clone().expect("built graphs carry provenance");
    let broken = records.iter().any(|r| {
        !r.rotation_consistent || r.mixing.iter().any(|m| matches!(m, MixingCertificate::Counterexample { .. }))
    });
    let report = DecompositionReport {
        meta: meta(&product),
        system: SystemSummary::of(&sys, &cfg.system_config()),
        tolerances: tolerances(),
        graph: GraphSummary {
            depth,
            boxes_per_axis: covering.per_axis,
            nodes: graph.node_count(),
            edges: graph.edge_count(),
            samples_per_axis: prov.samples_per_axis,
            padding: prov.padding,
            padding_rule: prov.padding_rule,
            region,
        },
        class_count: records.len(),
        classes: records,
        trapping_regions: trapping_regions(&graph),
        periodic_orbits,
    };
    product.summary.push(format!(
        "{} boxes, {} edges, {} recurrent classes, periods {:?}",
        report.graph.nodes,
        report.graph.edges,
        report.class_count,
        report.classes.iter().map(|c| c.period).collect::<Vec<_>>()
    ));
    product.json("decomposition.json", "report", &report);
    product.text("graph.dot", "graph", graph.to_dot(&decs));
    product.text("classes.svg", "plot", svg::classes_svg(&decs));
    if spatial(&mut product, sys.dimension(), "covering plot") {
        product.text("covering.svg", "plot", svg::covering_svg(&covering, &decs));
    }
    if opts.format == Format::Csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["class", "period", "cyclic_class", "size", "mixing_exponent"]).expect("in-memory csv");
        for c in &report.classes {
            for (k, size) in c.cyclic_class_sizes.iter().enumerate() {
                let e = c.mixing[k].exponent().map_or(String::new(), |e| e.to_string());
                w.write_record([c.id.to_string(), c.period.to_string(), k.to_string(), size.to_string(), e])
                    .expect("in-memory csv");
            }
        }
        let text = String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8");
        product.text("classes.csv", "table", text);
        if let Some(o) = &report.periodic_orbits {
            product.text("orbits.csv", "table", orbit_csv(o));
        }
    }
    if broken {
        product.exit_code = EXIT_CERTIFICATE;
        product.summary.push("a cyclic decomposition failed its edge or mixing check".into());
    }
    Ok(product)
}

fn orbits(command: &Command, opts: &RunOptions) -> Result<Product, RunError> {
    let Command::Orbits { config, max_period } = command else { unreachable!() };
    let params = serde_json::json!({ "max_period": max_period });
    let Loaded { cfg, sys, mut product } = load_config(command, opts, config, params)?;
    let max_period = max_period.unwrap_or(cfg.orbits.max_period);
    let search = find_periodic_orbits(&sys, max_period, cfg.orbits.region.as_deref(), &cfg.orbits.params(), opts.seed)
        .map_err(|e| computation("orbits", e))?;
    let records: Vec<OrbitRecord> = search.orbits.iter().enumerate().map(|(i, o)| OrbitRecord::of(i, o, &cfg.resonance)).collect();
    let mut counts = BTreeMap::new();
    for o in &records {
        *counts.entry(o.period).or_insert(0usize) += 1;
    }
    product.summary.push(format!("{} orbits up to period {max_period}; by period {counts:?}", records.len()));
    let report = OrbitsReport {
        meta: meta(&product),
        system: SystemSummary::of(&sys, &cfg.system_config()),
        tolerances: tolerances(),
        max_period,
        search: cfg.orbits.clone(),
        resonance: cfg.resonance.clone(),
        seeds: search.seeds,
        singular_seeds: search.singular_seeds,
        failed_seeds: search.failed_seeds,
        orbits: records,
    };
    product.json("orbits.json", "report", &report);
    if opts.format == Format::Csv {
        product.text("orbits.csv", "table", orbit_csv(&report.orbits));
    }
    Ok(product)
}

fn both(sys: &MapSystem, x: &[f64], period: usize, stability: Stability, budget: f64, params: &ManifoldParams) -> Result<Vec<ManifoldCurve>, RunError> {
    [1i8, -1]
        .into_iter()
        .map(|b| grow_manifold(sys, x, period, stability, b, budget, params).map_err(|e| computation("manifold", e)))
        .collect()
}

fn homoclinic(command: &Command, opts: &RunOptions) -> Result<Product, RunError> {
    let Command::Homoclinic { config, orbit_id, partner, n_max } = command else { unreachable!() };
    let params = serde_json::json!({ "orbit_id": orbit_id, "partner": partner, "n_max": n_max });
    let Loaded { cfg, sys, mut product } = load_config(command, opts, config, params)?;
    let search = find_periodic_orbits(&sys, cfg.orbits.max_period, cfg.orbits.region.as_deref(), &cfg.orbits.params(), opts.seed)
        .map_err(|e| computation("orbits", e))?;
    let count = search.orbits.len();
    let pick = |i: usize| {
        search.orbits.get(i).ok_or_else(|| RunError::Usage(format!("orbit id {i} out of range: {count} orbits found")))
    };
    let partner = partner.unwrap_or(*orbit_id);
    let (p, q) = (pick(*orbit_id)?, pick(partner)?);
    let n_max = n_max.unwrap_or(cfg.homoclinic.n_max);
    let budget = cfg.manifold.arclength;
    let saddle = saddle_data(&sys, &p.points[0], p.period).map_err(|e| computation("homoclinic", e))?;
    let mut times = intersection_times(&sys, p, q, n_max, budget, &cfg.manifold).map_err(|e| computation("homoclinic", e))?;
    let mut related = Vec::new();
    if cfg.homoclinic.include_related {
        for (id, o) in search.orbits.iter().enumerate() {
            if id == *orbit_id || saddle_data(&sys, &o.points[0], o.period).is_err() {
                continue;
            }
            let report = detect_cycle(&sys, p, o, budget, Some(times.ell), &cfg.manifold).map_err(|e| computation("homoclinic", e))?;
            related.push(RelatedOrbit { id, period: o.period, verdict: report.verdict });
        }
        let periods: Vec<usize> = related.iter().filter(|r| r.verdict == CycleVerdict::Cycle).map(|r| r.period).collect();
        times.relate(&periods);
    }
    let mut closure = closure_violations(&times);
    closure.sort();
    let mut translation: Vec<i64> = translation_violations(&times, p.period);
    translation.extend(translation_violations(&times, q.period));
    translation.sort();
    translation.dedup();
    let pointwise = pointwise_class(&sys, (&p.points[0], p.period), (&q.points[0], q.period), (budget, budget), &cfg.manifold).ok();
    let unstable = both(&sys, &q.points[0], q.period, Stability::Unstable, budget, &cfg.manifold)?;
    let stable = both(&sys, &p.points[0], p.period, Stability::Stable, budget, &cfg.manifold)?;
    let mut crossings = Vec::new();
    for u in &unstable {
        for s in &stable {
            crossings.extend(find_crossings(sys.domain(), &u.points, &s.points));
        }
    }
    product.summary.push(format!(
        "times {:?} in [-{n_max}, {n_max}], ell = {}, ell with related orbits = {:?}",
        times.times, times.ell, times.ell_with_related
    ));
    let violated = !closure.is_empty() || !translation.is_empty();
    let report = HomoclinicReport {
        meta: meta(&product),
        system: SystemSummary::of(&sys, &cfg.system_config()),
        tolerances: tolerances(),
        manifold: cfg.manifold.clone(),
        p: OrbitRecord::of(*orbit_id, p, &cfg.resonance),
        q: OrbitRecord::of(partner, q, &cfg.resonance),
        saddle,
        ell: times.ell,
        ell_with_related: times.ell_with_related,
        intersection_times: times,
        related,
        closure_violations: closure,
        translation_violations: translation,
        pointwise_class_size: pointwise.map(|c| c.points.len()),
        crossings: crossings.clone(),
    };
    product.json("homoclinic.json", "report", &report);
    let curves: Vec<ManifoldCurve> = unstable.into_iter().chain(stable).collect();
    product.text(
        "manifolds.svg",
        "plot",
        svg::manifolds_svg(sys.domain(), &curves, &crossings, &[p.points[0].clone(), q.points[0].clone()]),
    );
    if violated {
        product.exit_code = EXIT_CERTIFICATE;
        product.summary.push("intersection times violate the group invariants".into());
    }
    Ok(product)
}

fn kset(command: &Command, opts: &RunOptions) -> Result<Product, RunError> {
    let Command::Kset { config, ell, max_period } = command else { unreachable!() };
    if *ell == 0 {
        return Err(RunError::Usage("--ell must be at least 1".into()));
    }
    let params = serde_json::json!({ "ell": ell, "max_period": max_period });
    let Loaded { cfg, sys, mut product } = load_config(command, opts, config, params)?;
    let max_period = max_period.unwrap_or(cfg.orbits.max_period);
    let region = cfg.orbits.region.clone();
    let found = k_set(&sys, *ell, region.as_deref(), max_period, &cfg.orbits.params(), opts.seed).map_err(|e| computation("kset", e))?;
    let records: Vec<OrbitRecord> = found.iter().enumerate().map(|(i, o)| OrbitRecord::of(i, o, &cfg.resonance)).collect();
    product.summary.push(format!("{} orbits with period not divisible by {ell} up to period {max_period}", records.len()));
    let report = KsetReport {
        meta: meta(&product),
        system: SystemSummary::of(&sys, &cfg.system_config()),
        tolerances: tolerances(),
        ell: *ell,
        max_period,
        region,
        orbits: records,
    };
    product.json("kset.json", "report", &report);
    if opts.format == Format::Csv {
        product.text("kset.csv", "table", orbit_csv(&report.orbits));
    }
    Ok(product)
}

fn exit_for(e: &SurgeryError) -> i32 {
    if e.is_hard_failure() || matches!(e, SurgeryError::InvalidDomain(_)) {
        EXIT_CERTIFICATE
    } else {
        EXIT_COMPUTATION
    }
}

fn surgery(command: &Command, opts: &RunOptions) -> Result<Product, RunError> {
    let Command::Surgery { instance, ell } = command else { unreachable!() };
    let params = serde_json::json!({ "ell": ell, "generated": instance.is_none() });
    let (inst, mut product) = match instance {
        Some(path) => {
            let (src, hash) = read_input(path)?;
            let inst: SurgeryInstance = serde_json::from_str(&src).map_err(|e| ConfigError::Parse {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
            (inst, start(command, opts, Some((path, &hash)), params))
        }
        None => (random_instance(opts.seed, &InstanceParams::default()), start(command, opts, None, params)),
    };
    let sys = inst.system.build()?;
    let ell = ell.or(inst.ell);
    let report = validate_domain(&inst.domain, &sys);
    let outcome = run_surgery(&sys, &inst.domain, &inst.pseudo_orbit, ell, inst.sequences.as_ref());
    let (result, error) = match outcome {
        Ok(r) => (Some(r), None),
        Err(e) => {
            product.exit_code = exit_for(&e);
            product.summary.push(format!("surgery failed: {e}"));
            (None, Some(ErrorRecord::of(&e)))
        }
    };
    let certified = result.as_ref().is_some_and(|r| r.certificates.all_hold());
    if let Some(r) = &result {
        let secondary = r.trace.iter().filter(|e| matches!(e, TraceEvent::Secondary { .. })).count();
        product.summary.push(format!(
            "length {} -> {}, {} shortcuts ({secondary} secondary), {} balls, certificates {}",
            r.input_length,
            r.orbit.len(),
            r.trace.len(),
            r.sequences.iter().map(|s| s.balls.len()).sum::<usize>(),
            if certified { "hold" } else { "FAIL" }
        ));
        if !certified {
            product.exit_code = EXIT_CERTIFICATE;
        }
    }
    let svg = result
        .as_ref()
        .filter(|_| inst.domain.dim() <= 2)
        .map(|r| svg::surgery_svg(sys.domain(), &inst.domain, &inst.pseudo_orbit.points, r));
    let report = SurgeryReport {
        meta: meta(&product),
        system: SystemSummary::of(&sys, &inst.system),
        tolerances: tolerances(),
        generated: instance.is_none(),
        constants: SurgeryConstants::of(&inst.domain),
        domain: report,
        input: inst.pseudo_orbit.clone(),
        ell,
        certified,
        result,
        error,
    };
    product.json("surgery.json", "report", &report);
    if instance.is_none() {
        product.json("instance.json", "instance", &inst);
    }
    if spatial(&mut product, inst.domain.dim(), "surgery plot") {
        if let Some(svg) = svg {
            product.text("surgery.svg", "plot", svg);
        }
    }
    Ok(product)
}

fn close(command: &Command, opts: &RunOptions) -> Result<Product, RunError> {
    let Command::Close { config, point, ell, budget } = command else { unreachable!() };
    if *ell == 0 {
        return Err(RunError::Usage("--ell must be at least 1".into()));
    }
    let params = serde_json::json!({ "point": point, "ell": ell, "budget": budget });
    let Loaded { cfg, sys, mut product } = load_config(command, opts, config, params)?;
    let dom = cfg
        .perturbation
        .clone()
        .ok_or_else(|| RunError::Usage("close needs a [perturbation] table in the config".into()))?;
    if point.len() != sys.dimension() {
        return Err(RunError::Usage(format!("--point has {} coordinates, the map has dimension {}", point.len(), sys.dimension())));
    }
    let params = CloseParams {
        budget: budget.unwrap_or(cfg.close.budget),
        samples: cfg.close.samples,
        eps_c0: cfg.close.eps_c0,
        eps_c1: cfg.close.eps_c1,
    };
    let domain_report = validate_domain(&dom, &sys);
    let sys = Arc::new(sys);
    let outcome = close_orbit(sys.clone(), &dom, point, *ell, cfg.close.region.as_deref(), &params);
    let (result, error) = match outcome {
        Ok(r) => (Some(r), None),
        Err(e) => {
            product.exit_code = exit_for(&e);
            product.summary.push(format!("close failed: {e}"));
            (None, Some(ErrorRecord::of(&e)))
        }
    };
    let mut certified = false;
    if let Some(r) = &result {
        certified = match r.status {
            CloseStatus::Unchanged => true,
            CloseStatus::Closed => {
                r.within_budget == Some(true) && r.support.as_ref().is_some_and(|s| s.exact) && r.region_ok != Some(false)
            }
            CloseStatus::Inconclusive | CloseStatus::CertificateFailed => false,
        };
        product.exit_code = match r.status {
            CloseStatus::Inconclusive => EXIT_COMPUTATION,
            _ if certified => EXIT_OK,
            _ => EXIT_CERTIFICATE,
        };
        let status = serde_json::to_value(r.status).expect("status serializes");
        product.summary.push(format!(
            "status {}, return time {:?}, period {:?}, C0 {:?}, C1 {:?}",
            status.as_str().unwrap_or(""),
            r.return_time,
            r.orbit.as_ref().map(|o| o.period),
            r.size.as_ref().map(|s| s.c0),
            r.size.as_ref().map(|s| s.c1)
        ));
    }
    let report = CloseReport {
        meta: meta(&product),
        system: SystemSummary::of(&sys, &cfg.system_config()),
        tolerances: tolerances(),
        constants: SurgeryConstants::of(&dom),
        domain: domain_report,
        certified,
        result,
        error,
    };
    product.json("close.json", "report", &report);
    if let Some(r) = &report.result {
        if let Some(orbit) = &r.orbit {
            if opts.format == Format::Csv {
                let mut w = csv::Writer::from_writer(Vec::new());
                let mut header = vec!["index".to_string()];
                header.extend((1..=sys.dimension()).map(|j| format!("x{j}")));
                w.write_record(&header).expect("in-memory csv");
                for (i, p) in orbit.points.iter().enumerate() {
                    let mut row = vec![i.to_string()];
                    row.extend(p.iter().map(|v| v.to_string()));
                    w.write_record(&row).expect("in-memory csv");
                }
                let text = String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8");
                product.text("closed_orbit.csv", "table", text);
            }
            if spatial(&mut product, sys.dimension(), "closing plot") {
                let balls: Vec<(Vec<f64>, f64)> = r.bumps.iter().map(|b| (b.center.clone(), b.radius)).collect();
                product.text("close.svg", "plot", svg::closing_svg(sys.domain(), &balls, &orbit.points));
            }
        }
    }
    Ok(product)
}

fn validate(command: &Command, opts: &RunOptions) -> Result<Product, RunError> {
    let Command::ValidateDomain { input } = command else { unreachable!() };
    let (src, hash) = read_input(input)?;
    let (system, dom) = if input.extension().is_some_and(|e| e == "json") {
        let inst: SurgeryInstance = serde_json::from_str(&src).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        (inst.system, inst.domain)
    } else {
        let cfg = Config::parse(&src)?;
        let dom = cfg
            .perturbation
            .clone()
            .ok_or_else(|| RunError::Usage("config has no [perturbation] table".into()))?;
        (cfg.system_config(), dom)
    };
    let sys = system.build()?;
    let mut product = start(command, opts, Some((input, &hash)), serde_json::json!({}));
    let report = validate_domain(&dom, &sys);
    product.summary.push(format!(
        "{} charts, {} tiles: {} ({} violations), eta = {:e}{}",
        dom.charts.len(),
        dom.tiles.len(),
        if report.valid { "valid" } else { "INVALID" },
        report.violations.len(),
        report.eta,
        if report.eta_overridden { " (override)" } else { "" }
    ));
    for v in &report.violations {
        product.summary.push(format!("  {}: {}", v.kind, v.message));
    }
    if !report.valid {
        product.exit_code = EXIT_CERTIFICATE;
    }
    let adjacency = report.adjacency.clone();
    let out = DomainValidationReport {
        meta: meta(&product),
        system: SystemSummary::of(&sys, &system),
        tolerances: tolerances(),
        constants: SurgeryConstants::of(&dom),
        report,
        domain: dom.clone(),
    };
    product.json("domain.json", "report", &out);
    if spatial(&mut product, dom.dim(), "tile plot") {
        product.text("tiles.svg", "plot", svg::tiles_svg(&dom, &adjacency));
    }
    Ok(product)
}

/// Runs a subcommand without touching the filesystem beyond reading its input.
pub fn execute(command: &Command, opts: &RunOptions) -> Result<Product, RunError> {
    match command {
        Command::Decompose { .. } => decompose(command, opts),
        Command::Orbits { .. } => orbits(command, opts),
        Command::Homoclinic { .. } => homoclinic(command, opts),
        Command::Kset { .. } => kset(command, opts),
        Command::Surgery { .. } => surgery(command, opts),
        Command::Close { .. } => close(command, opts),
        Command::ValidateDomain { .. } => validate(command, opts),
    }
}

/// Runs a subcommand and writes its files plus `manifest.json` into the output directory.
/// Nothing is written when the input cannot be read or parsed.
pub fn run(command: &Command, opts: &RunOptions) -> Result<RunOutcome, RunError> {
    let started_at = now();
    if let Some(path) = command.input() {
        log::debug!("reading {}", path.display());
    }
    let product = execute(command, opts)?;
    let mut outputs = Outputs::create(&opts.out_dir)?;
    for (name, kind, bytes) in &product.files {
        outputs.write(name, kind, bytes)?;
    }
    let manifest = RunManifest {
        tool: "mixdec".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: product.subcommand.clone(),
        input: product.input.clone(),
        input_sha256: product.input_sha256.clone(),
        seed: product.seed,
        parameters: serde_json::json!({ "command": product.parameters, "format": opts.format }),
        started_at,
        finished_at: now(),
        exit_code: product.exit_code,
        notices: product.notices.clone(),
        outputs: outputs.entries.clone(),
    };
    outputs.write_json("manifest.json", "manifest", &manifest)?;
    log::debug!("wrote {} files to {}", outputs.entries.len(), outputs.dir().display());
    Ok(RunOutcome {
        exit_code: product.exit_code,
        summary: product.summary,
        manifest,
    })
}
