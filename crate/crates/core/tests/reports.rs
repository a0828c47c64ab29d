use std::path::{Path, PathBuf};

use jsonschema::{Draft, JSONSchema};
use mixdec_core::report::{
    execute, run, sha256_hex, Command, Format, RunOptions, RunOutcome, EXIT_CERTIFICATE, EXIT_OK,
};
use mixdec_core::surgery::{random_instance, InstanceParams};
use proptest::prelude::*;
use serde_json::Value;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config(name: &str) -> PathBuf {
    root().join("configs").join(name)
}

fn schema(name: &str) -> JSONSchema {
    let path = root().join("schemas").join(format!("{name}.schema.json"));
    let value: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    JSONSchema::options().with_draft(Draft::Draft7).compile(&value).unwrap()
}

fn assert_valid(schema_name: &str, file: &Path) {
    let value: Value = serde_json::from_slice(&std::fs::read(file).unwrap()).unwrap();
    let compiled = schema(schema_name);
    if let Err(errors) = compiled.validate(&value) {
        let messages: Vec<String> = errors.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("{} fails {schema_name}: {messages:#?}", file.display());
    };
}

fn opts(dir: &Path) -> RunOptions {
    RunOptions { seed: 3, out_dir: dir.to_path_buf(), format: Format::Csv }
}

/// Runs a command and checks the report, the manifest and the listed hashes.
fn run_checked(cmd: &Command, report: &str) -> (tempfile::TempDir, RunOutcome) {
    let dir = tempfile::tempdir().unwrap();
    let outcome = run(cmd, &opts(dir.path())).unwrap();
    assert_valid(report, &dir.path().join(format!("{report}.json")));
    assert_valid("manifest", &dir.path().join("manifest.json"));
    let mut on_disk: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    on_disk.sort();
    let mut listed: Vec<String> = outcome.manifest.outputs.iter().map(|e| e.path.clone()).collect();
    listed.sort();
    assert_eq!(on_disk, listed);
    for e in &outcome.manifest.outputs {
        let bytes = std::fs::read(dir.path().join(&e.path)).unwrap();
        assert_eq!(sha256_hex(&bytes), e.sha256);
        assert_eq!(bytes.len(), e.bytes);
    }
    (dir, outcome)
}

#[test]
fn decompose_report_follows_schema() {
    let cmd = Command::Decompose { config: config("doubling.toml"), depth: Some(4), region: None, orbits: true };
    let (dir, outcome) = run_checked(&cmd, "decomposition");
    assert_eq!(outcome.exit_code, EXIT_OK);
    for name in ["graph.dot", "covering.svg", "classes.svg", "classes.csv", "orbits.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn three_dimensional_decomposition_skips_spatial_plots() {
    let cmd = Command::Decompose { config: config("torus3.toml"), depth: Some(2), region: None, orbits: false };
    let (dir, outcome) = run_checked(&cmd, "decomposition");
    assert!(!dir.path().join("covering.svg").exists());
    assert!(dir.path().join("classes.svg").exists());
    assert_eq!(outcome.manifest.notices.len(), 1);
    assert!(outcome.manifest.notices[0].contains("dimension"));
}

#[test]
fn periodic_structure_reports_follow_schema() {
    run_checked(&Command::Orbits { config: config("cat.toml"), max_period: Some(2) }, "orbits");
    run_checked(&Command::Kset { config: config("cat.toml"), ell: 2, max_period: Some(2) }, "kset");
    let cmd = Command::Homoclinic { config: config("cat.toml"), orbit_id: 0, partner: None, n_max: Some(1) };
    let (dir, outcome) = run_checked(&cmd, "homoclinic");
    assert_eq!(outcome.exit_code, EXIT_OK);
    let svg = std::fs::read_to_string(dir.path().join("manifolds.svg")).unwrap();
    assert!(svg.matches("<polyline").count() >= 2);
    assert!(svg.contains("class=\"crossing\""));
}

#[test]
fn surgery_close_and_domain_reports_follow_schema() {
    let generated = Command::Surgery { instance: None, ell: None };
    let (dir, _) = run_checked(&generated, "surgery");
    let instance = dir.path().join("instance.json");
    let (_, replay) = run_checked(&Command::Surgery { instance: Some(instance.clone()), ell: None }, "surgery");
    assert_eq!(replay.manifest.input_sha256.as_deref(), Some(sha256_hex(&std::fs::read(&instance).unwrap()).as_str()));
    run_checked(&Command::ValidateDomain { input: instance }, "domain");
    run_checked(&Command::ValidateDomain { input: config("rotation-third-close.toml") }, "domain");
    let close = Command::Close { config: config("rotation-third-close.toml"), point: vec![0.0], ell: 2, budget: None };
    let (dir, outcome) = run_checked(&close, "close");
    assert_eq!(outcome.exit_code, EXIT_OK);
    let table = std::fs::read_to_string(dir.path().join("closed_orbit.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
}

#[test]
fn invalid_domain_is_a_certificate_failure_with_an_error_record() {
    let mut inst = random_instance(5, &InstanceParams::default());
    inst.domain.theta = 1.5;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, serde_json::to_string(&inst).unwrap()).unwrap();
    let (out, outcome) = run_checked(&Command::Surgery { instance: Some(path), ell: None }, "surgery");
    assert_eq!(outcome.exit_code, EXIT_CERTIFICATE);
    let report: Value = serde_json::from_slice(&std::fs::read(out.path().join("surgery.json")).unwrap()).unwrap();
    assert_eq!(report["error"]["kind"], "invalid_domain");
    assert_eq!(report["certified"], false);
}

#[test]
fn missing_config_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cmd = Command::Decompose { config: dir.path().join("absent.toml"), depth: None, region: None, orbits: false };
    let err = run(&cmd, &opts(&out)).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("absent.toml"));
    assert!(!out.exists());
}

#[test]
fn parse_errors_carry_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.toml");
    std::fs::write(&path, "dimension = 1\ndomain = [[0.0, 1.0]]\nmap = [\"x1\"\n").unwrap();
    let cmd = Command::Orbits { config: path, max_period: None };
    let err = execute(&cmd, &opts(dir.path())).unwrap_err();
    assert!(err.to_string().starts_with("3:") || err.to_string().starts_with("4:"), "{err}");
}

#[test]
fn reruns_give_identical_reports_and_manifests_up_to_timestamps() {
    let cmd = Command::Decompose { config: config("swap.toml"), depth: Some(5), region: None, orbits: true };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = run(&cmd, &opts(a.path())).unwrap().manifest;
    let mb = run(&cmd, &opts(b.path())).unwrap().manifest;
    assert_eq!(ma.outputs, mb.outputs);
    assert_eq!(ma.parameters, mb.parameters);
    for e in &ma.outputs {
        assert_eq!(std::fs::read(a.path().join(&e.path)).unwrap(), std::fs::read(b.path().join(&e.path)).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn generated_surgery_reports_are_schema_valid_and_seed_determined(seed in 0u64..1_000_000) {
        let cmd = Command::Surgery { instance: None, ell: Some(2) };
        let o = RunOptions { seed, out_dir: PathBuf::from("unused"), format: Format::Json };
        let first = execute(&cmd, &o).unwrap();
        let second = execute(&cmd, &o).unwrap();
        prop_assert_eq!(first.report(), second.report());
        let value: Value = serde_json::from_slice(first.report()).unwrap();
        prop_assert!(schema("surgery").is_valid(&value));
        prop_assert_eq!(&value["meta"]["seed"], &Value::from(seed));
    }
}
