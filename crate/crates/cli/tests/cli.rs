use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use graphnls::io::{load_profile, RunManifest};
use graphnls::mesh::{build_mesh, MeshParams};
use graphnls::MetricGraph;
use serde_json::Value;

const TADPOLE: &str = "# loop of length 2 with one half-line\nedge a a 2\nhalfline a\n";

fn graphnls(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphnls")).args(args).output().expect("binary runs")
}

fn write_graph(dir: &Path, text: &str) -> String {
    let p = dir.join("g.txt");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn json_stdout(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("stdout is json")
}

#[test]
fn classify_tadpole() {
    let dir = tempfile::tempdir().unwrap();
    let g = write_graph(dir.path(), TADPOLE);
    let v = json_stdout(&graphnls(&["classify", "--graph", &g]));
    assert_eq!(v["type_label"], "Type3");
    assert_eq!(v["has_terminal_point"], false);
    assert_eq!(v["half_lines"], 1);
}

#[test]
fn soliton_mass() {
    let v = json_stdout(&graphnls(&["soliton-check", "--h", "0.005", "--L", "20"]));
    let mass = v["mass"].as_f64().unwrap();
    let exact = std::f64::consts::PI * 3f64.sqrt() / 2.0;
    assert!((mass - exact).abs() < 1e-4, "{mass}");
    assert!(v["energy"].as_f64().unwrap().abs() < 1e-4);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let g = write_graph(dir.path(), TADPOLE);
    assert_eq!(graphnls(&["classify"]).status.code(), Some(1), "missing --graph");
    assert_eq!(graphnls(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(graphnls(&["minimize", "--graph", &g, "--p", "abc"]).status.code(), Some(1));
    let bad_p = graphnls(&["minimize", "--graph", &g, "--p", "7", "--alpha", "0", "--mu", "1"]);
    assert_eq!(bad_p.status.code(), Some(2));
    let bad_graph = write_graph(dir.path(), "edge a b\n");
    assert_eq!(graphnls(&["classify", "--graph", &bad_graph]).status.code(), Some(2));
    assert_eq!(graphnls(&["--help"]).status.code(), Some(0));
}

#[test]
fn minimize_writes_manifest_and_profile() {
    let dir = tempfile::tempdir().unwrap();
    let g = write_graph(dir.path(), TADPOLE);
    let out = dir.path().join("run");
    let args = ["minimize", "--graph", &g, "--alpha", "0", "--mu", "2", "--h", "0.05", "--L", "20"];
    let o = graphnls(&[&args[..], &["--out", out.to_str().unwrap()]].concat());
    let v = json_stdout(&o);
    assert_eq!(v["verdict"], "Converged");
    let energy = v["energy"].as_f64().unwrap();
    assert!(energy < 0.0);

    let written: Value = serde_json::from_str(&fs::read_to_string(out.join("result.json")).unwrap()).unwrap();
    assert_eq!(written, v);

    let lines = fs::read_to_string(out.join("manifest.jsonl")).unwrap();
    let m: RunManifest = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert_eq!(m.command, "minimize");
    assert_eq!(m.artifacts, vec!["result.json", "profile.csv"]);
    assert_eq!(m.inputs.len(), 1);
    assert_eq!(m.inputs[0].sha256.len(), 64);
    let mesh = m.mesh.expect("mesh recorded");

    // the profile reloads bit-exactly onto the recorded mesh
    let dg = build_mesh(&MetricGraph::parse(TADPOLE).unwrap(), &mesh).unwrap();
    let u = load_profile(&out.join("profile.csv"), &dg).unwrap();
    assert!((u.mass() - 2.0).abs() < 1e-9);
    assert_eq!(mesh, MeshParams::new(0.05, 20.0));
}

#[test]
fn file_target_and_appending_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let g = write_graph(dir.path(), TADPOLE);
    let target = dir.path().join("out").join("cls.json");
    for _ in 0..2 {
        let o = graphnls(&["classify", "--graph", &g, "--out", target.to_str().unwrap()]);
        assert!(o.status.success());
    }
    assert!(target.exists());
    let lines = fs::read_to_string(dir.path().join("out").join("manifest.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 2);
}

#[test]
fn sweep_reuses_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let g = write_graph(dir.path(), TADPOLE);
    let out = dir.path().join("sweep");
    let args = [
        "sweep", "--graph", &g, "--h", "0.1", "--L", "15", "--mu-grid", "0.5:1.5:2", "--alpha-grid", "0:0:1", "--out",
        out.to_str().unwrap(),
    ];
    let first = graphnls(&args);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let cells = fs::read_dir(out.join("cells")).unwrap().count();
    assert_eq!(cells, 2);
    let second = graphnls(&args);
    assert_eq!(first.stdout, second.stdout);
    let csv = String::from_utf8(first.stdout).unwrap();
    assert!(csv.starts_with("mu,alpha,verdict,energy,lambda\n"));
    assert_eq!(csv.lines().count(), 3);
}
