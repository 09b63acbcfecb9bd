//! Profile files, sweep tables and run manifests.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! file reads back to the same binary64 values.

use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::EdgeId;
use crate::mesh::{DiscreteGraph, GraphFunction, MeshParams};
use crate::sweeps::{CellResult, PhasePoint, TipCell};

pub const PROFILE_HEADER: &str = "edge_id,arclength,value";

/// CSV text of `u`: one row per edge node, edges in id order, nodes by arclength.
/// Vertex values appear once per incident edge end.
pub fn profile_csv(u: &GraphFunction) -> String {
    let mut s = String::from(PROFILE_HEADER);
    s.push('\n');
    for em in u.mesh().edges() {
        for (k, &d) in em.nodes.iter().enumerate() {
            let _ = writeln!(s, "{},{},{}", em.id.0, em.coordinate(k), u.values()[d]);
        }
    }
    s
}

pub fn emit_profile(u: &GraphFunction, path: &Path) -> Result<()> {
    fs::write(path, profile_csv(u))?;
    Ok(())
}

/// Reads a profile written by [`emit_profile`] back onto the same mesh.
pub fn parse_profile(text: &str, mesh: &Arc<DiscreteGraph>) -> Result<GraphFunction> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(PROFILE_HEADER) {
        return Err(Error::Format(format!("missing header `{PROFILE_HEADER}`")));
    }
    let mut values = vec![f64::NAN; mesh.n_dofs()];
    let mut expected = mesh.edges().iter().flat_map(|em| (0..em.nodes.len()).map(move |k| (em, k)));
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row = n + 2;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(Error::Format(format!("row {row}: expected 3 columns")));
        }
        let num = |i: usize| cols[i].trim().parse::<f64>().map_err(|_| Error::Format(format!("row {row}: bad number `{}`", cols[i])));
        let edge: usize = cols[0].trim().parse().map_err(|_| Error::Format(format!("row {row}: bad edge id")))?;
        let (x, v) = (num(1)?, num(2)?);
        let (em, k) = expected.next().ok_or_else(|| Error::Format(format!("row {row}: more rows than mesh nodes")))?;
        if em.id != EdgeId(edge) || em.coordinate(k) != x {
            return Err(Error::Format(format!("row {row}: node ({edge}, {x}) does not match the mesh")));
        }
        let d = em.nodes[k];
        if !values[d].is_nan() && values[d].to_bits() != v.to_bits() {
            return Err(Error::Format(format!("row {row}: conflicting value at a shared vertex")));
        }
        values[d] = v;
    }
    if expected.next().is_some() {
        return Err(Error::Format("fewer rows than mesh nodes".into()));
    }
    GraphFunction::from_values(mesh, values)
}

pub fn load_profile(path: &Path, mesh: &Arc<DiscreteGraph>) -> Result<GraphFunction> {
    parse_profile(&fs::read_to_string(path)?, mesh)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn cell_cols(r: &CellResult) -> String {
    let energy = match r.verdict {
        crate::sweeps::CellVerdict::Unbounded => "-inf".to_string(),
        _ => opt(r.energy),
    };
    format!("{},{},{}", r.verdict.as_str(), energy, opt(r.lambda))
}

pub fn phase_csv(points: &[PhasePoint]) -> String {
    let mut s = String::from("mu,alpha,verdict,energy,lambda\n");
    for p in points {
        let _ = writeln!(s, "{},{},{}", p.mu, p.alpha, cell_cols(&p.result));
    }
    s
}

pub fn tip_csv(cells: &[TipCell]) -> String {
    let mut s = String::from("ell,verdict,energy,lambda\n");
    for c in cells {
        let _ = writeln!(s, "{},{}", c.ell, cell_cols(&c.result));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// One line of `manifest.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<MeshParams>,
    pub started_unix: u64,
    pub wall_time_s: f64,
    pub tool_version: String,
    pub inputs: Vec<InputDigest>,
    /// Files written by the run, relative to the output directory.
    pub artifacts: Vec<String>,
}

/// Appends the manifest as one JSON line to `dir/manifest.jsonl`.
pub fn append_manifest(dir: &Path, m: &RunManifest) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut f = OpenOptions::new().create(true).append(true).open(dir.join("manifest.jsonl"))?;
    let mut line = serde_json::to_string(m)?;
    line.push('\n');
    f.write_all(line.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::phi;
    use crate::graph::MetricGraph;
    use crate::mesh::build_mesh;

    #[test]
    fn round_trip_is_bit_exact() {
        let g = MetricGraph::tadpole(2.0).unwrap();
        let dg = build_mesh(&g, &MeshParams::new(0.03, 10.0)).unwrap();
        let u = GraphFunction::from_fn(&dg, |e, x| (1.0 + e.0 as f64) * (x * 0.731).sin() / 3.0);
        let back = parse_profile(&profile_csv(&u), &dg).unwrap();
        assert!(u.values().iter().zip(back.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn zero_and_symmetric_profiles() {
        let dg = build_mesh(&MetricGraph::real_line(), &MeshParams::new(0.05, 10.0)).unwrap();
        let z = profile_csv(&GraphFunction::zeros(&dg));
        assert!(z.lines().skip(1).all(|l| l.ends_with(",0")));
        let u = GraphFunction::from_fn(&dg, |_, x| phi(x));
        let (a, b) = (u.edge_values(EdgeId(0)), u.edge_values(EdgeId(1)));
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-12));
    }

    #[test]
    fn rejects_foreign_mesh() {
        let g = MetricGraph::real_line();
        let a = build_mesh(&g, &MeshParams::new(0.05, 10.0)).unwrap();
        let b = build_mesh(&g, &MeshParams::new(0.1, 10.0)).unwrap();
        let text = profile_csv(&GraphFunction::zeros(&a));
        assert!(matches!(parse_profile(&text, &b), Err(Error::Format(_))));
    }

    #[test]
    fn manifest_appends() {
        let dir = tempfile::tempdir().unwrap();
        let m = RunManifest {
            command: "classify".into(),
            config: serde_json::json!({"graph": "g"}),
            seed: 7,
            mesh: None,
            started_unix: 0,
            wall_time_s: 0.5,
            tool_version: "0".into(),
            inputs: vec![],
            artifacts: vec!["classify.json".into()],
        };
        append_manifest(dir.path(), &m).unwrap();
        append_manifest(dir.path(), &m).unwrap();
        let text = fs::read_to_string(dir.path().join("manifest.jsonl")).unwrap();
        assert_eq!(text.lines().count(), 2);
        let back: RunManifest = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
