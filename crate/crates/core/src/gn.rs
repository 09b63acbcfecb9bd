//! Optimal Gagliardo–Nirenberg constants by multi-start ascent.
//!
//! `C_q(G) = sup ‖u‖_q^q / (‖u‖₂^{(q+2)/2} ‖u'‖₂^{(q−2)/2})`. The quotient is
//! invariant under scaling of `u`, so each iterate is renormalized to unit
//! mass; the ascent direction is the gradient of `log Q` preconditioned by
//! `K/‖u'‖² + M/‖u‖²`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::functionals::{gn_quotient, power_integral, power_integral_dual};
use crate::graph::{EdgeId, VertexId};
use crate::mesh::{project_mass, DiscreteGraph, GraphFunction};

#[derive(Debug, Clone)]
pub struct GnReport {
    pub q: f64,
    pub c_q_estimate: f64,
    pub maximizer: GraphFunction,
    /// `sqrt(3/C₆)`, set for `q = 6` only.
    pub mu_g_estimate: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub starts: Vec<GnStart>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GnSite {
    Vertex(VertexId),
    HalfLine(EdgeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnStart {
    pub site: GnSite,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnConfig {
    pub maxit: usize,
    /// Stop when the preconditioned gradient of `log Q` falls below this.
    pub tol: f64,
    /// Width of the initial bumps.
    pub width: f64,
    pub execution: Execution,
}

impl Default for GnConfig {
    fn default() -> Self {
        GnConfig { maxit: 500, tol: 1e-8, width: 1.0, execution: Execution::default() }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn log_q(u: &GraphFunction, q: f64) -> f64 {
    gn_quotient(u, q).map(f64::ln).unwrap_or(f64::NEG_INFINITY)
}

fn ascend(u0: GraphFunction, q: f64, cfg: &GnConfig) -> Result<(GraphFunction, f64, usize, bool)> {
    let mesh = u0.mesh().clone();
    let topo = mesh.topology();
    let (a, b) = ((q + 2.0) / 4.0, (q - 2.0) / 4.0);
    let mut u = project_mass(&u0, 1.0)?;
    let mut val = log_q(&u, q);
    let mut step: f64 = 1.0;
    for it in 0..cfg.maxit {
        let ku = mesh.stiffness().apply(topo, u.values());
        let mu = mesh.mass_matrix().apply(topo, u.values());
        let (t, m) = (dot(&ku, u.values()), dot(&mu, u.values()));
        let n = power_integral(&u, q);
        let dn = power_integral_dual(&u, q);
        let mut g: Vec<f64> = (0..dn.len()).map(|i| dn[i] / n - 2.0 * a * mu[i] / m - 2.0 * b * ku[i] / t).collect();
        for &p in mesh.pinned() {
            g[p] = 0.0;
        }
        let mut pre = mesh.stiffness().combine(1.0 / t, mesh.mass_matrix(), 1.0 / m);
        pre.pin(topo, mesh.pinned());
        let d = pre.factor(topo)?.solve(&g);
        let slope = dot(&g, &d);
        if slope.sqrt() < cfg.tol {
            return Ok((u, val.exp(), it, true));
        }
        let mut accepted = false;
        step = (step * 2.0).min(1.0);
        while step > 1e-12 {
            let cand = u.with_values(u.values().iter().zip(&d).map(|(x, y)| x + step * y).collect());
            if let Ok(cand) = project_mass(&cand, 1.0) {
                let v = log_q(&cand, q);
                if v >= val + 1e-4 * step * slope {
                    u = cand;
                    val = v;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            // no ascent left at machine precision
            return Ok((u, val.exp(), it, slope.sqrt() < 1e3 * cfg.tol));
        }
    }
    Ok((u, val.exp(), cfg.maxit, false))
}

/// Starts: one bump at every finite vertex and one in the middle of every half-line.
fn starts(dg: &Arc<DiscreteGraph>, width: f64) -> Vec<(GnSite, GraphFunction)> {
    let g = dg.graph();
    let bump = |dist: Vec<f64>| GraphFunction::from_dof_fn(dg, |i| 1.0 / (dist[i] / width).cosh());
    let mut out: Vec<(GnSite, GraphFunction)> = (0..g.num_vertices())
        .map(VertexId)
        .map(|v| (GnSite::Vertex(v), bump(dg.distances_from_vertex(v))))
        .collect();
    for e in g.half_lines() {
        let x = 0.5 * dg.edge_mesh(e.id).length;
        out.push((GnSite::HalfLine(e.id), bump(dg.distances_from(e.id, x))));
    }
    out
}

/// Estimates `C_q(G)` on the mesh.
pub fn gn_constant(dg: &Arc<DiscreteGraph>, q: f64, cfg: &GnConfig) -> Result<GnReport> {
    if !(q > 2.0 && q.is_finite()) {
        return Err(Error::InvalidParameter(format!("GN exponent q = {q} must exceed 2")));
    }
    let jobs = starts(dg, cfg.width);
    let results = cfg.execution.map(jobs, |(site, u0)| ascend(u0, q, cfg).map(|r| (site, r)));
    let mut best: Option<(GraphFunction, f64, bool)> = None;
    let mut report_starts = Vec::new();
    let mut iterations = 0;
    for r in results {
        let (site, (u, value, its, conv)) = r?;
        iterations += its;
        report_starts.push(GnStart { site, value, iterations: its, converged: conv });
        if best.as_ref().map_or(true, |(_, v, _)| value > *v) {
            best = Some((u, value, conv));
        }
    }
    let (maximizer, c, converged) = best.ok_or_else(|| Error::Diverged("no GN start".into()))?;
    Ok(GnReport {
        q,
        c_q_estimate: c,
        mu_g_estimate: if q == 6.0 { Some((3.0 / c).sqrt()) } else { None },
        maximizer,
        converged,
        iterations,
        starts: report_starts,
    })
}
