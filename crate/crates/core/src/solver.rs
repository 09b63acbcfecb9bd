//! Mass-constrained minimization with outcome classification.
//!
//! Each restart runs a normalized gradient flow, implicit in the stiffness
//! term and explicit in the nonlinearity. With `r = dE(u) + λMu` the
//! projected gradient and `P = K + (σ + 1/τ)M`,
//!
//! ```text
//! d = P⁻¹r − βP⁻¹Mu  (β so that ⟨Mu, d⟩ = 0),   u ← √(μ/‖u − d‖²)(u − d)
//! ```
//!
//! where `σ ≥ 0` tracks the current multiplier and `τ` is the step size.
//! Fixed points of the step are exactly the constrained critical points. Converged states are polished
//! by Newton's method on the stationary equation bordered with the mass
//! constraint. Restarts are then merged into one of three verdicts:
//! `Unbounded`, `Converged`, or `NoMinimizer` (mass escaping to infinity along
//! a half-line, or a zero level that is never reached).

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytic::{blowup_sweep, BlowupConfig, BlowupFamily, BlowupTrace};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::functionals::{
    energy, energy_dual, energy_hessian, pohozaev_residual, riesz, CriticalPoint, ProblemParams,
};
use crate::graph::{EdgeId, VertexId};
use crate::mesh::{project_mass, DiscreteGraph, GraphFunction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepRule {
    FixedStep(f64),
    BacktrackingArmijo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub step_rule: StepRule,
    /// Bound on the projected gradient, measured in the dual L² norm.
    pub grad_tol: f64,
    /// Energy below which a trace counts as unbounded.
    pub energy_floor: f64,
    /// Fraction of the mass that must lie outside the local window for an escape.
    pub escape_fraction: f64,
    /// Inner fraction of each truncated half-line counted as local.
    pub escape_window: f64,
    /// An escape also needs `‖u‖∞(core) ≤ core_ratio · ‖u‖∞`.
    pub core_ratio: f64,
    /// Perturbed copies of each deterministic starting profile.
    pub restarts: usize,
    pub seed: u64,
    /// Relative amplitude of the seeded perturbation.
    pub noise: f64,
    pub newton: bool,
    pub newton_max_iters: usize,
    /// Skip the flow and return the analytic blow-up trace when the mass is in
    /// the unbounded regime.
    pub short_circuit: bool,
    pub blowup: BlowupConfig,
    pub execution: Execution,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 4000,
            step_rule: StepRule::BacktrackingArmijo,
            grad_tol: 1e-8,
            energy_floor: -1e3,
            escape_fraction: 0.9,
            escape_window: 0.25,
            core_ratio: 1e-2,
            restarts: 1,
            seed: 0,
            noise: 1e-3,
            newton: true,
            newton_max_iters: 60,
            short_circuit: true,
            blowup: BlowupConfig::default(),
            execution: Execution::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidParameter("grad_tol must be positive".into()));
        }
        if !(self.energy_floor < 0.0) {
            return Err(Error::InvalidParameter("energy_floor must be negative".into()));
        }
        if !(self.escape_fraction > 0.0 && self.escape_fraction < 1.0) {
            return Err(Error::InvalidParameter("escape_fraction must lie in (0, 1)".into()));
        }
        if !(self.escape_window > 0.0 && self.escape_window < 1.0) {
            return Err(Error::InvalidParameter("escape_window must lie in (0, 1)".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidParameter("restarts must be positive".into()));
        }
        if let StepRule::FixedStep(t) = self.step_rule {
            if !(t > 0.0) {
                return Err(Error::InvalidParameter("fixed step must be positive".into()));
            }
        }
        Ok(())
    }

    /// Tolerance for "energy equals zero" and for energy ties: `1e-5·max(1, |α|)`.
    pub fn zero_tol(alpha: f64) -> f64 {
        1e-5 * alpha.abs().max(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Converged,
    Unbounded,
    NoMinimizer,
}

/// Where a restart's initial profile was centred.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StartSite {
    Vertex(VertexId),
    Tip(VertexId),
    HalfLine(EdgeId, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RestartStatus {
    Converged,
    Escaped,
    Unbounded,
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub index: usize,
    pub site: StartSite,
    pub width: f64,
    pub status: RestartStatus,
    pub energy: f64,
    pub lambda: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub newton_iterations: usize,
    pub outer_fraction: f64,
    pub core_linf: f64,
    pub linf: f64,
}

/// Final state of a NoMinimizer run.
#[derive(Debug, Clone)]
pub struct EscapeTrace {
    pub restart: usize,
    /// Best energy actually reached on the truncated domain.
    pub best_energy: f64,
    pub outer_fraction: f64,
    pub core_linf: f64,
    pub linf: f64,
    /// The zero-level rule fired: the best level is not below `−tol`.
    pub zero_level: bool,
    pub u: GraphFunction,
}

#[derive(Debug, Clone)]
pub enum Witness {
    Minimizer(CriticalPoint),
    Blowup(BlowupTrace),
    Escape(EscapeTrace),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// More than `1e-6` of the mass sits in the outer 10% of a half-line.
    pub truncation_suspect: bool,
    pub restart_index: Option<usize>,
    pub restarts: Vec<RestartSummary>,
    pub short_circuit: bool,
}

#[derive(Debug, Clone)]
pub struct MinimizationOutcome {
    pub verdict: Verdict,
    /// Converged: minimum energy. Unbounded: lowest energy on the trace.
    /// NoMinimizer: the relaxed level, `min(best, 0)` under the zero-level rule.
    pub energy: f64,
    pub lambda: Option<f64>,
    pub witness: Witness,
    pub energy_history: Vec<f64>,
    pub iterations: usize,
    pub diagnostics: Diagnostics,
}

impl MinimizationOutcome {
    pub fn minimizer(&self) -> Option<&CriticalPoint> {
        match &self.witness {
            Witness::Minimizer(cp) => Some(cp),
            _ => None,
        }
    }

    pub fn pohozaev_residual(&self) -> Option<f64> {
        self.minimizer().and_then(|cp| cp.pohozaev_residual)
    }

    /// The function behind the verdict, if there is one.
    pub fn profile(&self) -> Option<&GraphFunction> {
        match &self.witness {
            Witness::Minimizer(cp) => Some(&cp.u),
            Witness::Escape(e) => Some(&e.u),
            Witness::Blowup(_) => None,
        }
    }
}

/// Deterministic starting profiles as `(site, width)`: a broad and a narrow
/// bump at every core vertex and tip, and a broad bump at the middle of every
/// half-line.
pub fn start_sites(dg: &DiscreteGraph, params: &ProblemParams) -> Vec<(StartSite, f64)> {
    let g = dg.graph();
    let deg = g.degrees();
    let wide = initial_width(params);
    // degree-1 vertices are tips, including the origin of ℝ⁺
    let sites: Vec<StartSite> = (0..g.num_vertices())
        .map(VertexId)
        .map(|v| if deg[v.0] == 1 { StartSite::Tip(v) } else { StartSite::Vertex(v) })
        .collect();
    let mut out: Vec<(StartSite, f64)> = sites.iter().map(|s| (*s, wide)).collect();
    out.extend(sites.iter().map(|s| (*s, NARROW_WIDTH)));
    for e in g.half_lines() {
        out.push((StartSite::HalfLine(e.id, 0.5 * dg.edge_mesh(e.id).length), wide));
    }
    out
}

const NARROW_WIDTH: f64 = 0.5;

/// Width of the broad initial bumps: about the width of the cubic-type
/// soliton of mass `μ`, clamped.
fn initial_width(params: &ProblemParams) -> f64 {
    (4.0 / params.mu).clamp(0.8, 8.0)
}

fn initial_profile(
    dg: &Arc<DiscreteGraph>,
    site: StartSite,
    width: f64,
    params: &ProblemParams,
    noise: f64,
    seed: u64,
) -> Result<GraphFunction> {
    let dist = match site {
        StartSite::Vertex(v) | StartSite::Tip(v) => dg.distances_from_vertex(v),
        StartSite::HalfLine(e, x) => dg.distances_from(e, x),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = GraphFunction::from_dof_fn(dg, |i| {
        let base = 1.0 / (dist[i] / width).cosh();
        base * (1.0 + noise * rng.gen_range(-1.0..1.0))
    });
    project_mass(&u, params.mu)
}

/// Projected gradient `dE + λMu` with `λ = −⟨dE, u⟩/⟨u, u⟩`, pinned entries zeroed.
fn projected_gradient(u: &GraphFunction, params: &ProblemParams) -> (Vec<f64>, f64) {
    let mesh = u.mesh();
    let de = energy_dual(u, params);
    let mu_vec = mesh.mass_matrix().apply(mesh.topology(), u.values());
    let m: f64 = mu_vec.iter().zip(u.values()).map(|(a, b)| a * b).sum();
    let lam = -de.iter().zip(u.values()).map(|(a, b)| a * b).sum::<f64>() / m;
    let mut r: Vec<f64> = de.iter().zip(&mu_vec).map(|(d, b)| d + lam * b).collect();
    for &p in mesh.pinned() {
        r[p] = 0.0;
    }
    (r, lam)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `sqrt(rᵀM⁻¹r)`.
fn dual_norm(mesh: &Arc<DiscreteGraph>, r: &[f64]) -> Result<f64> {
    let x = riesz(mesh, r)?;
    Ok(x.iter().zip(r).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt())
}

/// `sqrt(Σ r_i²/w_i)` with lumped weights; cheap stopping proxy for [`dual_norm`].
fn lumped_dual_norm(weights: &[f64], r: &[f64]) -> f64 {
    r.iter().zip(weights).filter(|(_, w)| **w > 0.0).map(|(a, w)| a * a / w).sum::<f64>().sqrt()
}

struct FlowResult {
    u: GraphFunction,
    energy: f64,
    history: Vec<f64>,
    iterations: usize,
    lumped_grad: f64,
    unbounded: bool,
}

fn flow(mut u: GraphFunction, params: &ProblemParams, cfg: &SolverConfig, tol: f64) -> Result<FlowResult> {
    let mesh = u.mesh().clone();
    let topo = mesh.topology();
    let weights = mesh.lumped_weights();
    let mut e = energy(&u, params);
    let mut history = vec![e];
    let mut tau = match cfg.step_rule {
        StepRule::FixedStep(t) => t,
        StepRule::BacktrackingArmijo => 1.0,
    };
    let mut lumped_grad = f64::INFINITY;
    let mut it = 0;
    while it < cfg.max_iters {
        let (r, lam) = projected_gradient(&u, params);
        lumped_grad = lumped_dual_norm(&weights, &r);
        if lumped_grad < tol {
            break;
        }
        it += 1;
        let sigma = lam.max(0.0);
        let mut mu_vec = mesh.mass_matrix().apply(topo, u.values());
        for &p in mesh.pinned() {
            mu_vec[p] = 0.0;
        }
        let mut accepted = false;
        loop {
            // P = K + (σ + 1/τ)M; the step P⁻¹r is projected onto the tangent space
            let mut a = mesh.stiffness().combine(1.0, mesh.mass_matrix(), sigma + 1.0 / tau);
            a.pin(topo, mesh.pinned());
            let fac = a.factor(topo)?;
            let z1 = fac.solve(&r);
            let z2 = fac.solve(&mu_vec);
            let beta = dot(&mu_vec, &z1) / dot(&mu_vec, &z2);
            let w: Vec<f64> =
                u.values().iter().zip(z1.iter().zip(&z2)).map(|(x, (a, b))| x - (a - beta * b)).collect();
            let cand = match project_mass(&u.with_values(w), params.mu) {
                Ok(c) => c,
                Err(_) => {
                    tau *= 0.5;
                    if tau < 1e-12 {
                        break;
                    }
                    continue;
                }
            };
            let e_new = energy(&cand, params);
            match cfg.step_rule {
                StepRule::FixedStep(_) => {
                    if !e_new.is_finite() {
                        return Err(Error::Diverged("energy is not finite".into()));
                    }
                    u = cand;
                    e = e_new;
                    accepted = true;
                    break;
                }
                StepRule::BacktrackingArmijo => {
                    let diff: Vec<f64> = cand.values().iter().zip(u.values()).map(|(a, b)| a - b).collect();
                    let step2 = mesh.mass_matrix().form(topo, &diff, &diff);
                    if e_new.is_finite() && e_new <= e - 1e-4 * step2 / tau {
                        u = cand;
                        e = e_new;
                        tau = (tau * 2.0).min(1e8);
                        accepted = true;
                        break;
                    }
                    tau *= 0.5;
                    if tau < 1e-12 {
                        break;
                    }
                }
            }
        }
        if !accepted {
            break;
        }
        history.push(e);
        if e < cfg.energy_floor {
            return Ok(FlowResult { u, energy: e, history, iterations: it, lumped_grad, unbounded: true });
        }
    }
    Ok(FlowResult { u, energy: e, history, iterations: it, lumped_grad, unbounded: false })
}

/// Newton's method on `Ku + λMu − f(u) = 0`, `⟨u, u⟩ = μ`.
pub fn refine_newton(u0: &GraphFunction, params: &ProblemParams, tol: f64) -> Result<CriticalPoint> {
    refine_newton_with(u0, params, tol, 60).map(|(cp, _)| cp)
}

/// [`refine_newton`] with an iteration cap; also returns the iteration count.
pub fn refine_newton_with(
    u0: &GraphFunction,
    params: &ProblemParams,
    tol: f64,
    max_iters: usize,
) -> Result<(CriticalPoint, usize)> {
    let mesh = u0.mesh().clone();
    let topo = mesh.topology();
    if u0.mass() == 0.0 {
        return Err(Error::Singular);
    }
    let residual = |u: &GraphFunction, lam: f64| -> (Vec<f64>, f64) {
        let mut f = energy_dual(u, params);
        let b = mesh.mass_matrix().apply(topo, u.values());
        for (fi, bi) in f.iter_mut().zip(&b) {
            *fi += lam * bi;
        }
        for &p in mesh.pinned() {
            f[p] = 0.0;
        }
        (f, u.mass() - params.mu)
    };
    let merit = |f: &[f64], g: f64| -> Result<f64> { Ok((dual_norm(&mesh, f)?.powi(2) + g * g).sqrt()) };
    let mut u = u0.clone();
    let (_, mut lam) = projected_gradient(&u, params);
    let (mut f, mut g) = residual(&u, lam);
    let mut res = merit(&f, g)?;
    let mut it = 0;
    while res > tol {
        if it == max_iters {
            return Err(Error::Diverged(format!("Newton residual {res:.3e} after {it} iterations")));
        }
        it += 1;
        let mut j = energy_hessian(&u, params).combine(1.0, mesh.mass_matrix(), lam);
        j.pin(topo, mesh.pinned());
        let fac = j.factor(topo)?;
        let mut b = mesh.mass_matrix().apply(topo, u.values());
        for &p in mesh.pinned() {
            b[p] = 0.0;
        }
        let neg_f: Vec<f64> = f.iter().map(|v| -v).collect();
        let x = fac.solve(&neg_f);
        let y = fac.solve(&b);
        let bx: f64 = b.iter().zip(&x).map(|(a, c)| a * c).sum();
        let by: f64 = b.iter().zip(&y).map(|(a, c)| a * c).sum();
        if by.abs() < 1e-300 || !by.is_finite() {
            return Err(Error::Singular);
        }
        let dlam = (2.0 * bx + g) / (2.0 * by);
        let du: Vec<f64> = x.iter().zip(&y).map(|(a, c)| a - c * dlam).collect();
        // cap the step relative to the current amplitude
        let du_max = du.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut t: f64 = if du_max > 0.5 * u.linf() { 0.5 * u.linf() / du_max } else { 1.0 };
        let mut improved = false;
        for _ in 0..30 {
            let cand = u.with_values(u.values().iter().zip(&du).map(|(a, d)| a + t * d).collect());
            let lam_c = lam + t * dlam;
            let (fc, gc) = residual(&cand, lam_c);
            let rc = merit(&fc, gc)?;
            if rc.is_finite() && rc < (1.0 - 1e-4 * t) * res {
                u = cand;
                lam = lam_c;
                f = fc;
                g = gc;
                res = rc;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            if res < 1e3 * tol {
                break;
            }
            return Err(Error::Diverged(format!("Newton line search failed at residual {res:.3e}")));
        }
    }
    let u = project_mass(&u, params.mu)?;
    let pohozaev = if mesh.graph().is_star() { Some(pohozaev_residual(&u, params)?) } else { None };
    let e = energy(&u, params);
    Ok((CriticalPoint { u, lambda: lam, energy: e, pohozaev_residual: pohozaev }, it))
}

/// Resamples `u` onto a mesh of the same graph built with `mp`, restores the
/// mass and runs Newton there.
pub fn refine_on_mesh(
    u: &GraphFunction,
    params: &ProblemParams,
    mp: &crate::mesh::MeshParams,
    tol: f64,
) -> Result<CriticalPoint> {
    let fine = crate::mesh::build_mesh(u.mesh().graph(), mp)?;
    let v = project_mass(&u.resample(&fine)?, params.mu)?;
    refine_newton(&v, params, tol)
}

/// Mesh suited to a critical point with multiplier `lambda > 0`: about
/// `cells` cells per decay length `1/√λ`, truncated `decay_lengths` decay
/// lengths out.
pub fn mesh_for_multiplier(lambda: f64, cells: f64, decay_lengths: f64, base: &crate::mesh::MeshParams) -> crate::mesh::MeshParams {
    let k = lambda.max(1e-6).sqrt();
    let mut mp = base.clone();
    mp.h = 1.0 / (cells * k);
    mp.truncation = decay_lengths / k;
    mp
}

struct RestartResult {
    summary: RestartSummary,
    u: GraphFunction,
    history: Vec<f64>,
    critical: Option<CriticalPoint>,
}

fn escape_stats(u: &GraphFunction, window: f64) -> (f64, f64, f64) {
    let m = u.mass();
    let outer = if m > 0.0 { u.mass_beyond(window) / m } else { 0.0 };
    (outer, u.core_linf(), u.linf())
}

fn run_restart(
    dg: &Arc<DiscreteGraph>,
    params: &ProblemParams,
    cfg: &SolverConfig,
    index: usize,
    site: StartSite,
    width: f64,
) -> Result<RestartResult> {
    let seed = cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64);
    let u0 = initial_profile(dg, site, width, params, cfg.noise, seed)?;
    let flow_tol = if cfg.newton { (1e3 * cfg.grad_tol).max(1e-7) } else { cfg.grad_tol };
    let fr = flow(u0, params, cfg, flow_tol)?;
    let (outer, core, linf) = escape_stats(&fr.u, cfg.escape_window);
    let escaped = !dg.graph().is_isometric_to_line()
        && outer > cfg.escape_fraction
        && core <= cfg.core_ratio * linf;
    let mut summary = RestartSummary {
        index,
        site,
        width,
        status: RestartStatus::Stalled,
        energy: fr.energy,
        lambda: projected_gradient(&fr.u, params).1,
        grad_norm: fr.lumped_grad,
        iterations: fr.iterations,
        newton_iterations: 0,
        outer_fraction: outer,
        core_linf: core,
        linf,
    };
    if fr.unbounded {
        summary.status = RestartStatus::Unbounded;
        return Ok(RestartResult { summary, u: fr.u, history: fr.history, critical: None });
    }
    if escaped {
        summary.status = RestartStatus::Escaped;
        return Ok(RestartResult { summary, u: fr.u, history: fr.history, critical: None });
    }
    let tol_e = SolverConfig::zero_tol(params.alpha);
    let mut critical = None;
    if fr.lumped_grad < flow_tol {
        if cfg.newton {
            if let Ok((cp, nit)) = refine_newton_with(&fr.u, params, 0.1 * cfg.grad_tol, cfg.newton_max_iters) {
                // Newton may land on another branch; keep it only if it is no worse
                if cp.energy <= fr.energy + tol_e {
                    summary.newton_iterations = nit;
                    critical = Some(cp);
                }
            }
        }
        if critical.is_none() {
            let (r, lam) = projected_gradient(&fr.u, params);
            if dual_norm(dg, &r)? < cfg.grad_tol {
                let pohozaev =
                    if dg.graph().is_star() { Some(pohozaev_residual(&fr.u, params)?) } else { None };
                critical =
                    Some(CriticalPoint { u: fr.u.clone(), lambda: lam, energy: fr.energy, pohozaev_residual: pohozaev });
            }
        }
    }
    if let Some(cp) = &critical {
        let (r, _) = projected_gradient(&cp.u, params);
        summary.grad_norm = dual_norm(dg, &r)?;
        summary.energy = cp.energy;
        summary.lambda = cp.lambda;
        let (outer, core, linf) = escape_stats(&cp.u, cfg.escape_window);
        summary.outer_fraction = outer;
        summary.core_linf = core;
        summary.linf = linf;
        summary.status = if !dg.graph().is_isometric_to_line()
            && outer > cfg.escape_fraction
            && core <= cfg.core_ratio * linf
        {
            RestartStatus::Escaped
        } else {
            RestartStatus::Converged
        };
        let u = cp.u.clone();
        return Ok(RestartResult { summary, u, history: fr.history, critical });
    }
    Ok(RestartResult { summary, u: fr.u, history: fr.history, critical: None })
}

/// Minimizes the energy at mass `params.mu` over the discrete space.
pub fn minimize(dg: &Arc<DiscreteGraph>, params: &ProblemParams, cfg: &SolverConfig) -> Result<MinimizationOutcome> {
    cfg.validate()?;
    if cfg.short_circuit {
        if let Some(family) = BlowupFamily::witness(dg.graph(), params)? {
            let bcfg = BlowupConfig { floor: cfg.energy_floor, ..cfg.blowup.clone() };
            let trace = blowup_sweep(dg.graph(), dg.params(), params, family, &bcfg)?;
            if trace.certified {
                let energy_history: Vec<f64> = trace.points.iter().map(|p| p.energy).collect();
                return Ok(MinimizationOutcome {
                    verdict: Verdict::Unbounded,
                    energy: trace.min_energy(),
                    lambda: None,
                    iterations: trace.points.len(),
                    energy_history,
                    witness: Witness::Blowup(trace),
                    diagnostics: Diagnostics { short_circuit: true, ..Default::default() },
                });
            }
        }
    }
    let sites = start_sites(dg, params);
    let jobs: Vec<(usize, (StartSite, f64))> =
        (0..cfg.restarts).flat_map(|_| sites.iter().copied()).enumerate().collect();
    let results = cfg.execution.map(jobs, |(i, (s, w))| run_restart(dg, params, cfg, i, s, w));
    let mut runs = Vec::with_capacity(results.len());
    for r in results {
        runs.push(r?);
    }
    merge(runs, params)
}

fn merge(runs: Vec<RestartResult>, params: &ProblemParams) -> Result<MinimizationOutcome> {
    let tol = SolverConfig::zero_tol(params.alpha);
    let summaries: Vec<RestartSummary> = runs.iter().map(|r| r.summary.clone()).collect();
    let iterations: usize = summaries.iter().map(|s| s.iterations).sum();
    let best_of = |status: RestartStatus| {
        runs.iter()
            .filter(|r| r.summary.status == status)
            .min_by(|a, b| a.summary.energy.total_cmp(&b.summary.energy).then(a.summary.index.cmp(&b.summary.index)))
    };
    let diag = |idx: usize, u: &GraphFunction| Diagnostics {
        truncation_suspect: u.outer_tail_fraction() > 1e-6,
        restart_index: Some(idx),
        restarts: summaries.clone(),
        short_circuit: false,
    };

    if let Some(r) = best_of(RestartStatus::Unbounded) {
        let escape = EscapeTrace {
            restart: r.summary.index,
            best_energy: r.summary.energy,
            outer_fraction: r.summary.outer_fraction,
            core_linf: r.summary.core_linf,
            linf: r.summary.linf,
            zero_level: false,
            u: r.u.clone(),
        };
        return Ok(MinimizationOutcome {
            verdict: Verdict::Unbounded,
            energy: r.summary.energy,
            lambda: None,
            witness: Witness::Escape(escape),
            energy_history: r.history.clone(),
            iterations,
            diagnostics: diag(r.summary.index, &r.u),
        });
    }

    let lowest = runs
        .iter()
        .min_by(|a, b| a.summary.energy.total_cmp(&b.summary.energy).then(a.summary.index.cmp(&b.summary.index)))
        .ok_or_else(|| Error::Indeterminate { best_energy: f64::NAN, iterations })?;
    let escape_of = |r: &RestartResult, zero_level: bool| EscapeTrace {
        restart: r.summary.index,
        best_energy: r.summary.energy,
        outer_fraction: r.summary.outer_fraction,
        core_linf: r.summary.core_linf,
        linf: r.summary.linf,
        zero_level,
        u: r.u.clone(),
    };

    // zero level: the infimum 0 is approached by vanishing sequences only
    if params.alpha <= 0.0 && lowest.summary.energy >= -tol {
        return Ok(MinimizationOutcome {
            verdict: Verdict::NoMinimizer,
            energy: lowest.summary.energy.min(0.0),
            lambda: None,
            witness: Witness::Escape(escape_of(lowest, true)),
            energy_history: lowest.history.clone(),
            iterations,
            diagnostics: diag(lowest.summary.index, &lowest.u),
        });
    }

    let conv = best_of(RestartStatus::Converged);
    let esc = best_of(RestartStatus::Escaped);
    if let Some(c) = conv {
        if c.summary.energy <= lowest.summary.energy + tol {
            let cp = c.critical.clone().expect("converged restarts carry a critical point");
            return Ok(MinimizationOutcome {
                verdict: Verdict::Converged,
                energy: cp.energy,
                lambda: Some(cp.lambda),
                energy_history: c.history.clone(),
                iterations,
                diagnostics: diag(c.summary.index, &c.u),
                witness: Witness::Minimizer(cp),
            });
        }
    }
    if let Some(e) = esc {
        if e.summary.energy <= lowest.summary.energy + tol {
            return Ok(MinimizationOutcome {
                verdict: Verdict::NoMinimizer,
                energy: e.summary.energy,
                lambda: None,
                witness: Witness::Escape(escape_of(e, false)),
                energy_history: e.history.clone(),
                iterations,
                diagnostics: diag(e.summary.index, &e.u),
            });
        }
    }
    Err(Error::Indeterminate { best_energy: lowest.summary.energy, iterations })
}

/// Ground-state level with its attainment status.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GroundStateLevel {
    Attained(f64),
    NotAttained(f64),
    MinusInfinity,
}

impl GroundStateLevel {
    pub fn value(&self) -> f64 {
        match *self {
            GroundStateLevel::Attained(e) | GroundStateLevel::NotAttained(e) => e,
            GroundStateLevel::MinusInfinity => f64::NEG_INFINITY,
        }
    }

    pub fn is_attained(&self) -> bool {
        matches!(self, GroundStateLevel::Attained(_))
    }
}

pub fn ground_state_energy(
    dg: &Arc<DiscreteGraph>,
    params: &ProblemParams,
    cfg: &SolverConfig,
) -> Result<GroundStateLevel> {
    let out = minimize(dg, params, cfg)?;
    Ok(level_of(&out))
}

pub fn level_of(out: &MinimizationOutcome) -> GroundStateLevel {
    match out.verdict {
        Verdict::Converged => GroundStateLevel::Attained(out.energy),
        Verdict::Unbounded => GroundStateLevel::MinusInfinity,
        Verdict::NoMinimizer => GroundStateLevel::NotAttained(out.energy),
    }
}
