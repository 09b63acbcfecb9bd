//! Experiment drivers: (μ, α) phase diagrams, the defocusing threshold ᾱ, tip
//! length scans and subadditivity of the ground-state level.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::functionals::ProblemParams;
use crate::graph::{critical_mass_report, MetricGraph};
use crate::mesh::{build_mesh, DiscreteGraph, EdgeMeshOverride, MeshParams};
use crate::solver::{minimize, SolverConfig, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellVerdict {
    Converged,
    Unbounded,
    NoMinimizer,
    Indeterminate,
}

impl From<Verdict> for CellVerdict {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Converged => CellVerdict::Converged,
            Verdict::Unbounded => CellVerdict::Unbounded,
            Verdict::NoMinimizer => CellVerdict::NoMinimizer,
        }
    }
}

impl CellVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            CellVerdict::Converged => "Converged",
            CellVerdict::Unbounded => "Unbounded",
            CellVerdict::NoMinimizer => "NoMinimizer",
            CellVerdict::Indeterminate => "Indeterminate",
        }
    }
}

/// Result of one minimization inside a sweep. Failures are recorded, not raised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub verdict: CellVerdict,
    /// Level reached: the minimum, the relaxed level, the lowest energy of the
    /// blow-up trace, or the best energy of an indeterminate run.
    pub energy: Option<f64>,
    pub lambda: Option<f64>,
    /// Error text for cells that failed for reasons other than indeterminacy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CellResult {
    fn from_run(out: Result<crate::solver::MinimizationOutcome>) -> Self {
        match out {
            Ok(o) => CellResult { verdict: o.verdict.into(), energy: Some(o.energy), lambda: o.lambda, note: None },
            Err(Error::Indeterminate { best_energy, .. }) => CellResult {
                verdict: CellVerdict::Indeterminate,
                energy: best_energy.is_finite().then_some(best_energy),
                lambda: None,
                note: None,
            },
            Err(e) => CellResult { verdict: CellVerdict::Indeterminate, energy: None, lambda: None, note: Some(e.to_string()) },
        }
    }

    /// Energy as a sweep predicate sees it: `−∞` for unbounded cells.
    pub fn level(&self) -> f64 {
        match self.verdict {
            CellVerdict::Unbounded => f64::NEG_INFINITY,
            _ => self.energy.unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub mu: f64,
    pub alpha: f64,
    #[serde(flatten)]
    pub result: CellResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub mesh: MeshParams,
    pub solver: SolverConfig,
    /// Cells run through this policy; each cell's restarts use `solver.execution`.
    pub execution: Execution,
    /// When set, every finished cell is written here and reused on rerun.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            mesh: MeshParams::default(),
            solver: SolverConfig::default(),
            execution: Execution::default(),
            checkpoint_dir: None,
        }
    }
}

/// Parses `a:b:n` into `n` equispaced values from `a` to `b` inclusive.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidParameter(format!("grid `{spec}` must be a:b:n"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    linspace(a, b, n)
}

pub fn linspace(a: f64, b: f64, n: usize) -> Result<Vec<f64>> {
    if !(a.is_finite() && b.is_finite()) || n == 0 {
        return Err(Error::InvalidParameter(format!("grid {a}:{b}:{n} must be finite and non-empty")));
    }
    if n == 1 {
        return Ok(vec![a]);
    }
    Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect())
}

fn cell_path(dir: &Path, mu: f64, alpha: f64) -> PathBuf {
    dir.join(format!("cell_{:016x}_{:016x}.json", mu.to_bits(), alpha.to_bits()))
}

fn load_cell(dir: &Path, mu: f64, alpha: f64) -> Option<PhasePoint> {
    let text = fs::read_to_string(cell_path(dir, mu, alpha)).ok()?;
    let pt: PhasePoint = serde_json::from_str(&text).ok()?;
    (pt.mu.to_bits() == mu.to_bits() && pt.alpha.to_bits() == alpha.to_bits()).then_some(pt)
}

/// Write-then-rename, so a killed sweep never leaves a truncated cell behind.
fn store_cell(dir: &Path, pt: &PhasePoint) -> Result<()> {
    let path = cell_path(dir, pt.mu, pt.alpha);
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_string(pt)?)?;
    fs::rename(&tmp, &path)?;
    Ok(())
}

/// Verdict and level for every `(μ, α)` pair, μ-major.
pub fn phase_diagram(
    g: &MetricGraph,
    p: f64,
    mu_grid: &[f64],
    alpha_grid: &[f64],
    cfg: &SweepConfig,
) -> Result<Vec<PhasePoint>> {
    cfg.solver.validate()?;
    for &mu in mu_grid {
        ProblemParams::new(p, 0.0, mu)?;
    }
    if let Some(a) = alpha_grid.iter().find(|a| !a.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha {a} is not finite")));
    }
    let dg = build_mesh(g, &cfg.mesh)?;
    if let Some(dir) = &cfg.checkpoint_dir {
        fs::create_dir_all(dir)?;
    }
    let cells: Vec<(f64, f64)> = mu_grid.iter().flat_map(|&mu| alpha_grid.iter().map(move |&a| (mu, a))).collect();
    let results = cfg.execution.map(cells, |(mu, alpha)| -> Result<PhasePoint> {
        let dir = cfg.checkpoint_dir.as_deref();
        if let Some(pt) = dir.and_then(|d| load_cell(d, mu, alpha)) {
            return Ok(pt);
        }
        let params = ProblemParams::new(p, alpha, mu)?;
        let pt = PhasePoint { mu, alpha, result: CellResult::from_run(minimize(&dg, &params, &cfg.solver)) };
        if let Some(d) = dir {
            store_cell(d, &pt)?;
        }
        Ok(pt)
    });
    results.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub alpha: f64,
    pub verdict: CellVerdict,
    pub energy: Option<f64>,
    /// The predicate `ε < −tol` held.
    pub negative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionResult {
    /// `(lo, hi)`: the level vanishes at `lo` and is negative at `hi`.
    pub alpha_bar_interval: (f64, f64),
    pub evaluations: Vec<Evaluation>,
    /// The bracket width fell below the requested tolerance.
    pub converged: bool,
    /// No zero-level side was found before `|α|` reached the cap.
    pub capped: bool,
}

/// Right end of the initial bracket.
pub const ALPHA_BAR_HI: f64 = -1e-3;
/// First trial for the left end; doubled until the level vanishes.
pub const ALPHA_BAR_LO: f64 = -0.1;
pub const ALPHA_BAR_CAP: f64 = 1e3;

/// Brackets `ᾱ = sup{α < 0 : ε_α(μ) = 0}` by bisection on the predicate `ε_α(μ) < −tol`.
pub fn bisect_alpha_bar(g: &MetricGraph, p: f64, mu: f64, width_tol: f64, cfg: &SweepConfig) -> Result<BisectionResult> {
    ProblemParams::new(p, -1.0, mu)?;
    if !(width_tol > 0.0) {
        return Err(Error::InvalidParameter(format!("bracket width {width_tol} must be positive")));
    }
    let class = g.classify();
    if class.has_terminal_point {
        return Err(Error::Precondition("the threshold is defined for graphs without terminal points".into()));
    }
    let report = critical_mass_report(&class);
    let mu_g = report.mu_g().unwrap_or(report.mu_g_lower);
    if mu <= mu_g {
        return Err(Error::Bisection(format!("μ = {mu} ≤ μ_G = {mu_g}: the level is zero for every α < 0")));
    }
    if mu >= report.mu_r {
        return Err(Error::Precondition(format!("μ = {mu} must stay below μ_ℝ = {}", report.mu_r)));
    }
    let dg = build_mesh(g, &cfg.mesh)?;
    let mut evaluations = Vec::new();
    let mut eval = |alpha: f64| -> Result<bool> {
        let params = ProblemParams::new(p, alpha, mu)?;
        let cell = CellResult::from_run(minimize(&dg, &params, &cfg.solver));
        if let Some(n) = cell.note {
            return Err(Error::Bisection(format!("evaluation at α = {alpha} failed: {n}")));
        }
        let negative = cell.level() < -SolverConfig::zero_tol(alpha);
        evaluations.push(Evaluation { alpha, verdict: cell.verdict, energy: cell.energy, negative });
        Ok(negative)
    };

    let mut hi = ALPHA_BAR_HI;
    if !eval(hi)? {
        return Err(Error::Bisection(format!(
            "no negative level at α = {hi}; μ = {mu} may not exceed the critical mass"
        )));
    }
    let mut lo = ALPHA_BAR_LO;
    loop {
        if !eval(lo)? {
            break;
        }
        hi = lo;
        lo *= 2.0;
        if lo.abs() > ALPHA_BAR_CAP {
            return Ok(BisectionResult { alpha_bar_interval: (lo, hi), evaluations, converged: false, capped: true });
        }
    }
    while hi - lo > width_tol {
        let mid = 0.5 * (lo + hi);
        if eval(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(BisectionResult { alpha_bar_interval: (lo, hi), evaluations, converged: true, capped: false })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TipCell {
    pub ell: f64,
    #[serde(flatten)]
    pub result: CellResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TipThresholdReport {
    pub cells: Vec<TipCell>,
    pub largest_no_minimizer: Option<f64>,
    pub smallest_converged: Option<f64>,
    /// Lengths with a Converged verdict below some NoMinimizer length.
    pub monotonicity_violations: Vec<f64>,
}

/// Mesh parameters for `g_base` plus a terminal edge of length `ell`: the
/// terminal edge gets at least eight cells.
fn tip_mesh(base: &MeshParams, edge: crate::graph::EdgeId, ell: f64) -> MeshParams {
    let h = base.h.min(ell / 8.0);
    base.clone().with_override(edge, EdgeMeshOverride { h: Some(h), truncation: None })
}

/// Minimizes on `g_base` with a terminal edge of each length in `ell_grid`
/// glued at `attach`.
pub fn tip_length_threshold(
    g_base: &MetricGraph,
    attach: &str,
    p: f64,
    alpha: f64,
    mu: f64,
    ell_grid: &[f64],
    cfg: &SweepConfig,
) -> Result<TipThresholdReport> {
    let params = ProblemParams::new(p, alpha, mu)?;
    if !(alpha > 0.0) {
        return Err(Error::Precondition(format!("tip scans need α > 0, got {alpha}")));
    }
    if mu >= crate::MU_R_PLUS {
        return Err(Error::Precondition(format!("tip scans need μ < μ_ℝ⁺, got {mu}")));
    }
    if g_base.classify().has_terminal_point {
        return Err(Error::Precondition("the base graph already has a terminal point".into()));
    }
    let mut graphs = Vec::with_capacity(ell_grid.len());
    for &ell in ell_grid {
        let (g, e) = g_base.with_terminal_edge(attach, ell)?;
        let dg: Arc<DiscreteGraph> = build_mesh(&g, &tip_mesh(&cfg.mesh, e, ell))?;
        graphs.push((ell, dg));
    }
    let cells: Vec<TipCell> = cfg.execution.map(graphs, |(ell, dg)| TipCell {
        ell,
        result: CellResult::from_run(minimize(&dg, &params, &cfg.solver)),
    });
    let largest_no_minimizer = cells
        .iter()
        .filter(|c| c.result.verdict == CellVerdict::NoMinimizer)
        .map(|c| c.ell)
        .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
    let smallest_converged = cells
        .iter()
        .filter(|c| c.result.verdict == CellVerdict::Converged)
        .map(|c| c.ell)
        .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x))));
    let monotonicity_violations = match largest_no_minimizer {
        Some(top) => cells
            .iter()
            .filter(|c| c.result.verdict == CellVerdict::Converged && c.ell < top)
            .map(|c| c.ell)
            .collect(),
        None => Vec::new(),
    };
    Ok(TipThresholdReport { cells, largest_no_minimizer, smallest_converged, monotonicity_violations })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubadditivityRow {
    pub mu1: f64,
    pub mu2: f64,
    pub e1: f64,
    pub e2: f64,
    pub e12: f64,
    /// `e1 + e2 − e12`; strict subadditivity means this is positive.
    pub margin: f64,
    pub holds: bool,
}

/// Checks `ε(μ₁ + μ₂) < ε(μ₁) + ε(μ₂)` for each pair.
pub fn subadditivity_check(
    g: &MetricGraph,
    p: f64,
    alpha: f64,
    pairs: &[(f64, f64)],
    cfg: &SweepConfig,
) -> Result<Vec<SubadditivityRow>> {
    if !(alpha > 0.0) {
        return Err(Error::Precondition(format!("subadditivity needs α > 0, got {alpha}")));
    }
    let mu_tilde = critical_mass_report(&g.classify()).mu_tilde;
    let dg = build_mesh(g, &cfg.mesh)?;
    let level = |mu: f64| -> Result<f64> {
        let params = ProblemParams::new(p, alpha, mu)?;
        let out = minimize(&dg, &params, &cfg.solver)?;
        if out.verdict == Verdict::Unbounded {
            return Err(Error::Precondition(format!("the level is −∞ at μ = {mu}")));
        }
        Ok(out.energy)
    };
    let mut rows = Vec::with_capacity(pairs.len());
    for &(mu1, mu2) in pairs {
        if mu1 + mu2 >= mu_tilde {
            return Err(Error::Precondition(format!("μ₁ + μ₂ = {} must stay below μ̃ = {mu_tilde}", mu1 + mu2)));
        }
        let levels = cfg.execution.map(vec![mu1, mu2, mu1 + mu2], level);
        let mut it = levels.into_iter();
        let (e1, e2, e12) = (it.next().unwrap()?, it.next().unwrap()?, it.next().unwrap()?);
        let margin = e1 + e2 - e12;
        rows.push(SubadditivityRow { mu1, mu2, e1, e2, e12, margin, holds: margin > 0.0 });
    }
    Ok(rows)
}
