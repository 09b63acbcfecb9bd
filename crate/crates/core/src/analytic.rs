//! Closed-form profiles and explicit test families.
//!
//! The critical soliton `φ(x) = sech^{1/2}(2x/√3)` solves
//! `−φ'' + φ/3 = φ⁵` on ℝ and has mass `μ_ℝ`; its dilations
//! `φ_λ(x) = √λ φ(λx)` solve `−φ'' + (λ²/3)φ = φ⁵` with the same mass.
//! The blow-up families concentrate such profiles at rate λ on an edge of a
//! graph; when the mass is at or above the reduced critical mass their energy
//! decreases without bound as λ grows.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::functionals::{critical_energy, energy, power_integral, ProblemParams};
use crate::graph::{EdgeId, EdgeKind, MetricGraph};
use crate::mesh::{build_mesh, project_mass, DiscreteGraph, EdgeMeshOverride, GraphFunction, MeshParams};
use crate::{MU_R, MU_R_PLUS};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Lagrange multiplier of `φ` (with `λ` on the left of the equation).
pub const SOLITON_MULTIPLIER: f64 = 1.0 / 3.0;

/// `φ(x) = sech^{1/2}(2x/√3)`.
pub fn phi(x: f64) -> f64 {
    let y = 2.0 * x.abs() / SQRT3;
    // sech y = 2e^{-y}/(1+e^{-2y}), stable for large y
    let e = (-y).exp();
    (2.0 * e / (1.0 + e * e)).sqrt()
}

/// `φ_λ(x) = √λ φ(λx)`.
pub fn phi_lambda(lam: f64, x: f64) -> f64 {
    lam.sqrt() * phi(lam * x)
}

/// Distance beyond which `φ_λ` is treated as negligible when checking supports.
pub fn effective_radius(lam: f64) -> f64 {
    10.0 / lam
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Restriction {
    FullLine,
    HalfLine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolitonSpec {
    pub lam: f64,
    pub x0: f64,
    pub restriction: Restriction,
}

impl SolitonSpec {
    pub fn full(lam: f64, x0: f64) -> Self {
        SolitonSpec { lam, x0, restriction: Restriction::FullLine }
    }

    pub fn half(lam: f64) -> Self {
        SolitonSpec { lam, x0: 0.0, restriction: Restriction::HalfLine }
    }
}

/// Samples `√λ φ(λ(x−x0))` on a mesh of ℝ (two half-lines, the first one
/// running towards −∞) or of ℝ⁺. `HalfLine` needs ℝ⁺ and `x0 = 0`.
pub fn soliton(spec: SolitonSpec, dg: &Arc<DiscreteGraph>) -> Result<GraphFunction> {
    if !(spec.lam > 0.0 && spec.lam.is_finite()) || !spec.x0.is_finite() {
        return Err(Error::InvalidParameter(format!("soliton needs λ > 0, got {}", spec.lam)));
    }
    let g = dg.graph();
    let n = g.num_half_lines();
    if !g.is_star() || n > 2 {
        return Err(Error::UnsupportedGeometry);
    }
    let r = effective_radius(spec.lam);
    let trunc = |e: usize| dg.edges()[e].length;
    match (spec.restriction, n) {
        (Restriction::FullLine, 2) => {
            if spec.x0 + r > trunc(1) || -spec.x0 + r > trunc(0) {
                return Err(Error::SupportOverflow(format!(
                    "soliton centred at {} with radius {r} leaves [−{}, {}]",
                    spec.x0,
                    trunc(0),
                    trunc(1)
                )));
            }
            Ok(GraphFunction::from_fn(dg, |e, x| {
                let t = if e.0 == 0 { -x } else { x };
                phi_lambda(spec.lam, t - spec.x0)
            }))
        }
        (Restriction::FullLine, 1) => {
            if spec.x0 + r > trunc(0) {
                return Err(Error::SupportOverflow(format!(
                    "soliton centred at {} with radius {r} leaves [0, {}]",
                    spec.x0,
                    trunc(0)
                )));
            }
            Ok(GraphFunction::from_fn(dg, |_, x| phi_lambda(spec.lam, x - spec.x0)))
        }
        (Restriction::HalfLine, 1) => {
            if spec.x0 != 0.0 {
                return Err(Error::InvalidParameter("the half-soliton is centred at the origin".into()));
            }
            if r > trunc(0) {
                return Err(Error::SupportOverflow(format!("radius {r} exceeds truncation {}", trunc(0))));
            }
            Ok(GraphFunction::from_fn(dg, |_, x| phi_lambda(spec.lam, x)))
        }
        _ => Err(Error::UnsupportedGeometry),
    }
}

/// Maximum over edge-interior nodes of `|−u'' + ωu − |u|⁴u − α|u|^{p−2}u|`,
/// with `u''` from centred differences. Only edges with uniform spacing are
/// used, and the two nodes next to a truncated end are skipped.
pub fn nodal_ode_residual(u: &GraphFunction, omega: f64, alpha: f64, p: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for em in u.mesh().edges() {
        let v = u.edge_values(em.id);
        let stop = if em.half_line { v.len().saturating_sub(2) } else { v.len() - 1 };
        for k in 1..stop {
            let d2 = (v[k - 1] - 2.0 * v[k] + v[k + 1]) / (em.h * em.h);
            let x = v[k];
            let r = -d2 + omega * x - x.abs().powi(4) * x - alpha * x.abs().powf(p - 2.0) * x;
            worst = worst.max(r.abs());
        }
    }
    worst
}

/// Terminal edge whose length is `ell`, as `(edge, tip at tail)`.
fn find_terminal_edge(g: &MetricGraph, ell: Option<f64>) -> Result<(EdgeId, bool, f64)> {
    for (id, tip) in g.terminal_edges() {
        let e = g.edge(id);
        let len = e.length().expect("terminal edges are bounded");
        if let Some(l) = ell {
            if (len - l).abs() > 1e-9 * l.max(1.0) {
                continue;
            }
        }
        let at_tail = matches!(e.kind, EdgeKind::Bounded { tail, .. } if tail == tip);
        return Ok((id, at_tail, len));
    }
    Err(Error::NoTerminalEdge)
}

/// The half-line of ℝ⁺, whose origin is a terminal point.
fn half_line_tip(g: &MetricGraph) -> Option<EdgeId> {
    let deg = g.degrees();
    g.half_lines().find(|e| deg[e.endpoints().0 .0] == 1).map(|e| e.id)
}

/// Distance from the tip along a terminal edge, given the edge coordinate.
fn from_tip(at_tail: bool, len: f64, x: f64) -> f64 {
    if at_tail {
        x
    } else {
        len - x
    }
}

/// The truncated half-soliton `φ_λ − φ_λ(ℓ)` on the terminal edge of length
/// `ell` (tip at 0), zero elsewhere, normalized to mass `μ_ℝ⁺`.
pub fn tip_blowup_family(ell: f64, lam: f64, dg: &Arc<DiscreteGraph>) -> Result<GraphFunction> {
    tip_blowup_family_with_mass(ell, lam, dg, MU_R_PLUS)
}

/// [`tip_blowup_family`] normalized to an arbitrary mass.
pub fn tip_blowup_family_with_mass(ell: f64, lam: f64, dg: &Arc<DiscreteGraph>, mu: f64) -> Result<GraphFunction> {
    if !(lam > 0.0 && lam.is_finite()) {
        return Err(Error::InvalidParameter(format!("λ = {lam} must be positive")));
    }
    let (edge, at_tail, len) = find_terminal_edge(dg.graph(), Some(ell))?;
    let cut = phi_lambda(lam, len);
    let u = GraphFunction::from_fn(dg, |e, x| {
        if e == edge {
            (phi_lambda(lam, from_tip(at_tail, len, x)) - cut).max(0.0)
        } else {
            0.0
        }
    });
    project_mass(&u, mu)
}

/// A compactly supported profile on ℝ⁺ (one-sided) or ℝ (two-sided):
/// `c·(φ(x) − φ(R))₊` on `|x| ≤ R`, with `c` fixing the continuum mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompactProfile {
    pub radius: f64,
    pub amplitude: f64,
    pub two_sided: bool,
    pub mu: f64,
}

impl CompactProfile {
    /// Default profile: truncated and shifted soliton of mass `mu`. Fails with
    /// [`Error::NonNegativeEnergy`] unless its critical energy is negative.
    pub fn shifted_soliton(mu: f64, two_sided: bool) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidParameter(format!("mass {mu} must be positive")));
        }
        let radius = 12.0;
        let mut prof = CompactProfile { radius, amplitude: 1.0, two_sided, mu };
        let (m, _, _) = prof.reference_integrals(2.0)?;
        prof.amplitude = (mu / m).sqrt();
        let e0 = prof.critical_energy()?;
        if !(e0 < 0.0) {
            return Err(Error::NonNegativeEnergy(e0));
        }
        Ok(prof)
    }

    pub fn value(&self, x: f64) -> f64 {
        if !self.two_sided && x < 0.0 {
            return 0.0;
        }
        if x.abs() >= self.radius {
            return 0.0;
        }
        self.amplitude * (phi(x) - phi(self.radius))
    }

    /// `(∫u², ∫|u'|², ∫|u|^q)` on a fine reference mesh.
    fn reference_integrals(&self, q: f64) -> Result<(f64, f64, f64)> {
        let dg = build_mesh(
            &MetricGraph::half_line_graph(),
            &MeshParams::new(self.radius / 160_000.0, self.radius).with_max_dofs(usize::MAX),
        )?;
        let u = GraphFunction::from_fn(&dg, |_, x| self.value(x));
        let k = if self.two_sided { 2.0 } else { 1.0 };
        Ok((k * u.mass(), k * u.kinetic(), k * power_integral(&u, q)))
    }

    /// `E₀(u0) = ½∫|u0'|² − ⅙∫|u0|⁶`.
    pub fn critical_energy(&self) -> Result<f64> {
        let (_, t, s6) = self.reference_integrals(6.0)?;
        Ok(0.5 * t - s6 / 6.0)
    }

    /// `∫|u0|^p`.
    pub fn power_integral(&self, p: f64) -> Result<f64> {
        Ok(self.reference_integrals(p)?.2)
    }

    /// Continuum energy of `√λ u0(λ·)`: `λ²E₀(u0) − (α/p)λ^{(p−2)/2}∫|u0|^p`.
    pub fn scaled_energy(&self, lam: f64, alpha: f64, p: f64) -> Result<f64> {
        Ok(lam * lam * self.critical_energy()? - alpha / p * lam.powf((p - 2.0) / 2.0) * self.power_integral(p)?)
    }
}

/// Where a compact profile is placed: at the tip of a terminal edge
/// (one-sided), or centred at distance `offset + R/λ` from the origin of a
/// half-line (two-sided).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Placement {
    Tip { edge: EdgeId, at_tail: bool, length: f64 },
    HalfLine { edge: EdgeId, offset: f64 },
}

impl Placement {
    /// Tip placement if the graph has a terminal edge, the origin of ℝ⁺
    /// (offset 0, one-sided), otherwise the first half-line.
    pub fn default_for(g: &MetricGraph) -> Self {
        match find_terminal_edge(g, None) {
            Ok((edge, at_tail, length)) => Placement::Tip { edge, at_tail, length },
            Err(_) if half_line_tip(g).is_some() => {
                Placement::HalfLine { edge: half_line_tip(g).expect("checked"), offset: 0.0 }
            }
            Err(_) => {
                let e = g.half_lines().next().expect("graphs have a half-line");
                Placement::HalfLine { edge: e.id, offset: 1.0 }
            }
        }
    }

    fn edge(&self) -> EdgeId {
        match *self {
            Placement::Tip { edge, .. } | Placement::HalfLine { edge, .. } => edge,
        }
    }
}

/// `√λ u0(λx)` placed on the graph; zero off the support.
pub fn compact_blowup_family(
    u0: &CompactProfile,
    lam: f64,
    placement: Placement,
    dg: &Arc<DiscreteGraph>,
) -> Result<GraphFunction> {
    if !(lam > 0.0 && lam.is_finite()) {
        return Err(Error::InvalidParameter(format!("λ = {lam} must be positive")));
    }
    let support = u0.radius / lam;
    let s = lam.sqrt();
    match placement {
        Placement::Tip { edge, at_tail, length } => {
            if u0.two_sided {
                return Err(Error::InvalidParameter("a tip placement needs a one-sided profile".into()));
            }
            if support > length {
                return Err(Error::SupportOverflow(format!("support {support} exceeds edge length {length}")));
            }
            Ok(GraphFunction::from_fn(dg, |e, x| {
                if e == edge {
                    s * u0.value(lam * from_tip(at_tail, length, x))
                } else {
                    0.0
                }
            }))
        }
        Placement::HalfLine { edge, offset } => {
            let one = if u0.two_sided { 1.0 } else { 0.0 };
            let centre = offset + one * support;
            let trunc = dg.edge_mesh(edge).length;
            if centre + support > trunc {
                return Err(Error::SupportOverflow(format!(
                    "support ends at {} beyond truncation {trunc}",
                    centre + support
                )));
            }
            Ok(GraphFunction::from_fn(dg, |e, x| if e == edge { s * u0.value(lam * (x - centre)) } else { 0.0 }))
        }
    }
}

/// Normalized `(φ_λ(x−c) − φ_λ(ρ))₊` on `|x−c| ≤ ρ`, with `c = offset + ρ`,
/// on a half-line: the two-sided analogue of the tip family.
pub fn bump_blowup_family(
    edge: EdgeId,
    offset: f64,
    radius: f64,
    lam: f64,
    mu: f64,
    dg: &Arc<DiscreteGraph>,
) -> Result<GraphFunction> {
    let centre = offset + radius;
    let trunc = dg.edge_mesh(edge).length;
    if centre + radius > trunc {
        return Err(Error::SupportOverflow(format!("bump ends at {} beyond truncation {trunc}", centre + radius)));
    }
    let cut = phi_lambda(lam, radius);
    let u = GraphFunction::from_fn(dg, |e, x| {
        if e == edge {
            (phi_lambda(lam, x - centre) - cut).max(0.0)
        } else {
            0.0
        }
    });
    project_mass(&u, mu)
}

/// A one-parameter family `λ ↦ u_λ` of mass-`μ` functions on a fixed graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BlowupFamily {
    /// Truncated half-soliton on a terminal edge, renormalized to `mu`.
    Tip { edge: EdgeId, length: f64, mu: f64 },
    /// Truncated soliton of fixed support radius on a half-line, renormalized
    /// to `mu`; `offset = −radius` centres it on the origin of ℝ⁺.
    Bump { edge: EdgeId, offset: f64, radius: f64, mu: f64 },
    /// Pure dilations `√λ u0(λ·)` of a fixed profile with negative critical energy.
    Scaled { profile: CompactProfile, placement: Placement },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlowupMode {
    Tip,
    Scaled,
}

impl BlowupFamily {
    /// Family used by `mode` on `g` at mass `mu`.
    pub fn for_mode(g: &MetricGraph, mode: BlowupMode, mu: f64) -> Result<Self> {
        match mode {
            BlowupMode::Tip => match (find_terminal_edge(g, None), half_line_tip(g)) {
                (Ok((edge, _, length)), _) => Ok(BlowupFamily::Tip { edge, length, mu }),
                (Err(_), Some(edge)) => Ok(BlowupFamily::Bump { edge, offset: -1.0, radius: 1.0, mu }),
                (Err(e), None) => Err(e),
            },
            BlowupMode::Scaled => {
                let placement = Placement::default_for(g);
                let two_sided = matches!(placement, Placement::HalfLine { offset, .. } if offset > 0.0);
                Ok(BlowupFamily::Scaled { profile: CompactProfile::shifted_soliton(mu, two_sided)?, placement })
            }
        }
    }

    /// Family that witnesses `ε = −∞` for these parameters, if the mass lies
    /// in the unbounded regime: `μ ≥ μ̃` for `α > 0`, `μ > μ̃` for `α ≤ 0`.
    pub fn witness(g: &MetricGraph, params: &ProblemParams) -> Result<Option<Self>> {
        let tip = find_terminal_edge(g, None).ok();
        let mu_tilde = if g.classify().has_terminal_point { MU_R_PLUS } else { MU_R };
        let mu = params.mu;
        if params.alpha > 0.0 && mu >= mu_tilde {
            return Ok(Some(match (tip, half_line_tip(g)) {
                (Some((edge, _, length)), _) => BlowupFamily::Tip { edge, length, mu },
                // ℝ⁺: a bump centred on the origin is a half-bump at the tip
                (None, Some(edge)) => BlowupFamily::Bump { edge, offset: -1.0, radius: 1.0, mu },
                (None, None) => {
                    let e = g.half_lines().next().expect("graphs have a half-line");
                    BlowupFamily::Bump { edge: e.id, offset: 1.0, radius: 1.0, mu }
                }
            }));
        }
        if params.alpha <= 0.0 && mu > mu_tilde {
            return Ok(Some(BlowupFamily::for_mode(g, BlowupMode::Scaled, mu)?));
        }
        Ok(None)
    }

    fn edge(&self) -> EdgeId {
        match *self {
            BlowupFamily::Tip { edge, .. } | BlowupFamily::Bump { edge, .. } => edge,
            BlowupFamily::Scaled { placement, .. } => placement.edge(),
        }
    }

    /// Mesh for parameter `lam`: the support edge is refined to about
    /// `cells_per_unit` cells per unit of `1/λ`; a half-line support is
    /// truncated just past the support.
    pub fn mesh_params(&self, base: &MeshParams, lam: f64, cells_per_unit: f64) -> MeshParams {
        let h = base.h.min(1.0 / (cells_per_unit * lam));
        let truncation = match *self {
            BlowupFamily::Tip { .. } => None,
            BlowupFamily::Bump { offset, radius, .. } => Some(offset + 2.0 * radius + 1.0),
            BlowupFamily::Scaled { profile, placement } => match placement {
                Placement::Tip { .. } => None,
                Placement::HalfLine { offset, .. } => Some(offset + 2.0 * profile.radius / lam + 1.0),
            },
        };
        let truncation = truncation.map(|t| t.max(10.0 * h));
        base.clone().with_override(self.edge(), EdgeMeshOverride { h: Some(h), truncation })
    }

    pub fn sample(&self, lam: f64, dg: &Arc<DiscreteGraph>) -> Result<GraphFunction> {
        match *self {
            BlowupFamily::Tip { length, mu, .. } => tip_blowup_family_with_mass(length, lam, dg, mu),
            BlowupFamily::Bump { edge, offset, radius, mu } => bump_blowup_family(edge, offset, radius, lam, mu, dg),
            BlowupFamily::Scaled { profile, placement } => compact_blowup_family(&profile, lam, placement, dg),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupConfig {
    /// Largest exponent in the grid `λ = 2^k`.
    pub kmax: u32,
    /// Energy below which the trace counts as unbounded.
    pub floor: f64,
    pub cells_per_unit: f64,
    /// Stop as soon as the trace is certified.
    pub early_stop: bool,
    pub execution: Execution,
}

impl Default for BlowupConfig {
    fn default() -> Self {
        BlowupConfig { kmax: 24, floor: -1e3, cells_per_unit: 64.0, early_stop: true, execution: Execution::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupPoint {
    pub lam: f64,
    pub energy: f64,
    pub mass: f64,
    pub dofs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupTrace {
    pub family: BlowupFamily,
    pub points: Vec<BlowupPoint>,
    pub floor: f64,
    pub certified: bool,
}

impl BlowupTrace {
    pub fn min_energy(&self) -> f64 {
        self.points.iter().map(|p| p.energy).fold(f64::INFINITY, f64::min)
    }

    /// Below the floor with `dE/d log λ < 0` over the last three points.
    fn certify(points: &[BlowupPoint], floor: f64) -> bool {
        let n = points.len();
        if n < 3 {
            return false;
        }
        let last = &points[n - 3..];
        last[2].energy < floor && last[1].energy < last[0].energy && last[2].energy < last[1].energy
    }
}

/// Evaluates the family on the grid `λ = 2^k`, `k = 0..=kmax`.
pub fn blowup_sweep(
    g: &MetricGraph,
    base: &MeshParams,
    params: &ProblemParams,
    family: BlowupFamily,
    cfg: &BlowupConfig,
) -> Result<BlowupTrace> {
    let eval = |k: u32| -> Result<BlowupPoint> {
        let lam = 2f64.powi(k as i32);
        let mp = family.mesh_params(base, lam, cfg.cells_per_unit);
        let dg = build_mesh(g, &mp)?;
        let u = family.sample(lam, &dg)?;
        Ok(BlowupPoint { lam, energy: energy(&u, params), mass: u.mass(), dofs: dg.n_dofs() })
    };
    let mut points = Vec::new();
    let batch = if cfg.execution.is_parallel() { 4 } else { 1 };
    let mut k = 0;
    while k <= cfg.kmax {
        let ks: Vec<u32> = (k..=(k + batch - 1).min(cfg.kmax)).collect();
        k += ks.len() as u32;
        for r in cfg.execution.map(ks, eval) {
            match r {
                Ok(pt) => points.push(pt),
                // past the DOF cap the trace ends where it is
                Err(Error::TooManyDofs { .. }) if !points.is_empty() => {
                    return Ok(finish(family, points, cfg.floor));
                }
                Err(e) => return Err(e),
            }
        }
        if cfg.early_stop && BlowupTrace::certify(&points, cfg.floor) {
            break;
        }
    }
    Ok(finish(family, points, cfg.floor))
}

fn finish(family: BlowupFamily, mut points: Vec<BlowupPoint>, floor: f64) -> BlowupTrace {
    points.sort_by(|a, b| a.lam.total_cmp(&b.lam));
    let certified = BlowupTrace::certify(&points, floor);
    BlowupTrace { family, points, floor, certified }
}

/// `E₀` of the discrete function; re-exported for tests of the null-energy property.
pub fn soliton_critical_energy(u: &GraphFunction) -> f64 {
    critical_energy(u)
}
