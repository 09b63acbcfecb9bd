//! Energy functionals on discrete graph functions.
//!
//! The quadratic terms are integrated exactly for piecewise-linear functions.
//! The power terms `∫|u|^q` use Simpson's rule on each cell with the nodal
//! interpolant (endpoint values and their average at the midpoint); the
//! discrete gradient and Hessian are the exact derivatives of that quadrature,
//! so the discrete problem is itself variational.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CellMatrix;
use crate::mesh::{DiscreteGraph, GraphFunction};

/// Exponent `p`, coefficient `α` of the subcritical term, and target mass `μ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub p: f64,
    pub alpha: f64,
    pub mu: f64,
}

impl ProblemParams {
    pub fn new(p: f64, alpha: f64, mu: f64) -> Result<Self> {
        if !(p > 2.0 && p < 6.0) {
            return Err(Error::InvalidParameter(format!("exponent p = {p} must lie in (2, 6)")));
        }
        if !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha = {alpha} must be finite")));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidParameter(format!("mass mu = {mu} must be positive")));
        }
        Ok(ProblemParams { p, alpha, mu })
    }

    pub fn with_mu(self, mu: f64) -> Self {
        ProblemParams { mu, ..self }
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        ProblemParams { alpha, ..self }
    }
}

/// A constrained critical point: `−u'' + λu = |u|⁴u + α|u|^{p−2}u` with `∫u² = μ`.
#[derive(Debug, Clone)]
pub struct CriticalPoint {
    pub u: GraphFunction,
    /// Lagrange multiplier, with `λ` on the left-hand side as written above.
    pub lambda: f64,
    pub energy: f64,
    pub pohozaev_residual: Option<f64>,
}

/// `|x|^q`, with integer exponents taken through `powi`.
#[inline]
fn abs_pow(x: f64, q: f64) -> f64 {
    if q == q.trunc() && q.abs() < 64.0 {
        x.abs().powi(q as i32)
    } else {
        x.abs().powf(q)
    }
}

/// Simpson approximation of `∫|u|^q`.
pub fn power_integral(u: &GraphFunction, q: f64) -> f64 {
    let v = u.values();
    let mesh = u.mesh();
    mesh.cells()
        .iter()
        .zip(mesh.cell_widths())
        .map(|(&(a, b), &h)| {
            let (x, y) = (v[a], v[b]);
            let m = 0.5 * (x + y);
            h / 6.0 * (abs_pow(x, q) + 4.0 * abs_pow(m, q) + abs_pow(y, q))
        })
        .sum()
}

/// Gradient of [`power_integral`] with respect to the nodal values.
pub fn power_integral_dual(u: &GraphFunction, q: f64) -> Vec<f64> {
    let v = u.values();
    let mesh = u.mesh();
    let mut g = vec![0.0; v.len()];
    let dpow = |x: f64| q * abs_pow(x, q - 2.0) * x;
    for (&(a, b), &h) in mesh.cells().iter().zip(mesh.cell_widths()) {
        let (x, y) = (v[a], v[b]);
        let dm = dpow(0.5 * (x + y));
        g[a] += h / 6.0 * (dpow(x) + 2.0 * dm);
        g[b] += h / 6.0 * (dpow(y) + 2.0 * dm);
    }
    g
}

/// Hessian of [`power_integral`].
pub fn power_integral_hessian(u: &GraphFunction, q: f64) -> CellMatrix {
    let v = u.values();
    let mesh = u.mesh();
    let topo = mesh.topology();
    let mut hm = CellMatrix::zeros(topo);
    let d2 = |x: f64| q * (q - 1.0) * abs_pow(x, q - 2.0);
    for (c, (&(a, b), &h)) in mesh.cells().iter().zip(mesh.cell_widths()).enumerate() {
        let (x, y) = (v[a], v[b]);
        let dm = d2(0.5 * (x + y));
        hm.diag[a] += h / 6.0 * (d2(x) + dm);
        hm.diag[b] += h / 6.0 * (d2(y) + dm);
        hm.off[c] = h / 6.0 * dm;
    }
    hm
}

/// The three integrals the energy is built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParts {
    /// `∫|u'|²`
    pub kinetic: f64,
    /// `∫|u|⁶`
    pub sextic: f64,
    /// `∫|u|^p`
    pub power: f64,
}

impl EnergyParts {
    pub fn of(u: &GraphFunction, p: f64) -> Self {
        EnergyParts { kinetic: u.kinetic(), sextic: power_integral(u, 6.0), power: power_integral(u, p) }
    }

    pub fn energy(&self, p: f64, alpha: f64) -> f64 {
        0.5 * self.kinetic - self.sextic / 6.0 - alpha / p * self.power
    }

    /// Critical part `½∫|u'|² − ⅙∫|u|⁶`.
    pub fn critical_energy(&self) -> f64 {
        0.5 * self.kinetic - self.sextic / 6.0
    }

    /// `∫|u'|² − ⅓∫|u|⁶ − α(p−2)/(2p)∫|u|^p`, the derivative of the energy
    /// along mass-preserving dilations at `λ = 1`.
    pub fn pohozaev_combination(&self, p: f64, alpha: f64) -> f64 {
        self.kinetic - self.sextic / 3.0 - alpha * (p - 2.0) / (2.0 * p) * self.power
    }

    /// Energy of the dilation `√λ u(λ·)` on a star graph.
    pub fn dilated_energy(&self, p: f64, alpha: f64, lam: f64) -> f64 {
        lam * lam * self.critical_energy() - alpha / p * lam.powf((p - 2.0) / 2.0) * self.power
    }

    /// Second λ-derivative of [`EnergyParts::dilated_energy`] at `λ = 1`, without
    /// assuming the first-order condition.
    pub fn dilation_second_derivative_raw(&self, p: f64, alpha: f64) -> f64 {
        2.0 * self.critical_energy() - alpha / p * ((p - 2.0) / 2.0) * ((p - 4.0) / 2.0) * self.power
    }
}

/// `E(u) = ½∫|u'|² − ⅙∫|u|⁶ − (α/p)∫|u|^p`.
pub fn energy(u: &GraphFunction, params: &ProblemParams) -> f64 {
    EnergyParts::of(u, params.p).energy(params.p, params.alpha)
}

/// `E_0`, the energy without the subcritical term.
pub fn critical_energy(u: &GraphFunction) -> f64 {
    0.5 * u.kinetic() - power_integral(u, 6.0) / 6.0
}

/// Nonlinear force `d/du [⅙∫|u|⁶ + (α/p)∫|u|^p]` as a dual vector.
pub fn nonlinear_dual(u: &GraphFunction, params: &ProblemParams) -> Vec<f64> {
    let g6 = power_integral_dual(u, 6.0);
    let gp = power_integral_dual(u, params.p);
    let c = params.alpha / params.p;
    g6.iter().zip(&gp).map(|(a, b)| a / 6.0 + c * b).collect()
}

/// Derivative of the energy as a dual vector, `dE(u)[e_i]`, with pinned entries zeroed.
pub fn energy_dual(u: &GraphFunction, params: &ProblemParams) -> Vec<f64> {
    let mesh = u.mesh();
    let mut g = mesh.stiffness().apply(mesh.topology(), u.values());
    for (gi, f) in g.iter_mut().zip(nonlinear_dual(u, params)) {
        *gi -= f;
    }
    for &p in mesh.pinned() {
        g[p] = 0.0;
    }
    g
}

/// Solves `M x = dual` on the free DOFs.
pub fn riesz(mesh: &Arc<DiscreteGraph>, dual: &[f64]) -> Result<Vec<f64>> {
    let mut m = mesh.mass_matrix().clone();
    m.pin(mesh.topology(), mesh.pinned());
    let mut rhs = dual.to_vec();
    for &p in mesh.pinned() {
        rhs[p] = 0.0;
    }
    Ok(m.factor(mesh.topology())?.solve(&rhs))
}

/// Riesz representative of `dE(u)` in the discrete L² inner product.
pub fn energy_gradient(u: &GraphFunction, params: &ProblemParams) -> Result<GraphFunction> {
    let g = riesz(u.mesh(), &energy_dual(u, params))?;
    Ok(u.with_values(g))
}

/// Hessian of the discrete energy, `K − ⅙H₆ − (α/p)H_p`.
pub fn energy_hessian(u: &GraphFunction, params: &ProblemParams) -> CellMatrix {
    let mesh = u.mesh();
    let h6 = power_integral_hessian(u, 6.0);
    let hp = power_integral_hessian(u, params.p);
    let nl = h6.combine(1.0 / 6.0, &hp, params.alpha / params.p);
    mesh.stiffness().combine(1.0, &nl, -1.0)
}

/// Gagliardo–Nirenberg quotient `‖u‖_q^q / (‖u‖₂^{(q+2)/2} ‖u'‖₂^{(q−2)/2})`.
pub fn gn_quotient(u: &GraphFunction, q: f64) -> Result<f64> {
    if !(q > 2.0) {
        return Err(Error::InvalidParameter(format!("GN exponent q = {q} must exceed 2")));
    }
    let mass = u.mass();
    if !(mass > 0.0) {
        return Err(Error::ZeroMass);
    }
    let kin = u.kinetic();
    if !(kin > 0.0) {
        return Err(Error::ZeroDerivative);
    }
    Ok(power_integral(u, q) / (mass.powf((q + 2.0) / 4.0) * kin.powf((q - 2.0) / 4.0)))
}

/// Relative Pohozaev residual `|∫|u'|² − ⅓∫|u|⁶ − α(p−2)/(2p)∫|u|^p| / ∫|u'|²`.
/// Defined on star graphs (including ℝ and ℝ⁺); returns 0 for `u = 0`.
pub fn pohozaev_residual(u: &GraphFunction, params: &ProblemParams) -> Result<f64> {
    if !u.mesh().graph().is_star() {
        return Err(Error::UnsupportedGeometry);
    }
    let parts = EnergyParts::of(u, params.p);
    if parts.kinetic == 0.0 {
        return Ok(0.0);
    }
    Ok(parts.pohozaev_combination(params.p, params.alpha).abs() / parts.kinetic)
}

/// Pohozaev tolerance used when a caller does not supply one.
pub const DEFAULT_POHOZAEV_TOL: f64 = 1e-6;

/// `d²/dλ² E(√λ u(λ·))` at `λ = 1` for `u` satisfying the first-order dilation
/// condition, in which case it equals `(α/p)((p−2)/2)((6−p)/2)∫|u|^p`.
pub fn dilation_second_derivative(u: &GraphFunction, params: &ProblemParams, tol: f64) -> Result<f64> {
    let r = pohozaev_residual(u, params)?;
    if r > tol {
        return Err(Error::PohozaevViolated(r));
    }
    let p = params.p;
    Ok(params.alpha / p * ((p - 2.0) / 2.0) * ((6.0 - p) / 2.0) * power_integral(u, p))
}

/// Result of [`dilate`]: the resampled function and the factor applied to
/// restore its mass after interpolation.
#[derive(Debug, Clone)]
pub struct Dilation {
    pub u: GraphFunction,
    pub renormalization: f64,
}

/// Mass-preserving dilation `√λ u(λx)` on every half-line of a star graph,
/// resampled by linear interpolation onto the same mesh.
pub fn dilate(u: &GraphFunction, lam: f64) -> Result<Dilation> {
    if !(lam > 0.0 && lam.is_finite()) {
        return Err(Error::InvalidParameter(format!("dilation factor {lam} must be positive")));
    }
    if !u.mesh().graph().is_star() {
        return Err(Error::UnsupportedGeometry);
    }
    if lam == 1.0 {
        return Ok(Dilation { u: u.clone(), renormalization: 1.0 });
    }
    let s = lam.sqrt();
    let raw = GraphFunction::from_fn(u.mesh(), |e, x| s * u.value_at(e, lam * x));
    let (m0, m1) = (u.mass(), raw.mass());
    if m1 == 0.0 {
        return Ok(Dilation { u: raw, renormalization: 1.0 });
    }
    let c = (m0 / m1).sqrt();
    Ok(Dilation { u: raw.scaled(c), renormalization: c })
}
