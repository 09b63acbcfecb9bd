//! Ground states of the NLS energy
//!
//! ```text
//! E(u) = ½∫|u'|² − ⅙∫|u|⁶ − (α/p)∫|u|^p,      ∫|u|² = μ,
//! ```
//!
//! on non-compact metric graphs, with the critical sextic term combined with a
//! subcritical power `p ∈ (2, 6)`. The crate covers the whole pipeline:
//!
//! * [`graph`]: metric graphs, the four-type classification and the critical
//!   mass constants;
//! * [`mesh`]: conforming piecewise-linear discretisation with truncated
//!   half-lines;
//! * [`functionals`]: energy, gradients, Gagliardo–Nirenberg quotients,
//!   Pohozaev residuals, dilations and rearrangements;
//! * [`analytic`]: solitons and the blow-up test families;
//! * [`solver`]: normalized gradient flow with outcome classification and
//!   Newton refinement;
//! * [`sweeps`]: phase diagrams, threshold bisection and tip-length scans;
//! * [`io`]: profile files and run manifests.
//!
//! Independent evaluations (restarts, sweep cells, λ-grids, multi-starts) run
//! through [`exec`], which uses rayon when the `parallel` feature is enabled.

pub mod analytic;
pub mod error;
pub mod exec;
pub mod functionals;
pub mod gn;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod rearrange;
pub mod solver;
pub mod sweeps;

pub use error::{Error, Result};
pub use graph::{CriticalMassReport, EdgeId, GraphClass, GraphType, MetricGraph, VertexId};
pub use mesh::{DiscreteGraph, FarBoundary, GraphFunction, MeshParams};

/// Critical mass of the real line, `π√3/2`.
pub const MU_R: f64 = std::f64::consts::PI * 1.732_050_807_568_877_2 / 2.0;

/// Critical mass of the half-line, `μ_ℝ / 2`.
pub const MU_R_PLUS: f64 = MU_R / 2.0;
