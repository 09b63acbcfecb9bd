//! Decreasing and symmetric-decreasing rearrangements onto ℝ⁺ and ℝ.
//!
//! The distribution function `m(t) = |{u > t}|` of the piecewise-linear input
//! is computed exactly and inverted by linear interpolation.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::MetricGraph;
use crate::mesh::{build_mesh, DiscreteGraph, GraphFunction, MeshParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RearrangeTarget {
    /// Non-increasing profile on `[0, ∞)`.
    HalfLineDecreasing,
    /// Even, non-increasing in `|x|`, on ℝ.
    LineSymmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RearrangeConfig {
    /// Output mesh width is the smallest input cell divided by this.
    pub refine: f64,
}

impl Default for RearrangeConfig {
    fn default() -> Self {
        RearrangeConfig { refine: 2.0 }
    }
}

/// Distribution function of a nonnegative piecewise-linear function. It is
/// itself piecewise linear with kinks at the nodal values, so it is stored
/// exactly at those levels.
#[derive(Debug, Clone)]
pub struct Distribution {
    /// Distinct nodal values in increasing order, starting at 0.
    pub levels: Vec<f64>,
    /// `measure[k] = |{u > levels[k]}|`.
    pub measure: Vec<f64>,
}

impl Distribution {
    pub fn of(u: &GraphFunction) -> Result<Self> {
        let v = u.values();
        let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < 0.0 {
            return Err(Error::NegativeValues(min));
        }
        let mut levels: Vec<f64> = std::iter::once(0.0).chain(v.iter().cloned()).collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        let idx = |x: f64| levels.partition_point(|&l| l < x);
        let n = levels.len();
        // inc[j]: measure gained going down from level j+1 to j; whole[k]:
        // widths of flat cells at level k. All terms are nonnegative, so nearly
        // flat cells cannot cancel against anything.
        let (mut inc, mut whole) = (vec![0.0; n], vec![0.0; n]);
        let mesh = u.mesh();
        for (&(a, b), &w) in mesh.cells().iter().zip(mesh.cell_widths()) {
            let (lo, hi) = if v[a] <= v[b] { (v[a], v[b]) } else { (v[b], v[a]) };
            let (ilo, ihi) = (idx(lo), idx(hi));
            if ihi == ilo {
                whole[ilo] += w;
            }
            for j in ilo..ihi {
                inc[j] += w * (levels[j + 1] - levels[j]) / (hi - lo);
            }
        }
        let mut measure = vec![0.0; n];
        let mut acc = 0.0;
        for j in (0..n).rev() {
            acc += inc[j];
            if j + 1 < n {
                acc += whole[j + 1];
            }
            measure[j] = acc;
        }
        Ok(Distribution { levels, measure })
    }

    /// Total measure of the support.
    pub fn support(&self) -> f64 {
        self.measure[0]
    }

    /// The decreasing profile `û(s) = inf{t : m(t) ≤ s}`.
    pub fn profile(&self, s: f64) -> f64 {
        let m = &self.measure;
        if s >= m[0] {
            return 0.0;
        }
        // m is non-increasing; find the last k with m[k] > s
        let k = m.partition_point(|&x| x > s) - 1;
        if k + 1 >= m.len() {
            return self.levels[k];
        }
        let (t0, t1) = (self.levels[k], self.levels[k + 1]);
        let (m0, m1) = (m[k], m[k + 1]);
        t0 + (m0 - s) / (m0 - m1) * (t1 - t0)
    }
}

/// Rearranges a nonnegative `u` onto a fresh mesh of ℝ⁺ or ℝ.
pub fn rearrange(u: &GraphFunction, target: RearrangeTarget, cfg: &RearrangeConfig) -> Result<GraphFunction> {
    let dist = Distribution::of(u)?;
    let (graph, scale) = match target {
        RearrangeTarget::HalfLineDecreasing => (MetricGraph::half_line_graph(), 1.0),
        RearrangeTarget::LineSymmetric => (MetricGraph::real_line(), 2.0),
    };
    // same resolution in the measure variable for both targets; only the support needs resolving
    let h = u.mesh().smallest_cell() / (cfg.refine * scale);
    let params = MeshParams::new(h, dist.support() / scale + 10.0 * h).with_far_bc(u.mesh().params().far_bc);
    let dg: Arc<DiscreteGraph> = build_mesh(&graph, &params)?;
    Ok(GraphFunction::from_fn(&dg, |_, x| dist.profile(scale * x)))
}
