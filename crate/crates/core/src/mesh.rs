//! Conforming piecewise-linear discretisation of metric graphs.
//!
//! Every bounded edge is split into `⌈length/h⌉` uniform cells and every
//! half-line is truncated at `L` and meshed the same way. Each finite vertex
//! owns exactly one degree of freedom shared by all incident edge endpoints,
//! which makes the discrete space a subspace of H¹(G); the Kirchhoff balance
//! then arises from the weak form without being imposed.
//!
//! DOFs are numbered vertices first, then edge interiors in edge order. The
//! far node of a truncated half-line is a DOF as well; with a Dirichlet far
//! boundary it is pinned to zero.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeId, EdgeKind, MetricGraph};
use crate::linalg::{CellMatrix, Chain, Topology};

/// Default cap on the number of DOFs; `GRAPHNLS_MAX_DOFS` overrides it.
pub const DEFAULT_MAX_DOFS: usize = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FarBoundary {
    Dirichlet,
    Neumann,
}

/// Per-edge replacement of the global mesh width or truncation length.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EdgeMeshOverride {
    pub h: Option<f64>,
    pub truncation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshParams {
    /// Target mesh width.
    pub h: f64,
    /// Half-line truncation length `L`.
    pub truncation: f64,
    pub far_bc: FarBoundary,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<EdgeId, EdgeMeshOverride>,
    pub max_dofs: usize,
}

impl Default for MeshParams {
    fn default() -> Self {
        MeshParams::new(0.05, 40.0)
    }
}

impl MeshParams {
    pub fn new(h: f64, truncation: f64) -> Self {
        MeshParams {
            h,
            truncation,
            far_bc: FarBoundary::Dirichlet,
            overrides: BTreeMap::new(),
            max_dofs: max_dofs_from_env(),
        }
    }

    pub fn with_far_bc(mut self, bc: FarBoundary) -> Self {
        self.far_bc = bc;
        self
    }

    pub fn with_override(mut self, edge: EdgeId, o: EdgeMeshOverride) -> Self {
        self.overrides.insert(edge, o);
        self
    }

    pub fn with_max_dofs(mut self, cap: usize) -> Self {
        self.max_dofs = cap;
        self
    }

    fn edge_h(&self, e: EdgeId) -> f64 {
        self.overrides.get(&e).and_then(|o| o.h).unwrap_or(self.h)
    }

    fn edge_truncation(&self, e: EdgeId) -> f64 {
        self.overrides.get(&e).and_then(|o| o.truncation).unwrap_or(self.truncation)
    }

    fn validate(&self, g: &MetricGraph) -> Result<()> {
        for e in g.edges() {
            let h = self.edge_h(e.id);
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::InvalidParameter(format!("mesh width {h} on {} must be positive", e.id)));
            }
            if e.is_half_line() {
                let l = self.edge_truncation(e.id);
                if !(l.is_finite() && l >= 10.0 * h * (1.0 - 1e-12)) {
                    return Err(Error::InvalidParameter(format!(
                        "truncation L = {l} on {} must be at least 10·h = {}",
                        e.id,
                        10.0 * h
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn max_dofs_from_env() -> usize {
    std::env::var("GRAPHNLS_MAX_DOFS")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_MAX_DOFS)
}

/// Number of uniform cells for an edge of the given length: `⌈length/h⌉`,
/// tolerant to round-off in the quotient.
pub fn cell_count(length: f64, h: f64) -> usize {
    let q = length / h;
    let n = (q * (1.0 - 1e-12)).ceil().max(1.0);
    n as usize
}

/// Mesh of one edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMesh {
    pub id: EdgeId,
    pub half_line: bool,
    /// Meshed length: the edge length, or the truncation length for half-lines.
    pub length: f64,
    pub h: f64,
    /// Global DOF of every node, `cells + 1` entries, ordered by arclength.
    pub nodes: Vec<usize>,
    /// Global indices of this edge's cells.
    pub cells: Range<usize>,
}

impl EdgeMesh {
    pub fn num_cells(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn coordinate(&self, k: usize) -> f64 {
        if k == self.num_cells() {
            self.length
        } else {
            k as f64 * self.h
        }
    }
}

/// A metric graph together with its mesh and assembled bilinear forms.
#[derive(Debug, Clone)]
pub struct DiscreteGraph {
    graph: MetricGraph,
    params: MeshParams,
    edges: Vec<EdgeMesh>,
    topo: Topology,
    cell_h: Vec<f64>,
    pinned: Vec<usize>,
    stiffness: CellMatrix,
    mass: CellMatrix,
}

impl DiscreteGraph {
    pub fn build(graph: &MetricGraph, params: &MeshParams) -> Result<Arc<Self>> {
        build_mesh(graph, params)
    }

    pub fn graph(&self) -> &MetricGraph {
        &self.graph
    }

    pub fn params(&self) -> &MeshParams {
        &self.params
    }

    pub fn edges(&self) -> &[EdgeMesh] {
        &self.edges
    }

    pub fn edge_mesh(&self, id: EdgeId) -> &EdgeMesh {
        &self.edges[id.0]
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn n_dofs(&self) -> usize {
        self.topo.n
    }

    pub fn n_vertex_dofs(&self) -> usize {
        self.topo.n_vertex
    }

    pub fn cells(&self) -> &[(usize, usize)] {
        &self.topo.cells
    }

    pub fn cell_widths(&self) -> &[f64] {
        &self.cell_h
    }

    /// DOFs pinned to zero by the Dirichlet far boundary.
    pub fn pinned(&self) -> &[usize] {
        &self.pinned
    }

    pub fn stiffness(&self) -> &CellMatrix {
        &self.stiffness
    }

    pub fn mass_matrix(&self) -> &CellMatrix {
        &self.mass
    }

    /// Row sums of the mass matrix (trapezoid weights of the nodes).
    pub fn lumped_weights(&self) -> Vec<f64> {
        self.mass.apply(&self.topo, &vec![1.0; self.n_dofs()])
    }

    pub fn smallest_cell(&self) -> f64 {
        self.cell_h.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Whether the DOF lies on the compact core (vertices and bounded edges).
    pub fn core_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_dofs()];
        for v in 0..self.n_vertex_dofs() {
            mask[v] = true;
        }
        for em in self.edges.iter().filter(|e| !e.half_line) {
            for &d in &em.nodes {
                mask[d] = true;
            }
        }
        mask
    }

    /// Geodesic distance from the point at arclength `x` of edge `edge` to every DOF.
    pub fn distances_from(&self, edge: EdgeId, x: f64) -> Vec<f64> {
        let n = self.n_dofs();
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (c, &(a, b)) in self.topo.cells.iter().enumerate() {
            adj[a].push((b, self.cell_h[c]));
            adj[b].push((a, self.cell_h[c]));
        }
        let em = self.edge_mesh(edge);
        let x = x.clamp(0.0, em.length);
        let k = ((x / em.h).floor() as usize).min(em.num_cells() - 1);
        let (x0, x1) = (em.coordinate(k), em.coordinate(k + 1));
        let mut dist = vec![f64::INFINITY; n];
        let mut heap = BinaryHeap::new();
        for (node, d) in [(em.nodes[k], x - x0), (em.nodes[k + 1], x1 - x)] {
            if d < dist[node] {
                dist[node] = d;
                heap.push(HeapItem(d, node));
            }
        }
        while let Some(HeapItem(d, v)) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            for &(w, len) in &adj[v] {
                let nd = d + len;
                if nd < dist[w] {
                    dist[w] = nd;
                    heap.push(HeapItem(nd, w));
                }
            }
        }
        dist
    }

    /// Geodesic distance from a finite vertex to every DOF.
    pub fn distances_from_vertex(&self, v: crate::graph::VertexId) -> Vec<f64> {
        let e = self
            .graph
            .edges()
            .iter()
            .find(|e| {
                let (a, b) = e.endpoints();
                a == v || b == Some(v)
            })
            .expect("connected graph: every vertex has an edge");
        let at_tail = e.endpoints().0 == v;
        let x = if at_tail { 0.0 } else { self.edge_mesh(e.id).length };
        self.distances_from(e.id, x)
    }
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

pub fn build_mesh(graph: &MetricGraph, params: &MeshParams) -> Result<Arc<DiscreteGraph>> {
    params.validate(graph)?;
    let nv = graph.num_vertices();
    let mut requested = nv;
    for e in graph.edges() {
        let h = params.edge_h(e.id);
        let len = e.length().unwrap_or_else(|| params.edge_truncation(e.id));
        let mut n = cell_count(len, h);
        if e.is_self_loop() {
            n = n.max(2);
        }
        requested = requested.saturating_add(n.saturating_sub(1) + usize::from(e.is_half_line()));
    }
    if requested > params.max_dofs {
        return Err(Error::TooManyDofs { requested, cap: params.max_dofs });
    }

    let mut next = nv;
    let mut cells: Vec<(usize, usize)> = Vec::new();
    let mut cell_h = Vec::new();
    let mut edges = Vec::with_capacity(graph.edges().len());
    let mut chains = Vec::new();
    let mut vertex_cells = Vec::new();
    let mut pinned = Vec::new();
    for e in graph.edges() {
        let h_target = params.edge_h(e.id);
        let (len, tail, head) = match e.kind {
            EdgeKind::Bounded { tail, head, length } => (length, tail.0, Some(head.0)),
            EdgeKind::HalfLine { origin } => (params.edge_truncation(e.id), origin.0, None),
        };
        let mut n = cell_count(len, h_target);
        if e.is_self_loop() {
            n = n.max(2);
        }
        let h = len / n as f64;
        let mut nodes = Vec::with_capacity(n + 1);
        nodes.push(tail);
        let first = next;
        let interior = if head.is_some() { n - 1 } else { n };
        for _ in 0..interior {
            nodes.push(next);
            next += 1;
        }
        if let Some(hd) = head {
            nodes.push(hd);
        } else if params.far_bc == FarBoundary::Dirichlet {
            pinned.push(*nodes.last().expect("n >= 1"));
        }
        let c0 = cells.len();
        for k in 0..n {
            cells.push((nodes[k], nodes[k + 1]));
            cell_h.push(h);
        }
        if interior == 0 {
            vertex_cells.push(c0);
        } else {
            chains.push(Chain {
                start: first,
                len: interior,
                left: Some((tail, c0)),
                right: head.map(|hd| (hd, c0 + n - 1)),
                inner_cells: (c0 + 1..c0 + interior).collect(),
            });
        }
        edges.push(EdgeMesh { id: e.id, half_line: head.is_none(), length: len, h, nodes, cells: c0..cells.len() });
    }
    let topo = Topology { n: next, n_vertex: nv, cells, chains, vertex_cells };
    let mut stiffness = CellMatrix::zeros(&topo);
    let mut mass = CellMatrix::zeros(&topo);
    for (c, &(a, b)) in topo.cells.iter().enumerate() {
        let h = cell_h[c];
        stiffness.diag[a] += 1.0 / h;
        stiffness.diag[b] += 1.0 / h;
        stiffness.off[c] = -1.0 / h;
        mass.diag[a] += h / 3.0;
        mass.diag[b] += h / 3.0;
        mass.off[c] = h / 6.0;
    }
    Ok(Arc::new(DiscreteGraph {
        graph: graph.clone(),
        params: params.clone(),
        edges,
        topo,
        cell_h,
        pinned,
        stiffness,
        mass,
    }))
}

/// A real-valued piecewise-linear function on a [`DiscreteGraph`].
#[derive(Debug, Clone)]
pub struct GraphFunction {
    mesh: Arc<DiscreteGraph>,
    values: Vec<f64>,
}

impl PartialEq for GraphFunction {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh) && self.values == other.values
    }
}

impl GraphFunction {
    pub fn zeros(mesh: &Arc<DiscreteGraph>) -> Self {
        GraphFunction { mesh: mesh.clone(), values: vec![0.0; mesh.n_dofs()] }
    }

    /// Wraps raw DOF values. Pinned DOFs are forced to zero.
    pub fn from_values(mesh: &Arc<DiscreteGraph>, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_dofs() {
            return Err(Error::InvalidParameter(format!(
                "expected {} values, got {}",
                mesh.n_dofs(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite value {bad}")));
        }
        for &p in mesh.pinned() {
            values[p] = 0.0;
        }
        Ok(GraphFunction { mesh: mesh.clone(), values })
    }

    /// Samples `f(edge, arclength)` at every node. Vertex DOFs take the value
    /// from the first incident edge in edge order.
    pub fn from_fn(mesh: &Arc<DiscreteGraph>, mut f: impl FnMut(EdgeId, f64) -> f64) -> Self {
        let mut values = vec![f64::NAN; mesh.n_dofs()];
        for em in mesh.edges() {
            for (k, &d) in em.nodes.iter().enumerate() {
                if values[d].is_nan() {
                    values[d] = f(em.id, em.coordinate(k));
                }
            }
        }
        for &p in mesh.pinned() {
            values[p] = 0.0;
        }
        GraphFunction { mesh: mesh.clone(), values }
    }

    /// Samples a function of the DOF index, e.g. of a precomputed distance field.
    pub fn from_dof_fn(mesh: &Arc<DiscreteGraph>, f: impl FnMut(usize) -> f64) -> Self {
        let mut values: Vec<f64> = (0..mesh.n_dofs()).map(f).collect();
        for &p in mesh.pinned() {
            values[p] = 0.0;
        }
        GraphFunction { mesh: mesh.clone(), values }
    }

    pub fn mesh(&self) -> &Arc<DiscreteGraph> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        let mut out = GraphFunction { mesh: self.mesh.clone(), values };
        for &p in self.mesh.pinned() {
            out.values[p] = 0.0;
        }
        out
    }

    pub fn scaled(&self, c: f64) -> Self {
        GraphFunction { mesh: self.mesh.clone(), values: self.values.iter().map(|v| c * v).collect() }
    }

    /// Nodal values along one edge, ordered by arclength.
    pub fn edge_values(&self, id: EdgeId) -> Vec<f64> {
        self.mesh.edge_mesh(id).nodes.iter().map(|&d| self.values[d]).collect()
    }

    /// Value at arclength `x` on edge `id` (linear interpolation; zero past a truncated end).
    pub fn value_at(&self, id: EdgeId, x: f64) -> f64 {
        let em = self.mesh.edge_mesh(id);
        if x <= 0.0 {
            return self.values[em.nodes[0]];
        }
        if x >= em.length {
            return if em.half_line && x > em.length { 0.0 } else { self.values[*em.nodes.last().unwrap()] };
        }
        let k = ((x / em.h).floor() as usize).min(em.num_cells() - 1);
        let (x0, x1) = (em.coordinate(k), em.coordinate(k + 1));
        let t = (x - x0) / (x1 - x0);
        (1.0 - t) * self.values[em.nodes[k]] + t * self.values[em.nodes[k + 1]]
    }

    /// `∫|u|²`, exact for piecewise-linear functions.
    pub fn mass(&self) -> f64 {
        self.mesh.mass_matrix().form(self.mesh.topology(), &self.values, &self.values)
    }

    /// `∫|u'|²`, exact for piecewise-linear functions.
    pub fn kinetic(&self) -> f64 {
        // summed per cell from differences; the assembled form cancels badly at small h
        let v = &self.values;
        self.mesh
            .cells()
            .iter()
            .zip(self.mesh.cell_widths())
            .map(|(&(a, b), &h)| (v[b] - v[a]) * (v[b] - v[a]) / h)
            .sum()
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Max of `|u|` over the compact core; for graphs whose core is a single
    /// vertex this is the vertex value.
    pub fn core_linf(&self) -> f64 {
        let mask = self.mesh.core_mask();
        self.values.iter().zip(mask).filter(|(_, m)| *m).fold(0.0, |acc, (v, _)| acc.max(v.abs()))
    }

    /// Mass carried by half-line cells beyond `fraction·L` on each half-line.
    pub fn mass_beyond(&self, fraction: f64) -> f64 {
        let mut total = 0.0;
        for em in self.mesh.edges().iter().filter(|e| e.half_line) {
            let cut = fraction * em.length;
            for (k, c) in em.cells.clone().enumerate() {
                if em.coordinate(k) >= cut - 1e-12 {
                    total += self.cell_mass(c);
                }
            }
        }
        total
    }

    /// Largest fraction of the total mass found in the outer 10% of a single half-line.
    pub fn outer_tail_fraction(&self) -> f64 {
        let m = self.mass();
        if m == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for em in self.mesh.edges().iter().filter(|e| e.half_line) {
            let cut = 0.9 * em.length;
            let tail: f64 = em
                .cells
                .clone()
                .enumerate()
                .filter(|(k, _)| em.coordinate(*k) >= cut - 1e-12)
                .map(|(_, c)| self.cell_mass(c))
                .sum();
            worst = worst.max(tail / m);
        }
        worst
    }

    fn cell_mass(&self, c: usize) -> f64 {
        let (a, b) = self.mesh.cells()[c];
        let (ua, ub) = (self.values[a], self.values[b]);
        self.mesh.cell_widths()[c] / 3.0 * (ua * ua + ua * ub + ub * ub)
    }

    /// Resamples onto another mesh of the same graph by arclength interpolation.
    pub fn resample(&self, target: &Arc<DiscreteGraph>) -> Result<GraphFunction> {
        if target.graph() != self.mesh.graph() {
            return Err(Error::InvalidParameter("resampling needs meshes of the same graph".into()));
        }
        Ok(GraphFunction::from_fn(target, |e, x| self.value_at(e, x)))
    }

    /// `⟨u, v⟩` in L².
    pub fn inner(&self, other: &GraphFunction) -> f64 {
        self.mesh.mass_matrix().form(self.mesh.topology(), &self.values, &other.values)
    }
}

/// Rescales `u` to mass `mu`.
pub fn project_mass(u: &GraphFunction, mu: f64) -> Result<GraphFunction> {
    let m = u.mass();
    if !(m > 0.0) {
        return Err(Error::ZeroMass);
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!("target mass {mu} must be positive")));
    }
    Ok(u.scaled((mu / m).sqrt()))
}
