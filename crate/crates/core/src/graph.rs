//! Metric graphs: representation, parsing, classification and critical masses.
//!
//! A graph is a finite collection of bounded edges (each with a positive
//! length) and half-lines glued at finite vertices. Vertices at infinity are
//! never materialised: a half-line is an edge record with one finite endpoint,
//! identified with `[0, +inf)` and coordinate 0 at that endpoint.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{MU_R, MU_R_PLUS};

/// Index of a finite vertex inside a [`MetricGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VertexId(pub usize);

/// Edge identifier. Bounded edges and half-lines share one id sequence,
/// assigned in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeId(pub usize);

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EdgeKind {
    /// Bounded edge `[0, length]` with coordinate 0 at `tail`.
    Bounded { tail: VertexId, head: VertexId, length: f64 },
    /// Half-line `[0, inf)` with coordinate 0 at `origin`.
    HalfLine { origin: VertexId },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: EdgeId,
    pub kind: EdgeKind,
}

impl Edge {
    pub fn is_half_line(&self) -> bool {
        matches!(self.kind, EdgeKind::HalfLine { .. })
    }

    pub fn is_self_loop(&self) -> bool {
        matches!(self.kind, EdgeKind::Bounded { tail, head, .. } if tail == head)
    }

    /// Finite endpoints. A half-line has one, a bounded edge two (equal for a loop).
    pub fn endpoints(&self) -> (VertexId, Option<VertexId>) {
        match self.kind {
            EdgeKind::Bounded { tail, head, .. } => (tail, Some(head)),
            EdgeKind::HalfLine { origin } => (origin, None),
        }
    }

    pub fn length(&self) -> Option<f64> {
        match self.kind {
            EdgeKind::Bounded { length, .. } => Some(length),
            EdgeKind::HalfLine { .. } => None,
        }
    }
}

/// A validated, connected, non-compact metric graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricGraph {
    vertex_names: Vec<String>,
    edges: Vec<Edge>,
}

/// Incremental construction of a [`MetricGraph`]; vertices are created on first use.
#[derive(Debug, Default, Clone)]
pub struct GraphBuilder {
    names: Vec<String>,
    index: BTreeMap<String, VertexId>,
    edges: Vec<Edge>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn vertex(&mut self, name: &str) -> VertexId {
        if let Some(&v) = self.index.get(name) {
            return v;
        }
        let v = VertexId(self.names.len());
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), v);
        v
    }

    pub fn edge(mut self, a: &str, b: &str, length: f64) -> Self {
        self.add_edge(a, b, length);
        self
    }

    pub fn half_line(mut self, v: &str) -> Self {
        self.add_half_line(v);
        self
    }

    pub fn add_edge(&mut self, a: &str, b: &str, length: f64) -> EdgeId {
        let tail = self.vertex(a);
        let head = self.vertex(b);
        let id = EdgeId(self.edges.len());
        self.edges.push(Edge { id, kind: EdgeKind::Bounded { tail, head, length } });
        id
    }

    pub fn add_half_line(&mut self, v: &str) -> EdgeId {
        let origin = self.vertex(v);
        let id = EdgeId(self.edges.len());
        self.edges.push(Edge { id, kind: EdgeKind::HalfLine { origin } });
        id
    }

    pub fn build(self) -> Result<MetricGraph> {
        MetricGraph::from_parts(self.names, self.edges)
    }
}

impl MetricGraph {
    pub fn builder() -> GraphBuilder {
        GraphBuilder::new()
    }

    fn from_parts(vertex_names: Vec<String>, edges: Vec<Edge>) -> Result<Self> {
        for e in &edges {
            if let EdgeKind::Bounded { length, .. } = e.kind {
                if !(length.is_finite() && length > 0.0) {
                    return Err(Error::NonPositiveLength { edge: e.id, length });
                }
            }
        }
        if !edges.iter().any(Edge::is_half_line) {
            return Err(Error::CompactGraph);
        }
        let g = MetricGraph { vertex_names, edges };
        let comps = g.components(None);
        if comps.iter().any(|&c| c != comps[0]) {
            return Err(Error::Disconnected);
        }
        Ok(g)
    }

    /// The real line: two half-lines glued at one vertex.
    pub fn real_line() -> Self {
        Self::builder().half_line("v0").half_line("v0").build().expect("valid")
    }

    /// The half-line `[0, inf)`; its origin is a terminal point.
    pub fn half_line_graph() -> Self {
        Self::builder().half_line("v0").build().expect("valid")
    }

    /// Star graph with `n >= 1` half-lines at a common vertex.
    pub fn star(n: usize) -> Self {
        assert!(n >= 1, "a star needs at least one half-line");
        let mut b = Self::builder();
        for _ in 0..n {
            b.add_half_line("v0");
        }
        b.build().expect("valid")
    }

    /// A half-line attached to a self-loop of the given length.
    pub fn tadpole(loop_length: f64) -> Result<Self> {
        Self::builder().edge("v0", "v0", loop_length).half_line("v0").build()
    }

    /// Two half-lines and one bounded edge glued at their common initial point.
    pub fn two_half_lines_and_edge(length: f64) -> Result<Self> {
        Self::builder().edge("v0", "v1", length).half_line("v0").half_line("v0").build()
    }

    /// Two half-lines and a bounded edge at `v0`; a self-loop at the far end of the edge.
    pub fn sign_post(edge_length: f64, loop_length: f64) -> Result<Self> {
        Self::builder()
            .half_line("v0")
            .half_line("v0")
            .edge("v0", "v1", edge_length)
            .edge("v1", "v1", loop_length)
            .build()
    }

    /// This graph with an extra terminal edge of length `length` glued at `at`.
    /// Returns the new graph and the id of the terminal edge.
    pub fn with_terminal_edge(&self, at: &str, length: f64) -> Result<(Self, EdgeId)> {
        let mut b = GraphBuilder::new();
        for name in &self.vertex_names {
            b.vertex(name);
        }
        if !b.index.contains_key(at) {
            return Err(Error::UnknownVertex(at.to_string()));
        }
        b.edges = self.edges.clone();
        let mut tip = format!("{at}_tip");
        while b.index.contains_key(&tip) {
            tip.push('_');
        }
        let id = b.add_edge(at, &tip, length);
        Ok((b.build()?, id))
    }

    /// Parses the line-oriented graph format:
    ///
    /// ```text
    /// # comment
    /// edge <v> <w> <length>
    /// halfline <v>
    /// ```
    ///
    /// Statements may also be separated by `;` on a single line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut b = GraphBuilder::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("");
            let mut offset = 0usize;
            for stmt in line.split(';') {
                let col = offset + stmt.len() - stmt.trim_start().len() + 1;
                offset += stmt.len() + 1;
                let toks: Vec<&str> = stmt.split_whitespace().collect();
                if toks.is_empty() {
                    continue;
                }
                let syntax = |msg: String| Error::Syntax { line: lineno + 1, col, msg };
                match toks[0] {
                    "edge" => {
                        if toks.len() != 4 {
                            return Err(syntax(format!(
                                "`edge` expects 3 arguments (<v> <w> <length>), got {}",
                                toks.len() - 1
                            )));
                        }
                        let length: f64 = toks[3]
                            .parse()
                            .map_err(|_| syntax(format!("invalid length `{}`", toks[3])))?;
                        b.add_edge(toks[1], toks[2], length);
                    }
                    "halfline" => {
                        if toks.len() != 2 {
                            return Err(syntax(format!(
                                "`halfline` expects 1 argument (<v>), got {}",
                                toks.len() - 1
                            )));
                        }
                        b.add_half_line(toks[1]);
                    }
                    other => return Err(syntax(format!("unknown statement `{other}`"))),
                }
            }
        }
        b.build()
    }

    /// Serialises back into the text format accepted by [`MetricGraph::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            match e.kind {
                EdgeKind::Bounded { tail, head, length } => out.push_str(&format!(
                    "edge {} {} {}\n",
                    self.vertex_names[tail.0], self.vertex_names[head.0], length
                )),
                EdgeKind::HalfLine { origin } => {
                    out.push_str(&format!("halfline {}\n", self.vertex_names[origin.0]))
                }
            }
        }
        out
    }

    pub fn num_vertices(&self) -> usize {
        self.vertex_names.len()
    }

    pub fn vertex_name(&self, v: VertexId) -> &str {
        &self.vertex_names[v.0]
    }

    pub fn vertex_by_name(&self, name: &str) -> Option<VertexId> {
        self.vertex_names.iter().position(|n| n == name).map(VertexId)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.0]
    }

    pub fn half_lines(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(|e| e.is_half_line())
    }

    pub fn num_half_lines(&self) -> usize {
        self.half_lines().count()
    }

    /// Degree of every finite vertex; a self-loop counts twice.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_vertices()];
        for e in &self.edges {
            let (a, b) = e.endpoints();
            deg[a.0] += 1;
            if let Some(b) = b {
                deg[b.0] += 1;
            }
        }
        deg
    }

    /// Terminal edges as `(edge, tip vertex)`: bounded edges with a degree-one endpoint.
    pub fn terminal_edges(&self) -> Vec<(EdgeId, VertexId)> {
        let deg = self.degrees();
        let mut out = Vec::new();
        for e in &self.edges {
            if let EdgeKind::Bounded { tail, head, .. } = e.kind {
                if tail != head {
                    if deg[tail.0] == 1 {
                        out.push((e.id, tail));
                    } else if deg[head.0] == 1 {
                        out.push((e.id, head));
                    }
                }
            }
        }
        out
    }

    /// Total length of the compact core (all bounded edges).
    pub fn core_length(&self) -> f64 {
        self.edges.iter().filter_map(Edge::length).sum()
    }

    /// True when every edge is a half-line at one common vertex (ℝ⁺, ℝ and stars).
    pub fn is_star(&self) -> bool {
        let mut origin = None;
        for e in &self.edges {
            match e.kind {
                EdgeKind::HalfLine { origin: o } => {
                    if origin.is_some_and(|x| x != o) {
                        return false;
                    }
                    origin = Some(o);
                }
                EdgeKind::Bounded { .. } => return false,
            }
        }
        origin.is_some()
    }

    /// Isometric to ℝ: a path of bounded edges with a half-line at each end.
    pub fn is_isometric_to_line(&self) -> bool {
        self.num_half_lines() == 2
            && self.degrees().iter().all(|&d| d == 2)
            && !self.edges.iter().any(Edge::is_self_loop)
            && self.edges.len() == self.num_vertices() + 1
    }

    /// Isometric to ℝ⁺: a path ending in a half-line and a tip.
    pub fn is_isometric_to_half_line(&self) -> bool {
        let deg = self.degrees();
        self.num_half_lines() == 1
            && deg.iter().filter(|&&d| d == 1).count() == 1
            && deg.iter().all(|&d| d == 1 || d == 2)
            && !self.edges.iter().any(Edge::is_self_loop)
            && self.edges.len() == self.num_vertices()
    }

    /// Connected-component label per vertex, optionally ignoring one edge.
    fn components(&self, skip: Option<EdgeId>) -> Vec<usize> {
        let n = self.num_vertices();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in &self.edges {
            if Some(e.id) == skip {
                continue;
            }
            if let (a, Some(b)) = e.endpoints() {
                let (ra, rb) = (find(&mut parent, a.0), find(&mut parent, b.0));
                parent[ra] = rb;
            }
        }
        (0..n).map(|v| find(&mut parent, v)).collect()
    }

    /// Bounded bridges found with a lowlink depth-first search, each paired with
    /// the number of half-lines hanging below it in the DFS tree.
    fn bridges_with_half_line_counts(&self) -> Vec<(EdgeId, usize)> {
        let n = self.num_vertices();
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        let mut hl = vec![0usize; n];
        for e in &self.edges {
            match e.kind {
                EdgeKind::Bounded { tail, head, .. } => {
                    adj[tail.0].push((head.0, e.id.0));
                    adj[head.0].push((tail.0, e.id.0));
                }
                EdgeKind::HalfLine { origin } => hl[origin.0] += 1,
            }
        }
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut sub = vec![0usize; n];
        let mut out = Vec::new();
        let mut time = 0usize;
        // iterative DFS: (vertex, parent edge, next adjacency index)
        let mut stack: Vec<(usize, usize, usize)> = Vec::new();
        disc[0] = time;
        low[0] = time;
        sub[0] = hl[0];
        time += 1;
        stack.push((0, usize::MAX, 0));
        while let Some(&mut (v, pe, ref mut next)) = stack.last_mut() {
            if *next < adj[v].len() {
                let (w, eid) = adj[v][*next];
                *next += 1;
                if eid == pe {
                    continue;
                }
                if disc[w] == usize::MAX {
                    disc[w] = time;
                    low[w] = time;
                    sub[w] = hl[w];
                    time += 1;
                    stack.push((w, eid, 0));
                } else {
                    low[v] = low[v].min(disc[w]);
                }
            } else {
                stack.pop();
                if let Some(&(u, _, _)) = stack.last() {
                    low[u] = low[u].min(low[v]);
                    sub[u] += sub[v];
                    if low[v] > disc[u] {
                        out.push((EdgeId(pe), sub[v]));
                    }
                }
            }
        }
        out
    }

    /// Cycle covering test via the equivalent criterion: at least two
    /// half-lines, no terminal point, and every bounded bridge separates the
    /// graph into two unbounded components.
    pub fn has_cycle_covering(&self) -> bool {
        if self.num_half_lines() < 2 || self.degrees().iter().any(|&d| d == 1) {
            return false;
        }
        let total = self.num_half_lines();
        self.bridges_with_half_line_counts()
            .into_iter()
            .all(|(_, below)| below > 0 && below < total)
    }

    pub fn classify(&self) -> GraphClass {
        let has_terminal_point = self.degrees().iter().any(|&d| d == 1);
        let has_cycle_covering = self.has_cycle_covering();
        let num_half_lines = self.num_half_lines();
        let type_label = if has_terminal_point {
            GraphType::Type1
        } else if has_cycle_covering {
            GraphType::Type2
        } else if num_half_lines == 1 {
            GraphType::Type3
        } else {
            GraphType::Type4
        };
        GraphClass {
            has_terminal_point,
            has_cycle_covering,
            num_half_lines,
            type_label,
            isometric_to_line: self.is_isometric_to_line(),
        }
    }

    /// Brute-force cycle covering check: removes each bounded edge in turn and
    /// inspects the resulting components. Exposed for cross-checking.
    #[doc(hidden)]
    pub fn has_cycle_covering_brute_force(&self) -> bool {
        if self.num_half_lines() < 2 || self.degrees().iter().any(|&d| d == 1) {
            return false;
        }
        let base = self.components(None);
        let n_base = count_distinct(&base);
        for e in &self.edges {
            if e.is_half_line() || e.is_self_loop() {
                continue;
            }
            let comp = self.components(Some(e.id));
            if count_distinct(&comp) == n_base {
                continue;
            }
            // bridge: every component must carry a half-line
            let mut unbounded: BTreeMap<usize, bool> = comp.iter().map(|&c| (c, false)).collect();
            for h in self.half_lines() {
                unbounded.insert(comp[h.endpoints().0 .0], true);
            }
            if unbounded.values().any(|&u| !u) {
                return false;
            }
        }
        true
    }
}

fn count_distinct(labels: &[usize]) -> usize {
    let mut v = labels.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraphType {
    Type1,
    Type2,
    Type3,
    Type4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphClass {
    pub has_terminal_point: bool,
    pub has_cycle_covering: bool,
    pub num_half_lines: usize,
    pub type_label: GraphType,
    /// Set for graphs isometric to ℝ, which several results single out.
    pub isometric_to_line: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalMassReport {
    pub mu_r: f64,
    pub mu_r_plus: f64,
    pub mu_tilde: f64,
    pub mu_g_lower: f64,
    pub mu_g_upper: f64,
    pub mu_g_estimate: Option<f64>,
}

impl CriticalMassReport {
    /// Best available value of the critical mass: exact when the bracket is
    /// degenerate, otherwise the numerical estimate if one was attached.
    pub fn mu_g(&self) -> Option<f64> {
        if self.mu_g_lower == self.mu_g_upper {
            Some(self.mu_g_lower)
        } else {
            self.mu_g_estimate
        }
    }
}

pub fn critical_mass_report(class: &GraphClass) -> CriticalMassReport {
    let mu_tilde = if class.has_terminal_point { MU_R_PLUS } else { MU_R };
    let (lo, hi) = match class.type_label {
        GraphType::Type1 | GraphType::Type3 => (MU_R_PLUS, MU_R_PLUS),
        GraphType::Type2 => (MU_R, MU_R),
        GraphType::Type4 => (MU_R_PLUS, MU_R),
    };
    CriticalMassReport {
        mu_r: MU_R,
        mu_r_plus: MU_R_PLUS,
        mu_tilde,
        mu_g_lower: lo,
        mu_g_upper: hi,
        mu_g_estimate: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_smallest_graph() {
        let g = MetricGraph::parse("halfline v0; halfline v0").unwrap();
        assert_eq!(g.num_vertices(), 1);
        assert_eq!(g.num_half_lines(), 2);
        assert!(g.is_isometric_to_line());
        assert!(g.classify().isometric_to_line);
    }

    #[test]
    fn parses_example_a_and_tadpole() {
        let g = MetricGraph::parse("edge v0 v1 1.0; halfline v0; halfline v0").unwrap();
        assert_eq!(g.edges().len(), 3);
        assert_eq!(g.terminal_edges().len(), 1);
        let t = MetricGraph::parse("edge v0 v0 2.0\nhalfline v0 # the tail").unwrap();
        assert!(t.edges()[0].is_self_loop());
        assert_eq!(t.degrees(), vec![3]);
    }

    #[test]
    fn parse_errors() {
        match MetricGraph::parse("halfline v0\nedge v0 v1") {
            Err(Error::Syntax { line: 2, col: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        match MetricGraph::parse("halfline v0;  bogus 1") {
            Err(Error::Syntax { line: 1, col: 15, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            MetricGraph::parse("edge a b 1.0"),
            Err(Error::CompactGraph)
        ));
        assert!(matches!(
            MetricGraph::parse("halfline a; halfline b"),
            Err(Error::Disconnected)
        ));
        assert!(matches!(
            MetricGraph::parse("halfline a; edge a b -1"),
            Err(Error::NonPositiveLength { .. })
        ));
        assert!(matches!(
            MetricGraph::parse("halfline a; edge a b 0"),
            Err(Error::NonPositiveLength { .. })
        ));
        assert!(matches!(
            MetricGraph::parse("halfline a; edge a b x"),
            Err(Error::Syntax { .. })
        ));
    }

    #[test]
    fn text_round_trip() {
        let g = MetricGraph::sign_post(1.5, 2.0).unwrap();
        assert_eq!(MetricGraph::parse(&g.to_text()).unwrap(), g);
    }

    #[test]
    fn classifies_paper_examples() {
        let a = MetricGraph::two_half_lines_and_edge(1.0).unwrap().classify();
        let b = MetricGraph::real_line().classify();
        let c = MetricGraph::tadpole(2.0).unwrap().classify();
        let d = MetricGraph::sign_post(1.0, 1.0).unwrap().classify();
        assert_eq!(a.type_label, GraphType::Type1);
        assert_eq!(b.type_label, GraphType::Type2);
        assert_eq!(c.type_label, GraphType::Type3);
        assert_eq!(c.num_half_lines, 1);
        assert_eq!(d.type_label, GraphType::Type4);
    }

    #[test]
    fn classifies_star_and_half_line() {
        let s = MetricGraph::star(3).classify();
        assert_eq!(s.type_label, GraphType::Type2);
        assert!(s.has_cycle_covering);
        let h = MetricGraph::half_line_graph().classify();
        assert_eq!(h.type_label, GraphType::Type1);
        assert!(h.has_terminal_point);
        assert!(MetricGraph::half_line_graph().is_isometric_to_half_line());
    }

    #[test]
    fn sign_post_bridge_fails_covering() {
        // the edge v0-v1 separates a bounded loop from the half-lines
        let g = MetricGraph::sign_post(1.0, 1.0).unwrap();
        assert!(!g.has_cycle_covering());
        assert!(!g.has_cycle_covering_brute_force());
        // two half-lines joined through a bounded edge: both sides unbounded
        let h = MetricGraph::builder()
            .half_line("a")
            .edge("a", "b", 1.0)
            .half_line("b")
            .build()
            .unwrap();
        assert!(h.has_cycle_covering());
        assert!(h.is_isometric_to_line());
    }

    #[test]
    fn critical_mass_constants() {
        let r = critical_mass_report(&MetricGraph::real_line().classify());
        assert!((r.mu_tilde - 2.720699).abs() < 1e-6);
        assert_eq!(r.mu_g_lower, r.mu_g_upper);
        assert_eq!(r.mu_g_lower, MU_R);
        let a = critical_mass_report(&MetricGraph::two_half_lines_and_edge(1.0).unwrap().classify());
        assert!((a.mu_tilde - 1.360350).abs() < 1e-6);
        let d = critical_mass_report(&MetricGraph::sign_post(1.0, 1.0).unwrap().classify());
        assert_eq!(d.mu_tilde, MU_R);
        assert_eq!((d.mu_g_lower, d.mu_g_upper), (MU_R_PLUS, MU_R));
        assert_eq!(d.mu_g(), None);
    }

    #[test]
    fn terminal_edge_attachment() {
        let (g, e) = MetricGraph::star(3).with_terminal_edge("v0", 0.5).unwrap();
        assert_eq!(g.edge(e).length(), Some(0.5));
        assert_eq!(g.terminal_edges(), vec![(e, VertexId(1))]);
        assert_eq!(g.classify().type_label, GraphType::Type1);
        assert!(MetricGraph::star(3).with_terminal_edge("nope", 1.0).is_err());
    }
}
