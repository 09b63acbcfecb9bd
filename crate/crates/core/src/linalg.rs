//! Symmetric cell-assembled operators on graph meshes and a direct solver.
//!
//! Every operator in the crate is a sum of 2×2 cell contributions, so it is
//! tridiagonal along each edge and couples edges only through vertex degrees
//! of freedom. [`Factorization`] eliminates the interior of every edge with a
//! Thomas sweep and solves the remaining dense vertex system, which costs
//! `O(n)` plus a tiny dense LU.

use crate::error::{Error, Result};

/// One edge's chain of consecutive interior DOFs and its couplings to vertex DOFs.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    /// First DOF of the chain; the chain occupies `start..start + len`.
    pub start: usize,
    pub len: usize,
    /// `(vertex dof, cell)` coupling the first chain node to a vertex.
    pub left: Option<(usize, usize)>,
    /// `(vertex dof, cell)` coupling the last chain node to a vertex.
    pub right: Option<(usize, usize)>,
    /// Cells joining consecutive chain nodes, `len - 1` of them.
    pub inner_cells: Vec<usize>,
}

/// Sparsity pattern shared by all operators on one mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub n: usize,
    /// Number of vertex DOFs; they are numbered `0..n_vertex`.
    pub n_vertex: usize,
    /// Cell endpoints as global DOFs.
    pub cells: Vec<(usize, usize)>,
    pub chains: Vec<Chain>,
    /// Cells whose endpoints are both vertex DOFs (edges with a single cell).
    pub vertex_cells: Vec<usize>,
}

/// Symmetric matrix `A = diag + Σ_cells off_c (e_a e_bᵀ + e_b e_aᵀ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMatrix {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl CellMatrix {
    pub fn zeros(topo: &Topology) -> Self {
        CellMatrix { diag: vec![0.0; topo.n], off: vec![0.0; topo.cells.len()] }
    }

    pub fn apply(&self, topo: &Topology, x: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.diag.iter().zip(x).map(|(d, v)| d * v).collect();
        for (c, &(a, b)) in topo.cells.iter().enumerate() {
            let o = self.off[c];
            y[a] += o * x[b];
            y[b] += o * x[a];
        }
        y
    }

    /// `xᵀ A y`.
    pub fn form(&self, topo: &Topology, x: &[f64], y: &[f64]) -> f64 {
        let mut s: f64 = self.diag.iter().zip(x).zip(y).map(|((d, a), b)| d * a * b).sum();
        for (c, &(a, b)) in topo.cells.iter().enumerate() {
            s += self.off[c] * (x[a] * y[b] + x[b] * y[a]);
        }
        s
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &CellMatrix, b: f64) -> CellMatrix {
        CellMatrix {
            diag: self.diag.iter().zip(&other.diag).map(|(x, y)| a * x + b * y).collect(),
            off: self.off.iter().zip(&other.off).map(|(x, y)| a * x + b * y).collect(),
        }
    }

    /// Replaces the rows and columns of `pinned` DOFs by the identity.
    pub fn pin(&mut self, topo: &Topology, pinned: &[usize]) {
        for &p in pinned {
            self.diag[p] = 1.0;
        }
        if pinned.is_empty() {
            return;
        }
        let mut is_pinned = vec![false; topo.n];
        for &p in pinned {
            is_pinned[p] = true;
        }
        for (c, &(a, b)) in topo.cells.iter().enumerate() {
            if is_pinned[a] || is_pinned[b] {
                self.off[c] = 0.0;
            }
        }
    }

    pub fn factor(&self, topo: &Topology) -> Result<Factorization> {
        Factorization::new(topo, self)
    }
}

#[derive(Debug, Clone)]
struct ChainFactor {
    /// Thomas pivots and sub-diagonal multipliers.
    pivot: Vec<f64>,
    upper: Vec<f64>,
    lower: Vec<f64>,
    /// `T⁻¹ (off_left e_first)` and `T⁻¹ (off_right e_last)`.
    z_left: Vec<f64>,
    z_right: Vec<f64>,
    off_left: f64,
    off_right: f64,
}

impl ChainFactor {
    fn new(a: &CellMatrix, ch: &Chain) -> Result<Self> {
        let m = ch.len;
        let mut pivot = vec![0.0; m];
        let mut upper = vec![0.0; m.saturating_sub(1)];
        let mut lower = vec![0.0; m.saturating_sub(1)];
        let scale = (0..m).map(|k| a.diag[ch.start + k].abs()).fold(0.0, f64::max).max(1e-300);
        for k in 0..m {
            let mut d = a.diag[ch.start + k];
            if k > 0 {
                let o = a.off[ch.inner_cells[k - 1]];
                lower[k - 1] = o / pivot[k - 1];
                d -= lower[k - 1] * o;
            }
            if !d.is_finite() || d.abs() <= 1e-14 * scale {
                return Err(Error::Singular);
            }
            pivot[k] = d;
            if k + 1 < m {
                upper[k] = a.off[ch.inner_cells[k]];
            }
        }
        let mut f = ChainFactor {
            pivot,
            upper,
            lower,
            z_left: Vec::new(),
            z_right: Vec::new(),
            off_left: ch.left.map_or(0.0, |(_, c)| a.off[c]),
            off_right: ch.right.map_or(0.0, |(_, c)| a.off[c]),
        };
        if ch.left.is_some() {
            let mut e = vec![0.0; m];
            e[0] = f.off_left;
            f.z_left = f.solve(e);
        }
        if ch.right.is_some() {
            let mut e = vec![0.0; m];
            e[m - 1] += f.off_right;
            f.z_right = f.solve(e);
        }
        Ok(f)
    }

    fn solve(&self, mut r: Vec<f64>) -> Vec<f64> {
        let m = r.len();
        for k in 1..m {
            r[k] -= self.lower[k - 1] * r[k - 1];
        }
        r[m - 1] /= self.pivot[m - 1];
        for k in (0..m - 1).rev() {
            r[k] = (r[k] - self.upper[k] * r[k + 1]) / self.pivot[k];
        }
        r
    }
}

/// Dense LU with partial pivoting for the small vertex Schur complement.
#[derive(Debug, Clone)]
struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    fn new(n: usize, mut a: Vec<f64>) -> Result<Self> {
        let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))
                .expect("non-empty");
            if !a[p * n + k].is_finite() || a[p * n + k].abs() <= 1e-14 * scale {
                return Err(Error::Singular);
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            for i in k + 1..n {
                let l = a[i * n + k] / a[k * n + k];
                a[i * n + k] = l;
                for j in k + 1..n {
                    a[i * n + j] -= l * a[k * n + j];
                }
            }
        }
        Ok(DenseLu { n, lu: a, perm })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.lu[i * n + j] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.lu[i * n + j] * x[j];
            }
            x[i] /= self.lu[i * n + i];
        }
        x
    }
}

/// Factorised [`CellMatrix`], reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct Factorization {
    topo_chains: Vec<Chain>,
    n: usize,
    n_vertex: usize,
    chains: Vec<ChainFactor>,
    schur: DenseLu,
}

impl Factorization {
    pub fn new(topo: &Topology, a: &CellMatrix) -> Result<Self> {
        let nv = topo.n_vertex;
        let mut s = vec![0.0; nv * nv];
        for v in 0..nv {
            s[v * nv + v] = a.diag[v];
        }
        for &c in &topo.vertex_cells {
            let (x, y) = topo.cells[c];
            s[x * nv + y] += a.off[c];
            s[y * nv + x] += a.off[c];
        }
        let mut chains = Vec::with_capacity(topo.chains.len());
        for ch in &topo.chains {
            let f = ChainFactor::new(a, ch)?;
            let m = ch.len;
            let ends = [(ch.left, 0usize, f.off_left), (ch.right, m - 1, f.off_right)];
            for &(row, row_idx, off_row) in &ends {
                let Some((vr, _)) = row else { continue };
                if let Some((vc, _)) = ch.left {
                    s[vr * nv + vc] -= off_row * f.z_left[row_idx];
                }
                if let Some((vc, _)) = ch.right {
                    s[vr * nv + vc] -= off_row * f.z_right[row_idx];
                }
            }
            chains.push(f);
        }
        let schur = DenseLu::new(nv, s)?;
        Ok(Factorization { topo_chains: topo.chains.clone(), n: topo.n, n_vertex: nv, chains, schur })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let nv = self.n_vertex;
        let mut rv: Vec<f64> = rhs[..nv].to_vec();
        let mut ys = Vec::with_capacity(self.chains.len());
        for (ch, f) in self.topo_chains.iter().zip(&self.chains) {
            let y = f.solve(rhs[ch.start..ch.start + ch.len].to_vec());
            if let Some((v, _)) = ch.left {
                rv[v] -= f.off_left * y[0];
            }
            if let Some((v, _)) = ch.right {
                rv[v] -= f.off_right * y[ch.len - 1];
            }
            ys.push(y);
        }
        let xv = self.schur.solve(&rv);
        let mut x = vec![0.0; self.n];
        x[..nv].copy_from_slice(&xv);
        for ((ch, f), y) in self.topo_chains.iter().zip(&self.chains).zip(ys) {
            for k in 0..ch.len {
                let mut val = y[k];
                if let Some((v, _)) = ch.left {
                    val -= f.z_left[k] * xv[v];
                }
                if let Some((v, _)) = ch.right {
                    val -= f.z_right[k] * xv[v];
                }
                x[ch.start + k] = val;
            }
        }
        x
    }
}
