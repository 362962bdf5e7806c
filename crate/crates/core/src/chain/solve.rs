//! Exact quantities of the walk truncated at level `m`, where `𝒥_m` absorbs.
//!
//! With `A = D − C` restricted to the interior `X_{m−1}` (`D` = diag `m(x)`),
//! the truncated Green function is `G_m(x, y) = A⁻¹(x, y)·m(y)` and the
//! absorption kernel is `H(x, y) = Σ_z A⁻¹(x, z)·c(z, y)` for `y ∈ 𝒥_m`.
//! `A` is symmetric positive definite, so each of these needs one solve.

use std::sync::Once;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::augtree::{AugmentedTree, VertexId};
use crate::chain::ConductanceTable;
use crate::error::{Error, Result};

static SEQUENTIAL_FAER: Once = Once::new();

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SolverKind {
    /// Sparse Cholesky factorization.
    Direct,
    /// Jacobi-preconditioned conjugate gradients to the given relative residual.
    Iterative { tol: f64 },
    /// Direct below [`DIRECT_LIMIT`] unknowns, iterative above.
    #[default]
    Auto,
}

pub const DIRECT_LIMIT: usize = 2_000_000;

enum Backend {
    Direct(Llt<usize, f64>),
    Iterative { tol: f64 },
}

pub struct TruncatedSolve<'a> {
    tree: &'a AugmentedTree,
    table: &'a ConductanceTable,
    level: usize,
    /// Interior vertices are the ids `0..interior`.
    interior: usize,
    /// `m(x)^{-1/2}`, the symmetric diagonal scaling.
    scale: Vec<f64>,
    backend: Backend,
}

impl<'a> TruncatedSolve<'a> {
    pub fn new(tree: &'a AugmentedTree, table: &'a ConductanceTable, level: usize, kind: SolverKind) -> Result<Self> {
        if level == 0 || level > tree.max_level() {
            return Err(Error::Config(format!(
                "truncation level {level} must lie in 1..={}",
                tree.max_level()
            )));
        }
        SEQUENTIAL_FAER.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
        let interior = tree.level(level).start;
        let scale: Vec<f64> = (0..interior).map(|x| table.total(x).sqrt().recip()).collect();
        let kind = match kind {
            SolverKind::Auto if interior <= DIRECT_LIMIT => SolverKind::Direct,
            SolverKind::Auto => SolverKind::Iterative { tol: 1e-13 },
            k => k,
        };
        let backend = match kind {
            SolverKind::Direct => {
                let mut entries = Vec::new();
                for x in 0..interior {
                    entries.push(Triplet::new(x, x, 1.0));
                    for (z, c) in table.edges(x) {
                        if z < x {
                            entries.push(Triplet::new(x, z, -c * scale[x] * scale[z]));
                        }
                    }
                }
                let matrix = SparseColMat::<usize, f64>::try_new_from_triplets(interior, interior, &entries)
                    .map_err(|e| Error::Solver(format!("{e:?}")))?;
                let llt = matrix
                    .as_ref()
                    .sp_cholesky(Side::Lower)
                    .map_err(|e| Error::Solver(format!("Cholesky factorization failed: {e:?}")))?;
                Backend::Direct(llt)
            }
            SolverKind::Iterative { tol } => Backend::Iterative { tol },
            SolverKind::Auto => unreachable!(),
        };
        Ok(Self { tree, table, level, interior, scale, backend })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn interior(&self) -> usize {
        self.interior
    }

    pub fn tree(&self) -> &AugmentedTree {
        self.tree
    }

    pub fn table(&self) -> &ConductanceTable {
        self.table
    }

    fn is_interior(&self, x: VertexId) -> bool {
        x < self.interior
    }

    fn check_vertex(&self, x: VertexId) -> Result<()> {
        if x < self.tree.level(self.level).end {
            Ok(())
        } else {
            Err(Error::UnknownVertex(format!("{} lies below the truncation level {}", self.tree.word(x), self.level)))
        }
    }

    /// `A⁻¹ b` on the interior.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(b.len(), self.interior);
        let s = &self.scale;
        match &self.backend {
            Backend::Direct(llt) => {
                let mut rhs = Mat::<f64>::from_fn(self.interior, 1, |i, _| b[i] * s[i]);
                llt.solve_in_place(rhs.as_mut());
                Ok((0..self.interior).map(|i| rhs[(i, 0)] * s[i]).collect())
            }
            Backend::Iterative { tol } => self.pcg(b, *tol),
        }
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        for x in 0..self.interior {
            let mut acc = self.table.total(x) * v[x];
            for (z, c) in self.table.edges(x) {
                if z < self.interior {
                    acc -= c * v[z];
                }
            }
            out[x] = acc;
        }
    }

    fn pcg(&self, b: &[f64], tol: f64) -> Result<Vec<f64>> {
        let n = self.interior;
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let bnorm = dot(b, b).sqrt();
        let mut x = vec![0.0; n];
        if bnorm == 0.0 {
            return Ok(x);
        }
        let inv_diag: Vec<f64> = (0..n).map(|i| self.table.total(i).recip()).collect();
        let mut r = b.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; n];
        for _ in 0..(10 * n).max(100) {
            self.apply(&p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            if dot(&r, &r).sqrt() <= tol * bnorm {
                return Ok(x);
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(Error::Solver("conjugate gradients did not reach the residual tolerance".into()))
    }

    /// `A⁻¹ e_x`, which by symmetry is also row `x` of `A⁻¹`.
    pub fn unit_column(&self, x: VertexId) -> Result<Vec<f64>> {
        if !self.is_interior(x) {
            return Err(Error::UnknownVertex(format!("{} is not an interior vertex", self.tree.word(x))));
        }
        self.unit_solve(x)
    }

    fn unit_solve(&self, x: VertexId) -> Result<Vec<f64>> {
        let mut e = vec![0.0; self.interior];
        e[x] = 1.0;
        self.solve(&e)
    }

    /// `G_m(x, y)` for every interior `x`, with `y` interior.
    pub fn green_column(&self, y: VertexId) -> Result<Vec<f64>> {
        if !self.is_interior(y) {
            return Err(Error::Undefined(format!("the truncated Green function at absorbing vertex {}", self.tree.word(y))));
        }
        let w = self.unit_solve(y)?;
        let m = self.table.total(y);
        Ok(w.into_iter().map(|v| v * m).collect())
    }

    /// `F_m(x, y)` for every vertex `x` of `X_m`.
    pub fn hitting_column(&self, y: VertexId) -> Result<Vec<f64>> {
        self.check_vertex(y)?;
        let total = self.tree.level(self.level).end;
        let mut out = vec![0.0; total];
        if self.is_interior(y) {
            let w = self.unit_solve(y)?;
            let wy = w[y];
            for (o, v) in out.iter_mut().zip(&w) {
                *o = v / wy;
            }
        } else {
            let p = self.tree.parent(y).expect("absorbing vertices have parents");
            let w = self.unit_solve(p)?;
            let c = self.table.conductance(p, y);
            for (o, v) in out.iter_mut().zip(&w) {
                *o = c * v;
            }
        }
        out[y] = 1.0;
        Ok(out)
    }

    /// `F_m(x, y)`.
    pub fn hitting(&self, x: VertexId, y: VertexId) -> Result<f64> {
        self.check_vertex(x)?;
        if x == y {
            return Ok(1.0);
        }
        if !self.is_interior(x) {
            return Ok(0.0);
        }
        Ok(self.hitting_column(y)?[x])
    }

    /// `F_m(x, ϑ)` for every vertex of `X_m`.
    pub fn hitting_root(&self) -> Result<Vec<f64>> {
        self.hitting_column(self.tree.root())
    }

    /// `G_m(ϑ, ϑ)`.
    pub fn green_root(&self) -> Result<f64> {
        let root = self.tree.root();
        Ok(self.green_column(root)?[root])
    }

    /// Absorption distribution over `𝒥_m` (in level order) started at `x`.
    pub fn absorption_row(&self, x: VertexId) -> Result<Vec<f64>> {
        self.check_vertex(x)?;
        let boundary = self.tree.level(self.level);
        if !self.is_interior(x) {
            return Ok(boundary.map(|y| if y == x { 1.0 } else { 0.0 }).collect());
        }
        // A is symmetric, so the column A⁻¹e_x is also row x.
        let w = self.unit_solve(x)?;
        Ok(boundary
            .map(|y| {
                let p = self.tree.parent(y).expect("absorbing vertices have parents");
                w[p] * self.table.conductance(p, y)
            })
            .collect())
    }

    /// The discrete Poisson integral: the function on `X_m` equal to `u` on
    /// `𝒥_m` and harmonic on the interior.
    pub fn harmonic_extension(&self, u: &[f64]) -> Result<Vec<f64>> {
        let boundary = self.tree.level(self.level);
        if u.len() != boundary.len() {
            return Err(Error::Config(format!(
                "boundary data has {} values, level {} has {} vertices",
                u.len(),
                self.level,
                boundary.len()
            )));
        }
        let mut rhs = vec![0.0; self.interior];
        for (i, y) in boundary.clone().enumerate() {
            let p = self.tree.parent(y).expect("absorbing vertices have parents");
            rhs[p] += self.table.conductance(p, y) * u[i];
        }
        let mut f = self.solve(&rhs)?;
        f.extend_from_slice(u);
        Ok(f)
    }
}

/// A value computed at increasing truncation levels until two consecutive
/// levels agree.
#[derive(Debug, Clone, PartialEq)]
pub struct Converged {
    pub value: f64,
    pub level_used: usize,
    pub converged: bool,
    /// `(m, F_m)` for every level tried.
    pub trace: Vec<(usize, f64)>,
}

/// `F(x, y)` as the limit of `F_m(x, y)`, stopping once successive levels
/// differ by less than `tol`. The sequence must be nondecreasing.
pub fn f_converged(
    tree: &AugmentedTree,
    table: &ConductanceTable,
    x: VertexId,
    y: VertexId,
    tol: f64,
) -> Result<Converged> {
    let start = tree.depth(x).max(tree.depth(y)) + 1;
    let mut trace: Vec<(usize, f64)> = Vec::new();
    for m in start..=tree.max_level() {
        let solve = TruncatedSolve::new(tree, table, m, SolverKind::Auto)?;
        let v = solve.hitting(x, y)?;
        if let Some(&(_, prev)) = trace.last() {
            if v < prev - 1e-12 * prev.abs().max(1e-300) {
                return Err(Error::Solver(format!("F_m decreased from {prev} to {v} at m = {m}")));
            }
            if (v - prev).abs() < tol {
                trace.push((m, v));
                return Ok(Converged { value: v, level_used: m, converged: true, trace });
            }
        }
        trace.push((m, v));
    }
    let &(level_used, value) = trace
        .last()
        .ok_or_else(|| Error::Config(format!("vertices must sit above level {}", tree.max_level())))?;
    Ok(Converged { value, level_used, converged: false, trace })
}
