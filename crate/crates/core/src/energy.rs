//! Graph energy, the discrete Poisson extension, the Θ-quadrature of the
//! induced boundary form and the Besov seminorm.
//!
//! Boundary data lives at cell resolution: one value per vertex of a level,
//! read as the value at the cell's representative point.

use serde::Serialize;

use crate::augtree::{AugmentedTree, VertexId};
use crate::boundary::vertex_projection;
use crate::chain::{ConductanceTable, SolverKind, TruncatedSolve};
use crate::error::{Error, Result};
use crate::export::{csv_table, num, Manifest};
use crate::ifs::dist;
use crate::kernels::{beta, KernelEvaluator};
use crate::par::{self, Exec};

/// A function on the cells of one level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryFunction {
    pub level: usize,
    /// One value per vertex of the level, in level order.
    pub values: Vec<f64>,
    pub tag: String,
}

impl BoundaryFunction {
    pub fn new(tree: &AugmentedTree, level: usize, values: Vec<f64>, tag: impl Into<String>) -> Result<Self> {
        if level > tree.max_level() {
            return Err(Error::Config(format!("level {level} exceeds the tree depth {}", tree.max_level())));
        }
        let n = tree.level(level).len();
        if values.len() != n {
            return Err(Error::Config(format!("level {level} has {n} cells, got {} values", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("boundary values must be finite".into()));
        }
        Ok(Self { level, values, tag: tag.into() })
    }

    /// Samples `f` at the representative point of every level cell.
    pub fn sample<F: Fn(&[f64]) -> f64>(tree: &AugmentedTree, level: usize, tag: impl Into<String>, f: F) -> Result<Self> {
        let values = tree.level(level).map(|x| f(&vertex_projection(tree, x))).collect();
        Self::new(tree, level, values, tag)
    }

    pub fn constant(tree: &AugmentedTree, level: usize, c: f64) -> Result<Self> {
        Self::sample(tree, level, "constant", |_| c)
    }

    /// Indicator of the descendants of `x`.
    pub fn indicator(tree: &AugmentedTree, level: usize, x: VertexId) -> Result<Self> {
        let d = tree.depth(x);
        let values = tree.level(level).map(|y| if tree.ancestor(y, d) == x { 1.0 } else { 0.0 }).collect();
        Self::new(tree, level, values, format!("indicator:{}", tree.word(x)))
    }

    /// Cell averages at a coarser level, weighted by the cell masses.
    pub fn coarsen(&self, tree: &AugmentedTree, level: usize) -> Result<Self> {
        if level > self.level {
            return Err(Error::Config(format!("cannot coarsen level {} to {level}", self.level)));
        }
        let coarse = tree.level(level);
        let mut sum = vec![0.0; coarse.len()];
        let mut mass = vec![0.0; coarse.len()];
        for (y, v) in tree.level(self.level).zip(&self.values) {
            let i = tree.ancestor(y, level) - coarse.start;
            let p = tree.word(y).weight;
            sum[i] += p * v;
            mass[i] += p;
        }
        let values = sum.iter().zip(&mass).map(|(s, m)| s / m).collect();
        Self::new(tree, level, values, self.tag.clone())
    }

    /// Pointwise linear combination `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.level != other.level {
            return Err(Error::Config("boundary functions live on different levels".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(u, v)| a * u + b * v).collect();
        Ok(Self { level: self.level, values, tag: format!("{a}·{}+{b}·{}", self.tag, other.tag) })
    }
}

/// `½ Σ c(x, y)(f(x) − f(y))²` over the edges between vertices in the
/// domain of `f`, which must be a prefix `X_m` of the vertex order.
pub fn graph_energy(tree: &AugmentedTree, table: &ConductanceTable, f: &[f64]) -> Result<f64> {
    let m = (0..=tree.max_level()).find(|&m| tree.up_to_level(m).end == f.len());
    if m.is_none() {
        return Err(Error::Config(format!("{} values do not cover a whole X_m", f.len())));
    }
    let mut total = 0.0;
    for (x, fx) in f.iter().enumerate() {
        for (y, c) in table.edges(x) {
            if y > x && y < f.len() {
                total += c * (fx - f[y]).powi(2);
            }
        }
    }
    Ok(total)
}

/// The function on `X_m` equal to `u` on level `m` and harmonic above it.
pub fn harmonic_extension(tree: &AugmentedTree, table: &ConductanceTable, u: &BoundaryFunction) -> Result<Vec<f64>> {
    TruncatedSolve::new(tree, table, u.level, SolverKind::Auto)?.harmonic_extension(&u.values)
}

/// `max_x |f(x) − Σ_y P(x, y) f(y)|` over the interior of the domain of `f`.
pub fn harmonic_defect(tree: &AugmentedTree, table: &ConductanceTable, f: &[f64]) -> f64 {
    let interior = (0..=tree.max_level())
        .find(|&m| tree.up_to_level(m).end == f.len())
        .map_or(0, |m| tree.level(m).start);
    (0..interior)
        .map(|x| {
            let avg: f64 = table.edges(x).map(|(y, c)| c * f[y]).sum::<f64>() / table.total(x);
            (f[x] - avg).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryEnergy {
    pub value: f64,
    /// Cell pairs whose Θ moved by more than the tolerance between the two
    /// deepest truncations.
    pub unconverged: usize,
    pub pairs: usize,
}

/// `½ m(ϑ) Σ_{x≠y} (u_x − u_y)² Θ(x, y) p_x p_y` over the cells of `u`, with
/// Θ at truncation `eval.level()`; convergence is judged against `coarse`, a
/// shallower truncation.
pub fn boundary_energy(
    eval: &KernelEvaluator<'_>,
    coarse: Option<&KernelEvaluator<'_>>,
    u: &BoundaryFunction,
    tol: f64,
    exec: Exec,
) -> Result<BoundaryEnergy> {
    let tree = eval.tree();
    if u.level == 0 || u.level + 1 >= eval.level() {
        return Err(Error::Config(format!(
            "quadrature level {} must lie in 1..{} for truncation {}",
            u.level,
            eval.level() - 1,
            eval.level()
        )));
    }
    let cells = tree.level(u.level);
    let start = cells.start;
    let n = cells.len();
    let rows = par::try_map_range(exec, n, |j| -> Result<(f64, usize)> {
        let y = start + j;
        let col = eval.theta_column(y)?;
        let back = coarse.map(|c| c.theta_column(y)).transpose()?;
        let py = tree.word(y).weight;
        let mut sum = 0.0;
        let mut bad = 0;
        for i in 0..n {
            let x = start + i;
            let d = u.values[i] - u.values[j];
            if x == y || d == 0.0 {
                continue;
            }
            let theta = col[x];
            if let Some(b) = &back {
                if (theta - b[x]).abs() > tol * theta.abs() {
                    bad += 1;
                }
            }
            sum += d * d * theta * tree.word(x).weight * py;
        }
        Ok((sum, bad))
    })?;
    let m_root = eval.table().total(tree.root());
    Ok(BoundaryEnergy {
        value: 0.5 * m_root * rows.iter().map(|r| r.0).sum::<f64>(),
        unconverged: rows.iter().map(|r| r.1).sum(),
        pairs: n * (n - 1),
    })
}

/// `𝒩(u) = ∫₀^∞ r^{−α−2σ} ∬_{|ξ−η|<r} (u(ξ) − u(η))² dμ dμ dr/r` on cells,
/// with masses `p_x` and representative distances. The radial integral is
/// taken exactly: each pair at distance `d` contributes `d^{−s}/s`,
/// `s = α + 2σ`.
pub fn besov_seminorm(tree: &AugmentedTree, u: &BoundaryFunction, sigma: f64) -> Result<f64> {
    if sigma <= 0.0 {
        return Err(Error::Config("σ must be positive".into()));
    }
    let s = tree.ifs().hausdorff_dim() + 2.0 * sigma;
    let cells: Vec<VertexId> = tree.level(u.level).collect();
    let points: Vec<Vec<f64>> = cells.iter().map(|&x| vertex_projection(tree, x)).collect();
    let mut total = 0.0;
    for i in 0..cells.len() {
        for j in i + 1..cells.len() {
            let d = u.values[i] - u.values[j];
            if d == 0.0 {
                continue;
            }
            let r = dist(&points[i], &points[j]);
            total += 2.0 * d * d * tree.word(cells[i]).weight * tree.word(cells[j]).weight * r.powf(-s);
        }
    }
    Ok(total / s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    pub level: usize,
    pub quadrature_level: usize,
    pub beta: f64,
    pub graph_energy: f64,
    pub boundary_energy: f64,
    pub besov: f64,
    pub graph_over_boundary: f64,
    pub graph_over_besov: f64,
    pub boundary_over_besov: f64,
    pub unconverged: usize,
}

/// Graph energy of the harmonic extension of `u`, Θ-quadrature of `u`
/// averaged to level `k`, and the Besov seminorm at `σ = β/2`.
pub fn douglas_check(
    tree: &AugmentedTree,
    table: &ConductanceTable,
    u: &BoundaryFunction,
    k: usize,
    tol: f64,
    exec: Exec,
) -> Result<EnergyReport> {
    let m = u.level;
    if k >= m || m < 3 {
        return Err(Error::Config(format!("quadrature level {k} must lie below the data level {m}")));
    }
    let b = beta(table.lambda(), tree.ifs().min_ratio());
    let ext = harmonic_extension(tree, table, u)?;
    let graph = graph_energy(tree, table, &ext)?;
    let eval = KernelEvaluator::new(tree, table, m)?;
    let coarse_eval = KernelEvaluator::new(tree, table, m - 1)?;
    let coarse_u = u.coarsen(tree, k)?;
    let coarse = if k + 1 < m - 1 { Some(&coarse_eval) } else { None };
    let be = boundary_energy(&eval, coarse, &coarse_u, tol, exec)?;
    let besov = besov_seminorm(tree, u, b / 2.0)?;
    let ratio = |a: f64, b: f64| if b == 0.0 { f64::NAN } else { a / b };
    Ok(EnergyReport {
        level: m,
        quadrature_level: k,
        beta: b,
        graph_energy: graph,
        boundary_energy: be.value,
        besov,
        graph_over_boundary: ratio(graph, be.value),
        graph_over_besov: ratio(graph, besov),
        boundary_over_besov: ratio(be.value, besov),
        unconverged: be.unconverged,
    })
}

/// CSV trace of several reports, one row per level.
pub fn energy_trace_csv(manifest: &Manifest, reports: &[EnergyReport]) -> String {
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.level.to_string(),
                r.quadrature_level.to_string(),
                num(r.graph_energy),
                num(r.boundary_energy),
                num(r.besov),
                r.unconverged.to_string(),
            ]
        })
        .collect();
    csv_table(manifest, &["level", "quadrature_level", "graph", "boundary", "besov", "unconverged"], &rows)
}

/// Whether a sequence of energies over refinements looks divergent: some
/// step grows by more than half, or the last three increments are positive
/// and none shrinks below three quarters of its predecessor (at least
/// logarithmic growth).
pub fn looks_divergent(values: &[f64]) -> bool {
    if values.windows(2).any(|w| w[0] > 0.0 && w[1] > 1.5 * w[0]) {
        return true;
    }
    let inc: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    inc.len() >= 3
        && inc[inc.len() - 3..].iter().all(|&d| d > 0.0)
        && inc[inc.len() - 3..].windows(2).all(|w| w[1] >= 0.75 * w[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augtree::{default_gamma, BuildOptions};
    use crate::chain::ChainSpec;
    use crate::ifs::{IfsSystem, Weights};

    fn setup(name: &str, lambda: f64, levels: usize) -> (AugmentedTree, ConductanceTable) {
        let ifs = IfsSystem::builtin(name).unwrap();
        let w = Weights::natural(&ifs);
        let tree = AugmentedTree::build(&ifs, &w, &BuildOptions::new(default_gamma(&ifs), levels)).unwrap();
        let table = ConductanceTable::new(&tree, &ChainSpec::new(lambda, w).unwrap()).unwrap();
        (tree, table)
    }

    #[test]
    fn indicator_energy_counts_edges() {
        let (tree, table) = setup("gasket2", 1.0 / 3.0, 3);
        let x = tree.lookup("1").unwrap();
        let f: Vec<f64> = tree.up_to_level(2).map(|y| if y == x { 1.0 } else { 0.0 }).collect();
        let e = graph_energy(&tree, &table, &f).unwrap();
        assert!((e - tree.degree(x) as f64).abs() < 1e-12);
    }

    #[test]
    fn extension_of_cell_indicator() {
        let (tree, table) = setup("gasket2", 1.0 / 3.0, 4);
        let x = tree.lookup("2.3").unwrap_or_else(|_| tree.lookup("23").unwrap());
        let u = BoundaryFunction::indicator(&tree, 2, x).unwrap();
        let f = harmonic_extension(&tree, &table, &u).unwrap();
        assert!((f[tree.root()] - 1.0 / 9.0).abs() < 1e-10);
        assert!(harmonic_defect(&tree, &table, &f) < 1e-9);
        assert!(f.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
    }

    #[test]
    fn constant_data_has_no_energy() {
        let (tree, table) = setup("interval", 0.5, 7);
        let u = BoundaryFunction::constant(&tree, 5, 2.5).unwrap();
        let r = douglas_check(&tree, &table, &u, 3, 1e-2, Exec::Sequential).unwrap();
        assert!(r.graph_energy <= 1e-12 && r.boundary_energy <= 1e-12 && r.besov <= 1e-12);
    }

    #[test]
    fn divergence_detector() {
        assert!(looks_divergent(&[1.0, 2.0, 4.0]));
        assert!(looks_divergent(&[1.0, 1.3, 1.6, 1.9, 2.2]));
        assert!(!looks_divergent(&[1.0, 1.2, 1.25, 1.26, 1.261]));
        assert!(!looks_divergent(&[1.0]));
    }
}
