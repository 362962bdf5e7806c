use std::collections::HashSet;

use rand::Rng;
use serde::Serialize;

use crate::augtree::{AugmentedTree, VertexId};
use crate::chain::montecarlo::path_rng;
use crate::chain::{ConductanceTable, TruncatedSolve};
use crate::error::{Error, Result};
use crate::ifs::Weights;
use crate::par::{self, Exec};

/// `c(x, x⁻) / Σ_{y⁻ = x} c(x, y)`.
pub fn return_ratio(tree: &AugmentedTree, table: &ConductanceTable, x: VertexId) -> Result<f64> {
    if x == tree.root() {
        return Err(Error::Undefined("the return ratio at the root".into()));
    }
    if tree.depth(x) == tree.max_level() {
        return Err(Error::Undefined(format!("the return ratio at {}, whose children are not built", tree.word(x))));
    }
    let down: f64 = tree.children(x).map(|y| table.conductance(x, y)).sum();
    Ok(table.up(x) / down)
}

#[derive(Debug, Clone, Serialize)]
pub struct IsoperimetryReport {
    pub n_sets: usize,
    /// `max m_T(A) / c_T(∂A)` on the tree without horizontal edges.
    pub worst_subtree_ratio: f64,
    /// `max m(A) / c(∂A)` on the full graph.
    pub worst_full_ratio: f64,
    /// `(1 + λ)/(1 − λ)`.
    pub subtree_bound: f64,
    pub violations: usize,
    pub largest_set: usize,
}

/// Evaluates both isoperimetric ratios on `n_sets` connected sets: `{ϑ}`
/// followed by sets grown by randomized BFS inside `X_{L−1}` with sizes drawn
/// from a geometric law (mean 20, at most 400).
pub fn isoperimetric_check(
    tree: &AugmentedTree,
    table: &ConductanceTable,
    n_sets: usize,
    seed: u64,
    exec: Exec,
) -> IsoperimetryReport {
    let lambda = table.lambda();
    let bound = (1.0 + lambda) / (1.0 - lambda);
    let inner = tree.up_to_level(tree.max_level().saturating_sub(1)).end;
    let ratios = par::map_range(exec, n_sets, |i| {
        let set = if i == 0 { vec![tree.root()] } else { grow_set(tree, inner, seed, i) };
        let (sub, full) = set_ratios(tree, table, &set);
        (sub, full, set.len())
    });
    let mut report = IsoperimetryReport {
        n_sets,
        worst_subtree_ratio: 0.0,
        worst_full_ratio: 0.0,
        subtree_bound: bound,
        violations: 0,
        largest_set: 0,
    };
    for (sub, full, size) in ratios {
        report.worst_subtree_ratio = report.worst_subtree_ratio.max(sub);
        report.worst_full_ratio = report.worst_full_ratio.max(full);
        report.largest_set = report.largest_set.max(size);
        if sub > bound * (1.0 + 1e-12) {
            report.violations += 1;
        }
    }
    report
}

fn grow_set(tree: &AugmentedTree, inner: usize, seed: u64, i: usize) -> Vec<VertexId> {
    let mut rng = path_rng(seed, i);
    let mut target = 1;
    while target < 400 && rng.random::<f64>() > 0.05 {
        target += 1;
    }
    let start = rng.random_range(0..inner);
    let mut members = vec![start];
    let mut seen: HashSet<VertexId> = HashSet::from([start]);
    let mut frontier: Vec<VertexId> = Vec::new();
    let push_nbrs = |x: VertexId, seen: &HashSet<VertexId>, frontier: &mut Vec<VertexId>| {
        for y in tree.neighbors(x) {
            if y < inner && !seen.contains(&y) {
                frontier.push(y);
            }
        }
    };
    push_nbrs(start, &seen, &mut frontier);
    while members.len() < target && !frontier.is_empty() {
        let k = rng.random_range(0..frontier.len());
        let y = frontier.swap_remove(k);
        if seen.insert(y) {
            members.push(y);
            push_nbrs(y, &seen, &mut frontier);
        }
    }
    members
}

fn set_ratios(tree: &AugmentedTree, table: &ConductanceTable, set: &[VertexId]) -> (f64, f64) {
    let inside: HashSet<VertexId> = set.iter().copied().collect();
    let (mut m_tree, mut c_tree, mut m_full, mut c_full) = (0.0, 0.0, 0.0, 0.0);
    for &x in set {
        m_full += table.total(x);
        for (y, c) in table.edges(x) {
            let vertical = tree.parent(x) == Some(y) || tree.parent(y) == Some(x);
            if vertical {
                m_tree += c;
            }
            if !inside.contains(&y) {
                c_full += c;
                if vertical {
                    c_tree += c;
                }
            }
        }
    }
    (m_tree / c_tree, m_full / c_full)
}

#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport {
    /// `min p_x / p_y` over horizontal edges.
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// `(min, max)` per level.
    pub per_level: Vec<(f64, f64)>,
    pub admissible: bool,
}

/// Horizontal comparability of the weights: the range of `p_x / p_y` over
/// horizontal edges, judged against `band`.
pub fn admissibility(tree: &AugmentedTree, weights: &Weights, band: (f64, f64)) -> AdmissibilityReport {
    let p: Vec<f64> = (0..tree.len()).map(|x| weights.product(&tree.word(x).symbols)).collect();
    let per_level: Vec<(f64, f64)> = (0..=tree.max_level())
        .map(|n| {
            let mut lo: f64 = 1.0;
            let mut hi: f64 = 1.0;
            for x in tree.level(n) {
                for &y in tree.horizontal(x) {
                    let r = p[x] / p[y];
                    lo = lo.min(r);
                    hi = hi.max(r);
                }
            }
            (lo, hi)
        })
        .collect();
    let min_ratio = per_level.iter().map(|r| r.0).fold(1.0, f64::min);
    let max_ratio = per_level.iter().map(|r| r.1).fold(1.0, f64::max);
    AdmissibilityReport { min_ratio, max_ratio, per_level, admissible: min_ratio >= band.0 && max_ratio <= band.1 }
}

#[derive(Debug, Clone, Serialize)]
pub struct AnconaReport {
    pub truncation: usize,
    pub triple_level: usize,
    pub triples: usize,
    /// Triples with `F(x, y) < F(x, u)·F(u, y) − slack`.
    pub violations: usize,
    /// `max F(x, y) / (F(x, u)·F(u, y))`, the empirical upper constant.
    pub upper_constant: f64,
}

/// Checks `F(x, y) ≥ F(x, u)·F(u, y)` for every `x ≠ y` in `X_n` and every
/// `u ∉ {x, y}` on some geodesic between them, at the truncation of `solve`.
///
/// Geodesics between vertices of `X_n` never leave `X_n` (descending costs
/// two vertical steps and cannot shorten a horizontal run), so distances come
/// from BFS on `X_n` alone.
pub fn ancona_check(solve: &TruncatedSolve<'_>, triple_level: usize, slack: f64, exec: Exec) -> Result<AnconaReport> {
    let tree = solve.tree();
    if triple_level >= solve.level() {
        return Err(Error::Config(format!(
            "triples at level {triple_level} need a truncation deeper than {}",
            solve.level()
        )));
    }
    let n = tree.up_to_level(triple_level).end;
    let dist: Vec<Vec<u32>> = par::map_range(exec, n, |s| bfs_within(tree, s, n));
    // f[y][x] = F(x, y)
    let f: Vec<Vec<f64>> = par::try_map_range(exec, n, |y| solve.hitting_column(y).map(|mut c| {
        c.truncate(n);
        c
    }))?;
    let rows = par::map_range(exec, n, |x| {
        let mut triples = 0;
        let mut violations = 0;
        let mut worst: f64 = 0.0;
        for y in 0..n {
            if y == x {
                continue;
            }
            let d = dist[x][y];
            for u in 0..n {
                if u == x || u == y || dist[x][u] + dist[u][y] != d {
                    continue;
                }
                triples += 1;
                let through = f[u][x] * f[y][u];
                if f[y][x] < through - slack {
                    violations += 1;
                }
                worst = worst.max(f[y][x] / through);
            }
        }
        (triples, violations, worst)
    });
    Ok(AnconaReport {
        truncation: solve.level(),
        triple_level,
        triples: rows.iter().map(|r| r.0).sum(),
        violations: rows.iter().map(|r| r.1).sum(),
        upper_constant: rows.iter().map(|r| r.2).fold(0.0, f64::max),
    })
}

fn bfs_within(tree: &AugmentedTree, s: VertexId, n: usize) -> Vec<u32> {
    let mut d = vec![u32::MAX; n];
    let mut queue = std::collections::VecDeque::from([s]);
    d[s] = 0;
    while let Some(x) = queue.pop_front() {
        for y in tree.neighbors(x) {
            if y < n && d[y] == u32::MAX {
                d[y] = d[x] + 1;
                queue.push_back(y);
            }
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augtree::{default_gamma, BuildOptions};
    use crate::chain::ChainSpec;
    use crate::ifs::IfsSystem;

    fn setup(lambda: f64) -> (AugmentedTree, ConductanceTable) {
        let ifs = IfsSystem::builtin("gasket2").unwrap();
        let w = Weights::natural(&ifs);
        let tree = AugmentedTree::build(&ifs, &w, &BuildOptions::new(default_gamma(&ifs), 5)).unwrap();
        let table = ConductanceTable::new(&tree, &ChainSpec::new(lambda, w).unwrap()).unwrap();
        (tree, table)
    }

    #[test]
    fn ancona_lower_bound_holds() {
        let (tree, table) = setup(1.0 / 3.0);
        let solve = TruncatedSolve::new(&tree, &table, 5, crate::chain::SolverKind::Auto).unwrap();
        let r = ancona_check(&solve, 2, 1e-12, Exec::Sequential).unwrap();
        assert!(r.triples > 0);
        assert_eq!(r.violations, 0);
        assert!(r.upper_constant >= 1.0);
    }

    #[test]
    fn return_ratio_is_lambda() {
        let (tree, table) = setup(0.3);
        for x in 1..tree.level(4).end {
            assert!((return_ratio(&tree, &table, x).unwrap() - 0.3).abs() < 1e-12);
        }
        assert!(return_ratio(&tree, &table, tree.root()).is_err());
    }

    #[test]
    fn doubled_child_conductance_breaks_return_ratio() {
        let (tree, mut table) = setup(1.0 / 3.0);
        let x = tree.lookup("1").unwrap();
        let child = tree.children(x).start;
        table.scale_edge(&tree, x, child, 2.0).unwrap();
        assert!((return_ratio(&tree, &table, x).unwrap() - 1.0 / 3.0).abs() > 0.05);
    }

    #[test]
    fn root_set_has_unit_ratio() {
        let (tree, table) = setup(0.5);
        let (sub, _) = set_ratios(&tree, &table, &[tree.root()]);
        assert!((sub - 1.0).abs() < 1e-12);
    }

    #[test]
    fn isoperimetry_within_bound() {
        let (tree, table) = setup(1.0 / 3.0);
        let r = isoperimetric_check(&tree, &table, 200, 9, Exec::Parallel);
        assert_eq!(r.violations, 0);
        assert!(r.worst_subtree_ratio <= 2.0 + 1e-12);
        assert!(r.worst_full_ratio.is_finite());
    }

    #[test]
    fn natural_weights_are_admissible() {
        let (tree, _) = setup(0.5);
        let r = admissibility(&tree, tree.weights(), (1.0 / 16.0, 16.0));
        assert!(r.admissible);
        assert_eq!(r.max_ratio, 1.0);
    }
}
