//! The hitting distribution on the attractor: exact absorption at a level
//! against the self-similar measure, cell masses, and the vertex projection.

use std::collections::HashMap;

use serde::Serialize;

use crate::augtree::{AugmentedTree, VertexId};
use crate::chain::{monte_carlo, ConductanceTable, McStats, SolverKind, StopRule, TruncatedSolve};
use crate::error::{Error, Result};
use crate::export::{csv_table, num, Manifest};
use crate::ifs::{dist, IfsSystem};
use crate::par::Exec;

/// Step cap for the Monte Carlo column; walks on a depth-`ℓ` truncation with
/// upward drift terminate long before this.
const MC_STEP_CAP: usize = 1_000_000;

/// `ι(x) = S_x(o)` for the system's interior representative `o`.
pub fn vertex_projection(tree: &AugmentedTree, x: VertexId) -> Vec<f64> {
    tree.map(x).apply(tree.ifs().representative())
}

/// Same as [`vertex_projection`] for a bare symbol string.
pub fn word_projection(ifs: &IfsSystem, symbols: &[u8]) -> Vec<f64> {
    ifs.word_map(symbols).apply(ifs.representative())
}

#[derive(Debug, Clone, Serialize)]
pub struct McColumn {
    pub frequency: Vec<f64>,
    /// Binomial standard error around the exact value.
    pub std_error: Vec<f64>,
    pub max_z: f64,
    pub n_paths: usize,
    pub capped: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct HittingReport {
    pub level: usize,
    pub words: Vec<String>,
    /// Absorption distribution from the root over level `ℓ`.
    pub exact: Vec<f64>,
    /// Self-similar cell masses `p_x`.
    pub target: Vec<f64>,
    pub tv_distance: f64,
    pub mc: Option<McColumn>,
    /// Level-`ℓ` neighbor pairs whose cells touch, i.e. the pairs on which
    /// boundary overlaps could carry mass.
    pub touching_pairs: usize,
}

impl HittingReport {
    pub fn to_csv(&self, manifest: &Manifest) -> String {
        let rows: Vec<Vec<String>> = (0..self.words.len())
            .map(|i| {
                let (mc, se) = match &self.mc {
                    Some(c) => (num(c.frequency[i]), num(c.std_error[i])),
                    None => (String::new(), String::new()),
                };
                vec![self.words[i].clone(), num(self.exact[i]), num(self.target[i]), mc, se]
            })
            .collect();
        csv_table(manifest, &["word", "exact", "target", "mc", "stderr"], &rows)
    }
}

/// Exact absorption from the root at level `ℓ`, compared with `p_x`, with an
/// optional Monte Carlo column of `n_paths` walks.
pub fn hitting_distribution(
    tree: &AugmentedTree,
    table: &ConductanceTable,
    level: usize,
    mc: Option<(usize, u64)>,
    exec: Exec,
) -> Result<HittingReport> {
    if level == 0 || level > tree.max_level() {
        return Err(Error::Config(format!("hitting level must lie in 1..={}", tree.max_level())));
    }
    let solve = TruncatedSolve::new(tree, table, level, SolverKind::Auto)?;
    let exact = solve.absorption_row(tree.root())?;
    let cells = tree.level(level);
    let target: Vec<f64> = cells.clone().map(|y| tree.word(y).weight).collect();
    let tv_distance = 0.5 * exact.iter().zip(&target).map(|(a, b)| (a - b).abs()).sum::<f64>();
    let mc = match mc {
        Some((n_paths, seed)) => {
            let stats = monte_carlo(tree, table, tree.root(), StopRule::HitLevel(level), n_paths, seed, MC_STEP_CAP, exec)?;
            Some(mc_column(&stats, cells.clone(), &exact))
        }
        None => None,
    };
    Ok(HittingReport {
        level,
        words: cells.clone().map(|y| tree.word(y).to_string()).collect(),
        exact,
        target,
        tv_distance,
        mc,
        touching_pairs: touching_pairs(tree, level)?,
    })
}

fn mc_column(stats: &McStats, cells: std::ops::Range<VertexId>, exact: &[f64]) -> McColumn {
    let frequency: Vec<f64> = cells.clone().map(|y| stats.frequency(y)).collect();
    let std_error: Vec<f64> = exact.iter().map(|&p| stats.std_error(p)).collect();
    let max_z = cells.zip(exact).map(|(y, &p)| stats.z_score(y, p)).fold(0.0, f64::max);
    McColumn { frequency, std_error, max_z, n_paths: stats.n_paths, capped: stats.capped }
}

/// `P(ι(Z_τℓ) ∈ S_x(K))`: absorption mass on the level-`ℓ` descendants of `x`.
pub fn cell_hitting(tree: &AugmentedTree, table: &ConductanceTable, x: VertexId, level: usize) -> Result<f64> {
    if tree.depth(x) > level {
        return Err(Error::Config(format!("{} lies below level {level}", tree.word(x))));
    }
    if x == tree.root() {
        return Ok(1.0);
    }
    let solve = TruncatedSolve::new(tree, table, level, SolverKind::Auto)?;
    let row = solve.absorption_row(tree.root())?;
    let depth = tree.depth(x);
    Ok(tree
        .level(level)
        .zip(row)
        .filter(|&(y, _)| tree.ancestor(y, depth) == x)
        .map(|(_, p)| p)
        .sum())
}

/// Neighbor pairs at `level` whose sampled cells come within the sampling
/// error of each other.
fn touching_pairs(tree: &AugmentedTree, level: usize) -> Result<usize> {
    const DEPTH: usize = 3;
    const CAP: usize = 20_000;
    let ifs = tree.ifs();
    // Touching is scale invariant, so each pair is tested in the frame of its
    // first cell; self-similar levels only have a few distinct configurations.
    let cloud = ifs.cell_point_cloud(&[], DEPTH, CAP)?;
    let unit_error = ifs.cloud_error(&[], DEPTH);
    let mut seen: HashMap<Vec<i64>, bool> = HashMap::new();
    let mut count = 0;
    for x in tree.level(level) {
        for &y in tree.horizontal(x).iter().filter(|&&y| y > x) {
            let rel = tree.map(x).relative(tree.map(y));
            let key = rel.coefficients().map(|c| (c * 1e9).round() as i64).collect();
            let touching = *seen.entry(key).or_insert_with(|| {
                let image: Vec<Vec<f64>> = cloud.iter().map(|p| rel.apply(p)).collect();
                let gap = cloud
                    .iter()
                    .flat_map(|p| image.iter().map(move |q| dist(p, q)))
                    .fold(f64::INFINITY, f64::min);
                gap <= unit_error * (1.0 + rel.ratio())
            });
            count += usize::from(touching);
        }
    }
    Ok(count)
}
