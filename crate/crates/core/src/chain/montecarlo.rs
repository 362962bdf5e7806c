use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augtree::{AugmentedTree, VertexId};
use crate::chain::ConductanceTable;
use crate::error::{Error, Result};
use crate::par::{self, Exec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRule {
    /// Stop on first arrival at level `ℓ`; the outcome is the vertex reached.
    HitLevel(usize),
    /// Stop on hitting `target`; paths reaching `kill_level` first are killed.
    HitVertex { target: VertexId, kill_level: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Landed(VertexId),
    Killed,
    Capped,
}

/// Empirical statistics of a batch of walks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct McStats {
    pub n_paths: usize,
    /// Stopping vertex → number of paths.
    pub counts: BTreeMap<VertexId, usize>,
    pub killed: usize,
    /// Paths that reached the step cap; excluded from frequencies.
    pub capped: usize,
    pub total_steps: u64,
}

impl McStats {
    /// Paths that terminated by the stop rule.
    pub fn completed(&self) -> usize {
        self.n_paths - self.capped
    }

    pub fn frequency(&self, x: VertexId) -> f64 {
        let n = self.completed();
        if n == 0 {
            return 0.0;
        }
        *self.counts.get(&x).unwrap_or(&0) as f64 / n as f64
    }

    /// Binomial standard error of [`McStats::frequency`] around `p`.
    pub fn std_error(&self, p: f64) -> f64 {
        let n = self.completed().max(1) as f64;
        (p * (1.0 - p) / n).sqrt()
    }

    /// `|freq − p| / σ(p)`, the deviation in standard errors.
    pub fn z_score(&self, x: VertexId, p: f64) -> f64 {
        let se = self.std_error(p);
        let d = (self.frequency(x) - p).abs();
        if se == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d / se
        }
    }
}

/// One step of the walk from `x`.
pub(crate) fn step<R: Rng>(table: &ConductanceTable, x: VertexId, rng: &mut R) -> VertexId {
    let mut u = rng.random::<f64>() * table.total(x);
    let mut last = x;
    for (y, c) in table.edges(x) {
        if u < c {
            return y;
        }
        u -= c;
        last = y;
    }
    // Rounding can leave a sliver of mass past the final edge.
    last
}

/// The RNG of path `index` under `seed`; independent of the schedule.
pub fn path_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Simulates `n_paths` walks from `start`; path `i` draws from stream `i` of
/// `seed`, so the result does not depend on the execution policy.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo(
    tree: &AugmentedTree,
    table: &ConductanceTable,
    start: VertexId,
    rule: StopRule,
    n_paths: usize,
    seed: u64,
    step_cap: usize,
    exec: Exec,
) -> Result<McStats> {
    let stop_level = match rule {
        StopRule::HitLevel(l) => l,
        StopRule::HitVertex { kill_level, .. } => kill_level,
    };
    if stop_level > tree.max_level() || tree.depth(start) > stop_level {
        return Err(Error::Config(format!(
            "stop level {stop_level} must lie between the start level and the tree depth {}",
            tree.max_level()
        )));
    }
    let results = par::map_range(exec, n_paths, |i| {
        let mut rng = path_rng(seed, i);
        let mut x = start;
        for steps in 0..=step_cap {
            match rule {
                StopRule::HitLevel(l) if tree.depth(x) == l => return (Outcome::Landed(x), steps),
                StopRule::HitVertex { target, .. } if x == target => return (Outcome::Landed(x), steps),
                StopRule::HitVertex { kill_level, .. } if tree.depth(x) == kill_level => {
                    return (Outcome::Killed, steps)
                }
                _ => {}
            }
            if steps < step_cap {
                x = step(table, x, &mut rng);
            }
        }
        (Outcome::Capped, step_cap)
    });
    let mut stats = McStats { n_paths, ..McStats::default() };
    for (outcome, steps) in results {
        stats.total_steps += steps as u64;
        match outcome {
            Outcome::Landed(x) => *stats.counts.entry(x).or_insert(0) += 1,
            Outcome::Killed => stats.killed += 1,
            Outcome::Capped => stats.capped += 1,
        }
    }
    if n_paths > 0 && stats.capped == n_paths {
        return Err(Error::StepCapExhausted(n_paths));
    }
    Ok(stats)
}
