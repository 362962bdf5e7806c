//! Graph metric of the augmented tree: distances, canonical geodesics,
//! Gromov products, hyperbolicity diagnostics and boundary products.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::augtree::{AugmentedTree, VertexId};
use crate::error::{Error, Result};
use crate::ifs::{dist, format_symbols, IfsSystem, Weights};
use crate::par::{self, Exec};

/// An exact half-integer, stored as twice its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize)]
pub struct HalfInt(pub i64);

impl HalfInt {
    pub fn from_int(v: i64) -> Self {
        HalfInt(2 * v)
    }

    pub fn twice(self) -> i64 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 2 == 0 {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

impl std::ops::Sub for HalfInt {
    type Output = HalfInt;
    fn sub(self, rhs: Self) -> Self {
        HalfInt(self.0 - rhs.0)
    }
}

/// A geodesic made of a vertical climb, a horizontal run and a vertical descent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalGeodesic {
    pub path: Vec<VertexId>,
    pub u: VertexId,
    pub v: VertexId,
    /// Level of the horizontal run.
    pub ell: usize,
    /// Length of the horizontal run, `d(u, v)`.
    pub h: usize,
}

impl CanonicalGeodesic {
    pub fn len(&self) -> usize {
        self.path.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.path.len() <= 1
    }

    /// `(x|y) = ℓ − h/2`.
    pub fn product(&self) -> HalfInt {
        HalfInt(2 * self.ell as i64 - self.h as i64)
    }
}

fn ancestors(tree: &AugmentedTree, x: VertexId) -> Vec<VertexId> {
    // ancestors[l] is the level-l ancestor.
    let mut chain = vec![x];
    let mut cur = x;
    while let Some(p) = tree.parent(cur) {
        chain.push(p);
        cur = p;
    }
    chain.reverse();
    chain
}

/// Horizontal BFS within one level, giving up beyond `radius`.
fn horizontal_path(tree: &AugmentedTree, u: VertexId, v: VertexId, radius: usize) -> Option<Vec<VertexId>> {
    if u == v {
        return Some(vec![u]);
    }
    let mut prev: HashMap<VertexId, VertexId> = HashMap::new();
    prev.insert(u, u);
    let mut frontier = vec![u];
    for _ in 0..radius {
        let mut next = Vec::new();
        for &a in &frontier {
            for &b in tree.horizontal(a) {
                if prev.contains_key(&b) {
                    continue;
                }
                prev.insert(b, a);
                if b == v {
                    let mut path = vec![v];
                    let mut c = v;
                    while c != u {
                        c = prev[&c];
                        path.push(c);
                    }
                    path.reverse();
                    return Some(path);
                }
                next.push(b);
            }
        }
        if next.is_empty() {
            return None;
        }
        frontier = next;
    }
    None
}

/// Horizontal distance between same-level vertices, if at most `radius`.
pub fn horizontal_distance(tree: &AugmentedTree, u: VertexId, v: VertexId, radius: usize) -> Option<usize> {
    horizontal_path(tree, u, v, radius).map(|p| p.len() - 1)
}

/// Exact shortest-path length by BFS over `X_cap`.
pub fn graph_distance_within(tree: &AugmentedTree, x: VertexId, y: VertexId, cap: usize) -> Option<usize> {
    if x == y {
        return Some(0);
    }
    let limit = tree.up_to_level(cap).end;
    let mut seen = vec![u32::MAX; limit];
    seen[x] = 0;
    let mut queue = VecDeque::from([x]);
    while let Some(a) = queue.pop_front() {
        for b in tree.neighbors(a) {
            if b < limit && seen[b] == u32::MAX {
                seen[b] = seen[a] + 1;
                if b == y {
                    return Some(seen[b] as usize);
                }
                queue.push_back(b);
            }
        }
    }
    None
}

/// Shortest-path length by BFS confined to `X_{max(|x|,|y|)}`.
pub fn graph_distance(tree: &AugmentedTree, x: VertexId, y: VertexId) -> usize {
    let cap = tree.depth(x).max(tree.depth(y));
    graph_distance_within(tree, x, y, cap).expect("the augmented tree is connected")
}

/// The vertical–horizontal–vertical geodesic whose horizontal run is closest
/// to the root.
pub fn canonical_geodesic(tree: &AugmentedTree, x: VertexId, y: VertexId) -> CanonicalGeodesic {
    let ax = ancestors(tree, x);
    let ay = ancestors(tree, y);
    let top = ax.len().min(ay.len()) - 1;
    let span = ax.len() + ay.len() - 2;
    // Through the common ancestor at level 0 the cost is |x| + |y|.
    let mut best = (span, 0usize, vec![ax[0]]);
    for ell in 1..=top {
        let vertical = span - 2 * ell;
        if vertical >= best.0 {
            continue;
        }
        // Strict improvement only, so ties keep the run nearest the root.
        let radius = best.0 - vertical - 1;
        if let Some(run) = horizontal_path(tree, ax[ell], ay[ell], radius) {
            best = (vertical + run.len() - 1, ell, run);
        }
    }
    let (_, ell, run) = best;
    let mut path: Vec<VertexId> = ax[ell + 1..].iter().rev().copied().collect();
    path.extend(run.iter().copied());
    path.extend(ay[ell + 1..].iter().copied());
    CanonicalGeodesic { u: run[0], v: *run.last().unwrap(), ell, h: run.len() - 1, path }
}

pub fn distance(tree: &AugmentedTree, x: VertexId, y: VertexId) -> usize {
    canonical_geodesic(tree, x, y).len()
}

/// `(x|y) = ½(|x| + |y| − d(x, y))`.
pub fn gromov_product(tree: &AugmentedTree, x: VertexId, y: VertexId) -> HalfInt {
    canonical_geodesic(tree, x, y).product()
}

/// Longest purely horizontal geodesic over all levels, and per level.
pub fn horizontal_geodesic_bound(tree: &AugmentedTree, exec: Exec) -> (usize, Vec<usize>) {
    let per_level: Vec<usize> = (0..=tree.max_level())
        .map(|n| {
            let level = tree.level(n);
            let best = par::map_range(exec, level.len(), |i| longest_horizontal_geodesic_from(tree, level.start + i));
            best.into_iter().max().unwrap_or(0)
        })
        .collect();
    (per_level.iter().copied().max().unwrap_or(0), per_level)
}

fn longest_horizontal_geodesic_from(tree: &AugmentedTree, u: VertexId) -> usize {
    let mut dist_from: HashMap<VertexId, usize> = HashMap::from([(u, 0)]);
    let mut frontier = vec![u];
    let mut longest = 0;
    let mut r = 0;
    loop {
        r += 1;
        let mut next = Vec::new();
        for &a in &frontier {
            for &b in tree.horizontal(a) {
                if let std::collections::hash_map::Entry::Vacant(e) = dist_from.entry(b) {
                    e.insert(r);
                    next.push(b);
                }
            }
        }
        // Sub-paths of geodesics are geodesics: once no vertex at radius r is
        // reached geodesically, none further out is.
        let geodesic: Vec<VertexId> = next.into_iter().filter(|&v| distance(tree, u, v) == r).collect();
        if geodesic.is_empty() {
            return longest;
        }
        longest = r;
        frontier = geodesic;
    }
}

/// Sampled lower bound on the hyperbolicity constant:
/// `max min{(x|z), (z|y)} − (x|y)` over random triples.
pub fn delta_estimate(tree: &AugmentedTree, sample_size: usize, seed: u64, exec: Exec) -> HalfInt {
    let n = tree.len();
    let worst = par::map_range(exec, sample_size, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let (x, y, z) = (rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..n));
        triple_defect(tree, x, y, z)
    });
    worst.into_iter().max().unwrap_or_default().max(HalfInt(0))
}

/// `min{(x|z), (z|y)} − (x|y)`.
pub fn triple_defect(tree: &AugmentedTree, x: VertexId, y: VertexId, z: VertexId) -> HalfInt {
    let xz = gromov_product(tree, x, z);
    let zy = gromov_product(tree, z, y);
    xz.min(zy) - gromov_product(tree, x, y)
}

/// A point of `K` coded by an eventually periodic word `prefix · period^∞`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryPoint {
    pub prefix: Vec<u8>,
    pub period: Vec<u8>,
    pub geometric_point: Vec<f64>,
}

impl BoundaryPoint {
    pub fn new(ifs: &IfsSystem, prefix: Vec<u8>, period: Vec<u8>) -> Result<Self> {
        if period.is_empty() {
            return Err(Error::Config("boundary point needs a nonempty period".into()));
        }
        if prefix.iter().chain(&period).any(|&s| s as usize >= ifs.n_maps()) {
            return Err(Error::Config("boundary point uses an unknown symbol".into()));
        }
        let cycle = ifs.word_map(&period).fixed_point();
        let geometric_point = ifs.word_map(&prefix).apply(&cycle);
        Ok(Self { prefix, period, geometric_point })
    }

    pub fn symbol(&self, k: usize) -> u8 {
        if k < self.prefix.len() {
            self.prefix[k]
        } else {
            self.period[(k - self.prefix.len()) % self.period.len()]
        }
    }

    /// The first `len` symbols.
    pub fn symbols(&self, len: usize) -> Vec<u8> {
        (0..len).map(|k| self.symbol(k)).collect()
    }

    /// Vertices `x_0 = ϑ, x_1, …` of the ray towards this point, down to the
    /// deepest level of the tree.
    pub fn ray(&self, tree: &AugmentedTree) -> Vec<VertexId> {
        let ifs = tree.ifs();
        let per_level = (ifs.min_ratio().ln() / ifs.max_ratio().ln()).ceil() as usize;
        let symbols = self.symbols(tree.max_level() * per_level + 1);
        let deepest = tree.deepest_prefix(&symbols);
        let mut ray = ancestors(tree, deepest);
        ray.truncate(tree.max_level() + 1);
        ray
    }

    pub fn label(&self) -> String {
        let prefix = if self.prefix.is_empty() { String::new() } else { format_symbols(&self.prefix) };
        format!("{prefix}({})", format_symbols(&self.period))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryProduct {
    pub product: HalfInt,
    /// Level at which the product was read off.
    pub level: usize,
    pub geometric_distance: f64,
}

/// `(ξ|η)` read off along the prefix rays once `(x_n|y_n)` repeats at two
/// consecutive levels with `d(x_n, y_n) > M`.
pub fn boundary_gromov_product(
    tree: &AugmentedTree,
    xi: &BoundaryPoint,
    eta: &BoundaryPoint,
    bound_m: usize,
) -> Result<BoundaryProduct> {
    let geometric_distance = dist(&xi.geometric_point, &eta.geometric_point);
    if xi == eta || geometric_distance == 0.0 {
        return Err(Error::Undefined("the Gromov product of a boundary point with itself".into()));
    }
    let rx = xi.ray(tree);
    let ry = eta.ray(tree);
    let mut previous: Option<HalfInt> = None;
    for n in 0..rx.len().min(ry.len()) {
        let g = canonical_geodesic(tree, rx[n], ry[n]);
        if g.len() > bound_m {
            let p = g.product();
            if previous == Some(p) {
                return Ok(BoundaryProduct { product: p, level: n, geometric_distance });
            }
            previous = Some(p);
        } else {
            previous = None;
        }
    }
    Err(Error::NoStabilization(format!(
        "(ξ|η) for {} and {} did not settle by level {}; build a deeper tree",
        xi.label(),
        eta.label(),
        tree.max_level()
    )))
}

/// A boundary point distributed by the self-similar measure down to `depth`:
/// the first `depth` symbols are drawn i.i.d. from the weights. Such points
/// avoid the cell junctions (eventually constant words), where deep-prefix
/// kernel values converge slowly.
pub fn sample_boundary_point<R: Rng>(ifs: &IfsSystem, weights: &Weights, rng: &mut R, depth: usize) -> Result<BoundaryPoint> {
    let law = WeightedIndex::new(weights.probs()).map_err(|e| Error::Config(format!("bad weights: {e}")))?;
    let prefix = (0..depth).map(|_| law.sample(rng) as u8).collect();
    let period = vec![law.sample(rng) as u8];
    BoundaryPoint::new(ifs, prefix, period)
}

/// A random pair of boundary points whose words agree on exactly `common`
/// leading symbols, with random tails of period length at most `max_period`.
/// Pairs with coincident geometric points are redrawn.
pub fn sample_boundary_pair<R: Rng>(
    ifs: &IfsSystem,
    rng: &mut R,
    common: usize,
    tail: usize,
    max_period: usize,
) -> Result<(BoundaryPoint, BoundaryPoint)> {
    let n = ifs.n_maps();
    for _ in 0..64 {
        let shared: Vec<u8> = (0..common).map(|_| rng.random_range(0..n) as u8).collect();
        let a = rng.random_range(0..n) as u8;
        let mut b = rng.random_range(0..n - 1) as u8;
        if b >= a {
            b += 1;
        }
        let mut make = |first: u8| -> Result<BoundaryPoint> {
            let mut prefix = shared.clone();
            prefix.push(first);
            prefix.extend((0..tail).map(|_| rng.random_range(0..n) as u8));
            let len = rng.random_range(1..=max_period.max(1));
            let period = (0..len).map(|_| rng.random_range(0..n) as u8).collect();
            BoundaryPoint::new(ifs, prefix, period)
        };
        let xi = make(a)?;
        let eta = make(b)?;
        let scale = ifs.word_ratio(&shared) * ifs.attractor_diameter();
        if dist(&xi.geometric_point, &eta.geometric_point) > 1e-9 * scale {
            return Ok((xi, eta));
        }
    }
    Err(Error::Config("could not draw geometrically distinct boundary points".into()))
}
