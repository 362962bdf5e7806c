//! The augmented tree: the word tree of the modified symbolic space plus
//! horizontal edges between same-level cells that come within `γ·r^n`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::ops::Range;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::export::{Format, Manifest};
use crate::ifs::{dist, format_symbols, IfsSystem, Similitude, Weights, Word};
use crate::par::{self, Exec};

pub mod oracle;

pub type VertexId = usize;

/// Relative slack on either side of the edge threshold inside which a pair
/// counts as undecidable.
const DECISION_SLACK: f64 = 1e-9;
/// Decisions closer than this (relative) to the threshold are never cached.
const CACHE_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub gamma: f64,
    pub max_level: usize,
    /// Maximum number of cell pairs examined while certifying one edge.
    pub pair_cap: usize,
    /// Test every same-level pair instead of only children of equal or
    /// adjacent parents.
    pub exhaustive: bool,
    pub exec: Exec,
}

impl BuildOptions {
    pub fn new(gamma: f64, max_level: usize) -> Self {
        Self { gamma, max_level, pair_cap: 200_000, exhaustive: false, exec: Exec::default() }
    }
}

/// `0.1 · diam K`: selects the touching cells of the built-in systems while
/// staying far from any decision boundary.
pub fn default_gamma(ifs: &IfsSystem) -> f64 {
    0.1 * ifs.attractor_diameter()
}

#[derive(Debug, Clone)]
pub struct AugmentedTree {
    ifs: IfsSystem,
    weights: Weights,
    gamma: f64,
    max_level: usize,
    words: Vec<Word>,
    maps: Vec<Similitude>,
    /// `level_start[n]..level_start[n + 1]` are the ids of `𝒥_n`.
    level_start: Vec<usize>,
    parent: Vec<Option<VertexId>>,
    children: Vec<Range<VertexId>>,
    horizontal: Vec<Vec<VertexId>>,
    index: HashMap<Vec<u8>, VertexId>,
}

/// Outcome of certifying one candidate pair.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Decision {
    Edge,
    NoEdge,
    Undecided,
}

#[derive(Debug)]
struct CellPair {
    lower: f64,
    upper: f64,
    seq: u64,
    left: Similitude,
    right: Similitude,
}

impl PartialEq for CellPair {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for CellPair {}
impl PartialOrd for CellPair {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for CellPair {
    // Max-heap order reversed: smallest lower bound first, then insertion order.
    fn cmp(&self, other: &Self) -> Ordering {
        other.lower.total_cmp(&self.lower).then(other.seq.cmp(&self.seq))
    }
}

/// Decides whether `dist(K, rel(K)) ≤ threshold` by branch and bound over
/// sub-cells. Every sub-cell `S_u(K)` lies within `r_u·diam K` of its anchor
/// image, which yields a certified interval for each pair distance.
fn certify(ifs: &IfsSystem, rel: &Similitude, threshold: f64, cap: usize) -> (Decision, f64) {
    let diam = ifs.attractor_diameter();
    let anchor = ifs.anchor();
    let accept = threshold * (1.0 - DECISION_SLACK);
    let reject = threshold * (1.0 + DECISION_SLACK);
    let make = |left: Similitude, right: Similitude, seq: u64| {
        let upper = dist(&left.apply(anchor), &right.apply(anchor));
        let lower = upper - (left.ratio() + right.ratio()) * diam;
        CellPair { lower, upper, seq, left, right }
    };
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let first = make(Similitude::identity(ifs.dim()), rel.clone(), seq);
    let mut best_upper = first.upper;
    heap.push(first);
    let mut popped = 0usize;
    while let Some(pair) = heap.pop() {
        if best_upper <= accept {
            return (Decision::Edge, (threshold - best_upper) / threshold);
        }
        if pair.lower > reject {
            return (Decision::NoEdge, (pair.lower - threshold) / threshold);
        }
        popped += 1;
        if popped > cap {
            break;
        }
        let split_left = pair.left.ratio() >= pair.right.ratio();
        for s in ifs.maps() {
            seq += 1;
            let child = if split_left {
                make(pair.left.compose(s), pair.right.clone(), seq)
            } else {
                make(pair.left.clone(), pair.right.compose(s), seq)
            };
            best_upper = best_upper.min(child.upper);
            if child.lower <= reject {
                heap.push(child);
            }
        }
    }
    if best_upper <= accept {
        return (Decision::Edge, (threshold - best_upper) / threshold);
    }
    if heap.is_empty() {
        return (Decision::NoEdge, DECISION_SLACK);
    }
    (Decision::Undecided, 0.0)
}

type CacheKey = Vec<i64>;

fn cache_key(rel: &Similitude, threshold: f64) -> CacheKey {
    rel.coefficients()
        .chain(std::iter::once(threshold))
        .map(|c| (c * 1e9).round() as i64)
        .collect()
}

impl AugmentedTree {
    pub fn build(ifs: &IfsSystem, weights: &Weights, opts: &BuildOptions) -> Result<Self> {
        if opts.gamma <= 0.0 || !opts.gamma.is_finite() {
            return Err(Error::Config(format!("gamma must be positive, got {}", opts.gamma)));
        }
        let mut tree = Self::vertical(ifs, weights, opts.max_level)?;
        tree.gamma = opts.gamma;
        for n in 1..=opts.max_level {
            tree.add_level_edges(n, opts)?;
        }
        Ok(tree)
    }

    /// The word tree alone, without horizontal edges.
    pub fn plain(ifs: &IfsSystem, weights: &Weights, max_level: usize) -> Result<Self> {
        Self::vertical(ifs, weights, max_level)
    }

    fn vertical(ifs: &IfsSystem, weights: &Weights, max_level: usize) -> Result<Self> {
        if weights.len() != ifs.n_maps() {
            return Err(Error::Config("one weight per map is required".into()));
        }
        let mut words = vec![Word::root()];
        let mut parent = vec![None];
        let mut level_start = vec![0, 1];
        for n in 1..=max_level {
            let lo = level_start[n - 1];
            let hi = level_start[n];
            for p in lo..hi {
                for w in ifs.children_words(weights, &words[p], n) {
                    words.push(w);
                    parent.push(Some(p));
                }
            }
            level_start.push(words.len());
        }
        let mut children = vec![0..0; words.len()];
        let mut start = 1;
        while start < words.len() {
            let p = parent[start].expect("non-root vertex has a parent");
            let mut end = start;
            while end < words.len() && parent[end] == Some(p) {
                end += 1;
            }
            children[p] = start..end;
            start = end;
        }
        let maps = words.iter().map(|w| ifs.word_map(&w.symbols)).collect();
        let index = words.iter().enumerate().map(|(i, w)| (w.symbols.clone(), i)).collect();
        let n = words.len();
        Ok(Self {
            ifs: ifs.clone(),
            weights: weights.clone(),
            gamma: 0.0,
            max_level,
            words,
            maps,
            level_start,
            parent,
            children,
            horizontal: vec![Vec::new(); n],
            index,
        })
    }

    fn candidates(&self, n: usize, exhaustive: bool) -> Vec<(VertexId, VertexId)> {
        let mut out = Vec::new();
        if exhaustive {
            let r = self.level(n);
            for x in r.clone() {
                for y in x + 1..r.end {
                    out.push((x, y));
                }
            }
            return out;
        }
        for a in self.level(n - 1) {
            let ca = self.children[a].clone();
            for x in ca.clone() {
                for y in x + 1..ca.end {
                    out.push((x, y));
                }
            }
            for &b in &self.horizontal[a] {
                if b > a {
                    for x in ca.clone() {
                        for y in self.children[b].clone() {
                            out.push((x, y));
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    fn add_level_edges(&mut self, n: usize, opts: &BuildOptions) -> Result<()> {
        let pairs = self.candidates(n, opts.exhaustive);
        let scale = self.ifs.min_ratio().powi(n as i32) * self.gamma;
        let this = &*self;
        let decisions = par::map_range_init(
            opts.exec,
            pairs.len(),
            HashMap::<CacheKey, bool>::new,
            |cache, i| {
                let (x, y) = pairs[i];
                let rel = this.maps[x].relative(&this.maps[y]);
                let threshold = scale / this.words[x].ratio;
                let key = cache_key(&rel, threshold);
                if let Some(&edge) = cache.get(&key) {
                    return Ok(edge);
                }
                let (decision, margin) = certify(&this.ifs, &rel, threshold, opts.pair_cap);
                let edge = match decision {
                    Decision::Edge => true,
                    Decision::NoEdge => false,
                    Decision::Undecided => {
                        return Err(Error::UndecidableEdge {
                            x: this.words[x].to_string(),
                            y: this.words[y].to_string(),
                            level: n,
                            threshold: scale,
                        })
                    }
                };
                if margin > CACHE_MARGIN {
                    cache.insert(key, edge);
                }
                Ok(edge)
            },
        );
        for (&(x, y), d) in pairs.iter().zip(decisions) {
            if d? {
                self.horizontal[x].push(y);
                self.horizontal[y].push(x);
            }
        }
        for x in self.level(n) {
            self.horizontal[x].sort_unstable();
        }
        Ok(())
    }

    pub fn ifs(&self) -> &IfsSystem {
        &self.ifs
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub const fn root(&self) -> VertexId {
        0
    }

    /// Ids of `𝒥_n`, in lexicographic order of their words.
    pub fn level(&self, n: usize) -> Range<VertexId> {
        self.level_start[n]..self.level_start[n + 1]
    }

    /// Ids of `X_n = 𝒥_0 ∪ … ∪ 𝒥_n`.
    pub fn up_to_level(&self, n: usize) -> Range<VertexId> {
        0..self.level_start[n.min(self.max_level) + 1]
    }

    pub fn word(&self, x: VertexId) -> &Word {
        &self.words[x]
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn depth(&self, x: VertexId) -> usize {
        self.words[x].level
    }

    pub fn map(&self, x: VertexId) -> &Similitude {
        &self.maps[x]
    }

    pub fn parent(&self, x: VertexId) -> Option<VertexId> {
        self.parent[x]
    }

    pub fn children(&self, x: VertexId) -> Range<VertexId> {
        self.children[x].clone()
    }

    pub fn horizontal(&self, x: VertexId) -> &[VertexId] {
        &self.horizontal[x]
    }

    /// Parent, children and horizontal neighbours, in that order.
    pub fn neighbors(&self, x: VertexId) -> impl Iterator<Item = VertexId> + '_ {
        self.parent[x].into_iter().chain(self.children[x].clone()).chain(self.horizontal[x].iter().copied())
    }

    pub fn degree(&self, x: VertexId) -> usize {
        self.parent[x].is_some() as usize + self.children[x].len() + self.horizontal[x].len()
    }

    pub fn id_of(&self, symbols: &[u8]) -> Option<VertexId> {
        self.index.get(symbols).copied()
    }

    pub fn lookup(&self, text: &str) -> Result<VertexId> {
        let symbols = crate::ifs::parse_symbols(text, self.ifs.n_maps())?;
        self.id_of(&symbols).ok_or_else(|| Error::UnknownVertex(text.to_string()))
    }

    /// The ancestor of `x` lying in `𝒥_level` (`x` itself at its own level).
    pub fn ancestor(&self, mut x: VertexId, level: usize) -> VertexId {
        while self.depth(x) > level {
            x = self.parent[x].expect("only the root lacks a parent");
        }
        x
    }

    /// The deepest vertex whose word is a prefix of `symbols`.
    pub fn deepest_prefix(&self, symbols: &[u8]) -> VertexId {
        let mut x = self.root();
        'descend: loop {
            for c in self.children(x) {
                if self.words[c].is_prefix_of(symbols) {
                    x = c;
                    continue 'descend;
                }
            }
            return x;
        }
    }

    pub fn horizontal_edge_count(&self, n: usize) -> usize {
        self.level(n).map(|x| self.horizontal[x].len()).sum::<usize>() / 2
    }

    /// Horizontal edges `(x, y)` with `x < y`, in lexicographic order.
    pub fn horizontal_edges(&self) -> impl Iterator<Item = (VertexId, VertexId)> + '_ {
        (0..self.len()).flat_map(move |x| self.horizontal[x].iter().filter(move |&&y| y > x).map(move |&y| (x, y)))
    }

    /// Horizontal edges violating the parent law: `x⁻ = y⁻` or `x⁻ ~ y⁻`.
    pub fn parent_law_violations(&self) -> Vec<(VertexId, VertexId)> {
        self.horizontal_edges()
            .filter(|&(x, y)| {
                let (px, py) = (self.parent[x], self.parent[y]);
                match (px, py) {
                    (Some(a), Some(b)) => a != b && self.horizontal[a].binary_search(&b).is_err(),
                    _ => true,
                }
            })
            .collect()
    }

    pub fn degree_stats(&self) -> DegreeStats {
        let mut histogram = BTreeMap::new();
        let mut per_level = Vec::new();
        // Vertices of the last level are missing their children.
        let top = self.max_level.max(1);
        for n in 0..top.min(self.max_level + 1) {
            let mut level_max = 0;
            for x in self.level(n) {
                let d = self.degree(x);
                *histogram.entry(d).or_insert(0) += 1;
                level_max = level_max.max(d);
            }
            per_level.push(level_max);
        }
        DegreeStats { max_degree: per_level.iter().copied().max().unwrap_or(0), per_level, histogram }
    }

    pub fn export(&self, format: Format, manifest: &Manifest) -> Result<Vec<u8>> {
        let name = |x: VertexId| format_symbols(&self.words[x].symbols);
        let mut vertical: Vec<(VertexId, VertexId)> = (1..self.len()).map(|x| (self.parent[x].unwrap(), x)).collect();
        vertical.sort_unstable();
        let horizontal: Vec<_> = self.horizontal_edges().collect();
        let mut out = String::new();
        match format {
            Format::Dot => {
                out.push_str(&manifest.comment_block("//"));
                out.push_str("graph augmented_tree {\n");
                for x in 0..self.len() {
                    out.push_str(&format!("  \"{}\" [level={}];\n", name(x), self.depth(x)));
                }
                for &(a, b) in &vertical {
                    out.push_str(&format!("  \"{}\" -- \"{}\" [kind=v];\n", name(a), name(b)));
                }
                for &(a, b) in &horizontal {
                    out.push_str(&format!("  \"{}\" -- \"{}\" [kind=h];\n", name(a), name(b)));
                }
                out.push_str("}\n");
            }
            Format::Csv => {
                out.push_str(&manifest.comment_block("#"));
                out.push_str("source,target,kind,level\n");
                for &(a, b) in &vertical {
                    out.push_str(&format!("{},{},v,{}\n", name(a), name(b), self.depth(b)));
                }
                for &(a, b) in &horizontal {
                    out.push_str(&format!("{},{},h,{}\n", name(a), name(b), self.depth(a)));
                }
            }
            Format::Json => {
                #[derive(Serialize)]
                struct Node {
                    id: String,
                    level: usize,
                    parent: Option<String>,
                    horizontal: Vec<String>,
                }
                #[derive(Serialize)]
                struct Doc<'a> {
                    manifest: &'a Manifest,
                    vertices: Vec<Node>,
                }
                let vertices = (0..self.len())
                    .map(|x| Node {
                        id: name(x),
                        level: self.depth(x),
                        parent: self.parent[x].map(name),
                        horizontal: self.horizontal[x].iter().map(|&y| name(y)).collect(),
                    })
                    .collect();
                out = serde_json::to_string_pretty(&Doc { manifest, vertices })?;
                out.push('\n');
            }
        }
        Ok(out.into_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeStats {
    /// Maximum over vertices whose neighbourhood is complete (levels below the last).
    pub max_degree: usize,
    pub per_level: Vec<usize>,
    pub histogram: BTreeMap<usize, usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn build(name: &str, levels: usize) -> AugmentedTree {
        let ifs = IfsSystem::builtin(name).unwrap();
        let w = Weights::natural(&ifs);
        AugmentedTree::build(&ifs, &w, &BuildOptions::new(default_gamma(&ifs), levels)).unwrap()
    }

    #[test]
    fn gasket_edge_counts() {
        let t = build("gasket2", 3);
        assert_eq!(t.horizontal_edge_count(1), 3);
        assert_eq!(t.horizontal_edge_count(2), 12);
        assert_eq!(t.level(2).len(), 9);
    }

    #[test]
    fn interval_edge_counts() {
        let t = build("interval", 6);
        for n in 1..=6 {
            assert_eq!(t.horizontal_edge_count(n), (1 << n) - 1);
        }
    }

    #[test]
    fn nonhomogeneous_line_has_no_horizontal_edges() {
        let t = build("nonhom-line", 5);
        assert_eq!(t.horizontal_edges().count(), 0);
    }

    #[test]
    fn degrees() {
        let t = build("interval", 6);
        let s = t.degree_stats();
        assert_eq!(s.max_degree, 5);
        assert_eq!(t.degree(t.root()), 2);
        let g = build("gasket2", 6);
        let s = g.degree_stats();
        assert_eq!(s.per_level[0], 3);
        assert!(s.per_level[3..].iter().all(|&d| d == s.per_level[3]), "{:?}", s.per_level);
    }

    #[test]
    fn tree_structure() {
        let t = build("nonhom-line", 4);
        for x in 1..t.len() {
            let p = t.parent(x).unwrap();
            assert!(t.children(p).contains(&x));
            assert_eq!(t.depth(p) + 1, t.depth(x));
            assert!(t.word(p).is_prefix_of(&t.word(x).symbols));
        }
        assert_eq!(t.lookup("12").unwrap(), t.id_of(&[0, 1]).unwrap());
        assert!(t.lookup("1").is_err());
    }

    #[test]
    fn zero_gamma_is_rejected() {
        let ifs = IfsSystem::builtin("interval").unwrap();
        let w = Weights::natural(&ifs);
        assert!(matches!(
            AugmentedTree::build(&ifs, &w, &BuildOptions::new(0.0, 2)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn boundary_gamma_is_undecidable() {
        // Cells 1 and 3 of the interval at level 2 are exactly 1/4 apart.
        let ifs = IfsSystem::builtin("interval").unwrap();
        let w = Weights::natural(&ifs);
        let mut opts = BuildOptions::new(1.0, 2);
        opts.pair_cap = 5_000;
        opts.exhaustive = true;
        let err = AugmentedTree::build(&ifs, &w, &opts).unwrap_err();
        assert!(matches!(err, Error::UndecidableEdge { .. }), "{err}");
    }

    #[test]
    fn sequential_build_matches_parallel() {
        let ifs = IfsSystem::builtin("gasket2").unwrap();
        let w = Weights::natural(&ifs);
        let mut opts = BuildOptions::new(default_gamma(&ifs), 5);
        let a = AugmentedTree::build(&ifs, &w, &opts).unwrap();
        opts.exec = Exec::Sequential;
        let b = AugmentedTree::build(&ifs, &w, &opts).unwrap();
        assert_eq!(a.horizontal, b.horizontal);
    }
}
