//! Iterated function systems of contractive similitudes, words of the
//! modified symbolic space, weights, and cell geometry.

use std::fmt;
use std::path::Path;

use faer::linalg::solvers::Solve;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack used when comparing a contraction product with `r^n`.
/// Products of non-dyadic ratios are not exact in binary floating point.
const LEVEL_TOL: f64 = 1e-12;

/// A contractive similitude `p ↦ ratio · O p + t` on `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Similitude {
    ratio: f64,
    /// Row-major `d × d` orthogonal matrix.
    orth: Vec<f64>,
    translation: Vec<f64>,
}

impl Similitude {
    pub fn new(ratio: f64, matrix: Vec<Vec<f64>>, translation: Vec<f64>) -> Result<Self> {
        let d = translation.len();
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::Config(format!("similitude ratio {ratio} not in (0,1)")));
        }
        if d == 0 || matrix.len() != d || matrix.iter().any(|row| row.len() != d) {
            return Err(Error::Config(format!(
                "similitude matrix must be {d}x{d} to match its translation"
            )));
        }
        let orth: Vec<f64> = matrix.into_iter().flatten().collect();
        for i in 0..d {
            for j in 0..d {
                let dot: f64 = (0..d).map(|k| orth[i * d + k] * orth[j * d + k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > 1e-10 {
                    return Err(Error::Config("similitude matrix is not orthogonal".into()));
                }
            }
        }
        Ok(Self { ratio, orth, translation })
    }

    /// `p ↦ ratio·p + translation`.
    pub fn scaling(ratio: f64, translation: Vec<f64>) -> Result<Self> {
        let d = translation.len();
        let matrix = (0..d)
            .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::new(ratio, matrix, translation)
    }

    pub(crate) fn identity(d: usize) -> Self {
        let mut orth = vec![0.0; d * d];
        for i in 0..d {
            orth[i * d + i] = 1.0;
        }
        Self { ratio: 1.0, orth, translation: vec![0.0; d] }
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    pub fn translation(&self) -> &[f64] {
        &self.translation
    }

    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.orth.chunks(self.dim()).map(<[f64]>::to_vec).collect()
    }

    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|i| {
                let rot: f64 = (0..d).map(|k| self.orth[i * d + k] * p[k]).sum();
                self.ratio * rot + self.translation[i]
            })
            .collect()
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &Similitude) -> Similitude {
        let d = self.dim();
        let mut orth = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                orth[i * d + j] = (0..d).map(|k| self.orth[i * d + k] * inner.orth[k * d + j]).sum();
            }
        }
        Similitude {
            ratio: self.ratio * inner.ratio,
            orth,
            translation: self.apply(&inner.translation),
        }
    }

    /// `self⁻¹ ∘ other`, the position of `other`'s image in `self`'s frame.
    pub fn relative(&self, other: &Similitude) -> Similitude {
        let d = self.dim();
        let mut orth = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                orth[i * d + j] = (0..d).map(|k| self.orth[k * d + i] * other.orth[k * d + j]).sum();
            }
        }
        let diff: Vec<f64> = (0..d).map(|i| other.translation[i] - self.translation[i]).collect();
        let translation = (0..d)
            .map(|i| (0..d).map(|k| self.orth[k * d + i] * diff[k]).sum::<f64>() / self.ratio)
            .collect();
        Similitude { ratio: other.ratio / self.ratio, orth, translation }
    }

    /// Matrix entries, translation and ratio, for hashing relative configurations.
    pub(crate) fn coefficients(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(self.ratio).chain(self.orth.iter().copied()).chain(self.translation.iter().copied())
    }

    /// The unique fixed point `(I − ratio·O)⁻¹ t`.
    pub fn fixed_point(&self) -> Vec<f64> {
        let d = self.dim();
        let a = faer::Mat::<f64>::from_fn(d, d, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            id - self.ratio * self.orth[i * d + j]
        });
        let rhs = faer::Mat::<f64>::from_fn(d, 1, |i, _| self.translation[i]);
        let sol = a.partial_piv_lu().solve(&rhs);
        (0..d).map(|i| sol[(i, 0)]).collect()
    }
}

/// Solves `Σ r_i^α = 1` for `α` by bisection.
pub fn hausdorff_dim(ratios: &[f64]) -> Result<f64> {
    if ratios.len() < 2 {
        return Err(Error::Config("an IFS needs at least two maps".into()));
    }
    if ratios.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
        return Err(Error::Config("contraction ratios must lie in (0,1)".into()));
    }
    let f = |a: f64| ratios.iter().map(|r| r.powf(a)).sum::<f64>() - 1.0;
    let r_max = ratios.iter().copied().fold(0.0, f64::max);
    let mut lo = 1e-6;
    let mut hi = ((ratios.len() as f64).ln() / (1.0 / r_max).ln()).max(1.0) + 2.0;
    debug_assert!(f(lo) > 0.0 && f(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        if v.abs() <= 1e-15 || hi - lo < 1e-15 {
            return Ok(mid);
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    if f(mid).abs() <= 1e-12 {
        Ok(mid)
    } else {
        Err(Error::Solver("bisection for the Hausdorff dimension did not converge".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightKind {
    Natural,
    Custom,
}

/// Probability weights `p_1..p_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    p: Vec<f64>,
    kind: WeightKind,
}

impl Weights {
    /// The natural weights `p_i = r_i^α`.
    pub fn natural(ifs: &IfsSystem) -> Self {
        let p = ifs.maps.iter().map(|m| m.ratio.powf(ifs.hausdorff_dim)).collect();
        Self { p, kind: WeightKind::Natural }
    }

    pub fn custom(p: Vec<f64>) -> Result<Self> {
        if p.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
            return Err(Error::Config("weights must be positive".into()));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("weights sum to {s}, not 1")));
        }
        Ok(Self { p, kind: WeightKind::Custom })
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn product(&self, symbols: &[u8]) -> f64 {
        symbols.iter().map(|&s| self.p[s as usize]).product()
    }
}

/// A finite word of the modified symbolic space together with its level.
///
/// Symbols are stored zero-based; they print one-based (`"12"` is `S_1 ∘ S_2`).
#[derive(Debug, Clone, PartialEq)]
pub struct Word {
    pub symbols: Vec<u8>,
    /// `r_x`, the contraction ratio of `S_x`.
    pub ratio: f64,
    /// `p_x`, the weight product.
    pub weight: f64,
    pub level: usize,
}

impl Word {
    pub fn root() -> Self {
        Self { symbols: Vec::new(), ratio: 1.0, weight: 1.0, level: 0 }
    }

    pub fn is_root(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn is_prefix_of(&self, other: &[u8]) -> bool {
        other.len() >= self.symbols.len() && other[..self.symbols.len()] == self.symbols[..]
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_symbols(&self.symbols))
    }
}

/// One-based rendering of a symbol string; `root` for the empty word.
pub fn format_symbols(symbols: &[u8]) -> String {
    if symbols.is_empty() {
        return "root".to_string();
    }
    if symbols.iter().all(|&s| s < 9) {
        symbols.iter().map(|&s| char::from(b'1' + s)).collect()
    } else {
        symbols.iter().map(|&s| (s as usize + 1).to_string()).collect::<Vec<_>>().join(".")
    }
}

/// Parses the output of [`format_symbols`] back into zero-based symbols.
pub fn parse_symbols(text: &str, n_maps: usize) -> Result<Vec<u8>> {
    let text = text.trim();
    if text.is_empty() || text == "root" || text == "ϑ" {
        return Ok(Vec::new());
    }
    let parts: Vec<usize> = if text.contains('.') {
        text.split('.')
            .map(|t| t.parse::<usize>().map_err(|_| Error::UnknownVertex(text.to_string())))
            .collect::<Result<_>>()?
    } else {
        text.chars()
            .map(|c| c.to_digit(10).map(|d| d as usize).ok_or_else(|| Error::UnknownVertex(text.to_string())))
            .collect::<Result<_>>()?
    };
    parts
        .into_iter()
        .map(|s| {
            if s == 0 || s > n_maps {
                Err(Error::UnknownVertex(text.to_string()))
            } else {
                Ok((s - 1) as u8)
            }
        })
        .collect()
}

/// An IFS of contractive similitudes with its derived constants.
#[derive(Debug, Clone)]
pub struct IfsSystem {
    name: String,
    maps: Vec<Similitude>,
    hausdorff_dim: f64,
    min_ratio: f64,
    max_ratio: f64,
    attractor_diameter: f64,
    /// Fixed point of the first map; a point of the attractor.
    anchor: Vec<f64>,
    representative: Vec<f64>,
}

impl IfsSystem {
    pub fn new(name: impl Into<String>, maps: Vec<Similitude>, representative: Option<Vec<f64>>) -> Result<Self> {
        let ratios: Vec<f64> = maps.iter().map(Similitude::ratio).collect();
        let hausdorff_dim = hausdorff_dim(&ratios)?;
        let d = maps[0].dim();
        if maps.iter().any(|m| m.dim() != d) {
            return Err(Error::Config("all maps must act on the same dimension".into()));
        }
        if maps.len() > u8::MAX as usize {
            return Err(Error::Config("at most 255 maps are supported".into()));
        }
        let min_ratio = ratios.iter().copied().fold(1.0, f64::min);
        let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
        let anchor = maps[0].fixed_point();
        let mut ifs = Self {
            name: name.into(),
            maps,
            hausdorff_dim,
            min_ratio,
            max_ratio,
            attractor_diameter: 0.0,
            anchor,
            representative: Vec::new(),
        };
        ifs.attractor_diameter = ifs.certified_diameter();
        ifs.representative = match representative {
            Some(o) if o.len() == d => o,
            Some(_) => return Err(Error::Config("representative point has the wrong dimension".into())),
            None => ifs.cloud_centroid(),
        };
        Ok(ifs)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn maps(&self) -> &[Similitude] {
        &self.maps
    }

    pub fn n_maps(&self) -> usize {
        self.maps.len()
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    pub fn hausdorff_dim(&self) -> f64 {
        self.hausdorff_dim
    }

    /// `r = min_i r_i`.
    pub fn min_ratio(&self) -> f64 {
        self.min_ratio
    }

    pub fn max_ratio(&self) -> f64 {
        self.max_ratio
    }

    /// Certified upper bound on `diam K`.
    pub fn attractor_diameter(&self) -> f64 {
        self.attractor_diameter
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    /// The point `o` whose images `S_x(o)` project vertices to `K`.
    pub fn representative(&self) -> &[f64] {
        &self.representative
    }

    pub fn is_homogeneous(&self) -> bool {
        self.maps.iter().all(|m| (m.ratio - self.min_ratio).abs() <= 1e-15)
    }

    /// `S_x` for a symbol string.
    pub fn word_map(&self, symbols: &[u8]) -> Similitude {
        symbols
            .iter()
            .fold(Similitude::identity(self.dim()), |acc, &s| acc.compose(&self.maps[s as usize]))
    }

    pub fn word_ratio(&self, symbols: &[u8]) -> f64 {
        symbols.iter().map(|&s| self.maps[s as usize].ratio).product()
    }

    /// Whether a word with contraction product `ratio` is at or below scale `r^n`.
    fn reaches_level(&self, ratio: f64, n: usize) -> bool {
        ratio <= self.min_ratio.powi(n as i32) * (1.0 + LEVEL_TOL)
    }

    /// The level `n` of a word (`r_x ≤ r^n < r_{x⁻}`), or `None` if the word
    /// is not a member of any `𝒥_n`.
    pub fn level_of(&self, symbols: &[u8]) -> Option<usize> {
        if symbols.is_empty() {
            return Some(0);
        }
        let ratio = self.word_ratio(symbols);
        let parent_ratio = self.word_ratio(&symbols[..symbols.len() - 1]);
        let mut n = 0;
        while self.reaches_level(ratio, n + 1) {
            n += 1;
        }
        // r_x ≤ r^n holds; membership also needs r^n < r_{x⁻}.
        if n >= 1 && !self.reaches_level(parent_ratio, n) {
            Some(n)
        } else {
            None
        }
    }

    /// Members of `𝒥_level` that extend `parent ∈ 𝒥_{level−1}`, lexicographic.
    pub fn children_words(&self, weights: &Weights, parent: &Word, level: usize) -> Vec<Word> {
        let mut out = Vec::new();
        let mut stack = vec![(parent.symbols.clone(), parent.ratio, parent.weight)];
        // Depth-first in reverse symbol order keeps the output lexicographic.
        while let Some((symbols, ratio, weight)) = stack.pop() {
            if symbols.len() > parent.symbols.len() && self.reaches_level(ratio, level) {
                out.push(Word { symbols, ratio, weight, level });
                continue;
            }
            for s in (0..self.n_maps()).rev() {
                let mut next = symbols.clone();
                next.push(s as u8);
                stack.push((next, ratio * self.maps[s].ratio, weight * weights.p[s]));
            }
        }
        out
    }

    /// Certified diameter bound: diameter of a depth-6 cloud (capped at 4096
    /// points) plus twice the covering radius of the cloud.
    fn certified_diameter(&self) -> f64 {
        let center = &self.anchor;
        let spread = self
            .maps
            .iter()
            .map(|m| dist(&m.apply(center), center))
            .fold(0.0, f64::max);
        // K lies in the ball B(center, radius) since every S_i maps it into itself.
        let radius = spread / (1.0 - self.max_ratio);
        let mut q = 6;
        while q > 1 && self.n_maps().pow(q as u32) > 4096 {
            q -= 1;
        }
        let cloud = self.raw_cloud(&[], q);
        let mut diam: f64 = 0.0;
        for (i, a) in cloud.iter().enumerate() {
            for b in &cloud[i + 1..] {
                diam = diam.max(dist(a, b));
            }
        }
        diam + 2.0 * self.max_ratio.powi(q as i32) * 2.0 * radius
    }

    fn cloud_centroid(&self) -> Vec<f64> {
        let mut q = 6;
        while q > 1 && self.n_maps().pow(q as u32) > 4096 {
            q -= 1;
        }
        let cloud = self.raw_cloud(&[], q);
        let d = self.dim();
        let mut c = vec![0.0; d];
        for p in &cloud {
            for i in 0..d {
                c[i] += p[i] / cloud.len() as f64;
            }
        }
        c
    }

    fn raw_cloud(&self, word: &[u8], q: usize) -> Vec<Vec<f64>> {
        let base = self.word_map(word);
        let mut maps = vec![base];
        for _ in 0..q {
            maps = maps
                .iter()
                .flat_map(|m| self.maps.iter().map(move |s| m.compose(s)))
                .collect();
        }
        maps.iter().map(|m| m.apply(&self.anchor)).collect()
    }

    /// One point of `S_{word v}(K)` for every `v` of length `q`, in
    /// lexicographic order of `v`. Every point of `S_word(K)` lies within
    /// [`IfsSystem::cloud_error`] of the returned cloud.
    pub fn cell_point_cloud(&self, word: &[u8], q: usize, cap: usize) -> Result<Vec<Vec<f64>>> {
        let size = self.n_maps().checked_pow(q as u32).unwrap_or(usize::MAX);
        if size > cap {
            return Err(Error::CloudTooLarge { size, cap });
        }
        Ok(self.raw_cloud(word, q))
    }

    /// Covering radius bound `2·r_word·r_max^q·diam K` for [`IfsSystem::cell_point_cloud`].
    pub fn cloud_error(&self, word: &[u8], q: usize) -> f64 {
        2.0 * self.word_ratio(word) * self.max_ratio.powi(q as i32) * self.attractor_diameter
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "interval" => Self::new(
                "interval",
                vec![Similitude::scaling(0.5, vec![0.0])?, Similitude::scaling(0.5, vec![0.5])?],
                Some(vec![0.5]),
            ),
            "nonhom-line" => Self::new(
                "nonhom-line",
                vec![Similitude::scaling(0.5, vec![0.0])?, Similitude::scaling(0.25, vec![0.75])?],
                Some(vec![0.5]),
            ),
            "cantor" => Self::new(
                "cantor",
                vec![Similitude::scaling(1.0 / 3.0, vec![0.0])?, Similitude::scaling(1.0 / 3.0, vec![2.0 / 3.0])?],
                Some(vec![0.5]),
            ),
            "carpet" => {
                // Clockwise from the top-left corner: four corners and four edge midpoints.
                let q = [
                    (0.0, 1.0),
                    (0.5, 1.0),
                    (1.0, 1.0),
                    (1.0, 0.5),
                    (1.0, 0.0),
                    (0.5, 0.0),
                    (0.0, 0.0),
                    (0.0, 0.5),
                ];
                let maps = q
                    .iter()
                    .map(|&(a, b)| Similitude::scaling(1.0 / 3.0, vec![2.0 * a / 3.0, 2.0 * b / 3.0]))
                    .collect::<Result<Vec<_>>>()?;
                Self::new("carpet", maps, Some(vec![0.5, 0.5]))
            }
            other => {
                if let Some(d) = other.strip_prefix("gasket").and_then(|d| d.parse::<usize>().ok()) {
                    if d == 0 || d > 8 {
                        return Err(Error::Config(format!("gasket dimension {d} out of range 1..=8")));
                    }
                    // S_i(ξ) = e_i + (ξ − e_i)/2 with e_0 = 0 and the standard basis.
                    let maps = (0..=d)
                        .map(|i| {
                            let t = (0..d).map(|k| if i == k + 1 { 0.5 } else { 0.0 }).collect();
                            Similitude::scaling(0.5, t)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let bary = vec![1.0 / (d as f64 + 1.0); d];
                    Self::new(format!("gasket{d}"), maps, Some(bary))
                } else {
                    Err(Error::Config(format!("unknown builtin IFS {other:?}")))
                }
            }
        }
    }

    /// Natural weights unless the file gives explicit ones.
    pub fn default_weights(&self) -> Weights {
        Weights::natural(self)
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `𝒥_n`: the words whose contraction product first drops to `r^n`.
pub fn level_frontier(ifs: &IfsSystem, weights: &Weights, n: usize) -> Vec<Word> {
    let mut frontier = vec![Word::root()];
    for level in 1..=n {
        frontier = frontier.iter().flat_map(|w| ifs.children_words(weights, w, level)).collect();
    }
    frontier
}

/// The bounds `r^{−αn} ≤ #𝒥_n < r^{−α(n+1)}`.
pub fn frontier_count_bounds(ifs: &IfsSystem, n: usize) -> (f64, f64) {
    let a = ifs.hausdorff_dim;
    let r = ifs.min_ratio;
    (r.powf(-a * n as f64), r.powf(-a * (n as f64 + 1.0)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MapSpec {
    ratio: f64,
    #[serde(default)]
    matrix: Option<Vec<Vec<f64>>>,
    translation: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum WeightSpec {
    Named(String),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IfsFile {
    maps: Vec<MapSpec>,
    #[serde(default)]
    weights: Option<WeightSpec>,
    #[serde(default)]
    representative: Option<Vec<f64>>,
    #[serde(default)]
    name: Option<String>,
}

/// Parses an IFS description (JSON text) into the system and its weights.
pub fn parse_ifs_json(text: &str) -> Result<(IfsSystem, Weights)> {
    let file: IfsFile = serde_json::from_str(text)?;
    let maps = file
        .maps
        .into_iter()
        .map(|m| match m.matrix {
            Some(mat) => Similitude::new(m.ratio, mat, m.translation),
            None => Similitude::scaling(m.ratio, m.translation),
        })
        .collect::<Result<Vec<_>>>()?;
    if maps.len() < 2 {
        return Err(Error::Config("an IFS needs at least two maps".into()));
    }
    let ifs = IfsSystem::new(file.name.unwrap_or_else(|| "custom".into()), maps, file.representative)?;
    let weights = match file.weights {
        None => Weights::natural(&ifs),
        Some(WeightSpec::Named(s)) if s == "natural" => Weights::natural(&ifs),
        Some(WeightSpec::Named(s)) => return Err(Error::Config(format!("unknown weights {s:?}"))),
        Some(WeightSpec::Explicit(p)) => {
            if p.len() != ifs.n_maps() {
                return Err(Error::Config("one weight per map is required".into()));
            }
            Weights::custom(p)?
        }
    };
    Ok((ifs, weights))
}

/// Resolves `builtin:<name>` or a path to an IFS JSON file.
pub fn load_ifs(source: &str) -> Result<(IfsSystem, Weights)> {
    if let Some(name) = source.strip_prefix("builtin:") {
        let ifs = IfsSystem::builtin(name)?;
        let w = Weights::natural(&ifs);
        return Ok((ifs, w));
    }
    let text = std::fs::read_to_string(Path::new(source))?;
    parse_ifs_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn syms(s: &str, n: usize) -> Vec<u8> {
        parse_symbols(s, n).unwrap()
    }

    #[test]
    fn dimension_of_standard_systems() {
        assert_abs_diff_eq!(hausdorff_dim(&[0.5, 0.5]).unwrap(), 1.0, epsilon = 1e-12);
        let g = hausdorff_dim(&[0.5, 0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(g, 3f64.ln() / 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(g, 1.584_962_5, epsilon = 1e-7);
    }

    #[test]
    fn dimension_of_uneven_line_matches_golden_ratio() {
        // (1/2)^α = t with t + t² = 1.
        let a = hausdorff_dim(&[0.5, 0.25]).unwrap();
        let t = (5f64.sqrt() - 1.0) / 2.0;
        assert_abs_diff_eq!(0.5f64.powf(a), t, epsilon = 1e-12);
        assert_abs_diff_eq!(a, 0.694_241_913_6, epsilon = 1e-9);
        assert!((0.5f64.powf(a) + 0.25f64.powf(a) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn dimension_rejects_bad_input() {
        assert!(hausdorff_dim(&[0.5]).is_err());
        assert!(hausdorff_dim(&[0.5, 1.0]).is_err());
    }

    #[test]
    fn shrinking_ratios_lowers_dimension() {
        let a = hausdorff_dim(&[0.5, 0.4, 0.3]).unwrap();
        let b = hausdorff_dim(&[0.45, 0.36, 0.27]).unwrap();
        assert!(b < a);
    }

    #[test]
    fn frontier_examples() {
        let g = IfsSystem::builtin("gasket2").unwrap();
        let w = Weights::natural(&g);
        assert_eq!(level_frontier(&g, &w, 2).len(), 9);
        assert_eq!(level_frontier(&g, &w, 0), vec![Word::root()]);

        let line = IfsSystem::builtin("nonhom-line").unwrap();
        let lw = Weights::natural(&line);
        let j1: Vec<String> = level_frontier(&line, &lw, 1).iter().map(Word::to_string).collect();
        assert_eq!(j1, vec!["11", "12", "2"]);
        assert_eq!(line.level_of(&syms("12", 2)), Some(1));
        assert_eq!(line.level_of(&syms("1", 2)), None);
    }

    #[test]
    fn frontier_weights_sum_to_one_and_levels_partition() {
        for name in ["gasket2", "nonhom-line", "carpet", "interval"] {
            let ifs = IfsSystem::builtin(name).unwrap();
            let w = Weights::natural(&ifs);
            let mut seen = std::collections::HashSet::new();
            let mut prev = level_frontier(&ifs, &w, 0);
            for n in 1..=4 {
                let cur = level_frontier(&ifs, &w, n);
                let total: f64 = cur.iter().map(|x| x.weight).sum();
                assert!((total - 1.0).abs() < 1e-10, "{name} level {n}: {total}");
                for x in &cur {
                    assert!(seen.insert(x.symbols.clone()), "{name}: {x} in two levels");
                    assert_eq!(ifs.level_of(&x.symbols), Some(n));
                    let parents = prev.iter().filter(|p| p.is_prefix_of(&x.symbols)).count();
                    assert_eq!(parents, 1);
                }
                for (i, a) in cur.iter().enumerate() {
                    for b in &cur[i + 1..] {
                        assert!(!a.is_prefix_of(&b.symbols) && !b.is_prefix_of(&a.symbols));
                    }
                }
                prev = cur;
            }
        }
    }

    #[test]
    fn count_bounds() {
        let g = IfsSystem::builtin("gasket2").unwrap();
        let (lo, hi) = frontier_count_bounds(&g, 3);
        assert_abs_diff_eq!(lo, 27.0, epsilon = 1e-9);
        assert_abs_diff_eq!(hi, 81.0, epsilon = 1e-9);

        let i = IfsSystem::builtin("interval").unwrap();
        let (lo, hi) = frontier_count_bounds(&i, 5);
        assert_abs_diff_eq!(lo, 32.0, epsilon = 1e-9);
        assert_abs_diff_eq!(hi, 64.0, epsilon = 1e-9);

        let line = IfsSystem::builtin("nonhom-line").unwrap();
        let (lo, hi) = frontier_count_bounds(&line, 1);
        assert!((lo - 2.618).abs() < 1e-3 && (hi - 6.854).abs() < 1e-3, "{lo} {hi}");
        let count = level_frontier(&line, &Weights::natural(&line), 1).len() as f64;
        assert!(lo <= count && count < hi);
    }

    #[test]
    fn point_clouds() {
        let i = IfsSystem::builtin("interval").unwrap();
        let c = i.cell_point_cloud(&[], 1, 100).unwrap();
        assert_eq!(c.len(), 2);
        assert!((0.0..=0.5).contains(&c[0][0]) && (0.5..=1.0).contains(&c[1][0]));

        let g = IfsSystem::builtin("gasket2").unwrap();
        let c = g.cell_point_cloud(&[0], 0, 100).unwrap();
        assert_eq!(c.len(), 1);
        let p = &c[0];
        assert!(p[0] >= 0.0 && p[1] >= 0.0 && p[0] + p[1] <= 0.5 + 1e-12);

        let c = g.cell_point_cloud(&[], 3, 1000).unwrap();
        assert_eq!(c.len(), 27);
        for (k, a) in c.iter().enumerate() {
            for b in &c[k + 1..] {
                assert!(dist(a, b) > 1e-9);
            }
        }
        assert!(matches!(g.cell_point_cloud(&[], 9, 1000), Err(Error::CloudTooLarge { .. })));
    }

    #[test]
    fn cloud_covers_cell_within_error() {
        // A deep cloud is a proxy for the cell; every deep point must be
        // within the stated error of the shallow cloud.
        let g = IfsSystem::builtin("gasket2").unwrap();
        let word = [1u8, 2];
        let coarse = g.cell_point_cloud(&word, 2, 10_000).unwrap();
        let fine = g.cell_point_cloud(&word, 6, 10_000).unwrap();
        let err = g.cloud_error(&word, 2);
        for p in &fine {
            let d = coarse.iter().map(|c| dist(c, p)).fold(f64::INFINITY, f64::min);
            assert!(d <= err);
        }
    }

    #[test]
    fn diameters_are_upper_bounds() {
        let g = IfsSystem::builtin("gasket2").unwrap();
        assert!(g.attractor_diameter() >= 2f64.sqrt());
        assert!(g.attractor_diameter() < 2f64.sqrt() * 1.2);
        let i = IfsSystem::builtin("interval").unwrap();
        assert!(i.attractor_diameter() >= 1.0 && i.attractor_diameter() < 1.1);
        let c = IfsSystem::builtin("carpet").unwrap();
        assert!(c.attractor_diameter() >= 2f64.sqrt());
    }

    #[test]
    fn similitude_algebra() {
        let rot = Similitude::new(0.5, vec![vec![0.0, -1.0], vec![1.0, 0.0]], vec![1.0, 0.0]).unwrap();
        let sh = Similitude::scaling(0.25, vec![0.0, 2.0]).unwrap();
        let comp = rot.compose(&sh);
        let p = [0.3, -0.7];
        let direct = rot.apply(&sh.apply(&p));
        let via = comp.apply(&p);
        assert!(dist(&direct, &via) < 1e-14);
        let rel = rot.relative(&comp);
        assert!(dist(&rot.apply(&rel.apply(&p)), &comp.apply(&p)) < 1e-14);
        let fp = rot.fixed_point();
        assert!(dist(&rot.apply(&fp), &fp) < 1e-14);
        assert!(Similitude::new(0.5, vec![vec![1.0, 1.0], vec![0.0, 1.0]], vec![0.0, 0.0]).is_err());
        assert!(Similitude::scaling(1.0, vec![0.0]).is_err());
    }

    #[test]
    fn symbols_round_trip() {
        assert_eq!(format_symbols(&[0, 1]), "12");
        assert_eq!(syms("21", 3), vec![1, 0]);
        assert_eq!(syms("root", 3), Vec::<u8>::new());
        assert!(parse_symbols("4", 3).is_err());
        let long: Vec<u8> = vec![9, 10];
        assert_eq!(parse_symbols(&format_symbols(&long), 12).unwrap(), long);
    }

    #[test]
    fn json_config() {
        let text = r#"{"maps":[{"ratio":0.5,"matrix":[[1]],"translation":[0]},
                                {"ratio":0.5,"translation":[0.5]}],
                       "weights":[0.25,0.75]}"#;
        let (ifs, w) = parse_ifs_json(text).unwrap();
        assert_eq!(ifs.n_maps(), 2);
        assert_eq!(w.kind(), WeightKind::Custom);
        let text = r#"{"maps":[{"ratio":0.5,"translation":[0]},{"ratio":0.5,"translation":[0.5]}],"weights":"natural"}"#;
        let (_, w) = parse_ifs_json(text).unwrap();
        assert_eq!(w.kind(), WeightKind::Natural);
        assert!(parse_ifs_json(r#"{"maps":[{"ratio":0.5,"translation":[0]}]}"#).is_err());
        assert!(load_ifs("builtin:nope").is_err());
        assert!(load_ifs("builtin:gasket3").is_ok());
    }
}
