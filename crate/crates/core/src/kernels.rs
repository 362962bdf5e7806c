//! Martin and Naïm kernels, their boundary values by deep-prefix
//! stabilization, the Doob transform towards a boundary point, and
//! exponent fits.
//!
//! All kernels at truncation `m` come from `B = A⁻¹` of the truncated solve:
//! `K_m(x, y) = B(x, y)/B(ϑ, y)` and `Θ_m(x, y) = B(x, y)/(m(ϑ)·B(x, ϑ)·B(ϑ, y))`,
//! so one solve per target serves every source vertex.

use rand::Rng;
use serde::Serialize;

use crate::augtree::{AugmentedTree, VertexId};
use crate::chain::{path_rng, ConductanceTable, SolverKind, TruncatedSolve};
use crate::error::{Error, Result};
use crate::ifs::dist;
use crate::metric::{boundary_gromov_product, gromov_product, BoundaryPoint, HalfInt};
use crate::par::{self, Exec};
use crate::stats::{fit_line, LineFit};

/// Default relative tolerance for two consecutive depths to count as agreeing.
pub const DEFAULT_KERNEL_TOL: f64 = 1e-3;

/// Tolerance for Θ on boundary pairs. Deep-prefix values drift by about 1%
/// per level for a long stretch, so the vertex tolerance would leave most
/// pairs unsettled at reachable depths.
pub const BOUNDARY_KERNEL_TOL: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelSample {
    pub source: String,
    pub target: String,
    pub gromov_product: HalfInt,
    pub geometric_distance: f64,
    pub value: f64,
    pub level_used: usize,
    pub converged: bool,
}

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

/// Kernel values at one truncation level.
pub struct KernelEvaluator<'a> {
    solve: TruncatedSolve<'a>,
    /// `B(·, ϑ)` on the interior.
    root_column: Vec<f64>,
}

impl<'a> KernelEvaluator<'a> {
    pub fn new(tree: &'a AugmentedTree, table: &'a ConductanceTable, level: usize) -> Result<Self> {
        let solve = TruncatedSolve::new(tree, table, level, SolverKind::Auto)?;
        let root_column = solve.unit_column(tree.root())?;
        Ok(Self { solve, root_column })
    }

    pub fn tree(&self) -> &AugmentedTree {
        self.solve.tree()
    }

    pub fn table(&self) -> &ConductanceTable {
        self.solve.table()
    }

    pub fn level(&self) -> usize {
        self.solve.level()
    }

    fn interior_target(&self, y: VertexId) -> Result<()> {
        if y < self.solve.interior() {
            Ok(())
        } else {
            Err(Error::UnknownVertex(format!(
                "{} is not above the truncation level {}",
                self.tree().word(y),
                self.level()
            )))
        }
    }

    /// `K_m(x, y)` for every interior `x`.
    pub fn martin_column(&self, y: VertexId) -> Result<Vec<f64>> {
        self.interior_target(y)?;
        let b = self.solve.unit_column(y)?;
        let at_root = b[self.tree().root()];
        Ok(b.into_iter().map(|v| v / at_root).collect())
    }

    /// `Θ_m(x, y)` for every interior `x` (the root entry is meaningless).
    pub fn theta_column(&self, y: VertexId) -> Result<Vec<f64>> {
        self.interior_target(y)?;
        let b = self.solve.unit_column(y)?;
        let root = self.tree().root();
        let denom = self.table().total(root) * b[root];
        Ok(b.iter().zip(&self.root_column).map(|(bxy, bx0)| bxy / (bx0 * denom)).collect())
    }

    pub fn martin(&self, x: VertexId, y: VertexId) -> Result<f64> {
        self.interior_target(x)?;
        Ok(self.martin_column(y)?[x])
    }

    pub fn theta(&self, x: VertexId, y: VertexId) -> Result<f64> {
        if x == self.tree().root() || y == self.tree().root() {
            return Err(Error::Undefined("Θ at the root".into()));
        }
        self.interior_target(x)?;
        Ok(self.theta_column(y)?[x])
    }

    /// `K(·, ξ)` on the interior, read at the deepest interior prefix of `ξ`.
    pub fn martin_boundary_column(&self, xi: &BoundaryPoint) -> Result<Vec<f64>> {
        let ray = xi.ray(self.tree());
        self.martin_column(ray[self.level() - 1])
    }
}

/// Evaluates a vertex kernel at truncations `m = start..=max_level` until two
/// consecutive levels agree within `tol`.
fn ladder<F>(tree: &AugmentedTree, table: &ConductanceTable, start: usize, tol: f64, f: F) -> Result<(f64, usize, bool)>
where
    F: Fn(&KernelEvaluator<'_>) -> Result<f64>,
{
    let mut previous: Option<f64> = None;
    let mut last = (f64::NAN, start);
    for m in start..=tree.max_level() {
        let eval = KernelEvaluator::new(tree, table, m)?;
        let v = f(&eval)?;
        if let Some(p) = previous {
            if relative_gap(v, p) < tol {
                return Ok((v, m, true));
            }
        }
        previous = Some(v);
        last = (v, m);
    }
    if last.0.is_nan() {
        return Err(Error::Config(format!("vertices must sit above level {}", tree.max_level())));
    }
    Ok((last.0, last.1, false))
}

fn vertex_sample(tree: &AugmentedTree, x: VertexId, y: VertexId, value: (f64, usize, bool)) -> KernelSample {
    let ifs = tree.ifs();
    let o = ifs.representative();
    KernelSample {
        source: tree.word(x).to_string(),
        target: tree.word(y).to_string(),
        gromov_product: gromov_product(tree, x, y),
        geometric_distance: dist(&tree.map(x).apply(o), &tree.map(y).apply(o)),
        value: value.0,
        level_used: value.1,
        converged: value.2,
    }
}

/// `K(x, y) = F(x, y)/F(ϑ, y)` with both hitting probabilities at a common,
/// increasing truncation.
pub fn martin_kernel(tree: &AugmentedTree, table: &ConductanceTable, x: VertexId, y: VertexId, tol: f64) -> Result<KernelSample> {
    let start = tree.depth(x).max(tree.depth(y)) + 1;
    let v = ladder(tree, table, start, tol, |e| e.martin(x, y))?;
    Ok(vertex_sample(tree, x, y, v))
}

/// `Θ(x, y) = F(x, y)/(F(x, ϑ) G(ϑ, ϑ) F(ϑ, y))` at a common, increasing truncation.
pub fn naim_kernel(tree: &AugmentedTree, table: &ConductanceTable, x: VertexId, y: VertexId, tol: f64) -> Result<KernelSample> {
    let start = tree.depth(x).max(tree.depth(y)) + 1;
    let v = ladder(tree, table, start, tol, |e| e.theta(x, y))?;
    Ok(vertex_sample(tree, x, y, v))
}

/// `K(x, ξ)` for several sources: `K_m(x, ξ_k)` along deepening prefixes
/// `ξ_k` until two consecutive depths agree for every source.
pub fn martin_boundary(eval: &KernelEvaluator<'_>, xs: &[VertexId], xi: &BoundaryPoint, tol: f64) -> Result<Vec<KernelSample>> {
    let tree = eval.tree();
    let ray = xi.ray(tree);
    let top = xs.iter().map(|&x| tree.depth(x)).max().unwrap_or(0);
    let o = tree.ifs().representative();
    let mut previous: Option<Vec<f64>> = None;
    let mut current = Vec::new();
    let mut used = top + 1;
    let mut converged = false;
    for (k, &v) in ray.iter().enumerate().take(eval.level()).skip(top + 1) {
        let col = eval.martin_column(v)?;
        current = xs.iter().map(|&x| col[x]).collect();
        used = k;
        if let Some(p) = &previous {
            if current.iter().zip(p).all(|(a, b)| relative_gap(*a, *b) < tol) {
                converged = true;
                break;
            }
        }
        previous = Some(current.clone());
    }
    if current.is_empty() && !xs.is_empty() {
        return Err(Error::Config("the tree is too shallow for these sources".into()));
    }
    Ok(xs
        .iter()
        .zip(current)
        .map(|(&x, value)| KernelSample {
            source: tree.word(x).to_string(),
            target: xi.label(),
            gromov_product: gromov_product(tree, x, ray[used]),
            geometric_distance: dist(&tree.map(x).apply(o), &xi.geometric_point),
            value,
            level_used: used,
            converged,
        })
        .collect())
}

/// `Θ(ξ, η)` by deep-prefix stabilization: `Θ_m(x_k, y_k)` for increasing `k`
/// until two consecutive depths agree within `tol`. This stands in for the
/// last-exit limit and is flagged unconverged when it does not settle.
pub fn naim_boundary(
    eval: &KernelEvaluator<'_>,
    xi: &BoundaryPoint,
    eta: &BoundaryPoint,
    tol: f64,
    bound_m: usize,
) -> Result<KernelSample> {
    let tree = eval.tree();
    let product = boundary_gromov_product(tree, xi, eta, bound_m)?;
    let rx = xi.ray(tree);
    let ry = eta.ray(tree);
    let mut previous: Option<f64> = None;
    let mut sample = KernelSample {
        source: xi.label(),
        target: eta.label(),
        gromov_product: product.product,
        geometric_distance: product.geometric_distance,
        value: f64::NAN,
        level_used: 0,
        converged: false,
    };
    for k in product.level.max(1)..eval.level() {
        let v = eval.theta(rx[k], ry[k])?;
        sample.value = v;
        sample.level_used = k;
        if let Some(p) = previous {
            if relative_gap(v, p) < tol {
                sample.converged = true;
                return Ok(sample);
            }
        }
        previous = Some(v);
    }
    if sample.value.is_nan() {
        return Err(Error::NoStabilization(format!(
            "(ξ|η) for {} and {} settles too close to the truncation level",
            xi.label(),
            eta.label()
        )));
    }
    Ok(sample)
}

/// Θ on `count` random boundary pairs whose words share a uniformly drawn
/// number of leading symbols in `0..=max_common`.
#[allow(clippy::too_many_arguments)]
pub fn sample_naim_boundary(
    eval: &KernelEvaluator<'_>,
    count: usize,
    max_common: usize,
    tol: f64,
    bound_m: usize,
    seed: u64,
    exec: Exec,
) -> Vec<Result<KernelSample>> {
    let ifs = eval.tree().ifs();
    par::map_range(exec, count, |i| {
        let mut rng = path_rng(seed, i);
        let common = rng.random_range(0..=max_common);
        let (xi, eta) = crate::metric::sample_boundary_pair(ifs, &mut rng, common, 2, 3)?;
        naim_boundary(eval, &xi, &eta, tol, bound_m)
    })
}

/// Rows of the Doob transform `P^ξ(x, y) = P(x, y)·K(y, ξ)/K(x, ξ)` on `X_k`.
#[derive(Debug, Clone, Serialize)]
pub struct HTransform {
    pub depth: usize,
    /// `(x, [(y, P^ξ(x, y))])` for every `x ∈ X_k`.
    pub rows: Vec<(VertexId, Vec<(VertexId, f64)>)>,
    /// `max_x |Σ_y P^ξ(x, y) − 1|`.
    pub max_defect: f64,
    /// Rows whose defect exceeds `1e-6`.
    pub flagged: Vec<VertexId>,
}

pub fn h_transform(eval: &KernelEvaluator<'_>, xi: &BoundaryPoint, depth: usize) -> Result<HTransform> {
    if depth + 2 > eval.level() {
        return Err(Error::Config(format!(
            "transform depth {depth} needs truncation above {}",
            depth + 1
        )));
    }
    let k = eval.martin_boundary_column(xi)?;
    let tree = eval.tree();
    let table = eval.table();
    let mut rows = Vec::new();
    let mut max_defect: f64 = 0.0;
    let mut flagged = Vec::new();
    for x in tree.up_to_level(depth) {
        let row: Vec<(VertexId, f64)> = table
            .edges(x)
            .map(|(y, c)| (y, c / table.total(x) * k[y] / k[x]))
            .collect();
        let defect = (row.iter().map(|r| r.1).sum::<f64>() - 1.0).abs();
        if defect > 1e-6 {
            flagged.push(x);
        }
        max_defect = max_defect.max(defect);
        rows.push((x, row));
    }
    Ok(HTransform { depth, rows, max_defect, flagged })
}

#[derive(Debug, Clone, Serialize)]
pub struct XiProcessReport {
    pub n_paths: usize,
    /// Fraction of paths whose level-`k` ancestor at the stopping time is `ξ_k`.
    pub fraction: f64,
    pub std_error: f64,
}

/// Runs the ξ-process from the root until level `stop`, reporting how often
/// it passes through the level-`k` prefix cell of `ξ`.
#[allow(clippy::too_many_arguments)]
pub fn xi_process(
    eval: &KernelEvaluator<'_>,
    xi: &BoundaryPoint,
    k: usize,
    stop: usize,
    n_paths: usize,
    seed: u64,
    exec: Exec,
) -> Result<XiProcessReport> {
    if k > stop || stop + 1 >= eval.level() {
        return Err(Error::Config(format!(
            "need k ≤ stop < {} for the ξ-process",
            eval.level() - 1
        )));
    }
    let kernel = eval.martin_boundary_column(xi)?;
    let tree = eval.tree();
    let table = eval.table();
    let target = xi.ray(tree)[k];
    let hits = par::map_range(exec, n_paths, |i| {
        let mut rng = path_rng(seed, i);
        let mut x = tree.root();
        while tree.depth(x) < stop {
            let mut u = rng.random::<f64>() * table.total(x) * kernel[x];
            let mut next = x;
            for (y, c) in table.edges(x) {
                next = y;
                let w = c * kernel[y];
                if u < w {
                    break;
                }
                u -= w;
            }
            x = next;
        }
        tree.ancestor(x, k) == target
    });
    let n = n_paths.max(1) as f64;
    let fraction = hits.iter().filter(|&&h| h).count() as f64 / n;
    Ok(XiProcessReport { n_paths, fraction, std_error: (fraction * (1.0 - fraction) / n).sqrt() })
}

/// `J(ξ, η)` for the λ-walk on the plain `N`-ary tree:
/// `(1−λ)(N−1)/(2(N−λ)) + N(1−λ)²(N/λ)^g / (2λ(N−λ))` with `g = (ξ|η)`.
pub fn tree_closed_form(n: usize, lambda: f64, gp: u32) -> f64 {
    let nf = n as f64;
    let constant = (1.0 - lambda) * (nf - 1.0) / (2.0 * (nf - lambda));
    let growth = nf * (1.0 - lambda).powi(2) / (2.0 * lambda * (nf - lambda));
    constant + growth * (nf / lambda).powi(gp as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Abscissa {
    /// `log |ι(ξ) − ι(η)|`; the expected slope is `−(α + β)`.
    #[default]
    Distance,
    /// `(ξ|η)`; the expected slope is `−log(λ r^α)`.
    GromovProduct,
}

/// Least-squares fit of `log value` against the chosen abscissa over the
/// converged samples.
pub fn fit_exponents(samples: &[KernelSample], abscissa: Abscissa) -> Result<LineFit> {
    let usable: Vec<&KernelSample> = samples
        .iter()
        .filter(|s| s.converged && s.value > 0.0 && s.geometric_distance > 0.0)
        .collect();
    if usable.len() < 30 {
        return Err(Error::InsufficientSamples { need: 30, got: usable.len() });
    }
    let xs: Vec<f64> = usable
        .iter()
        .map(|s| match abscissa {
            Abscissa::Distance => s.geometric_distance.ln(),
            Abscissa::GromovProduct => s.gromov_product.value(),
        })
        .collect();
    let ys: Vec<f64> = usable.iter().map(|s| s.value.ln()).collect();
    fit_line(&xs, &ys)
}

/// `β = log λ / log r`.
pub fn beta(lambda: f64, min_ratio: f64) -> f64 {
    lambda.ln() / min_ratio.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augtree::{default_gamma, BuildOptions};
    use crate::chain::ChainSpec;
    use crate::ifs::{IfsSystem, Weights};

    fn setup(name: &str, levels: usize, lambda: f64, plain: bool) -> (AugmentedTree, ConductanceTable) {
        let ifs = IfsSystem::builtin(name).unwrap();
        let w = Weights::natural(&ifs);
        let tree = if plain {
            AugmentedTree::plain(&ifs, &w, levels).unwrap()
        } else {
            AugmentedTree::build(&ifs, &w, &BuildOptions::new(default_gamma(&ifs), levels)).unwrap()
        };
        let table = ConductanceTable::new(&tree, &ChainSpec::new(lambda, w).unwrap()).unwrap();
        (tree, table)
    }

    #[test]
    fn closed_form_values() {
        assert!((tree_closed_form(2, 0.5, 0) - 0.5).abs() < 1e-15);
        // The constant term is (1 − λ)(N − 1)/(2(N − λ)); the rest grows by N/λ.
        let constant = 0.6 * 2.0 / (2.0 * 2.6);
        for g in 0..6 {
            let a = tree_closed_form(3, 0.4, g) - constant;
            let b = tree_closed_form(3, 0.4, g + 1) - constant;
            assert!((b / a - 3.0 / 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn martin_kernel_basics() {
        let (tree, table) = setup("gasket2", 5, 1.0 / 3.0, false);
        let eval = KernelEvaluator::new(&tree, &table, 5).unwrap();
        let y = tree.lookup("213").unwrap();
        assert!((eval.martin(tree.root(), y).unwrap() - 1.0).abs() < 1e-12);
        assert!(eval.martin(y, y).unwrap() >= 1.0);
    }

    #[test]
    fn theta_is_symmetric() {
        let (tree, table) = setup("gasket2", 5, 0.4, false);
        let eval = KernelEvaluator::new(&tree, &table, 5).unwrap();
        let ids: Vec<VertexId> = (1..tree.level(4).end).step_by(7).collect();
        for &x in &ids {
            for &y in &ids {
                let a = eval.theta(x, y).unwrap();
                let b = eval.theta(y, x).unwrap();
                assert!(relative_gap(a, b) < 1e-8, "{a} {b}");
            }
        }
    }

    #[test]
    fn theta_on_binary_tree_matches_closed_form() {
        let (tree, table) = setup("interval", 14, 0.5, true);
        let eval = KernelEvaluator::new(&tree, &table, 14).unwrap();
        let ifs = tree.ifs();
        for g in 0..5usize {
            let mut shared = vec![0u8; g];
            shared.push(0);
            let xi = BoundaryPoint::new(ifs, shared.clone(), vec![0]).unwrap();
            let mut other = vec![0u8; g];
            other.push(1);
            let eta = BoundaryPoint::new(ifs, other, vec![1]).unwrap();
            let s = naim_boundary(&eval, &xi, &eta, 1e-6, 0).unwrap();
            assert_eq!(s.gromov_product, HalfInt::from_int(g as i64));
            let j = tree_closed_form(2, 0.5, g as u32);
            assert!(relative_gap(s.value, j) < 0.01, "g={g} {} vs {j}", s.value);
        }
    }

    #[test]
    fn doob_transform_drifts_towards_the_point() {
        let (tree, table) = setup("gasket2", 7, 1.0 / 3.0, true);
        let eval = KernelEvaluator::new(&tree, &table, 7).unwrap();
        let xi = BoundaryPoint::new(tree.ifs(), vec![], vec![0]).unwrap();
        let h = h_transform(&eval, &xi, 4).unwrap();
        assert!(h.max_defect < 1e-8, "{}", h.max_defect);
        let ray = xi.ray(&tree);
        for n in 0..4 {
            let x = ray[n];
            let child = ray[n + 1];
            let row = &h.rows.iter().find(|r| r.0 == x).unwrap().1;
            let p_h = row.iter().find(|e| e.0 == child).unwrap().1;
            assert!(p_h > table.transition(x, child));
        }
    }

    #[test]
    fn fits_need_enough_samples() {
        let s = KernelSample {
            source: "a".into(),
            target: "b".into(),
            gromov_product: HalfInt(0),
            geometric_distance: 1.0,
            value: 1.0,
            level_used: 1,
            converged: true,
        };
        assert!(matches!(
            fit_exponents(&vec![s.clone(); 10], Abscissa::Distance),
            Err(Error::InsufficientSamples { .. })
        ));
        let samples: Vec<KernelSample> = (0..40)
            .map(|i| KernelSample { geometric_distance: 1.0 + i as f64, value: 2.0, ..s.clone() })
            .collect();
        let f = fit_exponents(&samples, Abscissa::Distance).unwrap();
        assert!(f.slope.abs() < 1e-12);
    }
}
