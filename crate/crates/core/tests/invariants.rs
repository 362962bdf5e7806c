mod common;

use fractalwalk::augtree::{AugmentedTree, BuildOptions};
use fractalwalk::chain::{ChainSpec, ConductanceTable, SolverKind, TruncatedSolve};
use fractalwalk::energy::{besov_seminorm, graph_energy, harmonic_defect, harmonic_extension, BoundaryFunction};
use fractalwalk::ifs::{frontier_count_bounds, hausdorff_dim, level_frontier, IfsSystem, Similitude, Weights};
use fractalwalk::kernels::KernelEvaluator;
use fractalwalk::metric::{canonical_geodesic, graph_distance, gromov_product};
use proptest::prelude::*;

fn line_ifs(ratios: &[f64]) -> IfsSystem {
    // Maps packed left to right with gaps, so cells never overlap.
    let total: f64 = ratios.iter().sum();
    let gap = (1.0 - total) / (ratios.len() - 1) as f64;
    let mut at = 0.0;
    let maps = ratios
        .iter()
        .map(|&r| {
            let m = Similitude::scaling(r, vec![at]).unwrap();
            at += r + gap;
            m
        })
        .collect();
    IfsSystem::new("line", maps, None).unwrap()
}

fn ratios() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.1f64..0.45, 2..4).prop_filter("room for gaps", |r| r.iter().sum::<f64>() < 0.95)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dimension_solves_moran_equation(r in ratios()) {
        let a = hausdorff_dim(&r).unwrap();
        let s: f64 = r.iter().map(|x| x.powf(a)).sum();
        prop_assert!((s - 1.0).abs() < 1e-10);
    }

    #[test]
    fn frontier_is_a_partition(r in ratios(), n in 0usize..5) {
        let ifs = line_ifs(&r);
        let w = Weights::natural(&ifs);
        let words = level_frontier(&ifs, &w, n);
        let mass: f64 = words.iter().map(|w| w.weight).sum();
        prop_assert!((mass - 1.0).abs() < 1e-10);
        let rn = ifs.min_ratio().powi(n as i32);
        for word in &words {
            prop_assert!(word.ratio <= rn * (1.0 + 1e-12));
            prop_assert!(word.ratio > rn * ifs.min_ratio() * (1.0 - 1e-12));
        }
        let (lo, hi) = frontier_count_bounds(&ifs, n);
        prop_assert!(lo <= words.len() as f64 + 1e-9 && words.len() as f64 <= hi + 1e-9);
    }

    #[test]
    fn relative_transform_composes_back(a in 0.1f64..0.9, b in 0.1f64..0.9, s in -2.0f64..2.0, t in -2.0f64..2.0, p in -3.0f64..3.0) {
        let f = Similitude::scaling(a, vec![s]).unwrap();
        let g = Similitude::scaling(b, vec![t]).unwrap();
        let rel = f.relative(&g);
        let back = f.compose(&rel).apply(&[p])[0];
        prop_assert!((back - g.apply(&[p])[0]).abs() < 1e-9);
    }

    #[test]
    fn gromov_products_are_consistent(i in 0usize..364, j in 0usize..364) {
        let tree = common::tree("gasket2", 5);
        let (x, y) = (i % tree.up_to_level(5).end, j % tree.up_to_level(5).end);
        let g = canonical_geodesic(&tree, x, y);
        prop_assert_eq!(g.len(), graph_distance(&tree, x, y));
        let gp = gromov_product(&tree, x, y);
        prop_assert_eq!(gp, gromov_product(&tree, y, x));
        prop_assert!(gp.twice() >= 0);
        prop_assert!(gp.twice() <= 2 * tree.depth(x).min(tree.depth(y)) as i64);
        for w in g.path.windows(2) {
            prop_assert!(tree.neighbors(w[0]).any(|z| z == w[1]));
        }
    }

    #[test]
    fn hitting_root_formula_for_any_lambda(lambda in 0.05f64..0.95) {
        let tree = common::tree("gasket2", 4);
        let table = ConductanceTable::new(&tree, &ChainSpec::new(lambda, tree.weights().clone()).unwrap()).unwrap();
        let solve = TruncatedSolve::new(&tree, &table, 4, SolverKind::Auto).unwrap();
        let f = solve.hitting_root().unwrap();
        let l4 = lambda.powi(4);
        for (x, v) in f.iter().enumerate() {
            let expect = (lambda.powi(tree.depth(x) as i32) - l4) / (1.0 - l4);
            prop_assert!((v - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn energies_are_quadratic(seed in prop::collection::vec(-1.0f64..1.0, 16), other in prop::collection::vec(-1.0f64..1.0, 16), t in -3.0f64..3.0) {
        let tree = common::tree("interval", 5);
        let table = common::chain(&tree, 0.5);
        let u = BoundaryFunction::new(&tree, 4, seed, "u").unwrap();
        let v = BoundaryFunction::new(&tree, 4, other, "v").unwrap();
        let graph = |f: &BoundaryFunction| graph_energy(&tree, &table, &harmonic_extension(&tree, &table, f).unwrap()).unwrap();
        let besov = |f: &BoundaryFunction| besov_seminorm(&tree, f, 0.5).unwrap();
        let scaled = u.combine(t, &v, 0.0).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-12);
        prop_assert!(close(graph(&scaled), t * t * graph(&u)));
        prop_assert!(close(besov(&scaled), t * t * besov(&u)));
        let sum = u.combine(1.0, &v, 1.0).unwrap();
        let diff = u.combine(1.0, &v, -1.0).unwrap();
        for e in [&graph as &dyn Fn(&BoundaryFunction) -> f64, &besov] {
            prop_assert!(close(e(&sum) + e(&diff), 2.0 * e(&u) + 2.0 * e(&v)));
        }
    }

    #[test]
    fn harmonic_extension_obeys_maximum_principle(values in prop::collection::vec(-5.0f64..5.0, 27)) {
        let tree = common::tree("gasket2", 4);
        let table = common::chain(&tree, 1.0 / 3.0);
        let u = BoundaryFunction::new(&tree, 3, values.clone(), "u").unwrap();
        let f = harmonic_extension(&tree, &table, &u).unwrap();
        let (lo, hi) = values.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        prop_assert!(f.iter().all(|&v| v >= lo - 1e-9 && v <= hi + 1e-9));
        prop_assert!(harmonic_defect(&tree, &table, &f) < 1e-9);
    }

    #[test]
    fn harmonic_extension_minimizes_energy(values in prop::collection::vec(-1.0f64..1.0, 16), k in 0usize..15, eps in 0.01f64..0.5) {
        let tree = common::tree("interval", 5);
        let table = common::chain(&tree, 0.5);
        let u = BoundaryFunction::new(&tree, 4, values, "u").unwrap();
        let mut f = harmonic_extension(&tree, &table, &u).unwrap();
        let base = graph_energy(&tree, &table, &f).unwrap();
        f[k] += eps;
        prop_assert!(graph_energy(&tree, &table, &f).unwrap() > base);
    }
}

#[test]
fn theta_is_symmetric() {
    let tree = common::tree("gasket2", 6);
    let table = common::chain(&tree, 1.0 / 3.0);
    let eval = KernelEvaluator::new(&tree, &table, 6).unwrap();
    let xs: Vec<usize> = (1..tree.up_to_level(3).end).collect();
    for &x in &xs {
        let col = eval.theta_column(x).unwrap();
        for &y in &xs {
            let back = eval.theta(y, x).unwrap();
            assert!((col[y] - back).abs() <= 1e-8 * back.abs(), "{x} {y}");
        }
    }
}

#[test]
fn truncated_energy_of_a_fixed_extension_grows_with_depth() {
    let tree = common::tree("interval", 8);
    let table = common::chain(&tree, 0.5);
    let u = BoundaryFunction::sample(&tree, 8, "coordinate", |p| p[0]).unwrap();
    let f = harmonic_extension(&tree, &table, &u).unwrap();
    let mut previous = 0.0;
    for m in 1..=8 {
        let e = graph_energy(&tree, &table, &f[..tree.up_to_level(m).end]).unwrap();
        assert!(e >= previous);
        previous = e;
    }
}

#[test]
fn graph_energy_rejects_partial_levels() {
    let tree = common::tree("interval", 3);
    let table = common::chain(&tree, 0.5);
    assert!(graph_energy(&tree, &table, &[0.0; 5]).is_err());
}

#[test]
fn degree_is_bounded_on_the_carpet() {
    let ifs = IfsSystem::builtin("carpet").unwrap();
    let w = Weights::natural(&ifs);
    let tree = AugmentedTree::build(&ifs, &w, &BuildOptions::new(0.1 * ifs.attractor_diameter(), 3)).unwrap();
    let stats = tree.degree_stats();
    assert!(stats.max_degree <= 1 + 9 + 8, "{stats:?}");
}
