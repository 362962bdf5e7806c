use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fractalwalk::augtree::{default_gamma, AugmentedTree, BuildOptions};
use fractalwalk::chain::{monte_carlo, ChainSpec, ConductanceTable, StopRule};
use fractalwalk::ifs::{IfsSystem, Weights};
use fractalwalk::metric::horizontal_geodesic_bound;
use fractalwalk::par::Exec;

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn gasket(levels: usize, exec: Exec) -> AugmentedTree {
    let ifs = IfsSystem::builtin("gasket2").unwrap();
    let w = Weights::natural(&ifs);
    let mut opts = BuildOptions::new(default_gamma(&ifs), levels);
    opts.exec = exec;
    AugmentedTree::build(&ifs, &w, &opts).unwrap()
}

fn build(c: &mut Criterion) {
    let mut group = c.benchmark_group("build_gasket_l7");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| b.iter(|| gasket(7, exec)));
    }
    group.finish();
}

fn geodesic_bound(c: &mut Criterion) {
    let tree = gasket(7, Exec::Parallel);
    let mut group = c.benchmark_group("horizontal_bound_gasket_l7");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| horizontal_geodesic_bound(&tree, exec))
        });
    }
    group.finish();
}

fn walks(c: &mut Criterion) {
    let tree = gasket(5, Exec::Parallel);
    let w = tree.weights().clone();
    let table = ConductanceTable::new(&tree, &ChainSpec::new(1.0 / 3.0, w).unwrap()).unwrap();
    let mut group = c.benchmark_group("monte_carlo_20k_paths");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| monte_carlo(&tree, &table, 0, StopRule::HitLevel(4), 20_000, 1, 1_000_000, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, build, geodesic_bound, walks);
criterion_main!(benches);
