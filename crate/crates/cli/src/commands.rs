use std::path::Path;

use anyhow::Context;
use clap::{Args, Subcommand};
use fractalwalk::augtree::{AugmentedTree, BuildOptions};
use fractalwalk::boundary::hitting_distribution;
use fractalwalk::chain::{monte_carlo, ChainSpec, ConductanceTable, SolverKind, StopRule, TruncatedSolve};
use fractalwalk::energy::{douglas_check, energy_trace_csv, looks_divergent, BoundaryFunction, EnergyReport};
use fractalwalk::export::{csv_table, num, Format, Manifest};
use fractalwalk::ifs::frontier_count_bounds;
use fractalwalk::kernels::{beta, fit_exponents, sample_naim_boundary, Abscissa, KernelEvaluator};
use fractalwalk::metric::{delta_estimate, horizontal_geodesic_bound};
use fractalwalk::par::Exec;
use fractalwalk::verify::{all_passed, run_suite, Fault, SuiteConfig};
use serde::Serialize;
use serde_json::json;

use crate::config::Resolved;

const STEP_CAP: usize = 1_000_000;

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the augmented tree and report degrees, M and δ̂.
    Build(BuildArgs),
    /// Exact truncated hitting and Green tables.
    Solve(SolveArgs),
    /// Monte Carlo walks against the exact absorption law.
    Walk(WalkArgs),
    /// Θ on sampled boundary pairs and the exponent fit.
    Kernels(KernelArgs),
    /// Hitting distribution against the cell masses.
    Hitting(HittingArgs),
    /// Graph, boundary and Besov energies over refinements.
    Energy(EnergyArgs),
    /// The identity suite; exits 1 if any required check fails.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Sampled triples for the δ estimate.
    #[arg(long, default_value_t = 500)]
    pub delta_samples: usize,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Truncation level; defaults to the tree depth.
    #[arg(long)]
    pub level: Option<usize>,
}

#[derive(Debug, Args)]
pub struct WalkArgs {
    /// Start vertex as a word; defaults to the root.
    #[arg(long, default_value = "root")]
    pub start: String,
    #[arg(long, default_value_t = 2)]
    pub stop_level: usize,
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    #[arg(long, default_value_t = 300)]
    pub pairs: usize,
    /// Largest shared prefix of a sampled pair; defaults to half the depth.
    #[arg(long)]
    pub max_common: Option<usize>,
}

#[derive(Debug, Args)]
pub struct HittingArgs {
    #[arg(long, default_value_t = 2)]
    pub level: usize,
    /// Skip the Monte Carlo column.
    #[arg(long)]
    pub no_mc: bool,
}

#[derive(Debug, Args)]
pub struct EnergyArgs {
    /// `coordinate`, `constant` or `indicator:<word>`.
    #[arg(long, default_value = "coordinate")]
    pub function: String,
    /// Level of the Θ quadrature.
    #[arg(long, default_value_t = 3)]
    pub quad_level: usize,
    /// First data level of the refinement scan.
    #[arg(long)]
    pub from: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Test hook: corrupt one conductance asymmetrically by this factor.
    #[arg(long, hide = true)]
    pub inject_fault: Option<f64>,
}

/// A verification run that completed but failed a required check.
#[derive(Debug)]
pub struct VerifyFailed;

impl std::fmt::Display for VerifyFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("verification failed")
    }
}

impl std::error::Error for VerifyFailed {}

pub fn run(command: &Command, r: &Resolved) -> anyhow::Result<()> {
    match command {
        Command::Build(a) => build(r, a),
        Command::Solve(a) => solve(r, a),
        Command::Walk(a) => walk(r, a),
        Command::Kernels(a) => kernels(r, a),
        Command::Hitting(a) => hitting(r, a),
        Command::Energy(a) => energy(r, a),
        Command::Verify(a) => verify(r, a),
    }
}

fn write(dir: &Path, name: &str, bytes: impl AsRef<[u8]>) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn json_doc<T: Serialize>(manifest: &Manifest, body: &T) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(&json!({ "manifest": manifest, "result": body }))?;
    s.push('\n');
    Ok(s)
}

fn tree(r: &Resolved) -> anyhow::Result<AugmentedTree> {
    Ok(AugmentedTree::build(&r.ifs, &r.weights, &BuildOptions::new(r.gamma, r.config.levels))?)
}

fn table(r: &Resolved, tree: &AugmentedTree) -> anyhow::Result<ConductanceTable> {
    Ok(ConductanceTable::new(tree, &ChainSpec::new(r.lambda, r.weights.clone())?)?)
}

fn build(r: &Resolved, a: &BuildArgs) -> anyhow::Result<()> {
    let t = tree(r)?;
    let manifest = r.manifest("build");
    let format: Format = r.config.format.parse()?;
    let ext = match format {
        Format::Dot => "dot",
        Format::Json => "json",
        Format::Csv => "csv",
    };
    write(r.out_dir(), &format!("tree.{ext}"), t.export(format, &manifest)?)?;
    let (m, per_level) = horizontal_geodesic_bound(&t, Exec::default());
    let delta = delta_estimate(&t, a.delta_samples, r.config.seed, Exec::default());
    let stats = json!({
        "vertices": t.len(),
        "level_sizes": (0..=t.max_level()).map(|n| t.level(n).len()).collect::<Vec<_>>(),
        "frontier_bounds": (0..=t.max_level()).map(|n| frontier_count_bounds(&r.ifs, n)).collect::<Vec<_>>(),
        "horizontal_edges": (0..=t.max_level()).map(|n| t.horizontal_edge_count(n)).collect::<Vec<_>>(),
        "degrees": t.degree_stats(),
        "horizontal_geodesic_bound": m,
        "horizontal_geodesic_bound_per_level": per_level,
        "delta_estimate": delta.to_string(),
    });
    write(r.out_dir(), "stats.json", json_doc(&manifest, &stats)?)?;
    println!("vertices {}", t.len());
    println!("max_degree {}", t.degree_stats().max_degree);
    println!("M {m}");
    println!("delta {delta}");
    Ok(())
}

fn solve(r: &Resolved, a: &SolveArgs) -> anyhow::Result<()> {
    let t = tree(r)?;
    let c = table(r, &t)?;
    let level = a.level.unwrap_or(t.max_level());
    let s = TruncatedSolve::new(&t, &c, level, SolverKind::Auto)?;
    let f = s.hitting_root()?;
    let g = s.green_column(t.root())?;
    let rows: Vec<Vec<String>> = (0..t.level(level).end)
        .map(|x| {
            let green = g.get(x).copied().unwrap_or(0.0);
            vec![t.word(x).to_string(), t.depth(x).to_string(), num(f[x]), num(green)]
        })
        .collect();
    let mut manifest = r.manifest("solve");
    manifest.insert("truncation", level);
    write(r.out_dir(), "solve.csv", csv_table(&manifest, &["word", "level", "hit_root", "green_root"], &rows))?;
    let absorbed = s.absorption_row(t.root())?;
    let rows: Vec<Vec<String>> = t
        .level(level)
        .zip(&absorbed)
        .map(|(y, p)| vec![t.word(y).to_string(), num(*p), num(t.word(y).weight)])
        .collect();
    write(r.out_dir(), "absorption.csv", csv_table(&manifest, &["word", "exact", "target"], &rows))?;
    println!("G(root,root) {}", num(s.green_root()?));
    Ok(())
}

fn walk(r: &Resolved, a: &WalkArgs) -> anyhow::Result<()> {
    let t = tree(r)?;
    let c = table(r, &t)?;
    let start = t.lookup(&a.start)?;
    let s = TruncatedSolve::new(&t, &c, a.stop_level, SolverKind::Auto)?;
    let exact = s.absorption_row(start)?;
    let stats = monte_carlo(
        &t,
        &c,
        start,
        StopRule::HitLevel(a.stop_level),
        r.config.samples,
        r.config.seed,
        STEP_CAP,
        Exec::default(),
    )?;
    let rows: Vec<Vec<String>> = t
        .level(a.stop_level)
        .zip(&exact)
        .map(|(y, &p)| {
            vec![
                t.word(y).to_string(),
                num(stats.frequency(y)),
                num(p),
                num(stats.std_error(p)),
                num(stats.z_score(y, p)),
            ]
        })
        .collect();
    let mut manifest = r.manifest("walk");
    manifest.insert("start", t.word(start));
    manifest.insert("stop_level", a.stop_level);
    write(r.out_dir(), "walk.csv", csv_table(&manifest, &["word", "frequency", "exact", "stderr", "z"], &rows))?;
    println!("paths {} capped {} mean_steps {:.3}", stats.n_paths, stats.capped, stats.total_steps as f64 / stats.n_paths.max(1) as f64);
    Ok(())
}

fn kernels(r: &Resolved, a: &KernelArgs) -> anyhow::Result<()> {
    let t = tree(r)?;
    let c = table(r, &t)?;
    let (bound, _) = horizontal_geodesic_bound(&t, Exec::default());
    let eval = KernelEvaluator::new(&t, &c, t.max_level())?;
    let max_common = a.max_common.unwrap_or(t.max_level() / 2);
    let samples = sample_naim_boundary(&eval, a.pairs, max_common, r.config.tol, bound, r.config.seed, Exec::default());
    let mut manifest = r.manifest("kernels");
    manifest.insert("pairs", a.pairs);
    manifest.insert("max_common", max_common);
    let mut rows = Vec::new();
    let mut ok = Vec::new();
    let mut unsettled = 0;
    for s in samples {
        match s {
            Ok(s) => {
                rows.push(vec![
                    s.source.clone(),
                    s.target.clone(),
                    s.gromov_product.to_string(),
                    num(s.geometric_distance),
                    num(s.value),
                    s.level_used.to_string(),
                    s.converged.to_string(),
                ]);
                ok.push(s);
            }
            Err(_) => unsettled += 1,
        }
    }
    if unsettled > 0 {
        eprintln!("warning: {unsettled} pairs settle too close to the truncation level and were dropped");
    }
    let header = ["source", "target", "gromov_product", "distance", "theta", "level_used", "converged"];
    write(r.out_dir(), "kernels.csv", csv_table(&manifest, &header, &rows))?;
    let expected = -(r.ifs.hausdorff_dim() + beta(r.lambda, r.ifs.min_ratio()));
    let converged = ok.iter().filter(|s| s.converged).count();
    let fit = fit_exponents(&ok, Abscissa::Distance)?;
    let body = json!({
        "slope": fit.slope,
        "intercept": fit.intercept,
        "residual_band": fit.residual_band(),
        "expected_slope": expected,
        "converged": converged,
        "samples": ok.len(),
    });
    write(r.out_dir(), "fit.json", json_doc(&manifest, &body)?)?;
    println!("slope {:.4} expected {:.4} converged {converged}/{}", fit.slope, expected, ok.len());
    Ok(())
}

fn hitting(r: &Resolved, a: &HittingArgs) -> anyhow::Result<()> {
    let t = tree(r)?;
    let c = table(r, &t)?;
    let mc = (!a.no_mc).then_some((r.config.samples, r.config.seed));
    let report = hitting_distribution(&t, &c, a.level, mc, Exec::default())?;
    let mut manifest = r.manifest("hitting");
    manifest.insert("level", a.level);
    write(r.out_dir(), "hitting.csv", report.to_csv(&manifest))?;
    let summary = json!({
        "tv_distance": report.tv_distance,
        "touching_pairs": report.touching_pairs,
        "max_z": report.mc.as_ref().map(|m| m.max_z),
    });
    write(r.out_dir(), "hitting.json", json_doc(&manifest, &summary)?)?;
    println!("tv {}", num(report.tv_distance));
    Ok(())
}

fn boundary_function(t: &AugmentedTree, spec: &str, level: usize) -> anyhow::Result<BoundaryFunction> {
    Ok(match spec {
        "coordinate" => BoundaryFunction::sample(t, level, "coordinate", |p| p[0])?,
        "constant" => BoundaryFunction::constant(t, level, 1.0)?,
        other => match other.strip_prefix("indicator:") {
            Some(word) => BoundaryFunction::indicator(t, level, t.lookup(word)?)?,
            None => return Err(fractalwalk::error::Error::Config(format!("unknown function {other:?}")).into()),
        },
    })
}

fn energy(r: &Resolved, a: &EnergyArgs) -> anyhow::Result<()> {
    let t = tree(r)?;
    let c = table(r, &t)?;
    let from = a.from.unwrap_or(a.quad_level + 2).max(a.quad_level + 2);
    if from > t.max_level() {
        return Err(fractalwalk::error::Error::Config(format!(
            "the scan starts at level {from}, beyond the tree depth {}",
            t.max_level()
        ))
        .into());
    }
    let mut reports: Vec<EnergyReport> = Vec::new();
    for m in from..=t.max_level() {
        let u = boundary_function(&t, &a.function, m)?;
        reports.push(douglas_check(&t, &c, &u, a.quad_level, r.config.tol, Exec::default())?);
    }
    let mut manifest = r.manifest("energy");
    manifest.insert("function", &a.function);
    write(r.out_dir(), "energy.csv", energy_trace_csv(&manifest, &reports))?;
    let series = |f: fn(&EnergyReport) -> f64| reports.iter().map(f).collect::<Vec<_>>();
    let body = json!({
        "reports": reports,
        "graph_divergent": looks_divergent(&series(|r| r.graph_energy)),
        "besov_divergent": looks_divergent(&series(|r| r.besov)),
    });
    write(r.out_dir(), "energy.json", json_doc(&manifest, &body)?)?;
    for rep in &reports {
        println!(
            "m={} graph={} boundary={} besov={}",
            rep.level,
            num(rep.graph_energy),
            num(rep.boundary_energy),
            num(rep.besov)
        );
    }
    Ok(())
}

fn verify(r: &Resolved, a: &VerifyArgs) -> anyhow::Result<()> {
    let cfg = SuiteConfig {
        ifs: r.ifs.clone(),
        weights: r.weights.clone(),
        lambda: r.lambda,
        gamma: r.gamma,
        levels: r.config.levels,
        seed: r.config.seed,
        samples: r.config.samples,
        tol: r.config.tol,
        fault: a.inject_fault.map(|factor| Fault::AsymmetricConductance { factor }),
    };
    let lines = run_suite(&cfg, Exec::default())?;
    let manifest = r.manifest("verify");
    let mut text = manifest.comment_block("#");
    for line in &lines {
        println!("{line}");
        text.push_str(&serde_json::to_string(line)?);
        text.push('\n');
    }
    write(r.out_dir(), "verify.jsonl", text)?;
    if all_passed(&lines) {
        Ok(())
    } else {
        Err(VerifyFailed.into())
    }
}
