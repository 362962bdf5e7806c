//! The identity suite: every exact identity of the walk, checked over one
//! configuration, plus informational fits.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::augtree::{AugmentedTree, BuildOptions};
use crate::boundary::hitting_distribution;
use crate::chain::{
    admissibility, ancona_check, isoperimetric_check, return_ratio, ChainSpec, ConductanceTable, SolverKind,
    TruncatedSolve, DEFAULT_ADMISSIBLE_BAND,
};
use crate::error::{Error, Result};
use crate::ifs::{IfsSystem, Weights};
use crate::kernels::{beta, fit_exponents, sample_naim_boundary, Abscissa, KernelEvaluator, BOUNDARY_KERNEL_TOL};
use crate::metric::horizontal_geodesic_bound;
use crate::par::Exec;

/// Deliberate corruption for negative controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fault {
    /// Multiplies `c(ϑ, first child)` by `factor` on the root side only.
    AsymmetricConductance { factor: f64 },
}

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub ifs: IfsSystem,
    pub weights: Weights,
    pub lambda: f64,
    pub gamma: f64,
    pub levels: usize,
    pub seed: u64,
    /// Monte Carlo paths and random sets.
    pub samples: usize,
    pub tol: f64,
    pub fault: Option<Fault>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Info,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckLine {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

impl CheckLine {
    fn required(name: &'static str, ok: bool, detail: String) -> Self {
        Self { name, status: if ok { Status::Pass } else { Status::Fail }, detail }
    }

    fn info(name: &'static str, detail: String) -> Self {
        Self { name, status: Status::Info, detail }
    }
}

impl fmt::Display for CheckLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Info => "INFO",
        };
        write!(f, "{tag} {} {}", self.name, self.detail)
    }
}

/// Whether every required line passed.
pub fn all_passed(lines: &[CheckLine]) -> bool {
    lines.iter().all(|l| l.status != Status::Fail)
}

/// Deepest truncation used by the exact checks.
const EXACT_DEPTH: usize = 6;

pub fn run_suite(cfg: &SuiteConfig, exec: Exec) -> Result<Vec<CheckLine>> {
    if cfg.levels < 3 {
        return Err(Error::Config("the suite needs at least 3 levels".into()));
    }
    let mut opts = BuildOptions::new(cfg.gamma, cfg.levels);
    opts.exec = exec;
    let tree = AugmentedTree::build(&cfg.ifs, &cfg.weights, &opts)?;
    let mut table = ConductanceTable::new(&tree, &ChainSpec::new(cfg.lambda, cfg.weights.clone())?)?;
    if let Some(Fault::AsymmetricConductance { factor }) = cfg.fault {
        let child = tree.children(tree.root()).start;
        table.perturb(&tree, tree.root(), child, factor)?;
    }
    let lambda = cfg.lambda;
    let mut out = Vec::new();

    let violations = tree.parent_law_violations();
    out.push(CheckLine::required("parent_law", violations.is_empty(), format!("violations={}", violations.len())));

    let defect = table.reversibility_defect();
    out.push(CheckLine::required("reversibility", defect <= 1e-12, format!("defect={defect:.3e}")));

    let mut worst = 0.0f64;
    for x in 1..tree.level(cfg.levels - 1).end {
        worst = worst.max((return_ratio(&tree, &table, x)? - lambda).abs());
    }
    out.push(CheckLine::required("return_ratio", worst <= 1e-9, format!("max|ratio−λ|={worst:.3e}")));

    let adm = admissibility(&tree, &cfg.weights, DEFAULT_ADMISSIBLE_BAND);
    out.push(CheckLine::required(
        "admissibility",
        adm.admissible,
        format!("horizontal weight ratios in [{:.4}, {:.4}]", adm.min_ratio, adm.max_ratio),
    ));

    match solver_checks(&tree, &table, cfg, exec) {
        Ok(lines) => out.extend(lines),
        // Corrupted chains may not even factorize; that is a failure, not an abort.
        Err(e) => out.push(CheckLine::required("solver", false, e.to_string())),
    }
    Ok(out)
}

fn solver_checks(tree: &AugmentedTree, table: &ConductanceTable, cfg: &SuiteConfig, exec: Exec) -> Result<Vec<CheckLine>> {
    let lambda = cfg.lambda;
    let mut out = Vec::new();
    let top = cfg.levels.min(EXACT_DEPTH);
    let (mut f_err, mut g_err, mut tv, mut rows) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for m in 1..=top {
        let solve = TruncatedSolve::new(tree, table, m, SolverKind::Auto)?;
        let lm = lambda.powi(m as i32);
        let f = solve.hitting_root()?;
        for (x, v) in f.iter().enumerate() {
            let expect = (lambda.powi(tree.depth(x) as i32) - lm) / (1.0 - lm);
            f_err = f_err.max((v - expect).abs());
        }
        g_err = g_err.max((solve.green_root()? - (1.0 - lm) / (1.0 - lambda)).abs());
        let absorbed = solve.absorption_row(tree.root())?;
        let dist: f64 = tree.level(m).zip(&absorbed).map(|(y, a)| (a - tree.word(y).weight).abs()).sum();
        tv = tv.max(0.5 * dist);
        let ones = vec![1.0; tree.level(m).len()];
        let ext = solve.harmonic_extension(&ones)?;
        rows = rows.max(ext.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max));
    }
    out.push(CheckLine::required("hitting_root_formula", f_err <= 1e-9, format!("m≤{top} max_err={f_err:.3e}")));
    out.push(CheckLine::required("green_root_formula", g_err <= 1e-9, format!("m≤{top} max_err={g_err:.3e}")));
    out.push(CheckLine::required("absorption_is_cell_mass", tv <= 1e-9, format!("m≤{top} max_tv={tv:.3e}")));
    out.push(CheckLine::required("absorption_row_sums", rows <= 1e-10, format!("m≤{top} max_dev={rows:.3e}")));

    let n_sets = cfg.samples.clamp(500, 5_000);
    let iso = isoperimetric_check(tree, table, n_sets, cfg.seed, exec);
    out.push(CheckLine::required(
        "isoperimetry",
        iso.violations == 0,
        format!(
            "sets={} worst={:.4} bound={:.4} violations={}",
            iso.n_sets, iso.worst_subtree_ratio, iso.subtree_bound, iso.violations
        ),
    ));

    let triple_level = 4.min(cfg.levels - 2);
    let solve = TruncatedSolve::new(tree, table, cfg.levels, SolverKind::Auto)?;
    let anc = ancona_check(&solve, triple_level, 1e-12, exec)?;
    out.push(CheckLine::required(
        "ancona_lower_bound",
        anc.violations == 0,
        format!(
            "triples={} violations={} upper_constant={:.4}",
            anc.triples, anc.violations, anc.upper_constant
        ),
    ));

    let level = 2.min(cfg.levels);
    let hit = hitting_distribution(tree, table, level, Some((cfg.samples, cfg.seed)), exec)?;
    let mc = hit.mc.as_ref().expect("requested");
    out.push(CheckLine::required(
        "monte_carlo_hitting",
        mc.max_z <= 4.0 && mc.capped == 0,
        format!("level={level} paths={} max_z={:.3}", mc.n_paths, mc.max_z),
    ));

    out.push(edge_set_checks(cfg, exec)?);

    let (bound, _) = horizontal_geodesic_bound(tree, exec);
    out.push(CheckLine::info("horizontal_geodesic_bound", format!("M={bound}")));
    if cfg.fault.is_none() {
        out.push(exponent_line(tree, table, bound, cfg, exec));
    }
    Ok(out)
}

fn edge_set(tree: &AugmentedTree, upto: usize) -> BTreeSet<(usize, usize)> {
    tree.horizontal_edges().filter(|&(x, _)| tree.depth(x) <= upto).collect()
}

/// Edge sets grow with γ, and the pruned construction matches the
/// exhaustive one at shallow levels.
fn edge_set_checks(cfg: &SuiteConfig, exec: Exec) -> Result<CheckLine> {
    const DEPTH: usize = 3;
    let build = |gamma: f64, exhaustive: bool| {
        let mut o = BuildOptions::new(gamma, DEPTH);
        o.exhaustive = exhaustive;
        o.exec = exec;
        AugmentedTree::build(&cfg.ifs, &cfg.weights, &o)
    };
    let base = build(cfg.gamma, false)?;
    let exhaustive = build(cfg.gamma, true)?;
    let same = edge_set(&base, DEPTH) == edge_set(&exhaustive, DEPTH);
    let mut monotone = true;
    let mut previous: Option<BTreeSet<(usize, usize)>> = None;
    for factor in [0.5, 1.0, 2.0] {
        match build(cfg.gamma * factor, false) {
            Ok(t) => {
                let e = edge_set(&t, DEPTH);
                if let Some(p) = &previous {
                    monotone &= p.is_subset(&e);
                }
                previous = Some(e);
            }
            // A γ on a decision boundary is skipped, not failed.
            Err(Error::UndecidableEdge { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(CheckLine::required(
        "edge_sets",
        same && monotone,
        format!("pruned_matches_exhaustive={same} gamma_monotone={monotone}"),
    ))
}

fn exponent_line(tree: &AugmentedTree, table: &ConductanceTable, bound: usize, cfg: &SuiteConfig, exec: Exec) -> CheckLine {
    let expected = -(cfg.ifs.hausdorff_dim() + beta(cfg.lambda, cfg.ifs.min_ratio()));
    let fit = KernelEvaluator::new(tree, table, cfg.levels).and_then(|eval| {
        let samples: Vec<_> = sample_naim_boundary(&eval, 200, cfg.levels / 2, cfg.tol.max(BOUNDARY_KERNEL_TOL), bound, cfg.seed, exec)
            .into_iter()
            .filter_map(|s| s.ok())
            .collect();
        let converged = samples.iter().filter(|s| s.converged).count();
        fit_exponents(&samples, Abscissa::Distance).map(|f| (f, converged))
    });
    match fit {
        Ok((f, converged)) => CheckLine::info(
            "naim_exponent",
            format!("slope={:.4} expected={expected:.4} converged={converged}", f.slope),
        ),
        Err(e) => CheckLine::info("naim_exponent", format!("warning: {e}")),
    }
}
