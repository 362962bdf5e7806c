//! Reversible λ-walks on the augmented tree: conductances, exact truncated
//! solves, Monte Carlo simulation and structural checks.

mod checks;
mod conductance;
mod montecarlo;
mod solve;

pub use checks::{
    admissibility, ancona_check, isoperimetric_check, return_ratio, AdmissibilityReport, AnconaReport, IsoperimetryReport,
};
pub use conductance::ConductanceTable;
pub use montecarlo::{monte_carlo, path_rng, McStats, StopRule};
pub use solve::{f_converged, Converged, SolverKind, TruncatedSolve};

use crate::error::{Error, Result};
use crate::ifs::Weights;

/// How horizontal conductances are derived from the vertical ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HorizontalRule {
    /// `c(x, y) = √(c(x, x⁻)·c(y, y⁻))`.
    #[default]
    GeometricMean,
}

/// Default comparability band for `p_x / p_y` across horizontal edges.
pub const DEFAULT_ADMISSIBLE_BAND: (f64, f64) = (1.0 / 16.0, 16.0);

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    pub lambda: f64,
    pub weights: Weights,
    pub horizontal_rule: HorizontalRule,
    pub admissible_band: (f64, f64),
}

impl ChainSpec {
    /// A transient walk: `λ ∈ (0, 1)`.
    pub fn new(lambda: f64, weights: Weights) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::Config(format!("lambda must lie in (0,1), got {lambda}")));
        }
        Ok(Self::unchecked(lambda, weights))
    }

    /// Any positive `λ`, including the recurrent regime `λ ≥ 1`; only the
    /// exact truncated solves are meaningful there.
    pub fn any_lambda(lambda: f64, weights: Weights) -> Result<Self> {
        if lambda <= 0.0 || !lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self::unchecked(lambda, weights))
    }

    fn unchecked(lambda: f64, weights: Weights) -> Self {
        Self { lambda, weights, horizontal_rule: HorizontalRule::default(), admissible_band: DEFAULT_ADMISSIBLE_BAND }
    }
}
