//! Least-squares line fits for exponent estimates.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Smallest and largest residual; `exp` of these bounds the `≍` constants.
    pub residual_min: f64,
    pub residual_max: f64,
    pub n: usize,
}

impl LineFit {
    pub fn residual_band(&self) -> f64 {
        self.residual_max - self.residual_min
    }
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    let n = xs.len();
    if n != ys.len() || n < 2 {
        return Err(Error::InsufficientSamples { need: 2, got: n.min(ys.len()) });
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Undefined("a slope through samples sharing one abscissa".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in xs.iter().zip(ys) {
        let r = y - (slope * x + intercept);
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Ok(LineFit { slope, intercept, residual_min: lo, residual_max: hi, n })
}
