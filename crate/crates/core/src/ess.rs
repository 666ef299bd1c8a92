//! Effective sample size: the scalar baseline, the functional version for a
//! trace-covariogram model, and the plug-in pipeline from raw curves.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::SpatialFunctionalDataset;
use crate::error::{FessError, Result};
use crate::variogram::{empirical_trace_variogram, fit_model, CovFamily, FitOptions, LagBins, TraceCovModel};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EssReport {
    pub n: usize,
    pub ess: f64,
    /// `ess / n`.
    pub ratio: f64,
    /// Smallest whole number of curves at least as large as `ess`.
    pub recommended_subsample: usize,
    pub model: TraceCovModel,
    pub warnings: Vec<String>,
}

impl EssReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n": self.n,
            "ess": self.ess,
            "ratio": self.ratio,
            "recommended_subsample": self.recommended_subsample,
            "model": self.model,
            "warnings": self.warnings,
        })
    }
}

/// `n^2 / (1' R 1)` for a correlation matrix `R`.
pub fn ess_scalar(r: &DMatrix<f64>) -> Result<f64> {
    if !r.is_square() || r.nrows() == 0 {
        return Err(FessError::Invalid(format!(
            "correlation matrix must be square and non-empty, got {}x{}",
            r.nrows(),
            r.ncols()
        )));
    }
    let n = r.nrows();
    for i in 0..n {
        if r[(i, i)] != 1.0 {
            return Err(FessError::Invalid(format!(
                "diagonal entry {i} is {}, not 1",
                r[(i, i)]
            )));
        }
        for j in 0..i {
            if r[(i, j)] != r[(j, i)] {
                return Err(FessError::Invalid(format!("matrix not symmetric at ({i}, {j})")));
            }
        }
    }
    let total = r.iter().sum::<f64>();
    if !(total > 0.0) {
        return Err(FessError::Inadmissible(format!("1'R1 = {total} is not positive")));
    }
    let n = n as f64;
    Ok(n * n / total)
}

/// Sum of pairwise correlations `sum_{i<j} r(d_ij)`, reduced in row order.
fn off_diagonal_correlation(d: &DMatrix<f64>, model: &TraceCovModel) -> f64 {
    let n = d.nrows();
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| (i + 1..n).map(|j| model.correlation(d[(i, j)])).sum())
        .collect();
    rows.iter().sum()
}

/// Functional ESS for sites with distance matrix `d` under `model`.
///
/// Evaluated as `n^2 / (n + 2 sum_{i<j} rho_ij)` with
/// `rho = sigma_tr(h) / sigma_tr(0)`, which equals
/// `n^2 sigma_tr(0) / sum_ij sigma_tr(d_ij)` and keeps the `[1, n]` bounds
/// exact in floating point for non-negative models.
pub fn ess_functional(d: &DMatrix<f64>, model: &TraceCovModel) -> Result<EssReport> {
    if !d.is_square() || d.nrows() == 0 {
        return Err(FessError::Invalid(
            "distance matrix must be square and non-empty".into(),
        ));
    }
    let n = d.nrows();
    let nf = n as f64;
    let denom = nf + 2.0 * off_diagonal_correlation(d, model);
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(FessError::Inadmissible(format!(
            "double sum of the trace-covariogram is {denom} (in units of sigma_tr(0))"
        )));
    }
    let ess = nf * nf / denom;
    let mut warnings = Vec::new();
    if ess > nf {
        warnings.push(format!(
            "ess {ess} exceeds n = {n}: the covariogram takes negative values"
        ));
    }
    Ok(EssReport {
        n,
        ess,
        ratio: ess / nf,
        recommended_subsample: ess.ceil() as usize,
        model: *model,
        warnings,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EssOptions {
    pub fit: FitOptions,
}

/// Empirical trace-variogram, least-squares model fit, then functional ESS.
pub fn ess_plugin(
    d: &SpatialFunctionalDataset,
    family: CovFamily,
    bins: &LagBins,
    opts: &EssOptions,
) -> Result<EssReport> {
    let ev = empirical_trace_variogram(d, bins)?;
    let fit = fit_model(&ev, family, &opts.fit)?;
    let mut report = ess_functional(&d.distances(), &fit.model)?;
    let mut warnings = fit.warnings;
    warnings.append(&mut report.warnings);
    report.warnings = warnings;
    Ok(report)
}
