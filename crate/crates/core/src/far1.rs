//! FAR(1) functional time series and separable Gaussian functional fields.
//!
//! The FAR(1) operator is diagonal in an orthonormal basis: coordinate `k`
//! is a scalar AR(1) with coefficient `lambda_k` and innovation sd `eta_k`.
//! Its trace-covariogram and functional ESS have closed forms that serve as
//! oracles for the estimation pipeline.

use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{EvalGrid, PlanarCoord, SpatialFunctionalDataset};
use crate::error::{FessError, Result};
use crate::variogram::TraceCovModel;

/// Orthonormal system on the grid's span (rescaled from `[0, 1]`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    /// `1, sqrt2 cos(2 pi j t), sqrt2 sin(2 pi j t), ...`
    #[default]
    Fourier,
    /// `1, sqrt2 cos(pi k t), ...`
    Cosine,
}

impl Basis {
    /// `phi_k(u)` on `[0, 1]`, `k` starting at 1.
    pub fn eval_unit(self, k: usize, u: f64) -> f64 {
        use std::f64::consts::{PI, SQRT_2};
        if k == 1 {
            return 1.0;
        }
        match self {
            Basis::Fourier => {
                let j = (k / 2) as f64;
                if k.is_multiple_of(2) {
                    SQRT_2 * (2.0 * PI * j * u).cos()
                } else {
                    SQRT_2 * (2.0 * PI * j * u).sin()
                }
            }
            Basis::Cosine => SQRT_2 * (PI * (k - 1) as f64 * u).cos(),
        }
    }

    /// `phi_k` sampled on `grid`, orthonormal over the grid's span.
    pub fn sample(self, k: usize, grid: &EvalGrid) -> Vec<f64> {
        let (a, span) = (grid.start(), grid.span());
        let norm = span.sqrt().recip();
        grid.points()
            .iter()
            .map(|&t| norm * self.eval_unit(k, (t - a) / span))
            .collect()
    }
}

impl FromStr for Basis {
    type Err = FessError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fourier" => Ok(Basis::Fourier),
            "cosine" => Ok(Basis::Cosine),
            other => Err(FessError::Invalid(format!("unknown basis '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Far1Spec {
    lambdas: Vec<f64>,
    etas: Vec<f64>,
    pub grid: EvalGrid,
    pub basis: Basis,
}

impl Far1Spec {
    pub fn new(lambdas: Vec<f64>, etas: Vec<f64>, grid: EvalGrid, basis: Basis) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(FessError::Invalid("FAR(1) truncation level must be at least 1".into()));
        }
        if lambdas.len() != etas.len() {
            return Err(FessError::Invalid(format!(
                "{} eigenvalues but {} noise scales",
                lambdas.len(),
                etas.len()
            )));
        }
        if let Some(l) = lambdas.iter().find(|l| !(0.0..1.0).contains(*l)) {
            return Err(FessError::Invalid(format!("eigenvalue {l} outside [0, 1)")));
        }
        if let Some(e) = etas.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
            return Err(FessError::Invalid(format!("noise scale {e} must be non-negative")));
        }
        Ok(Far1Spec {
            lambdas,
            etas,
            grid,
            basis,
        })
    }

    /// `lambda_k = lambda0^k`, `eta_k = eta0^k` for `k = 1..=k_max`.
    pub fn geometric(lambda0: f64, eta0: f64, k_max: usize, grid: EvalGrid, basis: Basis) -> Result<Self> {
        let pow = |b: f64| (1..=k_max as i32).map(|k| b.powi(k)).collect();
        Far1Spec::new(pow(lambda0), pow(eta0), grid, basis)
    }

    pub fn k(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn etas(&self) -> &[f64] {
        &self.etas
    }

    /// Stationary coordinate variances `eta_k^2 / (1 - lambda_k^2)`.
    pub fn coordinate_variances(&self) -> Vec<f64> {
        self.lambdas
            .iter()
            .zip(&self.etas)
            .map(|(l, e)| e * e / (1.0 - l * l))
            .collect()
    }
}

/// `sigma_tr(h) = sum_k lambda_k^h eta_k^2 / (1 - lambda_k^2)`.
pub fn far1_trace_cov(spec: &Far1Spec, h: u32) -> f64 {
    spec.lambdas
        .iter()
        .zip(spec.coordinate_variances())
        .map(|(l, v)| l.powi(h as i32) * v)
        .sum()
}

/// `sum_{i,j=1..n} lambda^|i-j|` by direct summation over lags.
fn lag_sum_direct(lambda: f64, n: usize) -> f64 {
    let mut total = n as f64;
    let mut p = 1.0;
    for d in 1..n {
        p *= lambda;
        if p == 0.0 {
            break;
        }
        total += 2.0 * (n - d) as f64 * p;
    }
    total
}

/// Same sum in closed form:
/// `n (1 + l) / (1 - l) - 2 l (1 - l^n) / (1 - l)^2`.
fn lag_sum_closed(lambda: f64, n: usize) -> f64 {
    let nf = n as f64;
    let q = 1.0 - lambda;
    nf * (1.0 + lambda) / q - 2.0 * lambda * (1.0 - lambda.powi(n as i32)) / (q * q)
}

fn lag_sum(lambda: f64, n: usize) -> f64 {
    // the closed form cancels badly as lambda -> 1
    if lambda == 0.0 {
        n as f64
    } else if 1.0 - lambda < 1e-3 || n < 64 {
        lag_sum_direct(lambda, n)
    } else {
        lag_sum_closed(lambda, n)
    }
}

/// ESS of a stationary scalar AR(1) with coefficient `lambda`.
pub fn marginal_ess(lambda: f64, n: usize) -> f64 {
    let nf = n as f64;
    nf * nf / lag_sum(lambda, n)
}

/// Functional ESS of `n` consecutive FAR(1) curves, as the harmonic mean of
/// the marginal ESS values weighted by the coordinate variances.
pub fn far1_ess(spec: &Far1Spec, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(FessError::Invalid("sample size must be positive".into()));
    }
    let var = spec.coordinate_variances();
    let total: f64 = var.iter().sum();
    if !(total > 0.0) {
        return Err(FessError::Invalid("all noise scales are zero".into()));
    }
    let inv: f64 = spec
        .lambdas
        .iter()
        .zip(&var)
        .map(|(&l, &v)| (v / total) / marginal_ess(l, n))
        .sum();
    Ok(inv.recip())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    /// `lambda_k = v^k`, noise variance `fixed^k`.
    Lambda0,
    /// Noise variance `v^k`, `lambda_k = fixed^k`.
    Eta0,
}

impl FromStr for SweepAxis {
    type Err = FessError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lambda0" | "lambda" => Ok(SweepAxis::Lambda0),
            "eta0" | "eta" => Ok(SweepAxis::Eta0),
            other => Err(FessError::Invalid(format!("unknown sweep axis '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub n: usize,
    pub ess: f64,
}

pub const SWEEP_MAX_K: usize = 2000;
const SWEEP_TAIL_TOL: f64 = 1e-12;

/// Geometric FAR(1) spec truncated once a coordinate variance drops below
/// `1e-12` of the running total (at most [`SWEEP_MAX_K`] terms).
///
/// The noise decay base sets the innovation variances, so the standard
/// deviations passed to [`Far1Spec`] are `eta0^(k/2)`.
pub fn sweep_spec(axis: SweepAxis, value: f64, fixed: f64) -> Result<Far1Spec> {
    let (lambda0, eta0) = match axis {
        SweepAxis::Lambda0 => (value, fixed),
        SweepAxis::Eta0 => (fixed, value),
    };
    let (mut lambdas, mut etas) = (Vec::new(), Vec::new());
    let mut running = 0.0;
    for k in 1..=SWEEP_MAX_K as i32 {
        let (l, v) = (lambda0.powi(k), eta0.powi(k));
        let w = v / (1.0 - l * l);
        lambdas.push(l);
        etas.push(v.sqrt());
        running += w;
        if w < SWEEP_TAIL_TOL * running {
            break;
        }
    }
    Far1Spec::new(lambdas, etas, EvalGrid::uniform(0.0, 1.0, 2)?, Basis::Fourier)
}

/// Functional ESS over a grid of decay bases and sample sizes.
pub fn far1_sweep(axis: SweepAxis, values: &[f64], n_list: &[usize], fixed: f64) -> Result<Vec<SweepRow>> {
    if let Some(v) = values.iter().chain([&fixed]).find(|v| !(**v > 0.0 && **v < 1.0)) {
        return Err(FessError::Invalid(format!("sweep value {v} outside (0, 1)")));
    }
    let mut rows = Vec::with_capacity(values.len() * n_list.len());
    for &v in values {
        let spec = sweep_spec(axis, v, fixed)?;
        for &n in n_list {
            rows.push(SweepRow {
                axis_value: v,
                n,
                ess: far1_ess(&spec, n)?,
            });
        }
    }
    Ok(rows)
}

/// Writes `axis_value,n,ess`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let err = |e: csv::Error| FessError::Csv {
        path: "<output>".into(),
        source: e,
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["axis_value", "n", "ess"]).map_err(err)?;
    for r in rows {
        w.write_record([r.axis_value.to_string(), r.n.to_string(), r.ess.to_string()])
            .map_err(err)?;
    }
    w.flush().map_err(|e| err(e.into()))
}

fn basis_matrix(basis: Basis, k: usize, grid: &EvalGrid) -> Vec<Vec<f64>> {
    (1..=k).map(|j| basis.sample(j, grid)).collect()
}

fn assemble(coords: &[f64], phi: &[Vec<f64>], out: &mut Vec<f64>) {
    let m = phi[0].len();
    let start = out.len();
    out.resize(start + m, 0.0);
    for (c, p) in coords.iter().zip(phi) {
        for (o, v) in out[start..].iter_mut().zip(p) {
            *o += c * v;
        }
    }
}

/// `n` consecutive curves of a stationary FAR(1) path, at locations
/// `(1, 0), ..., (n, 0)`.
pub fn far1_simulate(spec: &Far1Spec, n: usize, seed: u64) -> Result<SpatialFunctionalDataset> {
    if n == 0 {
        return Err(FessError::Invalid("sample size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = basis_matrix(spec.basis, spec.k(), &spec.grid);
    let mut coords: Vec<f64> = spec
        .coordinate_variances()
        .iter()
        .map(|v| v.sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut values = Vec::with_capacity(n * spec.grid.len());
    for _ in 0..n {
        for ((c, l), e) in coords.iter_mut().zip(&spec.lambdas).zip(&spec.etas) {
            *c = l * *c + e * rng.sample::<f64, _>(StandardNormal);
        }
        assemble(&coords, &phi, &mut values);
    }
    let locs = (1..=n).map(|i| PlanarCoord::new(i as f64, 0.0)).collect();
    SpatialFunctionalDataset::from_flat(spec.grid.clone(), locs, values)
}

/// Separable Gaussian functional field: `K` independent scalar fields sharing
/// the model's correlation, each carried by one basis function with variance
/// `weights[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussFieldSpec {
    pub model: TraceCovModel,
    weights: Vec<f64>,
    pub grid: EvalGrid,
    pub basis: Basis,
}

impl GaussFieldSpec {
    pub fn new(model: TraceCovModel, weights: Vec<f64>, grid: EvalGrid, basis: Basis) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(FessError::Invalid("eigen-variances must be non-negative".into()));
        }
        if !(weights.iter().sum::<f64>() > 0.0) {
            return Err(FessError::Invalid("eigen-variances sum to zero".into()));
        }
        Ok(GaussFieldSpec {
            model,
            weights,
            grid,
            basis,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Trace-covariogram of the simulated field.
    pub fn true_model(&self) -> TraceCovModel {
        let total: f64 = self.weights.iter().sum();
        self.model.scaled(total / self.model.total_variance())
    }
}

const CHOLESKY_JITTER: f64 = 1e-10;

fn correlation_factor(model: &TraceCovModel, locs: &[PlanarCoord]) -> Result<DMatrix<f64>> {
    let n = locs.len();
    let mut r = DMatrix::from_fn(n, n, |i, j| model.correlation(locs[i].distance(&locs[j])));
    if let Some(c) = r.clone().cholesky() {
        return Ok(c.unpack());
    }
    for i in 0..n {
        r[(i, i)] += CHOLESKY_JITTER;
    }
    r.cholesky().map(|c| c.unpack()).ok_or_else(|| {
        FessError::Factorization(format!(
            "correlation matrix of {n} sites is not positive definite after jitter {CHOLESKY_JITTER}"
        ))
    })
}

/// Draw one realisation of the field at `locs` via a dense Cholesky factor of
/// the correlation matrix.
pub fn gauss_field_simulate(
    spec: &GaussFieldSpec,
    locs: &[PlanarCoord],
    seed: u64,
) -> Result<SpatialFunctionalDataset> {
    if locs.is_empty() {
        return Err(FessError::Invalid("need at least one location".into()));
    }
    let n = locs.len();
    let k = spec.weights.len();
    let factor = correlation_factor(&spec.model, locs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let xi = factor * z;
    let phi = basis_matrix(spec.basis, k, &spec.grid);
    let sd: Vec<f64> = spec.weights.iter().map(|w| w.sqrt()).collect();
    let mut values = Vec::with_capacity(n * spec.grid.len());
    for s in 0..n {
        let coords: Vec<f64> = (0..k).map(|j| sd[j] * xi[(s, j)]).collect();
        assemble(&coords, &phi, &mut values);
    }
    SpatialFunctionalDataset::from_flat(spec.grid.clone(), locs.to_vec(), values)
}
