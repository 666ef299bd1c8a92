//! Empirical trace-variograms and parametric trace-covariogram models.
//!
//! The empirical estimators work on unordered pairs `i < j` binned by
//! distance. The zero-lag trace variance comes from the `i = j` terms only, so
//! duplicate stations contribute to the first positive bin instead.

mod fit;

pub use fit::{fit_model, FitOptions, FitResult, NuggetMode, Weighting};

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{trapz_inner, trapz_sq_dist, SpatialFunctionalDataset};
use crate::error::{FessError, Result};

/// Number of bins used when none is requested.
pub const DEFAULT_BIN_COUNT: usize = 15;

/// Distance classes. Bin `l` holds `edges[l] < d <= edges[l + 1]`; the first
/// bin is also closed on the left.
#[derive(Debug, Clone, PartialEq)]
pub struct LagBins {
    edges: Vec<f64>,
}

impl LagBins {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(FessError::Invalid("lag bins need at least two edges".into()));
        }
        if edges[0] < 0.0 || edges.iter().any(|e| !e.is_finite()) {
            return Err(FessError::Invalid(
                "lag bin edges must be finite and non-negative".into(),
            ));
        }
        if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FessError::Invalid("lag bin edges must be strictly increasing".into()));
        }
        Ok(LagBins { edges })
    }

    /// `count` equal-width bins covering `[0, max_lag]`.
    pub fn uniform(max_lag: f64, count: usize) -> Result<Self> {
        if count == 0 || !(max_lag > 0.0) {
            return Err(FessError::Invalid(format!(
                "need a positive bin count and maximum lag (got {count}, {max_lag})"
            )));
        }
        let w = max_lag / count as f64;
        let mut edges: Vec<f64> = (0..=count).map(|l| w * l as f64).collect();
        edges[count] = max_lag;
        LagBins::new(edges)
    }

    /// `count` equal-width bins up to half the largest inter-site distance.
    pub fn for_dataset(d: &SpatialFunctionalDataset, count: usize) -> Result<Self> {
        let locs = d.locations();
        let max = locs
            .par_iter()
            .map(|a| locs.iter().map(|b| a.distance(b)).fold(0.0, f64::max))
            .reduce(|| 0.0, f64::max);
        if max <= 0.0 {
            return Err(FessError::Invalid(
                "all locations coincide; cannot build lag bins".into(),
            ));
        }
        LagBins::uniform(max / 2.0, count)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn bin_of(&self, d: f64) -> Option<usize> {
        if d < self.edges[0] {
            return None;
        }
        let k = self.edges.partition_point(|&e| e < d);
        match k {
            0 => Some(0),
            k if k < self.edges.len() => Some(k - 1),
            _ => None,
        }
    }
}

/// Binned trace-variogram estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalVariogram {
    pub centers: Vec<f64>,
    /// `None` for empty bins.
    pub gamma: Vec<Option<f64>>,
    pub counts: Vec<usize>,
    /// Zero-lag trace variance.
    pub sigma0: f64,
}

impl EmpiricalVariogram {
    /// `(h, gamma, count)` for occupied bins.
    pub fn occupied(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        self.centers
            .iter()
            .zip(&self.gamma)
            .zip(&self.counts)
            .filter_map(|((&h, g), &c)| g.map(|g| (h, g, c)))
    }

    /// Writes `h,gamma,count`; empty bins leave `gamma` blank.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| FessError::Csv {
            path: "<output>".into(),
            source: e,
        };
        w.write_record(["h", "gamma", "count"]).map_err(err)?;
        for ((h, g), c) in self.centers.iter().zip(&self.gamma).zip(&self.counts) {
            let g = g.map(|g| g.to_string()).unwrap_or_default();
            w.write_record([h.to_string(), g, c.to_string()]).map_err(err)?;
        }
        w.flush().map_err(|e| err(e.into()))
    }
}

/// Binned trace-covariogram estimate; `sigma0` is the zero-lag value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCovariogram {
    pub centers: Vec<f64>,
    pub sigma: Vec<Option<f64>>,
    pub counts: Vec<usize>,
    pub sigma0: f64,
}

/// Per-bin `(sum, count)` of `term(i, j)` over pairs `i < j`. Rows are summed
/// sequentially and then reduced in row order, so the result does not depend
/// on the thread count.
fn pair_sweep<F>(d: &SpatialFunctionalDataset, bins: &LagBins, term: F) -> (Vec<f64>, Vec<usize>)
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let n = d.n();
    let nb = bins.len();
    let locs = d.locations();
    let rows: Vec<(Vec<f64>, Vec<usize>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut sums = vec![0.0; nb];
            let mut counts = vec![0usize; nb];
            for j in i + 1..n {
                if let Some(l) = bins.bin_of(locs[i].distance(&locs[j])) {
                    sums[l] += term(i, j);
                    counts[l] += 1;
                }
            }
            (sums, counts)
        })
        .collect();
    let mut sums = vec![0.0; nb];
    let mut counts = vec![0usize; nb];
    for (s, c) in rows {
        for l in 0..nb {
            sums[l] += s[l];
            counts[l] += c[l];
        }
    }
    (sums, counts)
}

fn check_occupancy(counts: &[usize]) -> Result<()> {
    if counts.iter().all(|&c| c == 0) {
        return Err(FessError::Estimation(format!(
            "no location pairs fall in any lag bin (occupancy {counts:?})"
        )));
    }
    Ok(())
}

fn zero_lag_variance(centered: &SpatialFunctionalDataset) -> f64 {
    let grid = centered.grid();
    let total: f64 = centered.curves().map(|c| trapz_inner(c, c, grid)).sum();
    total / centered.n() as f64
}

/// Half the mean squared L2 distance between curves, per distance bin.
pub fn empirical_trace_variogram(d: &SpatialFunctionalDataset, bins: &LagBins) -> Result<EmpiricalVariogram> {
    if d.n() < 2 {
        return Err(FessError::Invalid(
            "variogram estimation needs at least 2 curves".into(),
        ));
    }
    let grid = d.grid();
    let (sums, counts) = pair_sweep(d, bins, |i, j| trapz_sq_dist(d.curve(i), d.curve(j), grid));
    check_occupancy(&counts)?;
    let gamma = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| (c > 0).then(|| s / (2.0 * c as f64)))
        .collect();
    Ok(EmpiricalVariogram {
        centers: bins.centers(),
        gamma,
        counts,
        sigma0: zero_lag_variance(&d.centered()),
    })
}

/// Mean cross inner product of mean-removed curves, per distance bin.
pub fn empirical_trace_covariogram(d: &SpatialFunctionalDataset, bins: &LagBins) -> Result<EmpiricalCovariogram> {
    if d.n() < 2 {
        return Err(FessError::Invalid(
            "covariogram estimation needs at least 2 curves".into(),
        ));
    }
    let centered = d.centered();
    let grid = centered.grid();
    let (sums, counts) = pair_sweep(&centered, bins, |i, j| {
        trapz_inner(centered.curve(i), centered.curve(j), grid)
    });
    check_occupancy(&counts)?;
    let sigma = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect();
    Ok(EmpiricalCovariogram {
        centers: bins.centers(),
        sigma,
        counts,
        sigma0: zero_lag_variance(&centered),
    })
}

/// Parametric correlation shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovFamily {
    Exponential,
    Spherical,
    Gaussian,
}

impl CovFamily {
    pub const ALL: [CovFamily; 3] = [CovFamily::Exponential, CovFamily::Spherical, CovFamily::Gaussian];

    /// Correlation shape at `h` for range `range`; 1 at the origin, in `[0, 1]`.
    pub fn shape(self, h: f64, range: f64) -> f64 {
        let x = h / range;
        match self {
            CovFamily::Exponential => (-x).exp(),
            CovFamily::Spherical => {
                if x <= 1.0 {
                    (1.0 - 1.5 * x + 0.5 * x * x * x).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            }
            CovFamily::Gaussian => (-x * x).exp(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CovFamily::Exponential => "exponential",
            CovFamily::Spherical => "spherical",
            CovFamily::Gaussian => "gaussian",
        }
    }
}

impl fmt::Display for CovFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CovFamily {
    type Err = FessError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exponential" | "exp" => Ok(CovFamily::Exponential),
            "spherical" | "sph" => Ok(CovFamily::Spherical),
            "gaussian" | "gau" => Ok(CovFamily::Gaussian),
            other => Err(FessError::Invalid(format!(
                "unknown covariance family '{other}' (expected exponential, spherical or gaussian)"
            ))),
        }
    }
}

/// Isotropic trace-covariogram: `sill * shape(h / range)` plus `nugget` at `h = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceCovModel {
    pub family: CovFamily,
    pub sill: f64,
    pub range: f64,
    pub nugget: f64,
}

impl TraceCovModel {
    pub fn new(family: CovFamily, sill: f64, range: f64, nugget: f64) -> Result<Self> {
        if !(sill > 0.0 && sill.is_finite()) {
            return Err(FessError::Invalid(format!("sill must be positive, got {sill}")));
        }
        if !(range > 0.0) || range.is_nan() {
            return Err(FessError::Invalid(format!("range must be positive, got {range}")));
        }
        if !(nugget >= 0.0 && nugget.is_finite()) {
            return Err(FessError::Invalid(format!("nugget must be non-negative, got {nugget}")));
        }
        Ok(TraceCovModel {
            family,
            sill,
            range,
            nugget,
        })
    }

    /// `sigma_tr(0)`, sill plus nugget.
    pub fn total_variance(&self) -> f64 {
        self.sill + self.nugget
    }

    pub fn cov(&self, h: f64) -> f64 {
        model_trace_cov(self, h)
    }

    pub fn variogram(&self, h: f64) -> f64 {
        model_trace_variogram(self, h)
    }

    /// `sigma_tr(h) / sigma_tr(0)`, computed so that it stays in `[0, 1]`.
    pub fn correlation(&self, h: f64) -> f64 {
        if h == 0.0 {
            1.0
        } else {
            let share = self.sill / (self.sill + self.nugget);
            (share * self.family.shape(h, self.range)).min(1.0)
        }
    }

    /// Same model with sill and nugget multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        TraceCovModel {
            sill: self.sill * c,
            nugget: self.nugget * c,
            ..*self
        }
    }
}

pub fn model_trace_cov(m: &TraceCovModel, h: f64) -> f64 {
    let base = m.sill * m.family.shape(h, m.range);
    if h == 0.0 {
        base + m.nugget
    } else {
        base
    }
}

pub fn model_trace_variogram(m: &TraceCovModel, h: f64) -> f64 {
    if h == 0.0 {
        0.0
    } else {
        m.total_variance() - model_trace_cov(m, h)
    }
}
