use serde::{Deserialize, Serialize};

use super::{CovFamily, EmpiricalVariogram, TraceCovModel};
use crate::error::{FessError, Result};
use crate::optim::{nelder_mead, NelderMeadOptions};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NuggetMode {
    /// Nugget frozen at zero.
    #[default]
    Zero,
    Free,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    #[default]
    Unweighted,
    /// Residuals weighted by bin pair count.
    PairCount,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub nugget: NuggetMode,
    pub weighting: Weighting,
    /// Number of Nelder–Mead starts.
    pub starts: usize,
    /// Iteration cap per start.
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            nugget: NuggetMode::Zero,
            weighting: Weighting::Unweighted,
            starts: 5,
            max_iter: 4000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub model: TraceCovModel,
    /// Achieved sum of squared residuals, in squared variogram units.
    pub sse: f64,
    /// Objective at the first starting point.
    pub initial_sse: f64,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl FitResult {
    /// `{family, sill, range, nugget, sse}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "family": self.model.family,
            "sill": self.model.sill,
            "range": self.model.range,
            "nugget": self.model.nugget,
            "sse": self.sse,
        })
    }
}

// Lower/upper range bounds relative to the smallest/largest lag.
const RANGE_LO_FACTOR: f64 = 1e-3;
const RANGE_HI_FACTOR: f64 = 1e3;
const START_RANGE_MULTIPLIERS: [f64; 5] = [1.0, 0.5, 2.0, 0.25, 4.0];

fn softplus(u: f64) -> f64 {
    if u > 30.0 {
        u
    } else {
        u.exp().ln_1p()
    }
}

fn softplus_inv(v: f64) -> f64 {
    if v > 30.0 {
        v
    } else {
        v.exp_m1().ln()
    }
}

/// Problem in normalised units: lags divided by the largest lag, values by
/// the largest |gamma|.
struct Problem {
    family: CovFamily,
    h: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
    ln_range_lo: f64,
    ln_range_hi: f64,
}

impl Problem {
    fn range(&self, ln_range: f64) -> f64 {
        ln_range.clamp(self.ln_range_lo, self.ln_range_hi).exp()
    }

    fn sse(&self, sill: f64, range: f64, nugget: f64) -> f64 {
        self.h
            .iter()
            .zip(&self.y)
            .zip(&self.w)
            .map(|((&h, &y), &w)| {
                let model = sill * (1.0 - self.family.shape(h, range)) + nugget;
                w * (y - model) * (y - model)
            })
            .sum()
    }

    fn objective(&self, theta: &[f64], free_nugget: bool) -> f64 {
        let sill = theta[0].exp();
        let range = self.range(theta[1]);
        let nugget = if free_nugget { softplus(theta[2]) } else { 0.0 };
        self.sse(sill, range, nugget)
    }

    /// Exact least-squares sill/nugget for a fixed range. Prefers a zero
    /// nugget whenever it costs no more than rounding.
    fn linear_solve(&self, range: f64, free_nugget: bool) -> Option<(f64, f64)> {
        let g: Vec<f64> = self.h.iter().map(|&h| 1.0 - self.family.shape(h, range)).collect();
        let (mut sgg, mut sg, mut sw, mut syg, mut sy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for ((&gi, &yi), &wi) in g.iter().zip(&self.y).zip(&self.w) {
            sgg += wi * gi * gi;
            sg += wi * gi;
            sw += wi;
            syg += wi * yi * gi;
            sy += wi * yi;
        }
        let zero_nugget = (sgg > 0.0).then(|| syg / sgg).filter(|&s| s > 0.0).map(|s| (s, 0.0));
        if !free_nugget {
            return zero_nugget;
        }
        let det = sgg * sw - sg * sg;
        let free = (det > 1e-14 * sgg * sw)
            .then(|| ((syg * sw - sy * sg) / det, (sgg * sy - sg * syg) / det))
            .filter(|&(s, t)| s > 0.0 && t >= 0.0);
        match (free, zero_nugget) {
            (Some(f), Some(z)) => {
                let sf = self.sse(f.0, range, f.1);
                let sz = self.sse(z.0, range, z.1);
                if sz <= sf * (1.0 + 1e-9) + 1e-24 {
                    Some(z)
                } else {
                    Some(f)
                }
            }
            (f, z) => f.or(z),
        }
    }
}

/// Least-squares fit of a trace-variogram model to the occupied bins of
/// `ev`, by multi-start Nelder–Mead on log sill and log range (and a
/// softplus-mapped nugget when free), followed by an exact linear solve for
/// sill and nugget at the best range.
pub fn fit_model(ev: &EmpiricalVariogram, family: CovFamily, opts: &FitOptions) -> Result<FitResult> {
    let pts: Vec<(f64, f64, usize)> = ev.occupied().filter(|p| p.0 > 0.0).collect();
    if pts.len() < 3 {
        return Err(FessError::Estimation(format!(
            "need at least 3 occupied lag bins to fit a model, found {}",
            pts.len()
        )));
    }
    let y_scale = pts.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    if !(y_scale > 0.0) || !y_scale.is_finite() {
        return Err(FessError::Estimation("empirical variogram is identically zero".into()));
    }
    let h_scale = pts.iter().map(|p| p.0).fold(0.0, f64::max);
    let h_min = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min) / h_scale;
    let free_nugget = opts.nugget == NuggetMode::Free;
    let problem = Problem {
        family,
        h: pts.iter().map(|p| p.0 / h_scale).collect(),
        y: pts.iter().map(|p| p.1 / y_scale).collect(),
        w: pts
            .iter()
            .map(|p| match opts.weighting {
                Weighting::Unweighted => 1.0,
                Weighting::PairCount => p.2 as f64,
            })
            .collect(),
        ln_range_lo: (RANGE_LO_FACTOR * h_min).ln(),
        ln_range_hi: RANGE_HI_FACTOR.ln(),
    };
    let finish = |sill: f64, range: f64, nugget: f64, sse: f64, initial: f64, converged, warnings| {
        Ok(FitResult {
            model: TraceCovModel::new(family, sill * y_scale, range * h_scale, nugget * y_scale)?,
            sse: sse * y_scale * y_scale,
            initial_sse: initial * y_scale * y_scale,
            converged,
            warnings,
        })
    };

    let (y_min, y_max) = problem
        .y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| {
            (lo.min(y), hi.max(y))
        });
    if y_max - y_min <= 1e-9 {
        let range = problem.ln_range_lo.exp();
        let sw: f64 = problem.w.iter().sum();
        let sill = problem.y.iter().zip(&problem.w).map(|(y, w)| y * w).sum::<f64>() / sw;
        let sse = problem.sse(sill, range, 0.0);
        let msg = "flat empirical variogram; range pinned to its lower bound".to_owned();
        log::warn!("{family}: {msg}");
        return finish(sill, range, 0.0, sse, sse, true, vec![msg]);
    }

    // Starting values: sill from the last third of the bins, practical range
    // from the first bin reaching 95% of it.
    let tail = problem.y.len().div_ceil(3);
    let sill0 = problem.y[problem.y.len() - tail..].iter().sum::<f64>() / tail as f64;
    let sill0 = if sill0 > 0.0 { sill0 } else { 1.0 };
    let practical = problem
        .h
        .iter()
        .zip(&problem.y)
        .find(|(_, &y)| y >= 0.95 * sill0)
        .map_or(1.0, |(&h, _)| h);
    let range0 = match family {
        CovFamily::Exponential => practical / 3.0,
        CovFamily::Gaussian => practical / 3f64.sqrt(),
        CovFamily::Spherical => practical,
    };
    let nugget0 = 0.05 * sill0;

    let nm_opts = |step: f64| NelderMeadOptions {
        max_iter: opts.max_iter,
        x_tol: 1e-10,
        f_tol: 0.0,
        step: vec![step; if free_nugget { 3 } else { 2 }],
    };
    let objective = |theta: &[f64]| problem.objective(theta, free_nugget);

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut initial_sse = f64::NAN;
    let mut any_converged = false;
    for k in 0..opts.starts.max(1) {
        let mult = START_RANGE_MULTIPLIERS[k % START_RANGE_MULTIPLIERS.len()]
            * 8f64.powi((k / START_RANGE_MULTIPLIERS.len()) as i32);
        let mut theta0 = vec![sill0.ln(), (range0 * mult).ln()];
        if free_nugget {
            theta0.push(softplus_inv(nugget0));
        }
        if k == 0 {
            initial_sse = objective(&theta0);
        }
        let first = nelder_mead(objective, &theta0, &nm_opts(0.5));
        let second = nelder_mead(objective, &first.x, &nm_opts(0.1));
        any_converged |= second.converged;
        log::debug!(
            "{family} start {k}: sse {:.6e} after {} + {} iterations",
            second.f,
            first.iterations,
            second.iterations
        );
        if best.as_ref().is_none_or(|b| second.f < b.1) {
            best = Some((second.x, second.f));
        }
    }
    let (theta, nm_sse) = best.expect("at least one start");
    let range = problem.range(theta[1]);
    let (mut sill, mut nugget, mut sse) = (
        theta[0].exp(),
        if free_nugget { softplus(theta[2]) } else { 0.0 },
        nm_sse,
    );
    if let Some((s, t)) = problem.linear_solve(range, free_nugget) {
        let polished = problem.sse(s, range, t);
        if polished <= nm_sse * (1.0 + 1e-9) + 1e-24 && polished <= initial_sse {
            (sill, nugget, sse) = (s, t, polished);
        }
    }

    let mut warnings = Vec::new();
    let ln_range = range.ln();
    if (ln_range - problem.ln_range_lo).abs() < 1e-6 || (ln_range - problem.ln_range_hi).abs() < 1e-6 {
        warnings.push(format!(
            "{family}: fitted range {:.6e} sits on a bound",
            range * h_scale
        ));
    }
    let result = finish(sill, range, nugget, sse, initial_sse, any_converged, warnings)?;
    if !any_converged {
        return Err(FessError::FitNotConverged {
            starts: opts.starts,
            best: Box::new(result),
        });
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn exact_variogram(model: &TraceCovModel, centers: &[f64]) -> EmpiricalVariogram {
        EmpiricalVariogram {
            centers: centers.to_vec(),
            gamma: centers.iter().map(|&h| Some(model.variogram(h))).collect(),
            counts: vec![50; centers.len()],
            sigma0: model.total_variance(),
        }
    }

    fn centers(max: f64, count: usize) -> Vec<f64> {
        (0..count).map(|l| max * (l as f64 + 0.5) / count as f64).collect()
    }

    #[test]
    fn recovers_exact_exponential() {
        let truth = TraceCovModel::new(CovFamily::Exponential, 1.0, 100.0, 0.0).unwrap();
        let ev = exact_variogram(&truth, &centers(700.0, 15));
        let fit = fit_model(&ev, CovFamily::Exponential, &FitOptions::default()).unwrap();
        assert_relative_eq!(fit.model.sill, 1.0, max_relative = 1e-6);
        assert_relative_eq!(fit.model.range, 100.0, max_relative = 1e-6);
        assert_eq!(fit.model.nugget, 0.0);
        assert!(fit.sse <= fit.initial_sse);
    }

    #[test]
    fn recovers_tiny_sills() {
        for (fam, sill, range) in [
            (CovFamily::Exponential, 1.985e-10, 104.4),
            (CovFamily::Spherical, 1.769e-10, 186.8),
            (CovFamily::Gaussian, 1.719e-10, 81.12),
        ] {
            let truth = TraceCovModel::new(fam, sill, range, 0.0).unwrap();
            let ev = exact_variogram(&truth, &centers(600.0, 15));
            let fit = fit_model(&ev, fam, &FitOptions::default()).unwrap();
            assert_relative_eq!(fit.model.sill, sill, max_relative = 1e-6);
            assert_relative_eq!(fit.model.range, range, max_relative = 1e-6);
        }
    }

    #[test]
    fn free_nugget_is_zero_on_nugget_free_data() {
        let opts = FitOptions {
            nugget: NuggetMode::Free,
            ..FitOptions::default()
        };
        for fam in CovFamily::ALL {
            let truth = TraceCovModel::new(fam, 2.0, 120.0, 0.0).unwrap();
            let ev = exact_variogram(&truth, &centers(700.0, 15));
            let fit = fit_model(&ev, fam, &opts).unwrap();
            assert_eq!(fit.model.nugget, 0.0, "{fam}");
            assert_relative_eq!(fit.model.range, 120.0, max_relative = 1e-6);
        }
    }

    #[test]
    fn free_nugget_recovers_positive_nugget() {
        let opts = FitOptions {
            nugget: NuggetMode::Free,
            ..FitOptions::default()
        };
        let truth = TraceCovModel::new(CovFamily::Spherical, 2.0, 300.0, 0.5).unwrap();
        let ev = exact_variogram(&truth, &centers(700.0, 15));
        let fit = fit_model(&ev, CovFamily::Spherical, &opts).unwrap();
        assert_relative_eq!(fit.model.nugget, 0.5, max_relative = 1e-6);
        assert_relative_eq!(fit.model.sill, 2.0, max_relative = 1e-6);
    }

    #[test]
    fn pair_count_weighting_still_fits_exact_data() {
        let opts = FitOptions {
            weighting: Weighting::PairCount,
            ..FitOptions::default()
        };
        let truth = TraceCovModel::new(CovFamily::Gaussian, 3.0, 80.0, 0.0).unwrap();
        let mut ev = exact_variogram(&truth, &centers(500.0, 12));
        ev.counts = (1..=12).collect();
        let fit = fit_model(&ev, CovFamily::Gaussian, &opts).unwrap();
        assert_relative_eq!(fit.model.range, 80.0, max_relative = 1e-6);
    }

    #[test]
    fn flat_input_pins_range() {
        let ev = EmpiricalVariogram {
            centers: centers(100.0, 5),
            gamma: vec![Some(2.0); 5],
            counts: vec![3; 5],
            sigma0: 2.0,
        };
        let fit = fit_model(&ev, CovFamily::Exponential, &FitOptions::default()).unwrap();
        assert_eq!(fit.warnings.len(), 1);
        assert_relative_eq!(fit.model.sill, 2.0);
        assert_relative_eq!(fit.model.range, 1e-3 * 10.0, max_relative = 1e-12);
    }

    #[test]
    fn too_few_bins() {
        let ev = EmpiricalVariogram {
            centers: vec![1.0, 2.0, 3.0],
            gamma: vec![Some(1.0), None, Some(2.0)],
            counts: vec![1, 0, 1],
            sigma0: 1.0,
        };
        assert!(matches!(
            fit_model(&ev, CovFamily::Spherical, &FitOptions::default()),
            Err(FessError::Estimation(_))
        ));
    }

    #[test]
    fn objective_never_exceeds_initial_guess_on_noisy_data() {
        let truth = TraceCovModel::new(CovFamily::Exponential, 1.0, 50.0, 0.0).unwrap();
        let cs = centers(400.0, 15);
        for seed in 0..20u64 {
            let gamma = cs
                .iter()
                .enumerate()
                .map(|(l, &h)| {
                    let wobble = ((seed * 31 + l as u64 * 17) % 13) as f64 / 13.0 - 0.5;
                    Some(truth.variogram(h) * (1.0 + 0.3 * wobble))
                })
                .collect();
            let ev = EmpiricalVariogram {
                centers: cs.clone(),
                gamma,
                counts: vec![10; cs.len()],
                sigma0: 1.0,
            };
            for fam in CovFamily::ALL {
                let fit = fit_model(&ev, fam, &FitOptions::default()).unwrap();
                assert!(fit.sse <= fit.initial_sse, "{fam} seed {seed}");
            }
        }
    }

    #[test]
    fn json_shape() {
        let truth = TraceCovModel::new(CovFamily::Exponential, 1.0, 10.0, 0.0).unwrap();
        let ev = exact_variogram(&truth, &centers(70.0, 15));
        let v = fit_model(&ev, CovFamily::Exponential, &FitOptions::default())
            .unwrap()
            .to_json();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys.len(), 5);
        assert_eq!(v["family"], "exponential");
    }
}
