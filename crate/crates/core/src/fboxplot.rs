//! Modified band depth, functional boxplots, and subsample fidelity.

use std::io::Write;

use rand::seq::index;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::SpatialFunctionalDataset;
use crate::error::{FessError, Result};
use crate::rng::replicate_rng;

/// Whisker factor applied to the central band height.
pub const FENCE_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FBoxplotSummary {
    pub depths: Vec<f64>,
    pub median_index: usize,
    pub median: Vec<f64>,
    /// Rows forming the central region.
    pub central: Vec<usize>,
    pub central_lower: Vec<f64>,
    pub central_upper: Vec<f64>,
    pub fence_lower: Vec<f64>,
    pub fence_upper: Vec<f64>,
    pub nonout_lower: Vec<f64>,
    pub nonout_upper: Vec<f64>,
    pub outliers: Vec<usize>,
}

impl FBoxplotSummary {
    /// Writes `t,median,central_lo,central_hi,nonout_lo,nonout_hi`.
    pub fn write_csv<W: Write>(&self, grid: &[f64], out: W) -> Result<()> {
        let err = |e: csv::Error| FessError::Csv {
            path: "<output>".into(),
            source: e,
        };
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "median", "central_lo", "central_hi", "nonout_lo", "nonout_hi"])
            .map_err(err)?;
        for (k, t) in grid.iter().enumerate() {
            w.write_record([
                t.to_string(),
                self.median[k].to_string(),
                self.central_lower[k].to_string(),
                self.central_upper[k].to_string(),
                self.nonout_lower[k].to_string(),
                self.nonout_upper[k].to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| err(e.into()))
    }

    /// Writes the outlying row indices, one per line under an `index` header.
    pub fn write_outliers_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |source| FessError::Io {
            path: "<output>".into(),
            source,
        };
        writeln!(out, "index").map_err(io)?;
        for i in &self.outliers {
            writeln!(out, "{i}").map_err(io)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct FidelityMetrics {
    /// Root-mean-square difference between the medians.
    pub md_l2: f64,
    pub md_sup: f64,
    pub crd_mean: f64,
    pub crd_sup: f64,
    /// Share of subsample curves inside the full central band everywhere.
    pub cip: f64,
}

fn pairs(n: usize) -> u64 {
    (n as u64) * (n as u64).saturating_sub(1) / 2
}

/// Modified band depth with bands formed by pairs of curves.
///
/// For each grid point the pairs whose band misses curve `i` are the pairs
/// lying strictly below or strictly above it, so the count reduces to ranks.
pub fn mbd(d: &SpatialFunctionalDataset) -> Result<Vec<f64>> {
    let n = d.n();
    if n < 2 {
        return Err(FessError::Invalid("band depth needs at least 2 curves".into()));
    }
    let m = d.m();
    let per_t: Vec<Vec<u64>> = (0..m)
        .into_par_iter()
        .map(|t| {
            let mut col: Vec<f64> = d.curves().map(|c| c[t]).collect();
            col.sort_by(f64::total_cmp);
            d.curves()
                .map(|c| {
                    let x = c[t];
                    let below = col.partition_point(|&v| v < x);
                    let above = n - col.partition_point(|&v| v <= x);
                    pairs(n) - pairs(below) - pairs(above)
                })
                .collect()
        })
        .collect();
    let denom = (m as u64 * pairs(n)) as f64;
    Ok((0..n)
        .map(|i| per_t.iter().map(|row| row[i]).sum::<u64>() as f64 / denom)
        .collect())
}

fn envelope<'a>(m: usize, curves: impl Iterator<Item = &'a [f64]>) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for c in curves {
        for k in 0..m {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k]);
        }
    }
    (lo, hi)
}

/// Functional boxplot from band depths.
///
/// The central region holds the `ceil(n/2)` deepest curves plus any curve
/// tied in depth with the last of them. Curves leaving the central band
/// inflated by [`FENCE_FACTOR`] times its height are outliers.
pub fn functional_boxplot(d: &SpatialFunctionalDataset) -> Result<FBoxplotSummary> {
    let depths = mbd(d)?;
    let n = d.n();
    let m = d.m();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| depths[b].total_cmp(&depths[a]));
    let median_index = order[0];
    let cutoff = depths[order[n.div_ceil(2) - 1]];
    let central: Vec<usize> = (0..n).filter(|&i| depths[i] >= cutoff).collect();
    let (central_lower, central_upper) = envelope(m, central.iter().map(|&i| d.curve(i)));

    let mut fence_lower = Vec::with_capacity(m);
    let mut fence_upper = Vec::with_capacity(m);
    for (lo, hi) in central_lower.iter().zip(&central_upper) {
        let pad = FENCE_FACTOR * (hi - lo);
        fence_lower.push(lo - pad);
        fence_upper.push(hi + pad);
    }
    let outliers: Vec<usize> = (0..n)
        .filter(|&i| {
            d.curve(i)
                .iter()
                .zip(fence_lower.iter().zip(&fence_upper))
                .any(|(v, (lo, hi))| v < lo || v > hi)
        })
        .collect();
    let (nonout_lower, nonout_upper) = envelope(
        m,
        (0..n)
            .filter(|i| outliers.binary_search(i).is_err())
            .map(|i| d.curve(i)),
    );

    Ok(FBoxplotSummary {
        median: d.curve(median_index).to_vec(),
        depths,
        median_index,
        central,
        central_lower,
        central_upper,
        fence_lower,
        fence_upper,
        nonout_lower,
        nonout_upper,
        outliers,
    })
}

fn check_same_grid(full: &SpatialFunctionalDataset, sub: &SpatialFunctionalDataset) -> Result<()> {
    if full.grid() != sub.grid() {
        return Err(FessError::Invalid(
            "full sample and subsample are observed on different grids".into(),
        ));
    }
    Ok(())
}

/// Fidelity metrics plus the mean absolute median difference.
fn compare(
    full: &FBoxplotSummary,
    sub_data: &SpatialFunctionalDataset,
    sub: &FBoxplotSummary,
) -> (FidelityMetrics, f64) {
    let m = full.median.len() as f64;
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut md_sup: f64 = 0.0;
    let mut width = 0.0;
    let mut crd_sup: f64 = 0.0;
    for k in 0..full.median.len() {
        let dm = (full.median[k] - sub.median[k]).abs();
        sq += dm * dm;
        abs += dm;
        md_sup = md_sup.max(dm);
        let wf = full.central_upper[k] - full.central_lower[k];
        let ws = sub.central_upper[k] - sub.central_lower[k];
        let dw = (wf - ws).abs();
        width += dw;
        crd_sup = crd_sup.max(dw);
    }
    let inside = sub_data
        .curves()
        .filter(|c| {
            c.iter()
                .zip(full.central_lower.iter().zip(&full.central_upper))
                .all(|(v, (lo, hi))| lo <= v && v <= hi)
        })
        .count();
    (
        FidelityMetrics {
            md_l2: (sq / m).sqrt(),
            md_sup,
            crd_mean: width / m,
            crd_sup,
            cip: inside as f64 / sub_data.n() as f64,
        },
        abs / m,
    )
}

/// How well `sub`'s functional boxplot reproduces `full`'s.
pub fn fidelity_metrics(full: &SpatialFunctionalDataset, sub: &SpatialFunctionalDataset) -> Result<FidelityMetrics> {
    check_same_grid(full, sub)?;
    let f = functional_boxplot(full)?;
    let s = functional_boxplot(sub)?;
    Ok(compare(&f, sub, &s).0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsampleReplicate {
    pub replicate: usize,
    /// Drawn rows, ascending.
    pub rows: Vec<usize>,
    pub metrics: FidelityMetrics,
    /// Mean over the grid of |full median - subsample median|.
    pub median_mean_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsampleExperiment {
    pub size: usize,
    pub seed: u64,
    pub replicates: Vec<SubsampleReplicate>,
    pub mean: FidelityMetrics,
    /// Average of `median_mean_abs` over replicates.
    pub median_band: f64,
}

impl SubsampleExperiment {
    /// Writes `replicate,md_l2,md_sup,crd_mean,crd_sup,cip,median_mean_abs`.
    pub fn write_replicates_csv<W: Write>(&self, out: W) -> Result<()> {
        let err = |e: csv::Error| FessError::Csv {
            path: "<output>".into(),
            source: e,
        };
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "replicate",
            "md_l2",
            "md_sup",
            "crd_mean",
            "crd_sup",
            "cip",
            "median_mean_abs",
        ])
        .map_err(err)?;
        for r in &self.replicates {
            let m = &r.metrics;
            w.write_record([
                r.replicate.to_string(),
                m.md_l2.to_string(),
                m.md_sup.to_string(),
                m.crd_mean.to_string(),
                m.crd_sup.to_string(),
                m.cip.to_string(),
                r.median_mean_abs.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| err(e.into()))
    }

    pub fn averages_json(&self) -> serde_json::Value {
        serde_json::json!({
            "reps": self.replicates.len(),
            "size": self.size,
            "seed": self.seed,
            "md_l2": self.mean.md_l2,
            "md_sup": self.mean.md_sup,
            "crd_mean": self.mean.crd_mean,
            "crd_sup": self.mean.crd_sup,
            "cip": self.mean.cip,
            "median_band": self.median_band,
        })
    }
}

/// `reps` uniform subsamples of `size` rows drawn without replacement.
/// Replicate `r` draws from [`replicate_rng`]`(seed, r)`.
pub fn subsample_experiment(
    full: &SpatialFunctionalDataset,
    size: usize,
    reps: usize,
    seed: u64,
) -> Result<SubsampleExperiment> {
    let n = full.n();
    if size < 2 || size > n {
        return Err(FessError::Invalid(format!("subsample size {size} outside [2, {n}]")));
    }
    if reps == 0 {
        return Err(FessError::Invalid("need at least one replicate".into()));
    }
    let full_box = functional_boxplot(full)?;
    let replicates = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r as u64);
            let mut rows = index::sample(&mut rng, n, size).into_vec();
            rows.sort_unstable();
            let sub = full.subset(&rows)?;
            let sub_box = functional_boxplot(&sub)?;
            let (metrics, median_mean_abs) = compare(&full_box, &sub, &sub_box);
            Ok(SubsampleReplicate {
                replicate: r,
                rows,
                metrics,
                median_mean_abs,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let k = reps as f64;
    let mut mean = FidelityMetrics::default();
    let mut median_band = 0.0;
    for r in &replicates {
        mean.md_l2 += r.metrics.md_l2;
        mean.md_sup += r.metrics.md_sup;
        mean.crd_mean += r.metrics.crd_mean;
        mean.crd_sup += r.metrics.crd_sup;
        mean.cip += r.metrics.cip;
        median_band += r.median_mean_abs;
    }
    mean.md_l2 /= k;
    mean.md_sup /= k;
    mean.crd_mean /= k;
    mean.crd_sup /= k;
    mean.cip /= k;
    Ok(SubsampleExperiment {
        size,
        seed,
        replicates,
        mean,
        median_band: median_band / k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{EvalGrid, PlanarCoord};
    use proptest::prelude::*;

    fn dataset(curves: Vec<Vec<f64>>) -> SpatialFunctionalDataset {
        let m = curves[0].len();
        let g = EvalGrid::uniform(0.0, 1.0, m).unwrap();
        let locs = (0..curves.len()).map(|i| PlanarCoord::new(i as f64, 0.0)).collect();
        SpatialFunctionalDataset::new(g, locs, curves).unwrap()
    }

    fn brute_force_mbd(d: &SpatialFunctionalDataset) -> Vec<f64> {
        let n = d.n();
        let m = d.m();
        let mut out = Vec::new();
        for i in 0..n {
            let mut inside = 0u64;
            let mut bands = 0u64;
            for j in 0..n {
                for k in j + 1..n {
                    bands += 1;
                    for t in 0..m {
                        let (a, b) = (d.curve(j)[t], d.curve(k)[t]);
                        let x = d.curve(i)[t];
                        if a.min(b) <= x && x <= a.max(b) {
                            inside += 1;
                        }
                    }
                }
            }
            out.push(inside as f64 / (bands * m as u64) as f64);
        }
        out
    }

    #[test]
    fn identical_curves_are_maximally_deep() {
        let d = dataset(vec![vec![1.0, 2.0, 3.0]; 4]);
        assert_eq!(mbd(&d).unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn ordered_curves() {
        let d = dataset(vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]]);
        let depth = mbd(&d).unwrap();
        assert_eq!(depth, vec![2.0 / 3.0, 1.0, 2.0 / 3.0]);
        assert_eq!(depth, brute_force_mbd(&d));
    }

    #[test]
    fn two_curves_no_outliers() {
        let d = dataset(vec![vec![0.0, 1.0, 0.5], vec![2.0, -1.0, 0.0]]);
        let b = functional_boxplot(&d).unwrap();
        assert_eq!(b.central, vec![0, 1]);
        assert!(b.outliers.is_empty());
        assert_eq!(b.median_index, 0);
        assert!(mbd(&dataset(vec![vec![0.0, 1.0]])).is_err());
    }

    #[test]
    fn flags_the_far_curve() {
        let mut curves: Vec<Vec<f64>> = (0..20)
            .map(|j| {
                let c = -1.0 + 2.0 * j as f64 / 19.0;
                (0..10)
                    .map(|t| c + 0.05 * ((t + j) as f64).sin())
                    .map(|v: f64| v.clamp(-1.0, 1.0))
                    .collect()
            })
            .collect();
        curves.push(vec![100.0; 10]);
        let b = functional_boxplot(&dataset(curves)).unwrap();
        assert_eq!(b.outliers, vec![20]);
        assert!(b.nonout_upper.iter().all(|&v| v <= 1.0));
    }

    #[test]
    fn constant_shift_of_median() {
        let full = dataset(vec![vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 1.0], vec![2.0, 2.0, 2.0]]);
        let shifted = dataset(vec![vec![0.5, 0.5, 0.5], vec![1.5, 1.5, 1.5], vec![2.5, 2.5, 2.5]]);
        let m = fidelity_metrics(&full, &shifted).unwrap();
        assert_eq!(m.md_sup, 0.5);
        assert_eq!(m.md_l2, 0.5);
        assert_eq!(m.crd_sup, 0.0);
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let a = dataset(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let b = dataset(vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 2.0]]);
        assert!(fidelity_metrics(&a, &b).is_err());
    }

    #[test]
    fn experiment_contract() {
        let curves: Vec<Vec<f64>> = (0..30)
            .map(|i| (0..6).map(|t| ((i * 7 + t * 3) % 11) as f64).collect())
            .collect();
        let d = dataset(curves);
        let one = subsample_experiment(&d, 10, 1, 5).unwrap();
        let sub = d.subset(&one.replicates[0].rows).unwrap();
        assert_eq!(one.mean, fidelity_metrics(&d, &sub).unwrap());
        assert_eq!(one.replicates[0].rows.len(), 10);

        let a = subsample_experiment(&d, 10, 8, 77).unwrap();
        let b = subsample_experiment(&d, 10, 8, 77).unwrap();
        assert_eq!(a, b);
        assert!(subsample_experiment(&d, 31, 1, 0).is_err());
        assert!(subsample_experiment(&d, 1, 1, 0).is_err());
    }

    proptest! {
        #[test]
        fn mbd_matches_enumeration(
            n in 2usize..=10,
            m in 1usize..=8,
            raw in prop::collection::vec(-3i32..3, 80),
        ) {
            // small integer values force plenty of ties
            let curves: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..m).map(|t| raw[i * 8 + t] as f64 * 0.5).collect())
                .collect();
            let g = EvalGrid::uniform(0.0, 1.0, m.max(2)).unwrap();
            let curves: Vec<Vec<f64>> = if m == 1 {
                curves.into_iter().map(|c| vec![c[0], c[0]]).collect()
            } else {
                curves
            };
            let locs = (0..n).map(|i| PlanarCoord::new(i as f64, 0.0)).collect();
            let d = SpatialFunctionalDataset::new(g, locs, curves).unwrap();
            prop_assert_eq!(mbd(&d).unwrap(), brute_force_mbd(&d));
        }

        #[test]
        fn boxplot_invariants(
            n in 2usize..15,
            raw in prop::collection::vec(-10.0f64..10.0, 15 * 5),
            shift in -5.0f64..5.0,
            scale in 0.1f64..10.0,
        ) {
            let curves: Vec<Vec<f64>> = (0..n).map(|i| raw[i * 5..i * 5 + 5].to_vec()).collect();
            let d = dataset(curves.clone());
            let b = functional_boxplot(&d).unwrap();
            for k in 0..5 {
                prop_assert!(b.central_lower[k] <= b.median[k] && b.median[k] <= b.central_upper[k]);
                prop_assert!(b.nonout_lower[k] <= b.central_lower[k]);
                prop_assert!(b.central_upper[k] <= b.nonout_upper[k]);
            }
            prop_assert!(b.depths.iter().all(|&x| (0.0..=1.0).contains(&x)));

            let moved = dataset(curves.iter().map(|c| {
                c.iter().enumerate().map(|(t, v)| scale * v + shift * t as f64).collect()
            }).collect());
            prop_assert_eq!(mbd(&moved).unwrap(), b.depths.clone());

            let same = fidelity_metrics(&d, &d).unwrap();
            prop_assert_eq!(same.md_l2, 0.0);
            prop_assert_eq!(same.md_sup, 0.0);
            prop_assert_eq!(same.crd_mean, 0.0);
            prop_assert_eq!(same.crd_sup, 0.0);
            prop_assert!(same.cip >= 0.5);
        }
    }
}
