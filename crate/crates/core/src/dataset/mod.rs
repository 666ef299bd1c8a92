//! Spatially indexed curve samples and the geometry around them.
//!
//! A [`SpatialFunctionalDataset`] holds `n` curves observed on a shared
//! [`EvalGrid`], each tagged with a planar location in kilometres.
//! Geographic input is mapped to the plane with [`project_sinusoidal`].

mod ingest;

pub use ingest::{load_wide_csv, write_wide_csv, CoordKind, CsvSchema, LoadedDataset};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FessError, Result};

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Ordered abscissae on which every curve of a dataset is observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EvalGrid {
    points: Vec<f64>,
}

impl EvalGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(FessError::Invalid(format!(
                "evaluation grid needs at least 2 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|t| !t.is_finite()) {
            return Err(FessError::Invalid("evaluation grid has non-finite points".into()));
        }
        if let Some(w) = points.windows(2).find(|w| w[1] <= w[0]) {
            return Err(FessError::Invalid(format!(
                "evaluation grid must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(EvalGrid { points })
    }

    /// `m` equispaced points from `start` to `end` inclusive.
    pub fn uniform(start: f64, end: f64, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(FessError::Invalid(format!(
                "evaluation grid needs at least 2 points, got {m}"
            )));
        }
        let step = (end - start) / (m - 1) as f64;
        let mut points: Vec<f64> = (0..m).map(|i| start + step * i as f64).collect();
        points[m - 1] = end;
        EvalGrid::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.points[0]
    }

    pub fn end(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    pub fn span(&self) -> f64 {
        self.end() - self.start()
    }

    /// Trapezoid weights: `sum_t w_t f(t)` approximates the integral over the span.
    pub fn trapz_weights(&self) -> Vec<f64> {
        let p = &self.points;
        let m = p.len();
        let mut w = vec![0.0; m];
        for k in 0..m - 1 {
            let half = 0.5 * (p[k + 1] - p[k]);
            w[k] += half;
            w[k + 1] += half;
        }
        w
    }
}

impl TryFrom<Vec<f64>> for EvalGrid {
    type Error = FessError;

    fn try_from(points: Vec<f64>) -> Result<Self> {
        EvalGrid::new(points)
    }
}

impl From<EvalGrid> for Vec<f64> {
    fn from(g: EvalGrid) -> Self {
        g.points
    }
}

/// Longitude/latitude pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoCoord {
    pub lon: f64,
    pub lat: f64,
}

impl GeoCoord {
    pub fn new(lon: f64, lat: f64) -> Result<Self> {
        if !(-180.0..=180.0).contains(&lon) {
            return Err(FessError::Invalid(format!("longitude {lon} outside [-180, 180]")));
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(FessError::Invalid(format!("latitude {lat} outside [-90, 90]")));
        }
        Ok(GeoCoord { lon, lat })
    }
}

/// Planar location in kilometres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarCoord {
    pub x: f64,
    pub y: f64,
}

impl PlanarCoord {
    pub fn new(x: f64, y: f64) -> Self {
        PlanarCoord { x, y }
    }

    pub fn distance(&self, other: &PlanarCoord) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Sinusoidal (equal-area) projection about central meridian `lon0`.
pub fn project_sinusoidal(p: GeoCoord, lon0: f64) -> PlanarCoord {
    let phi = p.lat.to_radians();
    let dlambda = (p.lon - lon0).to_radians();
    PlanarCoord {
        x: EARTH_RADIUS_KM * dlambda * phi.cos(),
        y: EARTH_RADIUS_KM * phi,
    }
}

/// Symmetric matrix of Euclidean distances with a zero diagonal.
pub fn pairwise_distances(locs: &[PlanarCoord]) -> DMatrix<f64> {
    let n = locs.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| locs[i].distance(&locs[j])).collect())
        .collect();
    DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { rows[i.min(j)][i.max(j)] })
}

/// Trapezoid approximation of the L2 inner product of two curves on `grid`.
pub fn trapz_inner(a: &[f64], b: &[f64], grid: &EvalGrid) -> f64 {
    debug_assert_eq!(a.len(), grid.len());
    debug_assert_eq!(b.len(), grid.len());
    let t = grid.points();
    let mut acc = 0.0;
    for k in 0..t.len() - 1 {
        let dt = t[k + 1] - t[k];
        acc += 0.5 * dt * (a[k] * b[k] + a[k + 1] * b[k + 1]);
    }
    acc
}

/// Trapezoid approximation of the squared L2 distance between two curves.
pub(crate) fn trapz_sq_dist(a: &[f64], b: &[f64], grid: &EvalGrid) -> f64 {
    let t = grid.points();
    let mut acc = 0.0;
    let mut prev = a[0] - b[0];
    for k in 0..t.len() - 1 {
        let next = a[k + 1] - b[k + 1];
        acc += 0.5 * (t[k + 1] - t[k]) * (prev * prev + next * next);
        prev = next;
    }
    acc
}

/// `n` curves on a shared grid, row `i` observed at `locations[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialFunctionalDataset {
    grid: EvalGrid,
    locations: Vec<PlanarCoord>,
    // row-major n x m
    values: Vec<f64>,
}

impl SpatialFunctionalDataset {
    pub fn new(grid: EvalGrid, locations: Vec<PlanarCoord>, curves: Vec<Vec<f64>>) -> Result<Self> {
        if locations.len() != curves.len() {
            return Err(FessError::Invalid(format!(
                "{} locations but {} curves",
                locations.len(),
                curves.len()
            )));
        }
        let m = grid.len();
        let mut values = Vec::with_capacity(curves.len() * m);
        for (i, c) in curves.iter().enumerate() {
            if c.len() != m {
                return Err(FessError::Invalid(format!(
                    "curve {i} has {} values, grid has {m}",
                    c.len()
                )));
            }
            values.extend_from_slice(c);
        }
        Self::from_flat(grid, locations, values)
    }

    /// Build from a row-major `n x m` buffer.
    pub fn from_flat(grid: EvalGrid, locations: Vec<PlanarCoord>, values: Vec<f64>) -> Result<Self> {
        let n = locations.len();
        if n == 0 {
            return Err(FessError::Invalid("dataset needs at least one curve".into()));
        }
        if values.len() != n * grid.len() {
            return Err(FessError::Invalid(format!(
                "expected {} values for {n} curves on {} grid points, got {}",
                n * grid.len(),
                grid.len(),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(FessError::Invalid(format!(
                "non-finite value in curve {} at grid index {}",
                pos / grid.len(),
                pos % grid.len()
            )));
        }
        if let Some(i) = locations.iter().position(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(FessError::Invalid(format!("location {i} is not finite")));
        }
        Ok(SpatialFunctionalDataset {
            grid,
            locations,
            values,
        })
    }

    pub fn grid(&self) -> &EvalGrid {
        &self.grid
    }

    pub fn locations(&self) -> &[PlanarCoord] {
        &self.locations
    }

    pub fn n(&self) -> usize {
        self.locations.len()
    }

    pub fn m(&self) -> usize {
        self.grid.len()
    }

    pub fn curve(&self, i: usize) -> &[f64] {
        let m = self.m();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn curves(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.m())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Pointwise sample mean curve.
    pub fn mean_curve(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.m()];
        for c in self.curves() {
            for (acc, v) in mean.iter_mut().zip(c) {
                *acc += v;
            }
        }
        let n = self.n() as f64;
        mean.iter_mut().for_each(|v| *v /= n);
        mean
    }

    /// Copy with the pointwise sample mean removed from every curve.
    pub fn centered(&self) -> Self {
        let mean = self.mean_curve();
        let values = self
            .curves()
            .flat_map(|c| c.iter().zip(&mean).map(|(v, mu)| v - mu))
            .collect();
        SpatialFunctionalDataset {
            grid: self.grid.clone(),
            locations: self.locations.clone(),
            values,
        }
    }

    /// Rows `indices` in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(FessError::Invalid("empty subset".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n()) {
            return Err(FessError::Invalid(format!(
                "row index {bad} out of range for {} curves",
                self.n()
            )));
        }
        let locations = indices.iter().map(|&i| self.locations[i]).collect();
        let values = indices.iter().flat_map(|&i| self.curve(i).iter().copied()).collect();
        Ok(SpatialFunctionalDataset {
            grid: self.grid.clone(),
            locations,
            values,
        })
    }

    pub fn distances(&self) -> DMatrix<f64> {
        pairwise_distances(&self.locations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn grid_rejects_bad_input() {
        assert!(EvalGrid::new(vec![1.0]).is_err());
        assert!(EvalGrid::new(vec![0.0, 0.0]).is_err());
        assert!(EvalGrid::new(vec![0.0, 2.0, 1.0]).is_err());
        assert!(EvalGrid::new(vec![0.0, f64::NAN]).is_err());
        let g = EvalGrid::uniform(10.0, 220.0, 22).unwrap();
        assert_eq!(g.len(), 22);
        assert_eq!(g.points()[1], 20.0);
        assert_eq!(g.end(), 220.0);
    }

    #[test]
    fn geo_coord_ranges() {
        assert!(GeoCoord::new(180.0, -90.0).is_ok());
        assert!(GeoCoord::new(180.1, 0.0).is_err());
        assert!(GeoCoord::new(0.0, 90.5).is_err());
    }

    #[test]
    fn projection_reference_points() {
        let lon0 = -145.0;
        let o = project_sinusoidal(GeoCoord::new(lon0, 0.0).unwrap(), lon0);
        assert_eq!((o.x, o.y), (0.0, 0.0));

        let pole = project_sinusoidal(GeoCoord::new(lon0, 90.0).unwrap(), lon0);
        assert!(pole.x.abs() < 1e-12);
        assert_relative_eq!(pole.y, 10007.557, epsilon = 1e-3);

        let east = project_sinusoidal(GeoCoord::new(lon0 + 1.0, 0.0).unwrap(), lon0);
        assert_relative_eq!(east.x, 111.195, epsilon = 1e-3);
        assert_eq!(east.y, 0.0);
    }

    #[test]
    fn distance_matrix_examples() {
        let d = pairwise_distances(&[PlanarCoord::new(1.0, 1.0)]);
        assert_eq!(d.shape(), (1, 1));
        assert_eq!(d[(0, 0)], 0.0);

        let d = pairwise_distances(&[PlanarCoord::new(0.0, 0.0), PlanarCoord::new(3.0, 4.0)]);
        assert_eq!(d[(0, 1)], 5.0);
        assert_eq!(d[(1, 0)], 5.0);
    }

    #[test]
    fn trapz_examples() {
        let g = EvalGrid::uniform(0.0, 1.0, 7).unwrap();
        let one = vec![1.0; 7];
        assert_relative_eq!(trapz_inner(&one, &one, &g), 1.0, epsilon = 1e-15);
        assert_eq!(trapz_inner(&[0.0; 7], &one, &g), 0.0);

        let g2 = EvalGrid::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(trapz_inner(&[0.0, 1.0], &[1.0, 1.0], &g2), 0.5);
    }

    #[test]
    fn trapz_uses_actual_spacing() {
        let g = EvalGrid::new(vec![0.0, 0.1, 0.5, 2.0]).unwrap();
        let a: Vec<f64> = g.points().iter().map(|t| 3.0 * t + 1.0).collect();
        // piecewise-linear integrand against a constant is integrated exactly
        assert_relative_eq!(trapz_inner(&a, &[1.0; 4], &g), 3.0 * 2.0 + 2.0, epsilon = 1e-12);
        let w = g.trapz_weights();
        let via_weights: f64 = a.iter().zip(&w).map(|(x, w)| x * w).sum();
        assert_relative_eq!(via_weights, 8.0, epsilon = 1e-12);
    }

    #[test]
    fn dataset_validation() {
        let g = EvalGrid::new(vec![0.0, 1.0]).unwrap();
        let p = PlanarCoord::new(0.0, 0.0);
        assert!(SpatialFunctionalDataset::new(g.clone(), vec![], vec![]).is_err());
        assert!(SpatialFunctionalDataset::new(g.clone(), vec![p], vec![vec![1.0]]).is_err());
        assert!(SpatialFunctionalDataset::new(g.clone(), vec![p], vec![vec![1.0, f64::INFINITY]]).is_err());
        let d = SpatialFunctionalDataset::new(g, vec![p, p], vec![vec![1.0, 2.0], vec![3.0, 6.0]]).unwrap();
        assert_eq!(d.mean_curve(), vec![2.0, 4.0]);
        assert_eq!(d.centered().curve(0), &[-1.0, -2.0]);
        assert_eq!(d.subset(&[1]).unwrap().curve(0), &[3.0, 6.0]);
        assert!(d.subset(&[2]).is_err());
    }

    proptest! {
        #[test]
        fn projection_injective_on_study_box(
            a in (-155.0f64..-135.0, 35.0f64..45.0),
            b in (-155.0f64..-135.0, 35.0f64..45.0),
        ) {
            prop_assume!(a != b);
            let lon0 = -145.0;
            let pa = project_sinusoidal(GeoCoord::new(a.0, a.1).unwrap(), lon0);
            let pb = project_sinusoidal(GeoCoord::new(b.0, b.1).unwrap(), lon0);
            prop_assert!(pa != pb);
        }

        #[test]
        fn distances_symmetric_and_metric(
            pts in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3..12)
        ) {
            let locs: Vec<_> = pts.iter().map(|&(x, y)| PlanarCoord::new(x, y)).collect();
            let d = pairwise_distances(&locs);
            let n = locs.len();
            for i in 0..n {
                prop_assert_eq!(d[(i, i)], 0.0);
                for j in 0..n {
                    prop_assert_eq!(d[(i, j)], d[(j, i)]);
                    for k in 0..n {
                        prop_assert!(d[(i, k)] <= d[(i, j)] + d[(j, k)] + 1e-9);
                    }
                }
            }
        }

        #[test]
        fn trapz_bilinear_symmetric(
            a in prop::collection::vec(-10.0f64..10.0, 6),
            b in prop::collection::vec(-10.0f64..10.0, 6),
            c in prop::collection::vec(-10.0f64..10.0, 6),
            s in -5.0f64..5.0,
        ) {
            let g = EvalGrid::new(vec![0.0, 0.3, 0.4, 1.0, 1.5, 3.0]).unwrap();
            let ab = trapz_inner(&a, &b, &g);
            prop_assert!((ab - trapz_inner(&b, &a, &g)).abs() <= 1e-12 * (1.0 + ab.abs()));
            let lin: Vec<f64> = a.iter().zip(&c).map(|(x, z)| s * x + z).collect();
            let lhs = trapz_inner(&lin, &b, &g);
            let rhs = s * ab + trapz_inner(&c, &b, &g);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
            let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            let sq = trapz_inner(&diff, &diff, &g);
            prop_assert!((trapz_sq_dist(&a, &b, &g) - sq).abs() <= 1e-9 * (1.0 + sq));
        }
    }
}
