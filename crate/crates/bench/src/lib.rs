//! Deterministic fixtures shared by the benchmarks.

use fess_core::rng::replicate_rng;
use fess_core::{Basis, CovFamily, EvalGrid, GaussFieldSpec, PlanarCoord, SpatialFunctionalDataset, TraceCovModel};
use rand::Rng;

/// Uniform sites on a `side` x `side` km box.
pub fn sites(n: usize, side: f64, seed: u64) -> Vec<PlanarCoord> {
    let mut rng = replicate_rng(seed, 0);
    (0..n)
        .map(|_| PlanarCoord::new(rng.random::<f64>() * side, rng.random::<f64>() * side))
        .collect()
}

/// Exponential field with `n` sites and 22 depth levels.
pub fn field(n: usize, seed: u64) -> SpatialFunctionalDataset {
    let grid = EvalGrid::uniform(10.0, 220.0, 22).expect("valid grid");
    let model = TraceCovModel::new(CovFamily::Exponential, 1.0, 100.0, 0.0).expect("valid model");
    let spec = GaussFieldSpec::new(model, vec![0.2; 5], grid, Basis::Fourier).expect("valid spec");
    fess_core::gauss_field_simulate(&spec, &sites(n, 1000.0, seed), seed).expect("simulation")
}
