//! Effective sample size for spatially indexed functional data.
//!
//! The crate estimates how many independent curves a spatial curve sample is
//! worth. The pipeline is:
//!
//! 1. load curves and project their locations ([`dataset`]),
//! 2. estimate the empirical trace-variogram and fit a parametric model
//!    ([`variogram`]),
//! 3. plug the fitted trace-covariogram into the functional ESS ([`ess`]).
//!
//! [`far1`] provides closed-form FAR(1) results and field simulators used to
//! validate the pipeline, and [`fboxplot`] checks how well a subsample of the
//! ESS size reproduces the full sample's functional boxplot.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod ess;
pub mod far1;
pub mod fboxplot;
pub mod optim;
pub mod rng;
pub mod variogram;

pub use dataset::{
    load_wide_csv, pairwise_distances, project_sinusoidal, trapz_inner, write_wide_csv, CoordKind, CsvSchema, EvalGrid,
    GeoCoord, LoadedDataset, PlanarCoord, SpatialFunctionalDataset,
};
pub use error::{FessError, Result};
pub use ess::{ess_functional, ess_plugin, ess_scalar, EssOptions, EssReport};
pub use far1::{
    far1_ess, far1_simulate, far1_sweep, far1_trace_cov, gauss_field_simulate, marginal_ess, Basis, Far1Spec,
    GaussFieldSpec, SweepAxis, SweepRow,
};
pub use fboxplot::{
    fidelity_metrics, functional_boxplot, mbd, subsample_experiment, FBoxplotSummary, FidelityMetrics,
    SubsampleExperiment,
};
pub use variogram::{
    empirical_trace_covariogram, empirical_trace_variogram, fit_model, model_trace_cov, model_trace_variogram,
    CovFamily, EmpiricalCovariogram, EmpiricalVariogram, FitOptions, FitResult, LagBins, NuggetMode, TraceCovModel,
    Weighting,
};
