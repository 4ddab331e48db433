//! Reference-curve construction with the LMS method.
//!
//! A positive response is modeled as Box-Cox Cole-Green distributed with
//! median `M`, scale `S` and power `L` varying smoothly in a covariate:
//! `M = h₁(x)`, `ln S = h₂(x)`, `L = h₃(x)`, each `hₖ` a penalized B-spline
//! (or an orthogonal polynomial). Models are fitted by penalized maximum
//! likelihood with a cyclic local-scoring algorithm.
//!
//! - [`bccg`]: distribution functions, sampling and z/percentile conversion
//! - [`smoothing`]: B-spline bases, difference penalties, penalized least squares
//! - [`fitting`]: datasets, the fitter, prediction, percentile curves, z-scores
//! - [`selection`]: BIC grid search and k-fold cross-validation
//! - [`analysis`]: outliers, sensitivity, model comparison, reverse LMS, simulation
//! - [`io`]: CSV import/export and the JSON model document

pub mod analysis;
pub mod bccg;
pub mod error;
pub mod fitting;
pub mod io;
pub mod normal;
pub mod selection;
pub mod smoothing;

pub use bccg::{BccgParams, TailMode};
pub use error::{Error, ErrorClass, Result};
pub use fitting::{
    fit_lms, global_deviance, percentile_curves, predict_lms, zscore, Dataset, FitOptions, FitReport,
    FittedModel, Hyperparameters, LmsPoint, Row,
};
pub use smoothing::{PSplineConfig, SmootherSpec};

/// Percentile levels drawn on a standard growth chart.
pub const DEFAULT_PERCENTILES: [f64; 7] = [3.0, 10.0, 25.0, 50.0, 75.0, 90.0, 97.0];
