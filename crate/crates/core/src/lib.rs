//! Soil total-nitrogen estimation: multispectral band separation and NDVI
//! zonal features, LIBS line-intensity calibration, MLP and epsilon-SVR
//! regression, and grid / random / genetic hyper-parameter search scored by
//! k-fold cross-validated RMSE.

pub mod calibration;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod hpo;
pub mod matrix;
pub mod metrics;
pub mod models;
pub mod seed;
pub mod spectral;

pub use error::{Error, Result};
