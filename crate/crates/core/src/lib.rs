//! Preprocessing and forecast-benchmarking toolkit for half-hourly
//! electricity price series.
//!
//! The pipeline runs in four stages: spike detection and regularization
//! (seasonal decomposition + robust Kalman filtering + adaptive
//! thresholding), feature engineering, sliding-window forecasting with
//! statistical baselines, and MAE/MAPE/RMSE evaluation.

pub mod error;
pub mod features;
pub mod forecast;
pub mod kalman;
pub mod metrics;
pub mod pipeline;
pub mod series;
pub mod spike;
pub mod stl;
pub mod synth;
pub mod windowing;

pub use error::{Error, Result};
