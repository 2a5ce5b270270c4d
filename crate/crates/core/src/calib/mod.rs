//! Self-calibration of light positions from proxy geometry.

pub mod fourpoint;
pub mod lm;
pub mod ransac;
pub mod residual;

pub use ransac::{
    calibrate_all, calibrate_light, CalibConfig, CalibDiagnostics, CalibResult, RigCalibration,
};
