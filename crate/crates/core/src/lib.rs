//! Targetless radar-camera extrinsic calibration.
//!
//! The pipeline turns per-frame object detections from a radar and a camera
//! into 3-D/2-D point correspondences, thins them with a block grid over the
//! image, estimates the radar-to-camera pose with RANSAC over a linear
//! resection solver, and refines it with Levenberg-Marquardt on the
//! reprojection error.
//!
//! ```text
//! detections ─► correspondence::associate ─► correspondence::block_sample
//!            ─► solver::calibrate (ransac_pose ─► lm_refine) ─► metrics::evaluate
//! ```
//!
//! [`synth`] generates scenes with a known ground-truth pose and is the
//! oracle behind most of the tests.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correspondence;
pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod par;
pub mod solver;
pub mod synth;

pub use correspondence::{
    associate, block_sample, spatial_coverage, CameraDetection, Correspondence, MatchStrategy,
    MatcherConfig, RadarDetection,
};
pub use error::{Error, Result};
pub use geometry::{
    axis_angle_to_matrix, matrix_to_axis_angle, nearest_rotation, project,
    radar_polar_to_cartesian, AxisAngle, CameraIntrinsics, ExtrinsicPose, PixelPoint, RadarPoint,
};
pub use metrics::{evaluate, mare, rmsre, EvaluationReport};
pub use par::Execution;
pub use solver::{
    calibrate, dlt_pose, jacobian, lm_refine, ransac_pose, residuals, LmConfig, PoseEstimate,
    RansacConfig,
};
