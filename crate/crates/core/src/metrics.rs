//! Reprojection-error metrics: mean absolute (MARE) and root-mean-square
//! (RMSRE) reprojection error, and the all-points / inliers report.
//!
//! Distances are Euclidean pixel distances between the projected radar
//! point and its paired pixel. Points at or behind the camera count as
//! [`BEHIND_CAMERA_DISTANCE`].

use serde::{Deserialize, Serialize};

use crate::correspondence::Correspondence;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, ExtrinsicPose};
use crate::solver::{point_residual, BEHIND_CAMERA_RESIDUAL};

pub const BEHIND_CAMERA_DISTANCE: f64 = BEHIND_CAMERA_RESIDUAL;

/// Per-correspondence reprojection distance in pixels, in input order.
pub fn reprojection_distances(
    pose: &ExtrinsicPose,
    k: &CameraIntrinsics,
    corrs: &[Correspondence],
) -> Vec<f64> {
    corrs
        .iter()
        .map(|c| match point_residual(pose, k, c) {
            Some((du, dv)) => du.hypot(dv),
            None => BEHIND_CAMERA_DISTANCE,
        })
        .collect()
}

fn rms_of(d: &[f64]) -> f64 {
    (d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64).sqrt()
}

fn mean_of(d: &[f64]) -> f64 {
    d.iter().sum::<f64>() / d.len() as f64
}

pub fn rmsre(pose: &ExtrinsicPose, k: &CameraIntrinsics, corrs: &[Correspondence]) -> Result<f64> {
    if corrs.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(rms_of(&reprojection_distances(pose, k, corrs)))
}

pub fn mare(pose: &ExtrinsicPose, k: &CameraIntrinsics, corrs: &[Correspondence]) -> Result<f64> {
    if corrs.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(mean_of(&reprojection_distances(pose, k, corrs)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointError {
    pub index: usize,
    pub distance: f64,
    pub is_inlier: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mare_all: f64,
    pub rmsre_all: f64,
    /// Zero when there are no inliers.
    pub mare_inliers: f64,
    pub rmsre_inliers: f64,
    pub n_all: usize,
    pub n_inliers: usize,
    pub per_point: Vec<PointError>,
}

/// Metrics over all points and over the inliers, where an inlier has
/// distance strictly below `inlier_threshold_px`.
pub fn evaluate(
    pose: &ExtrinsicPose,
    k: &CameraIntrinsics,
    corrs: &[Correspondence],
    inlier_threshold_px: f64,
) -> Result<EvaluationReport> {
    if corrs.is_empty() {
        return Err(Error::EmptySet);
    }
    let dist = reprojection_distances(pose, k, corrs);
    let per_point: Vec<PointError> = dist
        .iter()
        .enumerate()
        .map(|(index, &distance)| PointError {
            index,
            distance,
            is_inlier: distance < inlier_threshold_px,
        })
        .collect();
    let inliers: Vec<f64> = per_point
        .iter()
        .filter(|p| p.is_inlier)
        .map(|p| p.distance)
        .collect();
    let (mare_inliers, rmsre_inliers) = if inliers.is_empty() {
        (0.0, 0.0)
    } else {
        (mean_of(&inliers), rms_of(&inliers))
    };
    Ok(EvaluationReport {
        mare_all: mean_of(&dist),
        rmsre_all: rms_of(&dist),
        mare_inliers,
        rmsre_inliers,
        n_all: corrs.len(),
        n_inliers: inliers.len(),
        per_point,
    })
}
