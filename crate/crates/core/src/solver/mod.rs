//! Extrinsic pose estimation from correspondences.
//!
//! [`ransac_pose`] draws minimal samples, fits each with the linear solver
//! [`dlt_pose`] and keeps the hypothesis with the largest consensus.
//! [`lm_refine`] then minimizes `½‖residuals‖²` over the inliers.
//! [`calibrate`] chains the two.

mod dlt;
mod lm;
mod ransac;

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

pub use dlt::dlt_pose;
pub use lm::{lm_refine, LmConfig};
pub use ransac::{ransac_pose, ransac_pose_with, RansacConfig};

use crate::correspondence::Correspondence;
use crate::error::{Error, Result};
use crate::geometry::{skew, CameraIntrinsics, ExtrinsicPose};
use crate::par::Execution;

/// Residual assigned to each coordinate of a point at or behind the camera.
pub const BEHIND_CAMERA_RESIDUAL: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    pub pose: ExtrinsicPose,
    /// One flag per input correspondence.
    pub inlier_mask: Vec<bool>,
    pub iterations_used: usize,
    /// `½‖residuals‖²` over the inliers, in squared pixels.
    pub final_cost: f64,
    pub converged: bool,
    /// Cost after every accepted step, starting with the initial cost.
    /// Empty for estimators that do not iterate on a cost.
    pub cost_history: Vec<f64>,
}

impl PoseEstimate {
    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|&&b| b).count()
    }
}

/// Projection of a single correspondence: `Some((du, dv))` when the point is
/// in front of the camera, `None` otherwise.
pub(crate) fn point_residual(
    pose: &ExtrinsicPose,
    k: &CameraIntrinsics,
    c: &Correspondence,
) -> Option<(f64, f64)> {
    let cam = pose.transform(&c.radar);
    if !(cam.z > 1e-9) {
        return None;
    }
    let px = k.camera_to_pixel(&cam);
    Some((px.u - c.pixel.u, px.v - c.pixel.v))
}

/// Stacked `(u_proj − u_gt, v_proj − v_gt)` for every correspondence, in
/// input order. Points at or behind the camera contribute
/// [`BEHIND_CAMERA_RESIDUAL`] in both coordinates.
pub fn residuals(
    pose: &ExtrinsicPose,
    k: &CameraIntrinsics,
    corrs: &[Correspondence],
) -> DVector<f64> {
    let mut r = DVector::zeros(2 * corrs.len());
    for (i, c) in corrs.iter().enumerate() {
        let (du, dv) =
            point_residual(pose, k, c).unwrap_or((BEHIND_CAMERA_RESIDUAL, BEHIND_CAMERA_RESIDUAL));
        r[2 * i] = du;
        r[2 * i + 1] = dv;
    }
    r
}

/// Left Jacobian of SO(3): `∂(exp(ω)·p)/∂ω = −[exp(ω)·p]× · J_l(ω)`.
fn so3_left_jacobian(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let k = skew(w);
    let (a, b) = if theta2 < 1e-10 {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        let theta = theta2.sqrt();
        (
            (1.0 - theta.cos()) / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    Matrix3::identity() + a * k + b * k * k
}

/// Analytic `2N × 6` Jacobian of [`residuals`] with respect to the pose
/// vector `(axis-angle, translation)`.
pub fn jacobian(
    pose6: &[f64; 6],
    k: &CameraIntrinsics,
    corrs: &[Correspondence],
) -> Result<DMatrix<f64>> {
    let pose = ExtrinsicPose::from_params(pose6)?;
    let w = Vector3::new(pose6[0], pose6[1], pose6[2]);
    let jl = so3_left_jacobian(&w);
    let mut jac = DMatrix::zeros(2 * corrs.len(), 6);
    for (i, c) in corrs.iter().enumerate() {
        let rotated = pose.rotation() * c.radar.to_vector();
        let cam = rotated + pose.translation();
        if !(cam.z > 1e-9) {
            return Err(Error::InvalidLinearization { index: i });
        }
        let iz = 1.0 / cam.z;
        let iz2 = iz * iz;
        let d_proj = Matrix2x3::new(
            k.fx() * iz,
            k.skew() * iz,
            -(k.fx() * cam.x + k.skew() * cam.y) * iz2,
            0.0,
            k.fy() * iz,
            -k.fy() * cam.y * iz2,
        );
        let d_rot = d_proj * (-skew(&rotated) * jl);
        jac.view_mut((2 * i, 0), (2, 3)).copy_from(&d_rot);
        jac.view_mut((2 * i, 3), (2, 3)).copy_from(&d_proj);
    }
    Ok(jac)
}

/// Inlier flags: positive depth and reprojection distance `< threshold`.
pub(crate) fn inlier_mask(
    pose: &ExtrinsicPose,
    k: &CameraIntrinsics,
    corrs: &[Correspondence],
    threshold: f64,
) -> Vec<bool> {
    corrs
        .iter()
        .map(|c| matches!(point_residual(pose, k, c), Some((du, dv)) if du.hypot(dv) < threshold))
        .collect()
}

/// `½‖residuals‖²` restricted to the masked-in correspondences.
pub(crate) fn masked_cost(
    pose: &ExtrinsicPose,
    k: &CameraIntrinsics,
    corrs: &[Correspondence],
    mask: &[bool],
) -> f64 {
    let sel: Vec<Correspondence> = corrs
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(c, _)| *c)
        .collect();
    0.5 * residuals(pose, k, &sel).norm_squared()
}

/// RANSAC initialization followed by Levenberg-Marquardt refinement on the
/// inliers. The returned mask is recomputed against the refined pose with
/// the RANSAC threshold, and `final_cost` is taken over that mask.
pub fn calibrate(
    corrs: &[Correspondence],
    k: &CameraIntrinsics,
    ransac_cfg: &RansacConfig,
    lm_cfg: &LmConfig,
) -> Result<PoseEstimate> {
    calibrate_with(corrs, k, ransac_cfg, lm_cfg, Execution::default())
}

pub fn calibrate_with(
    corrs: &[Correspondence],
    k: &CameraIntrinsics,
    ransac_cfg: &RansacConfig,
    lm_cfg: &LmConfig,
    exec: Execution,
) -> Result<PoseEstimate> {
    let initial = ransac_pose_with(corrs, k, ransac_cfg, exec)?;
    let inliers: Vec<Correspondence> = corrs
        .iter()
        .zip(&initial.inlier_mask)
        .filter(|(c, &m)| m && point_residual(&initial.pose, k, c).is_some())
        .map(|(c, _)| *c)
        .collect();
    let refined = lm_refine(&initial.pose, k, &inliers, lm_cfg)?;
    let mask = inlier_mask(&refined.pose, k, corrs, ransac_cfg.inlier_threshold);
    let final_cost = masked_cost(&refined.pose, k, corrs, &mask);
    Ok(PoseEstimate {
        pose: refined.pose,
        inlier_mask: mask,
        iterations_used: refined.iterations_used,
        final_cost,
        converged: refined.converged,
        cost_history: refined.cost_history,
    })
}
