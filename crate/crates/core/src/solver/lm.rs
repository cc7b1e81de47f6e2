use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use super::{jacobian, point_residual, residuals, PoseEstimate};
use crate::correspondence::Correspondence;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, ExtrinsicPose};

const MIN_POINTS: usize = 4;

/// Damping schedule and stopping rules for [`lm_refine`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub cost_tol: f64,
    /// Stop when the step norm falls below this.
    pub param_tol: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            initial_damping: 1e-3,
            damping_up: 10.0,
            damping_down: 0.1,
            cost_tol: 1e-10,
            param_tol: 1e-10,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.initial_damping,
            self.damping_up,
            self.damping_down,
            self.cost_tol,
            self.param_tol,
        ];
        if self.max_iterations == 0 || positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("LM parameters must be positive".into()));
        }
        if !(self.damping_up > 1.0 && self.damping_down < 1.0) {
            return Err(Error::Config(
                "LM damping must satisfy damping_up > 1 > damping_down".into(),
            ));
        }
        Ok(())
    }
}

/// Cost of a candidate, or `None` when a point falls at or behind the camera.
fn strict_cost(
    pose: &ExtrinsicPose,
    k: &CameraIntrinsics,
    corrs: &[Correspondence],
) -> Option<f64> {
    let mut sum = 0.0;
    for c in corrs {
        let (du, dv) = point_residual(pose, k, c)?;
        sum += du * du + dv * dv;
    }
    Some(0.5 * sum)
}

/// Levenberg-Marquardt over `(axis-angle, translation)` minimizing
/// `½‖residuals‖²`. The damping term is `λ·I`; λ shrinks on accepted steps
/// and grows on rejected ones. Steps that would put any point at or behind
/// the camera are rejected.
pub fn lm_refine(
    initial: &ExtrinsicPose,
    k: &CameraIntrinsics,
    corrs: &[Correspondence],
    cfg: &LmConfig,
) -> Result<PoseEstimate> {
    cfg.validate()?;
    if corrs.len() < MIN_POINTS {
        return Err(Error::InsufficientData {
            needed: MIN_POINTS,
            got: corrs.len(),
        });
    }
    if let Some(index) = corrs
        .iter()
        .position(|c| point_residual(initial, k, c).is_none())
    {
        return Err(Error::InvalidInitialization { index });
    }

    let mut params = Vector6::from(initial.to_params());
    let mut pose = ExtrinsicPose::from_params(&params.into())?;
    let mut cost = 0.5 * residuals(&pose, k, corrs).norm_squared();
    let mut history = vec![cost];
    let mut lambda = cfg.initial_damping;
    let mut converged = cost == 0.0;
    let mut iterations = 0;

    while !converged && iterations < cfg.max_iterations {
        iterations += 1;
        let jac = jacobian(&params.into(), k, corrs)?;
        let r = residuals(&pose, k, corrs);
        let jtj: Matrix6<f64> = (jac.transpose() * &jac).fixed_view::<6, 6>(0, 0).into();
        let jtr: Vector6<f64> = (jac.transpose() * r).fixed_view::<6, 1>(0, 0).into();

        let damped = jtj + Matrix6::identity() * lambda;
        let Some(step) = damped.cholesky().map(|ch| ch.solve(&(-jtr))) else {
            lambda *= cfg.damping_up;
            continue;
        };
        if step.norm() < cfg.param_tol {
            converged = true;
            break;
        }

        let candidate = params + step;
        let accepted = ExtrinsicPose::from_params(&candidate.into())
            .ok()
            .and_then(|p| strict_cost(&p, k, corrs).map(|c| (p, c)))
            .filter(|(_, c)| *c < cost);
        match accepted {
            Some((p, new_cost)) => {
                let decrease = (cost - new_cost) / cost;
                params = candidate;
                pose = p;
                cost = new_cost;
                history.push(cost);
                lambda *= cfg.damping_down;
                if decrease < cfg.cost_tol || cost == 0.0 {
                    converged = true;
                }
            }
            None => lambda *= cfg.damping_up,
        }
    }

    Ok(PoseEstimate {
        pose,
        inlier_mask: vec![true; corrs.len()],
        iterations_used: iterations,
        final_cost: cost,
        converged,
        cost_history: history,
    })
}
