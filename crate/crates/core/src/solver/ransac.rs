use std::cmp::Ordering;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dlt::{dlt_pose, MIN_POINTS};
use super::lm::{lm_refine, LmConfig};
use super::{inlier_mask, masked_cost, point_residual, PoseEstimate};
use crate::correspondence::Correspondence;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, ExtrinsicPose};
use crate::par::{map_indexed, Execution};

/// Hypotheses are generated and scored in fixed-size batches; the adaptive
/// stopping rule is only evaluated between batches, so the result does not
/// depend on how a batch is scheduled.
const BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub max_iterations: usize,
    /// Reprojection distance in pixels below which a point is an inlier.
    pub inlier_threshold: f64,
    pub min_sample: usize,
    pub confidence: f64,
    pub seed: u64,
    /// Levenberg-Marquardt iterations applied to each linear hypothesis on
    /// its own sample (and to the final refit on its inliers). Zero keeps
    /// the raw linear solutions.
    pub polish_iterations: usize,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            inlier_threshold: 20.0,
            min_sample: MIN_POINTS,
            confidence: 0.999,
            seed: 0,
            polish_iterations: 10,
        }
    }
}

impl RansacConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::Config("max_iterations must be ≥ 1".into()));
        }
        if !(self.inlier_threshold > 0.0) {
            return Err(Error::Config("inlier_threshold must be positive".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::Config("confidence must lie in (0, 1)".into()));
        }
        if self.min_sample != MIN_POINTS {
            return Err(Error::Config(format!(
                "min_sample is fixed at {MIN_POINTS} for the linear solver"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Hypothesis {
    iteration: usize,
    pose: ExtrinsicPose,
    inliers: usize,
    rms: f64,
}

/// More inliers first, then lower inlier RMS, then earlier iteration.
fn rank(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.inliers
        .cmp(&a.inliers)
        .then(a.rms.total_cmp(&b.rms))
        .then(a.iteration.cmp(&b.iteration))
}

fn score(
    pose: &ExtrinsicPose,
    k: &CameraIntrinsics,
    corrs: &[Correspondence],
    threshold: f64,
) -> (usize, f64) {
    let mut n = 0usize;
    let mut sq = 0.0;
    for c in corrs {
        if let Some((du, dv)) = point_residual(pose, k, c) {
            let d2 = du * du + dv * dv;
            if d2.sqrt() < threshold {
                n += 1;
                sq += d2;
            }
        }
    }
    let rms = if n > 0 {
        (sq / n as f64).sqrt()
    } else {
        f64::INFINITY
    };
    (n, rms)
}

/// Linear fit, then a few rigid LM steps on the same points. The linear
/// solve has eleven degrees of freedom and absorbs noise in directions a
/// rigid pose cannot follow; the polish puts the hypothesis back on the
/// six-dimensional pose manifold.
fn fit(
    corrs: &[Correspondence],
    k: &CameraIntrinsics,
    polish_iterations: usize,
) -> Result<ExtrinsicPose> {
    let pose = dlt_pose(corrs, k)?;
    if polish_iterations == 0 {
        return Ok(pose);
    }
    let cfg = LmConfig {
        max_iterations: polish_iterations,
        ..LmConfig::default()
    };
    Ok(lm_refine(&pose, k, corrs, &cfg).map_or(pose, |est| est.pose))
}

/// Sample indices for one iteration. The stream is keyed on the iteration,
/// so any iteration can be reproduced independently of the others.
fn draw_sample(seed: u64, iteration: usize, n: usize, m: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration as u64);
    let mut idx = index::sample(&mut rng, n, m).into_vec();
    idx.sort_unstable();
    idx
}

/// Iterations needed to draw one all-inlier sample with probability
/// `confidence` at inlier ratio `w`.
fn adaptive_bound(w: f64, m: usize, confidence: f64, cap: usize) -> usize {
    if w >= 1.0 {
        return 1;
    }
    let all_inlier = w.powi(m as i32);
    if all_inlier <= f64::EPSILON {
        return cap;
    }
    let n = (1.0 - confidence).ln() / (1.0 - all_inlier).ln();
    if n.is_finite() {
        (n.ceil().max(1.0) as usize).min(cap)
    } else {
        cap
    }
}

/// Robust initial pose: RANSAC over minimal linear fits.
///
/// Each iteration draws `min_sample` correspondences, fits them, and counts
/// the points that reproject within `inlier_threshold` with positive depth.
/// The winning hypothesis is refit on all of its inliers and the mask is
/// recomputed against the refit pose.
pub fn ransac_pose(
    corrs: &[Correspondence],
    k: &CameraIntrinsics,
    cfg: &RansacConfig,
) -> Result<PoseEstimate> {
    ransac_pose_with(corrs, k, cfg, Execution::default())
}

pub fn ransac_pose_with(
    corrs: &[Correspondence],
    k: &CameraIntrinsics,
    cfg: &RansacConfig,
    exec: Execution,
) -> Result<PoseEstimate> {
    cfg.validate()?;
    let n = corrs.len();
    let m = cfg.min_sample;
    if n < m {
        return Err(Error::InsufficientData { needed: m, got: n });
    }

    let mut best: Option<Hypothesis> = None;
    let mut required = cfg.max_iterations;
    let mut done = 0usize;
    while done < required {
        let batch = BATCH.min(required - done);
        let start = done;
        let results = map_indexed(exec, batch, |i| {
            let iteration = start + i;
            let sample: Vec<Correspondence> = draw_sample(cfg.seed, iteration, n, m)
                .into_iter()
                .map(|j| corrs[j])
                .collect();
            let pose = fit(&sample, k, cfg.polish_iterations).ok()?;
            let (inliers, rms) = score(&pose, k, corrs, cfg.inlier_threshold);
            Some(Hypothesis {
                iteration,
                pose,
                inliers,
                rms,
            })
        });
        for h in results.into_iter().flatten() {
            if best.as_ref().is_none_or(|b| rank(&h, b).is_lt()) {
                best = Some(h);
            }
        }
        done += batch;
        if let Some(b) = &best {
            let w = b.inliers as f64 / n as f64;
            required = adaptive_bound(w, m, cfg.confidence, cfg.max_iterations).max(done);
            if required == done {
                break;
            }
        }
    }

    let best_inliers = best.as_ref().map_or(0, |b| b.inliers);
    let Some(best) = best.filter(|b| b.inliers >= m) else {
        return Err(Error::NoConsensus {
            best_inliers,
            needed: m,
        });
    };

    let consensus: Vec<Correspondence> = inlier_mask(&best.pose, k, corrs, cfg.inlier_threshold)
        .into_iter()
        .zip(corrs)
        .filter(|(m, _)| *m)
        .map(|(_, c)| *c)
        .collect();
    let pose = fit(&consensus, k, cfg.polish_iterations).unwrap_or(best.pose);
    let mask = inlier_mask(&pose, k, corrs, cfg.inlier_threshold);
    let final_cost = masked_cost(&pose, k, corrs, &mask);
    Ok(PoseEstimate {
        pose,
        inlier_mask: mask,
        iterations_used: done,
        final_cost,
        converged: true,
        cost_history: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{project, PixelPoint};
    use crate::synth::pose_error;
    use nalgebra::Vector3;
    use rand::Rng;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(1000.0, 1000.0, 640.0, 360.0).unwrap()
    }

    fn truth() -> ExtrinsicPose {
        ExtrinsicPose::from_params(&[0.03, 0.04, -0.02, 0.2, -0.1, 0.05])
            .unwrap()
            .then(&ExtrinsicPose::radar_to_camera_nominal())
    }

    /// 24 exact correspondences; the first three are displaced by 500 px.
    fn scene(seed: u64) -> Vec<Correspondence> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pose = truth();
        (0..24)
            .map(|i| {
                let c = Vector3::new(
                    rng.random_range(-6.0..6.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(5.0..25.0),
                );
                let p = pose.inverse_transform(&c);
                let mut px = project(&k(), &pose, &p).unwrap().0;
                if i < 3 {
                    px.u += 500.0;
                }
                Correspondence::new(px, p, i)
            })
            .collect()
    }

    #[test]
    fn rejects_gross_outliers() {
        let corrs = scene(1);
        let est = ransac_pose(&corrs, &k(), &RansacConfig::with_seed(9)).unwrap();
        let expected: Vec<bool> = (0..24).map(|i| i >= 3).collect();
        assert_eq!(est.inlier_mask, expected);
        let (rot, trans) = pose_error(&est.pose, &truth());
        assert!(rot < 1e-4 && trans < 1e-4);
        // brute-force check of every point against the returned pose
        for (c, &m) in corrs.iter().zip(&est.inlier_mask) {
            let d = project(&k(), &est.pose, &c.radar)
                .unwrap()
                .0
                .distance(&c.pixel);
            assert_eq!(d < 20.0, m);
        }
    }

    #[test]
    fn clean_data_matches_direct_fit() {
        let corrs: Vec<_> = scene(2).into_iter().skip(3).collect();
        let est = ransac_pose(&corrs, &k(), &RansacConfig::with_seed(1)).unwrap();
        assert!(est.inlier_mask.iter().all(|&b| b));
        let direct = dlt_pose(&corrs, &k()).unwrap();
        assert!((est.pose.rotation() - direct.rotation()).abs().max() < 1e-9);
        assert!((est.pose.translation() - direct.translation()).abs().max() < 1e-9);
        let linear = RansacConfig {
            polish_iterations: 0,
            ..RansacConfig::with_seed(1)
        };
        let est = ransac_pose(&corrs, &k(), &linear).unwrap();
        assert_eq!(est.pose, direct);
        assert!((est.pose.translation() - direct.translation()).abs().max() < 1e-9);
    }

    #[test]
    fn deterministic_across_execution_modes() {
        let corrs = scene(3);
        let cfg = RansacConfig::with_seed(77);
        let a = ransac_pose_with(&corrs, &k(), &cfg, Execution::Parallel).unwrap();
        let b = ransac_pose_with(&corrs, &k(), &cfg, Execution::Parallel).unwrap();
        let c = ransac_pose_with(&corrs, &k(), &cfg, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn insufficient_and_no_consensus() {
        let corrs = scene(4);
        assert!(matches!(
            ransac_pose(&corrs[..5], &k(), &RansacConfig::default()),
            Err(Error::InsufficientData { needed: 6, got: 5 })
        ));
        // pixels unrelated to the radar points
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let junk: Vec<_> = corrs
            .iter()
            .map(|c| {
                Correspondence::new(
                    PixelPoint::new(rng.random_range(0.0..1280.0), rng.random_range(0.0..720.0)),
                    c.radar,
                    0,
                )
            })
            .collect();
        let cfg = RansacConfig {
            inlier_threshold: 0.5,
            max_iterations: 200,
            ..RansacConfig::default()
        };
        assert!(matches!(
            ransac_pose(&junk, &k(), &cfg),
            Err(Error::NoConsensus { .. })
        ));
    }

    #[test]
    fn adaptive_bound_values() {
        assert_eq!(adaptive_bound(1.0, 6, 0.999, 2000), 1);
        assert_eq!(adaptive_bound(0.0, 6, 0.999, 2000), 2000);
        // w = 0.5, m = 6: ln(0.001)/ln(1 − 1/64) = 438.6…
        assert_eq!(adaptive_bound(0.5, 6, 0.999, 2000), 439);
    }

    #[test]
    fn rejects_bad_config() {
        let corrs = scene(5);
        for cfg in [
            RansacConfig {
                max_iterations: 0,
                ..RansacConfig::default()
            },
            RansacConfig {
                inlier_threshold: 0.0,
                ..RansacConfig::default()
            },
            RansacConfig {
                confidence: 1.0,
                ..RansacConfig::default()
            },
            RansacConfig {
                min_sample: 4,
                ..RansacConfig::default()
            },
        ] {
            assert!(matches!(
                ransac_pose(&corrs, &k(), &cfg),
                Err(Error::Config(_))
            ));
        }
    }
}
