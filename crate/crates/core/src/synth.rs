//! Synthetic radar-camera scenes with a known extrinsic pose.
//!
//! Targets move through the radar frame along simple trajectories. Each
//! frame yields one radar detection per target (spherical noise, optional
//! gross displacement) and, when the target is visible, one camera detection
//! (exact projection plus pixel noise).

use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::correspondence::{CameraDetection, RadarDetection};
use crate::error::{Error, Result};
use crate::geometry::{
    matrix_to_axis_angle, project, radar_cartesian_to_polar, radar_polar_to_cartesian,
    CameraIntrinsics, ExtrinsicPose, PixelPoint, RadarPoint,
};
use crate::io;
use crate::par::{map_indexed, Execution};

/// Targets must stay at least this far in front of the camera.
const MIN_DEPTH: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    /// Seconds from the start of the sequence.
    pub t: f64,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trajectory {
    Linear {
        start: [f64; 3],
        /// m/s
        velocity: [f64; 3],
    },
    /// Horizontal circle at constant height.
    Circular {
        center: [f64; 3],
        radius: f64,
        /// rad/s
        angular_rate: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Piecewise-linear in time, held constant outside the waypoint span.
    Waypoints { points: Vec<Waypoint> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub object_id: i64,
    #[serde(default)]
    pub class_label: Option<String>,
    #[serde(flatten)]
    pub path: Trajectory,
}

impl TrajectorySpec {
    /// Target center in the radar frame at time `t`.
    pub fn position(&self, t: f64) -> RadarPoint {
        let v = match &self.path {
            Trajectory::Linear { start, velocity } => {
                Vector3::from(*start) + Vector3::from(*velocity) * t
            }
            Trajectory::Circular {
                center,
                radius,
                angular_rate,
                phase,
            } => {
                let a = phase + angular_rate * t;
                Vector3::from(*center) + Vector3::new(radius * a.cos(), radius * a.sin(), 0.0)
            }
            Trajectory::Waypoints { points } => waypoint_position(points, t),
        };
        RadarPoint::from_vector(&v)
    }

    fn validate(&self) -> Result<()> {
        match &self.path {
            Trajectory::Waypoints { points } => {
                if points.is_empty() {
                    return Err(Error::Config(format!(
                        "target {}: waypoint list is empty",
                        self.object_id
                    )));
                }
                if points.windows(2).any(|w| !(w[1].t > w[0].t)) {
                    return Err(Error::Config(format!(
                        "target {}: waypoint times must increase strictly",
                        self.object_id
                    )));
                }
            }
            Trajectory::Circular { radius, .. } if !(*radius >= 0.0) => {
                return Err(Error::Config(format!(
                    "target {}: radius must be non-negative",
                    self.object_id
                )));
            }
            _ => {}
        }
        Ok(())
    }
}

fn waypoint_position(points: &[Waypoint], t: f64) -> Vector3<f64> {
    let first = &points[0];
    if t <= first.t {
        return Vector3::from(first.position);
    }
    for w in points.windows(2) {
        if t <= w[1].t {
            let a = (t - w[0].t) / (w[1].t - w[0].t);
            return Vector3::from(w[0].position) * (1.0 - a) + Vector3::from(w[1].position) * a;
        }
    }
    Vector3::from(points[points.len() - 1].position)
}

fn default_frame_rate() -> f64 {
    30.0
}

fn default_outlier_offset() -> f64 {
    500.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub true_pose: ExtrinsicPose,
    pub intrinsics: CameraIntrinsics,
    pub image_width: u32,
    pub image_height: u32,
    pub n_frames: usize,
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f64,
    pub targets: Vec<TrajectorySpec>,
    /// RMS of the 2-D pixel displacement; each axis gets `σ/√2`.
    #[serde(default)]
    pub pixel_noise_sigma: f64,
    #[serde(default)]
    pub radar_range_sigma: f64,
    #[serde(default)]
    pub radar_azimuth_sigma: f64,
    #[serde(default)]
    pub radar_elevation_sigma: f64,
    #[serde(default)]
    pub outlier_fraction: f64,
    #[serde(default = "default_outlier_offset")]
    pub outlier_offset_px: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SceneConfig {
    /// Two targets (a pedestrian on a waypoint path and a car circling)
    /// filmed for one minute at 30 fps by a 1280×720 camera co-mounted with
    /// the radar, no noise.
    pub fn two_targets(seed: u64) -> Self {
        let truth = ExtrinsicPose::from_params(&[0.035, -0.026, 0.017, 0.12, -0.08, 0.05])
            .expect("valid pose");
        let wp = |t: f64, x: f64, y: f64, z: f64| Waypoint {
            t,
            position: [x, y, z],
        };
        Self {
            true_pose: ExtrinsicPose::radar_to_camera_nominal().then(&truth),
            intrinsics: CameraIntrinsics::new(1000.0, 1000.0, 640.0, 360.0).expect("valid K"),
            image_width: 1280,
            image_height: 720,
            n_frames: 1800,
            frame_rate: 30.0,
            targets: vec![
                TrajectorySpec {
                    object_id: 1,
                    class_label: Some("person".into()),
                    path: Trajectory::Waypoints {
                        points: vec![
                            wp(0.0, -4.0, 6.0, -0.2),
                            wp(10.0, 3.5, 7.0, 0.1),
                            wp(20.0, 5.0, 13.0, 0.6),
                            wp(30.0, -1.0, 16.0, 1.0),
                            wp(40.0, -6.0, 11.0, 0.3),
                            wp(50.0, -2.0, 5.0, -0.4),
                            wp(60.0, 2.0, 9.0, 0.0),
                        ],
                    },
                },
                TrajectorySpec {
                    object_id: 2,
                    class_label: Some("car".into()),
                    path: Trajectory::Circular {
                        center: [0.5, 17.0, -0.35],
                        radius: 6.0,
                        angular_rate: TAU / 30.0,
                        phase: 0.0,
                    },
                },
            ],
            pixel_noise_sigma: 0.0,
            radar_range_sigma: 0.0,
            radar_azimuth_sigma: 0.0,
            radar_elevation_sigma: 0.0,
            outlier_fraction: 0.0,
            outlier_offset_px: 500.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_frames < 1 {
            return Err(Error::Config("n_frames must be ≥ 1".into()));
        }
        if !(self.frame_rate > 0.0) {
            return Err(Error::Config("frame_rate must be positive".into()));
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::Config("image dimensions must be positive".into()));
        }
        let sigmas = [
            self.pixel_noise_sigma,
            self.radar_range_sigma,
            self.radar_azimuth_sigma,
            self.radar_elevation_sigma,
        ];
        if sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::Config("noise sigmas must be finite and ≥ 0".into()));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::Config("outlier_fraction must lie in [0, 1)".into()));
        }
        if !(self.outlier_offset_px >= 0.0) {
            return Err(Error::Config("outlier_offset_px must be ≥ 0".into()));
        }
        if self.targets.is_empty() {
            return Err(Error::Config("scene has no targets".into()));
        }
        for target in &self.targets {
            target.validate()?;
            for f in 0..self.n_frames {
                let p = target.position(self.frame_time(f));
                let depth = self.true_pose.transform(&p).z;
                if !(depth > MIN_DEPTH) {
                    return Err(Error::Config(format!(
                        "target {} is {depth:.3} m from the camera plane at frame {f} (minimum {MIN_DEPTH} m)",
                        target.object_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn frame_time(&self, frame: usize) -> f64 {
        frame as f64 / self.frame_rate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub camera_detections: Vec<CameraDetection>,
    pub radar_detections: Vec<RadarDetection>,
    pub truth_pose: ExtrinsicPose,
    /// One flag per radar detection; `true` marks a gross displacement.
    pub outlier_flags: Vec<bool>,
}

/// Moves a radar point along its camera depth so that it projects
/// `offset_px` away from `anchor` in direction `angle` (radians in the
/// image plane).
pub fn displace_radar_point(
    k: &CameraIntrinsics,
    pose: &ExtrinsicPose,
    point: &RadarPoint,
    anchor: &PixelPoint,
    offset_px: f64,
    angle: f64,
) -> RadarPoint {
    let depth = pose.transform(point).z;
    let target = PixelPoint::new(
        anchor.u + offset_px * angle.cos(),
        anchor.v + offset_px * angle.sin(),
    );
    pose.inverse_transform(&k.back_project(&target, depth))
}

struct FrameOutput {
    camera: Vec<CameraDetection>,
    radar: Vec<RadarDetection>,
    flags: Vec<bool>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn generate_frame(cfg: &SceneConfig, frame: usize) -> Result<FrameOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(frame as u64);
    let t = cfg.frame_time(frame);
    let k = &cfg.intrinsics;
    let pose = &cfg.true_pose;
    let (w, h) = (cfg.image_width as f64, cfg.image_height as f64);

    let mut out = FrameOutput {
        camera: Vec::new(),
        radar: Vec::new(),
        flags: Vec::new(),
    };
    for target in &cfg.targets {
        // fixed number of draws per target keeps streams aligned across configs
        let n_range = normal(&mut rng);
        let n_az = normal(&mut rng);
        let n_el = normal(&mut rng);
        let n_u = normal(&mut rng);
        let n_v = normal(&mut rng);
        let outlier_draw: f64 = rng.random();
        let angle = rng.random::<f64>() * TAU;
        let stretch = 1.0 + 0.5 * rng.random::<f64>();

        let truth = target.position(t);
        let (true_px, _) = project(k, pose, &truth)?;

        let (r, az, el) = radar_cartesian_to_polar(&truth);
        let mut radar = radar_polar_to_cartesian(
            (r + cfg.radar_range_sigma * n_range).max(0.0),
            az + cfg.radar_azimuth_sigma * n_az,
            el + cfg.radar_elevation_sigma * n_el,
        )?;
        let is_outlier = outlier_draw < cfg.outlier_fraction;
        if is_outlier {
            radar = displace_radar_point(
                k,
                pose,
                &radar,
                &true_px,
                cfg.outlier_offset_px * stretch,
                angle,
            );
        }
        out.radar.push(RadarDetection {
            frame_id: frame as u64,
            timestamp: t,
            point: radar,
            object_id: Some(target.object_id),
            doppler: None,
        });
        out.flags.push(is_outlier);

        let axis_sigma = cfg.pixel_noise_sigma * std::f64::consts::FRAC_1_SQRT_2;
        let seen = PixelPoint::new(true_px.u + axis_sigma * n_u, true_px.v + axis_sigma * n_v);
        if seen.u >= 0.0 && seen.u < w && seen.v >= 0.0 && seen.v < h {
            out.camera.push(CameraDetection {
                frame_id: frame as u64,
                timestamp: t,
                center: seen,
                object_id: Some(target.object_id),
                class_label: target.class_label.clone(),
            });
        }
    }
    Ok(out)
}

/// Generates the detection streams for `cfg`. Each frame draws from its own
/// random stream keyed on `(seed, frame)`, so the output is identical under
/// any execution policy.
pub fn generate(cfg: &SceneConfig) -> Result<SyntheticDataset> {
    generate_with(cfg, Execution::default())
}

pub fn generate_with(cfg: &SceneConfig, exec: Execution) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let frames = map_indexed(exec, cfg.n_frames, |f| generate_frame(cfg, f));
    let mut ds = SyntheticDataset {
        camera_detections: Vec::new(),
        radar_detections: Vec::new(),
        truth_pose: cfg.true_pose,
        outlier_flags: Vec::new(),
    };
    for frame in frames {
        let frame = frame?;
        ds.camera_detections.extend(frame.camera);
        ds.radar_detections.extend(frame.radar);
        ds.outlier_flags.extend(frame.flags);
    }
    if ds.camera_detections.is_empty() {
        return Err(Error::EmptyScene);
    }
    Ok(ds)
}

/// Rotation error (geodesic angle of `R_est·R_trueᵀ`, radians) and
/// translation error (Euclidean, meters).
pub fn pose_error(estimate: &ExtrinsicPose, truth: &ExtrinsicPose) -> (f64, f64) {
    let delta = estimate.rotation() * truth.rotation().transpose();
    let rot = matrix_to_axis_angle(&delta)
        .map(|r| r.angle())
        .unwrap_or(f64::NAN);
    let trans = (estimate.translation() - truth.translation()).norm();
    (rot, trans)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub truth_pose: ExtrinsicPose,
    /// Zero-based row indices into `radar.csv` that were displaced.
    pub outlier_radar_rows: Vec<usize>,
    pub config: SceneConfig,
}

impl SyntheticDataset {
    /// Writes `camera.csv`, `radar.csv` and `truth.json` into `dir`.
    pub fn write_to(&self, cfg: &SceneConfig, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        io::write_camera_detections(&self.camera_detections, &dir.join("camera.csv"))?;
        io::write_radar_detections(&self.radar_detections, &dir.join("radar.csv"))?;
        let truth = TruthFile {
            truth_pose: self.truth_pose,
            outlier_radar_rows: self
                .outlier_flags
                .iter()
                .enumerate()
                .filter(|(_, &f)| f)
                .map(|(i, _)| i)
                .collect(),
            config: cfg.clone(),
        };
        io::write_json(&truth, &dir.join("truth.json"))
    }
}
