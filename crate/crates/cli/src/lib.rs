//! Command implementations behind the `radcal` binary.
//!
//! Each command returns a [`Failure`] carrying the process exit code, so the
//! binary stays a thin shell and tests can drive commands in-process.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use radcal::correspondence::{associate, block_sample, MatcherConfig};
use radcal::io::{
    read_calibration, read_camera_detections, read_json, read_radar_detections, write_calibration,
    write_json, write_overlay, CalibrationArtifact, CameraModel, ConfigEcho, MetricsSummary,
    PoseRecord, SamplingConfig,
};
use radcal::metrics::evaluate;
use radcal::solver::{calibrate, LmConfig, RansacConfig};
use radcal::synth::{generate, SceneConfig};
use radcal::{project, CameraDetection, Error, ExtrinsicPose, RadarDetection};

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NO_CONSENSUS: i32 = 3;
pub const EXIT_INSUFFICIENT: i32 = 4;

const MIN_CORRESPONDENCES: usize = 6;

/// An error paired with the exit code the binary should return.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NoConsensus { .. }
            | Error::DegenerateConfiguration(_)
            | Error::InvalidLinearization { .. }
            | Error::InvalidInitialization { .. } => EXIT_NO_CONSENSUS,
            Error::InsufficientData { .. } => EXIT_INSUFFICIENT,
            _ => EXIT_INPUT,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn input_error(message: String) -> Failure {
    Failure {
        code: EXIT_INPUT,
        message,
    }
}

fn context(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    }
}

#[derive(Debug, Parser)]
#[command(name = "radcal", version, about = "Radar-camera extrinsic calibration")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic radar/camera scene
    Synth(SynthArgs),
    /// Estimate the radar-to-camera pose from detection logs
    Calibrate(CalibrateArgs),
    /// Project radar detections into the image with a stored calibration
    Project(ProjectArgs),
    /// Score a stored calibration against detection logs
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Matcher {
    /// Pair detections sharing frame and object id
    Id,
    /// Nearest camera center to the radar point projected through a prior
    Nearest,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene configuration (JSON)
    pub config: PathBuf,
    /// Directory for camera.csv, radar.csv, truth.json and intrinsics.json
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Camera detections (CSV)
    pub camera: PathBuf,
    /// Radar detections (CSV)
    pub radar: PathBuf,
    /// Camera model (JSON with fx, fy, cx, cy, image_width, image_height)
    pub intrinsics: PathBuf,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Matcher::Id)]
    pub matcher: Matcher,
    /// Calibration artifact used as the prior for the nearest matcher
    #[arg(long)]
    pub prior: Option<PathBuf>,
    /// Pixel gate for the nearest matcher
    #[arg(long, default_value_t = 80.0)]
    pub gate_px: f64,
    /// Sampling block edge in pixels
    #[arg(long, default_value_t = 20)]
    pub block_size: u32,
    /// Keep every n-th block along each axis
    #[arg(long, default_value_t = 2)]
    pub stride_blocks: u32,
    /// Inlier distance in pixels
    #[arg(long, default_value_t = 20.0)]
    pub ransac_threshold: f64,
    #[arg(long, default_value_t = 2000)]
    pub ransac_iterations: usize,
    /// Seed for hypothesis sampling
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use detections within this many seconds of the first one
    #[arg(long, default_value_t = 60.0)]
    pub window_seconds: f64,
    /// Creation time recorded in the artifact (defaults to now)
    #[arg(long)]
    pub timestamp: Option<String>,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// Calibration artifact (JSON)
    pub calibration: PathBuf,
    /// Radar detections (CSV)
    pub radar: PathBuf,
    #[arg(short, long, default_value = "projected.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Calibration artifact (JSON)
    pub calibration: PathBuf,
    /// Camera detections (CSV)
    pub camera: PathBuf,
    /// Radar detections (CSV)
    pub radar: PathBuf,
    #[arg(short, long, default_value = "report.json")]
    pub out: PathBuf,
    /// The nearest matcher uses the stored pose as its prior
    #[arg(long, value_enum, default_value_t = Matcher::Id)]
    pub matcher: Matcher,
    #[arg(long, default_value_t = 80.0)]
    pub gate_px: f64,
    /// Inlier distance in pixels
    #[arg(long, default_value_t = 20.0)]
    pub threshold: f64,
    /// Skip detections earlier than this many seconds after the first one
    #[arg(long)]
    pub from_seconds: Option<f64>,
}

pub fn run(cli: Cli) -> Result<String, Failure> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Calibrate(a) => cmd_calibrate(&a),
        Command::Project(a) => cmd_project(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
    }
}

pub fn cmd_synth(args: &SynthArgs) -> Result<String, Failure> {
    let cfg: SceneConfig = read_json(&args.config).map_err(context(&args.config))?;
    cfg.validate().map_err(context(&args.config))?;
    let ds = generate(&cfg)?;
    ds.write_to(&cfg, &args.out_dir)?;
    let model = CameraModel {
        intrinsics: cfg.intrinsics,
        image_width: cfg.image_width,
        image_height: cfg.image_height,
    };
    write_json(&model, &args.out_dir.join("intrinsics.json"))?;
    Ok(format!(
        "wrote {} camera and {} radar detections to {}",
        ds.camera_detections.len(),
        ds.radar_detections.len(),
        args.out_dir.display()
    ))
}

fn earliest(camera: &[CameraDetection], radar: &[RadarDetection]) -> f64 {
    camera
        .iter()
        .map(|d| d.timestamp)
        .chain(radar.iter().map(|d| d.timestamp))
        .fold(f64::INFINITY, f64::min)
}

fn matcher_config(
    matcher: Matcher,
    prior: Option<ExtrinsicPose>,
    gate_px: f64,
) -> Result<MatcherConfig, Failure> {
    match (matcher, prior) {
        (Matcher::Id, _) => Ok(MatcherConfig::id_oracle()),
        (Matcher::Nearest, Some(p)) => Ok(MatcherConfig::nearest_prior(p, gate_px)),
        (Matcher::Nearest, None) => Err(input_error(
            "the nearest matcher needs a prior calibration (--prior)".into(),
        )),
    }
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> Result<String, Failure> {
    if !(args.window_seconds > 0.0) {
        return Err(input_error("--window-seconds must be positive".into()));
    }
    let mut camera = read_camera_detections(&args.camera).map_err(context(&args.camera))?;
    let mut radar = read_radar_detections(&args.radar).map_err(context(&args.radar))?;
    let model: CameraModel = read_json(&args.intrinsics).map_err(context(&args.intrinsics))?;
    let prior = match &args.prior {
        Some(p) => Some(
            read_calibration(p)
                .and_then(|a| a.pose())
                .map_err(context(p))?,
        ),
        None => None,
    };
    let matcher = matcher_config(args.matcher, prior, args.gate_px)?;
    let sampling = SamplingConfig {
        block_size: args.block_size,
        stride_blocks: args.stride_blocks,
    };
    let ransac = RansacConfig {
        max_iterations: args.ransac_iterations,
        inlier_threshold: args.ransac_threshold,
        seed: args.seed,
        ..RansacConfig::default()
    };
    ransac.validate()?;
    let lm = LmConfig::default();

    let end = earliest(&camera, &radar) + args.window_seconds;
    camera.retain(|d| d.timestamp < end);
    radar.retain(|d| d.timestamp < end);

    let k = &model.intrinsics;
    let corrs = associate(&camera, &radar, k, &matcher)?;
    let sampled = block_sample(
        &corrs,
        model.image_width,
        model.image_height,
        sampling.block_size,
        sampling.stride_blocks,
    )?;
    if sampled.len() < MIN_CORRESPONDENCES {
        return Err(Failure {
            code: EXIT_INSUFFICIENT,
            message: format!(
                "insufficient data: {} correspondences after sampling ({} before), need {}",
                sampled.len(),
                corrs.len(),
                MIN_CORRESPONDENCES
            ),
        });
    }

    let est = calibrate(&sampled, k, &ransac, &lm)?;
    let threshold = ransac.inlier_threshold;
    let report = evaluate(&est.pose, k, &sampled, threshold)?;
    let artifact = CalibrationArtifact {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        created: args.timestamp.clone().unwrap_or_else(|| {
            chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
        }),
        intrinsics: *k,
        pose: PoseRecord::from(&est.pose),
        metrics: MetricsSummary::from(&report),
        config: ConfigEcho {
            matcher,
            sampling,
            ransac,
            lm,
            window_seconds: Some(args.window_seconds),
        },
    };

    fs::create_dir_all(&args.out_dir).map_err(Error::from)?;
    write_calibration(&artifact, &args.out_dir.join("calibration.json"))?;
    write_overlay(
        &est.pose,
        k,
        &sampled,
        threshold,
        &args.out_dir.join("overlay.csv"),
    )?;
    write_json(&report, &args.out_dir.join("report.json"))?;
    Ok(summary(&artifact.metrics))
}

fn summary(m: &MetricsSummary) -> String {
    format!(
        "n_all={} n_inliers={} mare_all={:.3} rmsre_all={:.3} mare_inliers={:.3} rmsre_inliers={:.3}",
        m.n_all, m.n_inliers, m.mare_all, m.rmsre_all, m.mare_inliers, m.rmsre_inliers
    )
}

pub fn cmd_project(args: &ProjectArgs) -> Result<String, Failure> {
    let artifact = read_calibration(&args.calibration).map_err(context(&args.calibration))?;
    let pose = artifact.pose()?;
    let radar = read_radar_detections(&args.radar).map_err(context(&args.radar))?;

    let file = fs::File::create(&args.out).map_err(Error::from)?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<fs::File>, line: String| {
        w.write_all(line.as_bytes()).map_err(Error::from)
    };
    write(
        &mut w,
        "frame_id,timestamp,u,v,depth,behind_camera\n".into(),
    )?;
    for d in &radar {
        let depth = pose.transform(&d.point).z;
        let (u, v) = match project(&artifact.intrinsics, &pose, &d.point) {
            Ok((px, _)) => (px.u.to_string(), px.v.to_string()),
            Err(_) => (String::new(), String::new()),
        };
        write(
            &mut w,
            format!(
                "{},{},{u},{v},{depth},{}\n",
                d.frame_id,
                d.timestamp,
                depth <= 0.0
            ),
        )?;
    }
    w.flush().map_err(Error::from)?;
    Ok(format!("projected {} radar detections", radar.len()))
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<String, Failure> {
    let artifact = read_calibration(&args.calibration).map_err(context(&args.calibration))?;
    let pose = artifact.pose()?;
    let mut camera = read_camera_detections(&args.camera).map_err(context(&args.camera))?;
    let mut radar = read_radar_detections(&args.radar).map_err(context(&args.radar))?;
    if let Some(from) = args.from_seconds {
        let start = earliest(&camera, &radar) + from;
        camera.retain(|d| d.timestamp >= start);
        radar.retain(|d| d.timestamp >= start);
    }
    let matcher = matcher_config(args.matcher, Some(pose), args.gate_px)?;
    let corrs = associate(&camera, &radar, &artifact.intrinsics, &matcher)?;
    let report = evaluate(&pose, &artifact.intrinsics, &corrs, args.threshold)?;
    write_json(&report, &args.out)?;
    Ok(summary(&MetricsSummary::from(&report)))
}
