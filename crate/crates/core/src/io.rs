//! File formats: detection CSVs, calibration artifact JSON, overlay CSV.
//!
//! Camera detections: `frame_id,timestamp,u,v,object_id,class`
//! Radar detections:  `frame_id,timestamp,x,y,z,object_id,doppler`
//! Overlay:           `frame_id,u_gt,v_gt,u_proj,v_proj,distance,is_inlier`
//!
//! An empty field is an absent optional value. Floats are written in their
//! shortest round-trip decimal form, so every writer is byte-for-byte
//! deterministic and every reader recovers the exact `f64`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::correspondence::{CameraDetection, Correspondence, MatcherConfig, RadarDetection};
use crate::error::{Error, Result};
use crate::geometry::{project, CameraIntrinsics, ExtrinsicPose, PixelPoint, RadarPoint};
use crate::metrics::{reprojection_distances, EvaluationReport};
use crate::solver::{LmConfig, RansacConfig};

pub const CAMERA_HEADER: [&str; 6] = ["frame_id", "timestamp", "u", "v", "object_id", "class"];
pub const RADAR_HEADER: [&str; 7] = [
    "frame_id",
    "timestamp",
    "x",
    "y",
    "z",
    "object_id",
    "doppler",
];
pub const OVERLAY_HEADER: [&str; 7] = [
    "frame_id",
    "u_gt",
    "v_gt",
    "u_proj",
    "v_proj",
    "distance",
    "is_inlier",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionKind {
    Camera,
    Radar,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Detections {
    Camera(Vec<CameraDetection>),
    Radar(Vec<RadarDetection>),
}

pub fn read_detections(path: &Path, kind: DetectionKind) -> Result<Detections> {
    Ok(match kind {
        DetectionKind::Camera => Detections::Camera(read_camera_detections(path)?),
        DetectionKind::Radar => Detections::Radar(read_radar_detections(path)?),
    })
}

struct Row<'a> {
    record: &'a csv::StringRecord,
    line: u64,
}

impl Row<'_> {
    fn field(&self, col: usize) -> &str {
        self.record.get(col).unwrap_or("").trim()
    }

    fn parse_err(&self, col: usize, message: String) -> Error {
        Error::Parse {
            line: self.line,
            column: col + 1,
            message,
        }
    }

    fn f64(&self, col: usize, name: &str) -> Result<f64> {
        let s = self.field(col);
        let v: f64 = s
            .parse()
            .map_err(|_| self.parse_err(col, format!("{name}: expected a number, got {s:?}")))?;
        if !v.is_finite() {
            return Err(Error::Validation {
                line: self.line,
                message: format!("{name} must be finite"),
            });
        }
        Ok(v)
    }

    fn opt_f64(&self, col: usize, name: &str) -> Result<Option<f64>> {
        if self.field(col).is_empty() {
            Ok(None)
        } else {
            self.f64(col, name).map(Some)
        }
    }

    fn frame_id(&self) -> Result<u64> {
        let s = self.field(0);
        let v: i64 = s
            .parse()
            .map_err(|_| self.parse_err(0, format!("frame_id: expected an integer, got {s:?}")))?;
        u64::try_from(v).map_err(|_| Error::Validation {
            line: self.line,
            message: format!("frame_id must be ≥ 0, got {v}"),
        })
    }

    fn opt_i64(&self, col: usize, name: &str) -> Result<Option<i64>> {
        let s = self.field(col);
        if s.is_empty() {
            return Ok(None);
        }
        s.parse()
            .map(Some)
            .map_err(|_| self.parse_err(col, format!("{name}: expected an integer, got {s:?}")))
    }
}

fn read_rows<T>(
    path: &Path,
    header: &[&str],
    mut parse: impl FnMut(&Row) -> Result<T>,
) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut records = reader.records();
    let first = match records.next() {
        Some(r) => r?,
        None => {
            return Err(Error::Schema {
                line: 1,
                message: format!("missing header, expected `{}`", header.join(",")),
            })
        }
    };
    let got: Vec<&str> = first.iter().map(str::trim).collect();
    let got_first = got.first().map(|s| s.trim_start_matches('\u{feff}'));
    if got.len() != header.len() || got_first != header.first().copied() || got[1..] != header[1..]
    {
        return Err(Error::Schema {
            line: 1,
            message: format!(
                "header `{}` does not match `{}`",
                got.join(","),
                header.join(",")
            ),
        });
    }
    let mut out = Vec::new();
    for record in records {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record.get(0).is_some_and(|s| s.trim().is_empty()) {
            continue;
        }
        if record.len() != header.len() {
            return Err(Error::Schema {
                line,
                message: format!("expected {} fields, got {}", header.len(), record.len()),
            });
        }
        out.push(parse(&Row {
            record: &record,
            line,
        })?);
    }
    Ok(out)
}

pub fn read_camera_detections(path: &Path) -> Result<Vec<CameraDetection>> {
    read_rows(path, &CAMERA_HEADER, |row| {
        let class = row.field(5);
        Ok(CameraDetection {
            frame_id: row.frame_id()?,
            timestamp: row.f64(1, "timestamp")?,
            center: PixelPoint::new(row.f64(2, "u")?, row.f64(3, "v")?),
            object_id: row.opt_i64(4, "object_id")?,
            class_label: (!class.is_empty()).then(|| class.to_string()),
        })
    })
}

pub fn read_radar_detections(path: &Path) -> Result<Vec<RadarDetection>> {
    read_rows(path, &RADAR_HEADER, |row| {
        Ok(RadarDetection {
            frame_id: row.frame_id()?,
            timestamp: row.f64(1, "timestamp")?,
            point: RadarPoint::new(row.f64(2, "x")?, row.f64(3, "y")?, row.f64(4, "z")?),
            object_id: row.opt_i64(5, "object_id")?,
            doppler: row.opt_f64(6, "doppler")?,
        })
    })
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

fn csv_writer(path: &Path, header: &[&str]) -> Result<csv::Writer<BufWriter<File>>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(File::create(path)?));
    w.write_record(header)?;
    Ok(w)
}

pub fn write_camera_detections(dets: &[CameraDetection], path: &Path) -> Result<()> {
    let mut w = csv_writer(path, &CAMERA_HEADER)?;
    for d in dets {
        w.write_record([
            d.frame_id.to_string(),
            d.timestamp.to_string(),
            d.center.u.to_string(),
            d.center.v.to_string(),
            opt(&d.object_id),
            d.class_label.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_radar_detections(dets: &[RadarDetection], path: &Path) -> Result<()> {
    let mut w = csv_writer(path, &RADAR_HEADER)?;
    for d in dets {
        w.write_record([
            d.frame_id.to_string(),
            d.timestamp.to_string(),
            d.point.x.to_string(),
            d.point.y.to_string(),
            d.point.z.to_string(),
            opt(&d.object_id),
            opt(&d.doppler),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-correspondence overlay rows: ground-truth pixel, projected pixel,
/// distance, and whether the distance is below `inlier_threshold_px`.
/// Points at the camera plane get empty projected fields.
pub fn write_overlay(
    pose: &ExtrinsicPose,
    k: &CameraIntrinsics,
    corrs: &[Correspondence],
    inlier_threshold_px: f64,
    path: &Path,
) -> Result<()> {
    let mut w = csv_writer(path, &OVERLAY_HEADER)?;
    let dist = reprojection_distances(pose, k, corrs);
    for (c, d) in corrs.iter().zip(dist) {
        let (u, v) = match project(k, pose, &c.radar) {
            Ok((px, _)) => (px.u.to_string(), px.v.to_string()),
            Err(_) => (String::new(), String::new()),
        };
        w.write_record([
            c.frame_id.to_string(),
            c.pixel.u.to_string(),
            c.pixel.v.to_string(),
            u,
            v,
            d.to_string(),
            (d < inlier_threshold_px).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// `intrinsics.json`: the intrinsic matrix plus image size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    #[serde(flatten)]
    pub intrinsics: CameraIntrinsics,
    pub image_width: u32,
    pub image_height: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    /// Row-major.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    pub axis_angle: [f64; 3],
}

impl From<&ExtrinsicPose> for PoseRecord {
    fn from(p: &ExtrinsicPose) -> Self {
        Self {
            rotation: p.rotation_row_major(),
            translation: (*p.translation()).into(),
            axis_angle: p.axis_angle().0.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub mare_all: f64,
    pub rmsre_all: f64,
    pub mare_inliers: f64,
    pub rmsre_inliers: f64,
    pub n_all: usize,
    pub n_inliers: usize,
}

impl From<&EvaluationReport> for MetricsSummary {
    fn from(r: &EvaluationReport) -> Self {
        Self {
            mare_all: r.mare_all,
            rmsre_all: r.rmsre_all,
            mare_inliers: r.mare_inliers,
            rmsre_inliers: r.rmsre_inliers,
            n_all: r.n_all,
            n_inliers: r.n_inliers,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub block_size: u32,
    pub stride_blocks: u32,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            block_size: 20,
            stride_blocks: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub matcher: MatcherConfig,
    pub sampling: SamplingConfig,
    pub ransac: RansacConfig,
    pub lm: LmConfig,
    pub window_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationArtifact {
    pub tool_version: String,
    pub created: String,
    pub intrinsics: CameraIntrinsics,
    pub pose: PoseRecord,
    pub metrics: MetricsSummary,
    pub config: ConfigEcho,
}

impl CalibrationArtifact {
    pub fn pose(&self) -> Result<ExtrinsicPose> {
        ExtrinsicPose::new(
            nalgebra::Matrix3::from_row_slice(&self.pose.rotation),
            nalgebra::Vector3::from(self.pose.translation),
        )
        .map_err(|e| Error::CorruptArtifact(e.to_string()))
    }
}

pub fn write_calibration(artifact: &CalibrationArtifact, path: &Path) -> Result<()> {
    write_json(artifact, path)
}

/// Reads an artifact and checks that the stored rotation is a rotation.
pub fn read_calibration(path: &Path) -> Result<CalibrationArtifact> {
    let artifact: CalibrationArtifact = read_json(path).map_err(|e| match e {
        Error::Json(j) => Error::CorruptArtifact(j.to_string()),
        other => other,
    })?;
    artifact.pose()?;
    Ok(artifact)
}
