//! Radar↔camera correspondences: per-frame association of object detections
//! and block-grid subsampling over the image.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project, CameraIntrinsics, ExtrinsicPose, PixelPoint, RadarPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraDetection {
    pub frame_id: u64,
    pub timestamp: f64,
    /// Object center in the image, e.g. a bounding-box center.
    pub center: PixelPoint,
    pub object_id: Option<i64>,
    pub class_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarDetection {
    pub frame_id: u64,
    pub timestamp: f64,
    /// Object center in the radar frame.
    pub point: RadarPoint,
    pub object_id: Option<i64>,
    /// Radial velocity in m/s.
    pub doppler: Option<f64>,
}

/// One radar point paired with the pixel it should project to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub pixel: PixelPoint,
    pub radar: RadarPoint,
    pub frame_id: u64,
    /// Matcher confidence in `[0, 1]`.
    pub match_score: f64,
}

impl Correspondence {
    pub fn new(pixel: PixelPoint, radar: RadarPoint, frame_id: u64) -> Self {
        Self {
            pixel,
            radar,
            frame_id,
            match_score: 1.0,
        }
    }
}

/// Deterministic ordering: frame, then pixel u, v, then radar x, y, z.
pub fn canonical_order(a: &Correspondence, b: &Correspondence) -> Ordering {
    a.frame_id
        .cmp(&b.frame_id)
        .then(a.pixel.u.total_cmp(&b.pixel.u))
        .then(a.pixel.v.total_cmp(&b.pixel.v))
        .then(a.radar.x.total_cmp(&b.radar.x))
        .then(a.radar.y.total_cmp(&b.radar.y))
        .then(a.radar.z.total_cmp(&b.radar.z))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchStrategy {
    /// Pair detections that share `(frame_id, object_id)`.
    IdOracle,
    /// Project radar detections through a prior pose and pair each with the
    /// nearest camera center.
    NearestPrior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatcherConfig {
    pub strategy: MatchStrategy,
    pub prior_pose: Option<ExtrinsicPose>,
    pub gate_px: f64,
    pub require_one_to_one: bool,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            strategy: MatchStrategy::IdOracle,
            prior_pose: None,
            gate_px: 80.0,
            require_one_to_one: true,
        }
    }
}

impl MatcherConfig {
    pub fn id_oracle() -> Self {
        Self::default()
    }

    pub fn nearest_prior(prior: ExtrinsicPose, gate_px: f64) -> Self {
        Self {
            strategy: MatchStrategy::NearestPrior,
            prior_pose: Some(prior),
            gate_px,
            require_one_to_one: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gate_px > 0.0) {
            return Err(Error::Config(format!(
                "gate_px must be positive, got {}",
                self.gate_px
            )));
        }
        if self.strategy == MatchStrategy::NearestPrior && self.prior_pose.is_none() {
            return Err(Error::Config(
                "nearest-prior matching requires a prior pose".into(),
            ));
        }
        Ok(())
    }
}

fn camera_order(a: &CameraDetection, b: &CameraDetection) -> Ordering {
    a.center
        .u
        .total_cmp(&b.center.u)
        .then(a.center.v.total_cmp(&b.center.v))
        .then(a.object_id.cmp(&b.object_id))
}

fn radar_order(a: &RadarDetection, b: &RadarDetection) -> Ordering {
    a.point
        .x
        .total_cmp(&b.point.x)
        .then(a.point.y.total_cmp(&b.point.y))
        .then(a.point.z.total_cmp(&b.point.z))
        .then(a.object_id.cmp(&b.object_id))
}

/// Groups detections by frame with each group in canonical order, so the
/// result does not depend on input ordering.
fn group_by_frame<T>(
    items: &[T],
    frame: impl Fn(&T) -> u64,
    order: impl Fn(&T, &T) -> Ordering,
) -> BTreeMap<u64, Vec<&T>> {
    let mut groups: BTreeMap<u64, Vec<&T>> = BTreeMap::new();
    for it in items {
        groups.entry(frame(it)).or_default().push(it);
    }
    for g in groups.values_mut() {
        g.sort_by(|a, b| order(a, b));
    }
    groups
}

/// Pairs camera and radar detections frame by frame.
///
/// Output is sorted by `(frame_id, pixel.u, pixel.v)`.
pub fn associate(
    camera: &[CameraDetection],
    radar: &[RadarDetection],
    k: &CameraIntrinsics,
    cfg: &MatcherConfig,
) -> Result<Vec<Correspondence>> {
    cfg.validate()?;
    let cams = group_by_frame(camera, |d| d.frame_id, camera_order);
    let rads = group_by_frame(radar, |d| d.frame_id, radar_order);

    let mut out = Vec::new();
    for (frame, cam) in &cams {
        let Some(rad) = rads.get(frame) else {
            continue;
        };
        match cfg.strategy {
            MatchStrategy::IdOracle => match_by_id(*frame, cam, rad, &mut out),
            MatchStrategy::NearestPrior => {
                let prior = cfg.prior_pose.as_ref().expect("validated");
                match_nearest(*frame, cam, rad, k, prior, cfg, &mut out)
            }
        }
    }
    out.sort_by(canonical_order);
    Ok(out)
}

fn match_by_id(
    frame: u64,
    cam: &[&CameraDetection],
    rad: &[&RadarDetection],
    out: &mut Vec<Correspondence>,
) {
    let mut used = vec![false; rad.len()];
    for c in cam {
        let Some(id) = c.object_id else { continue };
        let hit = rad
            .iter()
            .enumerate()
            .find(|(j, r)| !used[*j] && r.object_id == Some(id));
        if let Some((j, r)) = hit {
            used[j] = true;
            out.push(Correspondence::new(c.center, r.point, frame));
        }
    }
}

fn match_nearest(
    frame: u64,
    cam: &[&CameraDetection],
    rad: &[&RadarDetection],
    k: &CameraIntrinsics,
    prior: &ExtrinsicPose,
    cfg: &MatcherConfig,
    out: &mut Vec<Correspondence>,
) {
    // (distance, camera index, radar index)
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (j, r) in rad.iter().enumerate() {
        let Ok((px, depth)) = project(k, prior, &r.point) else {
            continue;
        };
        if depth <= 0.0 {
            continue;
        }
        for (i, c) in cam.iter().enumerate() {
            let d = px.distance(&c.center);
            if d <= cfg.gate_px {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut cam_used = vec![false; cam.len()];
    let mut rad_used = vec![false; rad.len()];
    for (d, i, j) in pairs {
        if rad_used[j] || (cfg.require_one_to_one && cam_used[i]) {
            continue;
        }
        cam_used[i] = true;
        rad_used[j] = true;
        out.push(Correspondence {
            pixel: cam[i].center,
            radar: rad[j].point,
            frame_id: frame,
            match_score: (1.0 - d / cfg.gate_px).clamp(0.0, 1.0),
        });
    }
}

/// Block-grid layout over a `width × height` image.
#[derive(Debug, Clone, Copy)]
struct Grid {
    width: f64,
    height: f64,
    block: f64,
    cols: usize,
    rows: usize,
}

impl Grid {
    fn new(width: u32, height: u32, block_size: u32) -> Result<Self> {
        if block_size == 0 {
            return Err(Error::InvalidArgument("block_size must be ≥ 1".into()));
        }
        Ok(Self {
            width: width as f64,
            height: height as f64,
            block: block_size as f64,
            cols: width.div_ceil(block_size) as usize,
            rows: height.div_ceil(block_size) as usize,
        })
    }

    fn cell(&self, p: &PixelPoint) -> Option<(usize, usize)> {
        if !(p.u >= 0.0 && p.u < self.width && p.v >= 0.0 && p.v < self.height) {
            return None;
        }
        let bx = ((p.u / self.block).floor() as usize).min(self.cols - 1);
        let by = ((p.v / self.block).floor() as usize).min(self.rows - 1);
        Some((bx, by))
    }

    fn center(&self, (bx, by): (usize, usize)) -> PixelPoint {
        PixelPoint::new(
            (bx as f64 + 0.5) * self.block,
            (by as f64 + 0.5) * self.block,
        )
    }
}

/// Keeps at most one correspondence per selected grid cell: the one nearest
/// the cell center. A cell `(bx, by)` is selected when both indices are
/// multiples of `stride_blocks`. Pixels outside the image are dropped.
///
/// Ties are broken by lowest frame, then lowest u, then lowest v. Output is
/// in canonical `(frame_id, u, v)` order.
pub fn block_sample(
    corrs: &[Correspondence],
    image_w: u32,
    image_h: u32,
    block_size: u32,
    stride_blocks: u32,
) -> Result<Vec<Correspondence>> {
    let grid = Grid::new(image_w, image_h, block_size)?;
    if stride_blocks == 0 {
        return Err(Error::InvalidArgument("stride_blocks must be ≥ 1".into()));
    }
    let stride = stride_blocks as usize;

    let mut best: BTreeMap<(usize, usize), (f64, &Correspondence)> = BTreeMap::new();
    for c in corrs {
        let Some(cell) = grid.cell(&c.pixel) else {
            continue;
        };
        if cell.0 % stride != 0 || cell.1 % stride != 0 {
            continue;
        }
        let d = c.pixel.distance(&grid.center(cell));
        let better = match best.get(&cell) {
            None => true,
            Some((bd, b)) => d
                .total_cmp(bd)
                .then(c.frame_id.cmp(&b.frame_id))
                .then(c.pixel.u.total_cmp(&b.pixel.u))
                .then(c.pixel.v.total_cmp(&b.pixel.v))
                .then(canonical_order(c, b))
                .is_lt(),
        };
        if better {
            best.insert(cell, (d, c));
        }
    }
    let mut out: Vec<Correspondence> = best.into_values().map(|(_, c)| *c).collect();
    out.sort_by(canonical_order);
    Ok(out)
}

/// Fraction of grid cells holding at least one in-image correspondence.
pub fn spatial_coverage(
    corrs: &[Correspondence],
    image_w: u32,
    image_h: u32,
    block_size: u32,
) -> Result<f64> {
    let grid = Grid::new(image_w, image_h, block_size)?;
    let total = grid.cols * grid.rows;
    if total == 0 {
        return Ok(0.0);
    }
    let occupied: std::collections::BTreeSet<_> =
        corrs.iter().filter_map(|c| grid.cell(&c.pixel)).collect();
    Ok(occupied.len() as f64 / total as f64)
}
