//! Frames, rotations and the pinhole projection of radar points.
//!
//! Radar frame: x right, y forward (boresight), z up.
//! Camera frame: x right, y down, z forward (optical axis).
//!
//! A pose maps radar coordinates into camera coordinates, `c = R·p + T`,
//! and a camera point projects to pixels through the intrinsic matrix `K`.
//! No lens distortion is modelled.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROTATION_TOL: f64 = 1e-9;
const ROTATION_INPUT_TOL: f64 = 1e-6;
const SMALL_ANGLE: f64 = 1e-8;
const CAMERA_PLANE_EPS: f64 = 1e-9;
const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntrinsicsRepr", into = "IntrinsicsRepr")]
pub struct CameraIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    skew: f64,
}

#[derive(Serialize, Deserialize)]
struct IntrinsicsRepr {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    #[serde(default)]
    skew: f64,
}

impl TryFrom<IntrinsicsRepr> for CameraIntrinsics {
    type Error = Error;
    fn try_from(r: IntrinsicsRepr) -> Result<Self> {
        CameraIntrinsics::with_skew(r.fx, r.fy, r.cx, r.cy, r.skew)
    }
}

impl From<CameraIntrinsics> for IntrinsicsRepr {
    fn from(k: CameraIntrinsics) -> Self {
        IntrinsicsRepr {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            skew: k.skew,
        }
    }
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        Self::with_skew(fx, fy, cx, cy, 0.0)
    }

    pub fn with_skew(fx: f64, fy: f64, cx: f64, cy: f64, skew: f64) -> Result<Self> {
        if ![fx, fy, cx, cy, skew].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("intrinsics must be finite".into()));
        }
        if fx <= 0.0 || fy <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            skew,
        })
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn skew(&self) -> f64 {
        self.skew
    }

    /// The upper-triangular 3×3 matrix `K`.
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, self.skew, self.cx, //
            0.0, self.fy, self.cy, //
            0.0, 0.0, 1.0,
        )
    }

    /// Maps a camera-frame point with `z != 0` to pixels.
    pub fn camera_to_pixel(&self, c: &Vector3<f64>) -> PixelPoint {
        PixelPoint {
            u: (self.fx * c.x + self.skew * c.y) / c.z + self.cx,
            v: self.fy * c.y / c.z + self.cy,
        }
    }

    /// Applies `K⁻¹` to a pixel, giving normalized image coordinates.
    pub fn normalize(&self, p: &PixelPoint) -> (f64, f64) {
        let y = (p.v - self.cy) / self.fy;
        let x = (p.u - self.cx - self.skew * y) / self.fx;
        (x, y)
    }

    /// Camera-frame point at depth `depth` along the ray through `p`.
    pub fn back_project(&self, p: &PixelPoint, depth: f64) -> Vector3<f64> {
        let (x, y) = self.normalize(p);
        Vector3::new(x * depth, y * depth, depth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl RadarPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    pub fn distance(&self, other: &PixelPoint) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

/// Rotation vector: direction is the axis, norm is the angle in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AxisAngle(pub Vector3<f64>);

impl AxisAngle {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self(Vector3::new(x, y, z))
    }

    pub fn angle(&self) -> f64 {
        self.0.norm()
    }
}

/// Rigid transform from the radar frame into the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRepr", into = "PoseRepr")]
pub struct ExtrinsicPose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

/// Row-major rotation, or an axis-angle vector when writing configs by hand.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PoseRepr {
    Matrix {
        rotation: [f64; 9],
        translation: [f64; 3],
    },
    AxisAngle {
        axis_angle: [f64; 3],
        translation: [f64; 3],
    },
}

impl TryFrom<PoseRepr> for ExtrinsicPose {
    type Error = Error;
    fn try_from(r: PoseRepr) -> Result<Self> {
        match r {
            PoseRepr::Matrix {
                rotation,
                translation,
            } => ExtrinsicPose::new(
                Matrix3::from_row_slice(&rotation),
                Vector3::from(translation),
            ),
            PoseRepr::AxisAngle {
                axis_angle,
                translation,
            } => ExtrinsicPose::from_axis_angle(
                &AxisAngle(Vector3::from(axis_angle)),
                Vector3::from(translation),
            ),
        }
    }
}

impl From<ExtrinsicPose> for PoseRepr {
    fn from(p: ExtrinsicPose) -> Self {
        PoseRepr::Matrix {
            rotation: p.rotation_row_major(),
            translation: p.translation.into(),
        }
    }
}

impl ExtrinsicPose {
    /// Validates the rotation (orthonormal, det +1, within 1e-9).
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        check_rotation(&rotation, ROTATION_TOL)?;
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("translation must be finite".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Nominal mounting: radar and camera co-located, camera looking along
    /// the radar boresight. Maps radar (x right, y forward, z up) to camera
    /// (x right, y down, z forward).
    pub fn radar_to_camera_nominal() -> Self {
        Self {
            rotation: Matrix3::new(
                1.0, 0.0, 0.0, //
                0.0, 0.0, -1.0, //
                0.0, 1.0, 0.0,
            ),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_axis_angle(r: &AxisAngle, translation: Vector3<f64>) -> Result<Self> {
        let rotation = axis_angle_to_matrix(r)?;
        Self::new(rotation, translation)
    }

    /// Builds a pose from the 6-vector `(axis-angle, translation)`.
    pub fn from_params(params: &[f64; 6]) -> Result<Self> {
        Self::from_axis_angle(
            &AxisAngle::new(params[0], params[1], params[2]),
            Vector3::new(params[3], params[4], params[5]),
        )
    }

    pub fn to_params(&self) -> [f64; 6] {
        let r = self.axis_angle();
        let t = self.translation;
        [r.0.x, r.0.y, r.0.z, t.x, t.y, t.z]
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn rotation_row_major(&self) -> [f64; 9] {
        let r = &self.rotation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
        ]
    }

    pub fn axis_angle(&self) -> AxisAngle {
        matrix_to_axis_angle(&self.rotation).expect("pose rotation is validated on construction")
    }

    /// Radar point expressed in the camera frame.
    pub fn transform(&self, p: &RadarPoint) -> Vector3<f64> {
        self.rotation * p.to_vector() + self.translation
    }

    /// Camera-frame point expressed in the radar frame.
    pub fn inverse_transform(&self, c: &Vector3<f64>) -> RadarPoint {
        RadarPoint::from_vector(&(self.rotation.transpose() * (c - self.translation)))
    }

    /// `self` followed by `other`: `other ∘ self`.
    pub fn then(&self, other: &ExtrinsicPose) -> ExtrinsicPose {
        ExtrinsicPose {
            rotation: other.rotation * self.rotation,
            translation: other.rotation * self.translation + other.translation,
        }
    }
}

fn check_rotation(r: &Matrix3<f64>, tol: f64) -> Result<()> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument("rotation must be finite".into()));
    }
    let err = (r * r.transpose() - Matrix3::identity()).abs().max();
    if err > tol {
        return Err(Error::InvalidArgument(format!(
            "rotation is not orthonormal (max |R·Rᵀ − I| = {err:e})"
        )));
    }
    let det = r.determinant();
    if (det - 1.0).abs() > tol {
        return Err(Error::InvalidArgument(format!(
            "rotation determinant is {det}, expected +1"
        )));
    }
    Ok(())
}

pub(crate) fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(
        0.0, -v.z, v.y, //
        v.z, 0.0, -v.x, //
        -v.y, v.x, 0.0,
    )
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Rodrigues' formula. Below an angle of 1e-8 the second-order series
/// `I + [r]× + ½[r]×²` is used.
pub fn axis_angle_to_matrix(r: &AxisAngle) -> Result<Matrix3<f64>> {
    if !r.0.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument("axis-angle must be finite".into()));
    }
    let theta = r.0.norm();
    let k = skew(&r.0);
    let k2 = k * k;
    if theta < SMALL_ANGLE {
        return Ok(Matrix3::identity() + k + 0.5 * k2);
    }
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / (theta * theta);
    Ok(Matrix3::identity() + a * k + b * k2)
}

/// Inverse of [`axis_angle_to_matrix`], returning an angle in `[0, π]`.
///
/// For angles past π/2 the axis is read off the symmetric part of `R`,
/// which stays well conditioned as the angle approaches π.
pub fn matrix_to_axis_angle(r: &Matrix3<f64>) -> Result<AxisAngle> {
    check_rotation(r, ROTATION_INPUT_TOL)?;
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let w = vee(&(r - r.transpose())) * 0.5; // sinθ·axis
    let sin = w.norm();

    if cos >= 0.0 {
        let theta = sin.atan2(cos);
        let factor = if sin < SMALL_ANGLE {
            1.0 + theta * theta / 6.0
        } else {
            theta / sin
        };
        return Ok(AxisAngle(w * factor));
    }

    // aaᵀ = (S − cosθ·I) / (1 − cosθ)
    let sym = (r + r.transpose()) * 0.5;
    let outer = (sym - Matrix3::identity() * cos) / (1.0 - cos);
    let diag = outer.diagonal();
    let col = diag.imax();
    let mut axis: Vector3<f64> = outer.column(col).into();
    axis /= axis.norm();
    if axis.dot(&w) < 0.0 {
        axis = -axis;
    }
    let theta = sin.atan2(cos);
    Ok(AxisAngle(axis * theta))
}

/// Projects a radar point: `s·[u v 1]ᵀ = K·(R·p + T)`.
///
/// Returns the pixel and the depth `s`. Points behind the camera
/// (`s < 0`) are still projected; callers decide whether to reject them.
pub fn project(
    k: &CameraIntrinsics,
    pose: &ExtrinsicPose,
    p: &RadarPoint,
) -> Result<(PixelPoint, f64)> {
    if !p.is_finite() {
        return Err(Error::InvalidArgument("radar point must be finite".into()));
    }
    let c = pose.transform(p);
    if c.z.abs() < CAMERA_PLANE_EPS {
        return Err(Error::PointAtCameraPlane { depth: c.z });
    }
    Ok((k.camera_to_pixel(&c), c.z))
}

/// Range/azimuth/elevation to radar Cartesian. Azimuth 0 is boresight
/// (+y) and grows toward +x; elevation grows toward +z.
pub fn radar_polar_to_cartesian(range: f64, azimuth: f64, elevation: f64) -> Result<RadarPoint> {
    if !(range.is_finite() && azimuth.is_finite() && elevation.is_finite()) {
        return Err(Error::InvalidArgument(
            "polar coordinates must be finite".into(),
        ));
    }
    if range < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "range must be non-negative, got {range}"
        )));
    }
    let (se, ce) = elevation.sin_cos();
    let (sa, ca) = azimuth.sin_cos();
    Ok(RadarPoint::new(
        range * ce * sa,
        range * ce * ca,
        range * se,
    ))
}

/// Inverse of [`radar_polar_to_cartesian`]: `(range, azimuth, elevation)`.
pub fn radar_cartesian_to_polar(p: &RadarPoint) -> (f64, f64, f64) {
    let range = p.to_vector().norm();
    let azimuth = p.x.atan2(p.y);
    let elevation = if range > 0.0 {
        (p.z / range).clamp(-1.0, 1.0).asin()
    } else {
        0.0
    };
    (range, azimuth, elevation)
}

/// Closest rotation to `m` in Frobenius norm (orthogonal polar factor with
/// the reflection removed).
pub fn nearest_rotation(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument("matrix must be finite".into()));
    }
    let svd = m.svd(true, true);
    let (mut u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let s = svd.singular_values;
    let smax = s.max();
    let (imin, smin) = s.argmin();
    if smax == 0.0 || smin * MAX_CONDITION < smax {
        return Err(Error::DegenerateMatrix(format!(
            "condition estimate exceeds 1e12 (singular values {:?})",
            s.as_slice()
        )));
    }
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        u.column_mut(imin).neg_mut();
        r = u * v_t;
    }
    Ok(r)
}
