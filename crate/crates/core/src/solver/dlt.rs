use nalgebra::{DMatrix, Matrix3, Matrix3x4, Matrix4, Vector3, Vector4};

use crate::correspondence::Correspondence;
use crate::error::{Error, Result};
use crate::geometry::{nearest_rotation, CameraIntrinsics, ExtrinsicPose};

pub(crate) const MIN_POINTS: usize = 6;

/// Similarity transform taking `points` to zero centroid and mean distance
/// `target`. Returns `(scale, centroid)`.
fn normalization<const D: usize>(
    points: &[nalgebra::SVector<f64, D>],
    target: f64,
) -> Result<(f64, nalgebra::SVector<f64, D>)> {
    let n = points.len() as f64;
    let centroid = points.iter().sum::<nalgebra::SVector<f64, D>>() / n;
    let mean_dist = points.iter().map(|p| (p - centroid).norm()).sum::<f64>() / n;
    if !(mean_dist > 1e-12) || !mean_dist.is_finite() {
        return Err(Error::DegenerateConfiguration("all points coincide".into()));
    }
    Ok((target / mean_dist, centroid))
}

/// Linear pose from at least six correspondences with known intrinsics.
///
/// Pixels are mapped through `K⁻¹`, both point sets are Hartley-normalized,
/// and the 3×4 matrix `[R|T]` is taken from the null vector of the stacked
/// two-rows-per-point system. Scale and sign are fixed so that most points
/// lie in front of the camera and the left block has determinant +1; the
/// rotation is the nearest orthonormal matrix to that block.
pub fn dlt_pose(corrs: &[Correspondence], k: &CameraIntrinsics) -> Result<ExtrinsicPose> {
    if corrs.len() < MIN_POINTS {
        return Err(Error::InsufficientData {
            needed: MIN_POINTS,
            got: corrs.len(),
        });
    }
    let world: Vec<Vector3<f64>> = corrs.iter().map(|c| c.radar.to_vector()).collect();
    let image: Vec<nalgebra::Vector2<f64>> = corrs
        .iter()
        .map(|c| {
            let (x, y) = k.normalize(&c.pixel);
            nalgebra::Vector2::new(x, y)
        })
        .collect();

    let (s3, m3) = normalization(&world, 3f64.sqrt())?;
    let (s2, m2) = normalization(&image, 2f64.sqrt())?;

    let mut a = DMatrix::<f64>::zeros(2 * corrs.len(), 12);
    for (i, (w, x)) in world.iter().zip(&image).enumerate() {
        let p = (w - m3) * s3;
        let ph = Vector4::new(p.x, p.y, p.z, 1.0);
        let q = (x - m2) * s2;
        for j in 0..4 {
            a[(2 * i, j)] = ph[j];
            a[(2 * i, 8 + j)] = -q.x * ph[j];
            a[(2 * i + 1, 4 + j)] = ph[j];
            a[(2 * i + 1, 8 + j)] = -q.y * ph[j];
        }
    }

    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::DegenerateConfiguration("SVD did not converge".into()))?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    let (smallest, second) = (sv[order[0]], sv[order[1]]);
    let largest = sv[order[order.len() - 1]];
    if second <= 1e-9 * largest || smallest > 0.99 * second {
        return Err(Error::DegenerateConfiguration(format!(
            "null space is not one-dimensional (two smallest singular values {smallest:e}, {second:e})"
        )));
    }
    let h = v_t.row(order[0]);
    let p_norm = Matrix3x4::from_row_slice(h.transpose().as_slice());

    // undo normalization: P = T2⁻¹ · P' · T3
    let t3 = Matrix4::new(
        s3,
        0.0,
        0.0,
        -s3 * m3.x, //
        0.0,
        s3,
        0.0,
        -s3 * m3.y, //
        0.0,
        0.0,
        s3,
        -s3 * m3.z, //
        0.0,
        0.0,
        0.0,
        1.0,
    );
    let t2_inv = Matrix3::new(
        1.0 / s2,
        0.0,
        m2.x, //
        0.0,
        1.0 / s2,
        m2.y, //
        0.0,
        0.0,
        1.0,
    );
    let mut p = t2_inv * p_norm * t3;

    let in_front = world
        .iter()
        .filter(|w| p.row(2).dot(&Vector4::new(w.x, w.y, w.z, 1.0).transpose()) > 0.0)
        .count();
    if 2 * in_front < world.len() {
        p = -p;
    }
    let left: Matrix3<f64> = p.fixed_view::<3, 3>(0, 0).into();
    if left.determinant() <= 0.0 {
        return Err(Error::DegenerateConfiguration(
            "no solution with points in front of a proper rotation".into(),
        ));
    }
    let scale = 3.0 / left.singular_values().sum();
    let rotation = nearest_rotation(&(left * scale))
        .map_err(|e| Error::DegenerateConfiguration(e.to_string()))?;
    let translation: Vector3<f64> = p.column(3) * scale;
    ExtrinsicPose::new(rotation, translation)
}
