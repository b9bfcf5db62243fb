use nalgebra::{Matrix3, Point3, Vector3};

use super::{Correspondences, PointCloud, RigidTransform};
use crate::{Error, Result};

/// Second singular value of the cross-covariance below this fraction of the
/// first marks collinear or coincident input.
const DEGENERACY_RATIO: f64 = 1e-12;

/// Weighted least-squares rigid fit minimizing `Σ w_k ‖R·a_k + t − b_k‖²`.
///
/// Reflections are excluded by the sign-corrected SVD.
pub fn kabsch(corr: &Correspondences, a: &PointCloud, b: &PointCloud) -> Result<RigidTransform> {
    corr.validate(a.len(), b.len())?;
    let src: Vec<Point3<f64>> = corr.pairs().iter().map(|&(i, _)| a[i]).collect();
    let dst: Vec<Point3<f64>> = corr.pairs().iter().map(|&(_, j)| b[j]).collect();
    kabsch_points(&src, &dst, corr.weights())
}

/// [`kabsch`] on explicit point lists, `src[k] ↦ dst[k]`.
pub fn kabsch_points(
    src: &[Point3<f64>],
    dst: &[Point3<f64>],
    weights: Option<&[f64]>,
) -> Result<RigidTransform> {
    if src.len() != dst.len() {
        return Err(Error::ShapeMismatch(format!("{} source vs {} target points", src.len(), dst.len())));
    }
    if src.len() < 3 {
        return Err(Error::DegenerateGeometry("fewer than 3 correspondences"));
    }
    let w = |k: usize| weights.map_or(1.0, |w| w[k]);
    let total: f64 = (0..src.len()).map(w).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateGeometry("zero total weight"));
    }

    let mut ca = Vector3::zeros();
    let mut cb = Vector3::zeros();
    for k in 0..src.len() {
        ca += src[k].coords * w(k);
        cb += dst[k].coords * w(k);
    }
    ca /= total;
    cb /= total;

    let mut h = Matrix3::zeros();
    for k in 0..src.len() {
        h += (src[k].coords - ca) * (dst[k].coords - cb).transpose() * w(k);
    }
    let svd = h.svd(true, true);
    let s = svd.singular_values;
    if !(s[0] > 0.0) || s[1] < DEGENERACY_RATIO * s[0] {
        return Err(Error::DegenerateGeometry("correspondences are collinear or coincident"));
    }
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateGeometry("SVD did not converge")),
    };
    let v = v_t.transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rotation = v * d * u.transpose();
    let translation = cb - rotation * ca;
    Ok(RigidTransform::from_parts_unchecked(rotation, translation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::apply_transform;

    fn cloud() -> PointCloud {
        PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 3.0], [1.0, 1.0, 1.0]])
            .unwrap()
    }

    fn identity_pairs(n: usize) -> Correspondences {
        Correspondences::new((0..n).map(|i| (i, i)).collect())
    }

    #[test]
    fn same_cloud_gives_identity() {
        let c = cloud();
        let t = kabsch(&identity_pairs(c.len()), &c, &c).unwrap();
        assert!((t.rotation() - Matrix3::identity()).abs().max() < 1e-9);
        assert!(t.translation().norm() < 1e-9);
    }

    #[test]
    fn pure_translation() {
        let c = cloud();
        let shift = Vector3::new(1.0, 2.0, 3.0);
        let b = apply_transform(&c, &RigidTransform::from_translation(shift));
        let t = kabsch(&identity_pairs(c.len()), &c, &b).unwrap();
        assert!((t.rotation() - Matrix3::identity()).abs().max() < 1e-9);
        assert!((t.translation() - shift).norm() < 1e-9);
    }

    #[test]
    fn collinear_is_degenerate() {
        let c = PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [2.0, 2.0, 2.0], [5.0, 5.0, 5.0]]).unwrap();
        assert!(matches!(
            kabsch(&identity_pairs(4), &c, &c),
            Err(Error::DegenerateGeometry(_))
        ));
        let same = PointCloud::from_xyz(&[[1.0, 2.0, 3.0]; 4]).unwrap();
        assert!(kabsch(&identity_pairs(4), &same, &same).is_err());
    }

    #[test]
    fn never_returns_reflection() {
        // planar input mirrored: best proper rotation, not the reflection
        let a = PointCloud::from_xyz(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, -2.0, 0.0]]).unwrap();
        let b = PointCloud::from_xyz(&[[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 2.0, 0.0]]).unwrap();
        let t = kabsch(&identity_pairs(4), &a, &b).unwrap();
        assert!((t.rotation().determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn weights_select_subset() {
        let a = cloud();
        let mut b = apply_transform(&a, &RigidTransform::from_translation(Vector3::new(0.5, 0.0, 0.0))).into_points();
        b.push(Point3::new(100.0, 100.0, 100.0));
        let mut a_pts = a.points().to_vec();
        a_pts.push(Point3::origin());
        let (a, b) = (PointCloud::new(a_pts).unwrap(), PointCloud::new(b).unwrap());
        let corr = Correspondences::weighted((0..6).map(|i| (i, i)).collect(), vec![1.0, 1.0, 1.0, 1.0, 1.0, 0.0]).unwrap();
        let t = kabsch(&corr, &a, &b).unwrap();
        assert!((t.translation() - Vector3::new(0.5, 0.0, 0.0)).norm() < 1e-9);
    }
}
