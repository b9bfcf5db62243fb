use nalgebra::{Matrix3, Vector3};

use super::{NeighborIndex, PointCloud, RigidTransform};
use crate::{Error, Result};

/// Default radius for counting a point as overlapping, in meters.
pub const DEFAULT_OVERLAP_TAU: f64 = 0.5;

/// Symmetric overlap `min(o_AB, o_BA)`, where `o_AB` is the fraction of points
/// of `a` that land within `tau` of some point of `b` after `t_gt`.
pub fn overlap_ratio(a: &PointCloud, b: &PointCloud, t_gt: &RigidTransform, tau: f64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let ia = NeighborIndex::build(a)?;
    let ib = NeighborIndex::build(b)?;
    Ok(overlap_ratio_indexed(a, &ia, b, &ib, t_gt, tau))
}

/// [`overlap_ratio`] against prebuilt indices of both clouds.
pub(crate) fn overlap_ratio_indexed(
    a: &PointCloud,
    index_a: &NeighborIndex,
    b: &PointCloud,
    index_b: &NeighborIndex,
    t_gt: &RigidTransform,
    tau: f64,
) -> f64 {
    let tau_sq = tau * tau;
    let inv = t_gt.inverse();
    let hits_ab = a
        .points()
        .iter()
        .filter(|p| index_b.nearest(&t_gt.apply(p)).dist_sq < tau_sq)
        .count();
    let hits_ba = b
        .points()
        .iter()
        .filter(|q| index_a.nearest(&inv.apply(q)).dist_sq < tau_sq)
        .count();
    (hits_ab as f64 / a.len() as f64).min(hits_ba as f64 / b.len() as f64)
}

/// Relative rotation error in degrees, in `[0, 180]`: the angle of `R_gtᵀ·R_est`.
///
/// Evaluated as `atan2(sin θ, cos θ)` rather than `acos(cos θ)`, which loses
/// about 1e-8 rad near zero.
pub fn rre(r_est: &Matrix3<f64>, r_gt: &Matrix3<f64>) -> f64 {
    let m = r_gt.transpose() * r_est;
    let cos = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let skew = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    let sin = (skew.norm() / 2.0).min(1.0);
    sin.atan2(cos).to_degrees()
}

/// Relative translation error in meters.
pub fn rte(t_est: &Vector3<f64>, t_gt: &Vector3<f64>) -> f64 {
    (t_est - t_gt).norm()
}

#[cfg(test)]
mod tests {
    use nalgebra::{Quaternion, UnitQuaternion};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn self_overlap_is_one() {
        let c = PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [3.0, 1.0, 0.0], [9.0, 9.0, 9.0]]).unwrap();
        for tau in [1e-6, 0.1, 0.5, 10.0] {
            assert_eq!(overlap_ratio(&c, &c, &RigidTransform::identity(), tau).unwrap(), 1.0);
        }
    }

    #[test]
    fn far_apart_clouds_do_not_overlap() {
        let a = PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
        let b = PointCloud::from_xyz(&[[20.0, 0.0, 0.0], [21.0, 0.0, 0.0]]).unwrap();
        assert_eq!(overlap_ratio(&a, &b, &RigidTransform::identity(), 0.5).unwrap(), 0.0);
        assert!(matches!(
            overlap_ratio(&a, &PointCloud::empty(), &RigidTransform::identity(), 0.5),
            Err(Error::EmptyCloud)
        ));
    }

    #[test]
    fn thirty_shared_points() {
        // 30 shared points on a 2 m lattice, 70 private points per cloud far away
        let shared: Vec<[f64; 3]> = (0..30).map(|i| [(i % 6) as f64 * 2.0, (i / 6) as f64 * 2.0, 0.0]).collect();
        let mut a = shared.clone();
        let mut b = shared.clone();
        a.extend((0..70).map(|i| [1000.0 + i as f64 * 2.0, 0.0, 0.0]));
        b.extend((0..70).map(|i| [-1000.0 - i as f64 * 2.0, 0.0, 0.0]));
        let (a, b) = (PointCloud::from_xyz(&a).unwrap(), PointCloud::from_xyz(&b).unwrap());
        // brute-force count for the oracle
        let count = a
            .points()
            .iter()
            .filter(|p| b.points().iter().any(|q| (*p - q).norm() < 0.5))
            .count();
        assert_eq!(count, 30);
        assert_eq!(overlap_ratio(&a, &b, &RigidTransform::identity(), 0.5).unwrap(), 0.30);
    }

    #[test]
    fn rre_of_constructed_angle() {
        let gt = *RigidTransform::from_axis_angle(&Vector3::new(0.2, 1.0, -0.4), 0.9, Vector3::zeros()).rotation();
        assert_eq!(rre(&gt, &gt), 0.0);
        let delta = *RigidTransform::from_axis_angle(&Vector3::new(3.0, -1.0, 2.0), 1.5f64.to_radians(), Vector3::zeros())
            .rotation();
        assert!((rre(&(gt * delta), &gt) - 1.5).abs() < 1e-9);
    }

    fn quat_angle_deg(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
        let qa = UnitQuaternion::from_matrix(a);
        let qb = UnitQuaternion::from_matrix(b);
        let q: Quaternion<f64> = *qa.quaternion();
        let p: Quaternion<f64> = *qb.quaternion();
        let dot = q.dot(&p).abs().min(1.0);
        (2.0 * dot.acos()).to_degrees()
    }

    #[test]
    fn rre_matches_quaternion_oracle_and_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let rand_rot = |rng: &mut ChaCha8Rng| {
                let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                *RigidTransform::from_axis_angle(&axis, rng.random_range(-3.1..3.1), Vector3::zeros()).rotation()
            };
            let (a, b) = (rand_rot(&mut rng), rand_rot(&mut rng));
            assert!((rre(&a, &b) - quat_angle_deg(&a, &b)).abs() < 1e-7);
            assert!((rre(&a, &b) - rre(&b, &a)).abs() < 1e-9);
        }
    }

    #[test]
    fn rte_is_euclidean() {
        assert_eq!(rte(&Vector3::new(1.0, 2.0, 3.0), &Vector3::new(1.0, 2.0, 3.0)), 0.0);
        assert!((rte(&Vector3::new(0.6, 0.0, 0.0), &Vector3::zeros()) - 0.6).abs() < 1e-15);
        let (a, b) = (Vector3::new(1.5, -2.0, 0.25), Vector3::new(-0.5, 4.0, 1.0));
        let direct = ((1.5f64 + 0.5).powi(2) + (-2.0f64 - 4.0).powi(2) + (0.25f64 - 1.0).powi(2)).sqrt();
        assert!((rte(&a, &b) - direct).abs() < 1e-12);
    }
}
