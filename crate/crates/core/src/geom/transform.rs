use nalgebra::{Matrix3, Point3, Rotation3, Unit, Vector3};

use super::PointCloud;
use crate::{Error, Result};

const RIGID_TOL: f64 = 1e-9;

/// A proper rigid motion `p ↦ R·p + t`, with `R ∈ SO(3)` and `t` in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    /// Validates `RᵀR = I` and `det R = +1` to within 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("rigid transform"));
        }
        let err = orthonormality_error(&rotation);
        if err > RIGID_TOL || (rotation.determinant() - 1.0).abs() > RIGID_TOL {
            return Err(Error::DegenerateGeometry("rotation is not in SO(3)"));
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

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Rotation of `angle` radians about `axis` (normalized here), then translation `t`.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64, t: Vector3<f64>) -> Self {
        let rotation = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle);
        Self {
            rotation: *rotation.matrix(),
            translation: t,
        }
    }

    /// Rotation about +z by `yaw` radians, then translation.
    pub fn from_yaw(yaw: f64, t: Vector3<f64>) -> Self {
        Self::from_axis_angle(&Vector3::z(), yaw, t)
    }

    /// Projects a nearly-orthonormal matrix onto SO(3) via SVD.
    ///
    /// Returns the projection and the orthonormality error of the input.
    pub fn orthonormalize(m: &Matrix3<f64>) -> Option<(Matrix3<f64>, f64)> {
        let err = orthonormality_error(m);
        let svd = m.svd(true, true);
        let (u, v_t) = (svd.u?, svd.v_t?);
        let mut d = Matrix3::identity();
        if (u * v_t).determinant() < 0.0 {
            d[(2, 2)] = -1.0;
        }
        Some((u * d * v_t, err))
    }

    pub(crate) fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Row-major `[R | t]`, the KITTI pose layout.
    #[rustfmt::skip]
    pub fn to_row_major_3x4(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t[0],
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t[1],
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t[2],
        ]
    }
}

/// Largest elementwise deviation of `RᵀR` from the identity.
pub(crate) fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

/// Maps every point through `t`; the input is untouched.
pub fn apply_transform(cloud: &PointCloud, t: &RigidTransform) -> PointCloud {
    PointCloud::from_points_unchecked(cloud.points().iter().map(|p| t.apply(p)).collect())
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use super::*;

    #[test]
    fn identity_leaves_cloud_unchanged() {
        let c = PointCloud::from_xyz(&[[1.0, -2.0, 3.5], [0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(apply_transform(&c, &RigidTransform::identity()), c);
    }

    #[test]
    fn quarter_turn_about_z() {
        let c = PointCloud::from_xyz(&[[1.0, 0.0, 0.0]]).unwrap();
        let t = RigidTransform::from_yaw(FRAC_PI_2, Vector3::zeros());
        let out = apply_transform(&c, &t);
        assert!((out[0] - Point3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn composition_matches_sequential_application() {
        let c = PointCloud::from_xyz(&[[1.0, 2.0, 3.0], [-4.0, 0.5, 9.0]]).unwrap();
        let t1 = RigidTransform::from_axis_angle(&Vector3::new(1.0, 2.0, 3.0), 0.7, Vector3::new(1.0, 0.0, -2.0));
        let t2 = RigidTransform::from_axis_angle(&Vector3::new(-1.0, 0.0, 1.0), -2.1, Vector3::new(0.0, 5.0, 1.0));
        let seq = apply_transform(&apply_transform(&c, &t1), &t2);
        let composed = apply_transform(&c, &t2.compose(&t1));
        for (a, b) in seq.points().iter().zip(composed.points()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn inverse_round_trip() {
        let t = RigidTransform::from_axis_angle(&Vector3::new(0.3, -1.0, 0.2), 1.3, Vector3::new(4.0, -1.0, 2.0));
        let id = t.compose(&t.inverse());
        assert!((id.rotation() - Matrix3::identity()).abs().max() < 1e-12);
        assert!(id.translation().norm() < 1e-12);
    }

    #[test]
    fn rejects_reflection_and_scale() {
        let mut m = Matrix3::identity();
        m[(2, 2)] = -1.0;
        assert!(RigidTransform::new(m, Vector3::zeros()).is_err());
        assert!(RigidTransform::new(Matrix3::identity() * 1.01, Vector3::zeros()).is_err());
    }

    #[test]
    fn orthonormalize_repairs_small_drift() {
        let r = *RigidTransform::from_yaw(0.4, Vector3::zeros()).rotation();
        let noisy = r + Matrix3::from_element(1e-5);
        let (fixed, err) = RigidTransform::orthonormalize(&noisy).unwrap();
        assert!(err > 0.0 && err < 1e-3);
        assert!(RigidTransform::new(fixed, Vector3::zeros()).is_ok());
    }
}
