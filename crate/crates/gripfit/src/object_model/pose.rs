//! Rigid pose (rotation + translation) of the object in the live/camera frame.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A rigid transform mapping canonical (object) coordinates into the live frame.
///
/// The rotation is stored as a unit quaternion, so orthonormality and
/// `det = +1` hold by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidPose {
    /// Rotation, wxyz order when serialized.
    #[serde(with = "quat_wxyz")]
    pub rotation: UnitQuaternion<f64>,
    /// Translation in meters.
    #[serde(with = "vec3_array")]
    pub translation: Vector3<f64>,
}

impl RigidPose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Build from a quaternion given in (w, x, y, z) order; normalizes.
    ///
    /// Errors when the quaternion norm is too far from 1 to be a plausible
    /// rotation (corrupt data rather than rounding).
    pub fn from_wxyz(q: [f64; 4], translation: Vector3<f64>) -> Result<Self> {
        let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
        let norm = quat.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-3 {
            return Err(Error::Parameter(format!(
                "quaternion norm {norm} too far from 1"
            )));
        }
        Ok(Self {
            rotation: UnitQuaternion::from_quaternion(quat),
            translation,
        })
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    /// Apply to a point: `R x + t`.
    pub fn transform_point(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.translation
    }

    /// Apply to a direction: `R x` (no translation).
    pub fn transform_direction(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x
    }

    pub fn inverse(&self) -> Self {
        let inv_rot = self.rotation.inverse();
        Self {
            rotation: inv_rot,
            translation: -(inv_rot * self.translation),
        }
    }

    /// Composition: `self` after `other` (i.e. `(self ∘ other)(x) = self(other(x))`).
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

/// Serialize a unit quaternion as `[w, x, y, z]`.
mod quat_wxyz {
    use nalgebra::{Quaternion, UnitQuaternion};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(q: &UnitQuaternion<f64>, s: S) -> Result<S::Ok, S::Error> {
        [q.w, q.i, q.j, q.k].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<UnitQuaternion<f64>, D::Error> {
        let [w, x, y, z] = <[f64; 4]>::deserialize(d)?;
        Ok(UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)))
    }
}

/// Serialize a `Vector3` as a plain 3-array.
pub(crate) mod vec3_array {
    use nalgebra::Vector3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector3<f64>, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector3<f64>, D::Error> {
        let [x, y, z] = <[f64; 3]>::deserialize(d)?;
        Ok(Vector3::new(x, y, z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn identity_leaves_points_unchanged() {
        let pose = RigidPose::identity();
        let x = Vector3::new(0.3, -0.1, 2.0);
        assert_eq!(pose.transform_point(&x), x);
        assert_eq!(pose.transform_direction(&x), x);
    }

    #[test]
    fn quarter_turn_about_z_maps_x_to_y() {
        let pose = RigidPose::new(
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2),
            Vector3::new(1.0, 2.0, 3.0),
        );
        let d = pose.transform_direction(&Vector3::x());
        assert_relative_eq!(d, Vector3::y(), epsilon = 1e-12);
    }

    #[test]
    fn rotation_matrix_is_orthonormal() {
        let pose = RigidPose::new(
            UnitQuaternion::from_axis_angle(
                &nalgebra::Unit::new_normalize(Vector3::new(1.0, -2.0, 0.5)),
                1.234,
            ),
            Vector3::zeros(),
        );
        let r = pose.rotation_matrix();
        assert_relative_eq!(r.transpose() * r, Matrix3::identity(), epsilon = 1e-9);
        assert_relative_eq!(r.determinant(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn rejects_degenerate_quaternion() {
        assert!(RigidPose::from_wxyz([0.5, 0.0, 0.0, 0.0], Vector3::zeros()).is_err());
    }

    #[test]
    fn inverse_composes_to_identity() {
        let pose = RigidPose::new(
            UnitQuaternion::from_axis_angle(
                &nalgebra::Unit::new_normalize(Vector3::new(0.2, 1.0, -0.7)),
                2.5,
            ),
            Vector3::new(-0.4, 0.1, 0.9),
        );
        let round = pose.inverse().compose(&pose);
        let x = Vector3::new(0.05, -0.02, 0.11);
        assert_relative_eq!(round.transform_point(&x), x, epsilon = 1e-12);
    }
}
