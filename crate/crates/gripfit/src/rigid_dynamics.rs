//! Object dynamics from three consecutive rigid poses.
//!
//! Backward finite differences over `{W_{t-2}, W_{t-1}, W_t}` give linear and
//! angular velocity/acceleration of the center of mass; Euler's equation then
//! yields the driving torque. Everything is expressed in the world frame.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::object_model::{PhysicalProperties, RigidPose};

/// Per-frame dynamic state of the tracked object.
#[derive(Debug, Clone, Copy)]
pub struct DynamicsState {
    /// Linear velocity of the center of mass, m/s.
    pub linear_velocity: Vector3<f64>,
    /// Angular velocity, rad/s (world frame).
    pub angular_velocity: Vector3<f64>,
    /// Linear acceleration, m/s².
    pub linear_acceleration: Vector3<f64>,
    /// Angular acceleration, rad/s².
    pub angular_acceleration: Vector3<f64>,
    /// Driving torque `I ω̇ + ω × (I ω)`, N·m.
    pub driving_torque: Vector3<f64>,
    /// Center of mass in the live frame, meters.
    pub com_live: Vector3<f64>,
    /// Inertia tensor rotated into the world frame, kg·m².
    pub inertia_world: Matrix3<f64>,
}

impl DynamicsState {
    /// State of a perfectly still object.
    pub fn at_rest(pose: &RigidPose, props: &PhysicalProperties) -> Self {
        let r = pose.rotation_matrix();
        let inertia_world = symmetrize(r * props.inertia * r.transpose());
        Self {
            linear_velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
            linear_acceleration: Vector3::zeros(),
            angular_acceleration: Vector3::zeros(),
            driving_torque: Vector3::zeros(),
            com_live: pose.transform_point(&props.center_of_mass),
            inertia_world,
        }
    }
}

fn symmetrize(m: Matrix3<f64>) -> Matrix3<f64> {
    0.5 * (m + m.transpose())
}

/// Rotation logarithm: axis times angle, with angle in `[0, π]`.
///
/// Near the identity a series expansion avoids the `0/0` in the standard
/// formula; near a half turn the axis is recovered from the dominant diagonal
/// of `(R + I)/2`, which stays well conditioned where `sin θ → 0`.
pub fn rotation_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let vee = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );

    // atan2 keeps the angle well conditioned at both ends: cos θ from the
    // trace degrades as 1/sin θ near π, while ‖vee‖ = 2 sin θ is exact there.
    let cos_theta = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let sin_theta = (vee.norm() / 2.0).min(1.0);
    let theta = sin_theta.atan2(cos_theta);

    if theta < 1e-7 {
        // log(R) ≈ 0.5 (1 + θ²/6) vee(R − Rᵀ)
        return 0.5 * (1.0 + theta * theta / 6.0) * vee;
    }

    if std::f64::consts::PI - theta < 1e-5 {
        // θ ≈ π: R ≈ 2 a aᵀ − I, so (R + I)/2 ≈ a aᵀ. Symmetrizing first
        // removes the O(sin θ) antisymmetric part from the estimate.
        let b = (r + r.transpose()) / 4.0 + Matrix3::identity() / 2.0;
        let diag = [b[(0, 0)], b[(1, 1)], b[(2, 2)]];
        let k = if diag[0] >= diag[1] && diag[0] >= diag[2] {
            0
        } else if diag[1] >= diag[2] {
            1
        } else {
            2
        };
        let mut axis = Vector3::new(b[(0, k)], b[(1, k)], b[(2, k)]) / diag[k].max(1e-12).sqrt();
        axis.normalize_mut();
        // vee(R − Rᵀ) = 2 sinθ a fixes the sign of the axis when sinθ > 0.
        if vee.dot(&axis) < 0.0 {
            axis = -axis;
        }
        return theta * axis;
    }

    (theta / (2.0 * theta.sin())) * vee
}

/// Euler's equation: the net moment producing the observed angular motion.
pub fn driving_torque(
    inertia_world: &Matrix3<f64>,
    angular_velocity: &Vector3<f64>,
    angular_acceleration: &Vector3<f64>,
) -> Vector3<f64> {
    inertia_world * angular_acceleration
        + angular_velocity.cross(&(inertia_world * angular_velocity))
}

/// Finite-difference dynamics over three trailing poses.
///
/// - `v = (c_t − c_{t−1}) / dt`
/// - `v̇ = (c_t − 2 c_{t−1} + c_{t−2}) / dt²`
/// - `ω_s = log(R_s R_{s−1}ᵀ) / dt`, `ω̇ = (ω_t − ω_{t−1}) / dt`
///
/// where `c_s` is the center of mass under pose `s`.
pub fn finite_difference_dynamics(
    pose_tm2: &RigidPose,
    pose_tm1: &RigidPose,
    pose_t: &RigidPose,
    dt: f64,
    props: &PhysicalProperties,
) -> Result<DynamicsState> {
    if !(dt > 0.0) {
        return Err(Error::Parameter(format!("dt {dt} must be positive")));
    }

    let c_tm2 = pose_tm2.transform_point(&props.center_of_mass);
    let c_tm1 = pose_tm1.transform_point(&props.center_of_mass);
    let c_t = pose_t.transform_point(&props.center_of_mass);

    let linear_velocity = (c_t - c_tm1) / dt;
    let linear_acceleration = (c_t - 2.0 * c_tm1 + c_tm2) / (dt * dt);

    let r_tm2 = pose_tm2.rotation_matrix();
    let r_tm1 = pose_tm1.rotation_matrix();
    let r_t = pose_t.rotation_matrix();

    let omega_t = rotation_log(&(r_t * r_tm1.transpose())) / dt;
    let omega_tm1 = rotation_log(&(r_tm1 * r_tm2.transpose())) / dt;
    let angular_acceleration = (omega_t - omega_tm1) / dt;

    let inertia_world = symmetrize(r_t * props.inertia * r_t.transpose());
    let tau = driving_torque(&inertia_world, &omega_t, &angular_acceleration);

    Ok(DynamicsState {
        linear_velocity,
        angular_velocity: omega_t,
        linear_acceleration,
        angular_acceleration,
        driving_torque: tau,
        com_live: c_t,
        inertia_world,
    })
}
