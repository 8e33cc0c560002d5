//! Confidence-based slide prevention.
//!
//! For every tip with a meaningful pressure, the tangential deviation of the
//! refined tip from the transported previous contact is either kept (the
//! tracker is trusted), removed (slip attributed to tracking error), or
//! blended, depending on the tip's kinematic confidence.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::contact_detection::{ContactStatus, TipState, TIP_COUNT};
use crate::force_solver::ForceSolution;
use crate::object_model::RigidPose;

/// How well a tip was observed by the sensor this frame.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct TipConfidence {
    /// Number of depth points near the tip surface.
    pub observed_count: u32,
    /// `min(1, N / N_s)`.
    pub value: f64,
}

/// Parameters of the slide decision rule.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SlideParams {
    /// Pressure threshold factor: sliding is free below `alpha * G_o`.
    pub alpha: f64,
    /// Confidence leverage length, meters.
    pub beta: f64,
    /// Blend factor toward the kinematic position in the mixed branch.
    pub gamma: f64,
    /// Depth-point count that saturates confidence at 1.
    pub saturation_count: u32,
    /// Distance below which a depth point counts as observing the tip, meters.
    pub near_threshold: f64,
    /// Gravitational acceleration magnitude used for `G_o = m |g|`, m/s².
    pub gravity_norm: f64,
}

impl Default for SlideParams {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            beta: 0.005,
            gamma: 0.5,
            saturation_count: 75,
            near_threshold: 0.003,
            gravity_norm: 9.81,
        }
    }
}

/// Which branch of the slide rule fired for a tip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlideBranch {
    /// Low pressure: keep the refined position (sliding allowed).
    Free,
    /// High pressure, low confidence: snap to the no-slide position.
    Pinned,
    /// High pressure, high confidence: blend.
    Blended,
    /// Tip invalid or without history: passed through.
    PassThrough,
}

/// Count depth points whose distance to the tip sphere surface is below the
/// threshold.
pub fn count_nearby_points(cloud: &[Vector3<f64>], tip: &TipState, threshold: f64) -> u32 {
    assert!(threshold > 0.0);
    cloud
        .iter()
        .filter(|p| ((*p - tip.center).norm() - tip.radius).abs() < threshold)
        .count() as u32
}

/// `min(1, N / N_s)`.
pub fn compute_confidence(observed: u32, saturation: u32) -> f64 {
    assert!(saturation > 0);
    (observed as f64 / saturation as f64).min(1.0)
}

/// Confidence values for all five tips from observed point counts.
pub fn confidences_from_counts(counts: &[u32; TIP_COUNT], saturation: u32) -> [TipConfidence; TIP_COUNT] {
    let mut out = [TipConfidence::default(); TIP_COUNT];
    for (slot, &n) in out.iter_mut().zip(counts.iter()) {
        *slot = TipConfidence {
            observed_count: n,
            value: compute_confidence(n, saturation),
        };
    }
    out
}

/// The no-slide tip position: transport the previous final tip with the
/// object's frame-to-frame motion, then remove the tangential deviation of
/// the refined tip from it.
pub fn no_slide_position(
    refined: &Vector3<f64>,
    prev_final: &Vector3<f64>,
    pose_t: &RigidPose,
    pose_tm1: &RigidPose,
    normal: &Vector3<f64>,
) -> Vector3<f64> {
    let transported = pose_t
        .compose(&pose_tm1.inverse())
        .transform_point(prev_final);
    let tangential_projector = Matrix3::identity() - normal * normal.transpose();
    refined - tangential_projector * (refined - transported)
}

/// Output of the slide decision for one frame.
#[derive(Debug, Clone, Copy)]
pub struct SlideOutcome {
    pub targets: [Vector3<f64>; TIP_COUNT],
    pub branches: [SlideBranch; TIP_COUNT],
}

/// Apply the three-branch slide rule to all tips.
///
/// `refined` are the Stage II tip positions (`p + d̃ n` for valid tips),
/// `prev_final` the previous frame's final positions in the same convention
/// (`None` on the first physics frame or for tips without history, which pass
/// the refined position through).
#[allow(clippy::too_many_arguments)]
pub fn refine_tip_positions(
    refined: &[Vector3<f64>; TIP_COUNT],
    solution: &ForceSolution,
    confidence: &[TipConfidence; TIP_COUNT],
    prev_final: &[Option<Vector3<f64>>; TIP_COUNT],
    pose_t: &RigidPose,
    pose_tm1: &RigidPose,
    cs: &ContactStatus,
    params: &SlideParams,
    mass: f64,
) -> SlideOutcome {
    let weight = mass * params.gravity_norm;
    let pressure_threshold = params.alpha * weight;

    let mut targets = [Vector3::zeros(); TIP_COUNT];
    let mut branches = [SlideBranch::PassThrough; TIP_COUNT];

    for i in 0..TIP_COUNT {
        let kinematic = refined[i];
        let (target, branch) = if !cs.tips[i].valid {
            (kinematic, SlideBranch::PassThrough)
        } else if solution.tips[i].pressure < pressure_threshold {
            (kinematic, SlideBranch::Free)
        } else if let Some(prev) = prev_final[i] {
            let pinned = no_slide_position(&kinematic, &prev, pose_t, pose_tm1, &cs.tips[i].normal);
            let slip = (kinematic - pinned).norm();
            if slip < 1e-9 {
                // The middle branch divides by the slip norm; zero slip means
                // the refined position already honors the contact.
                (kinematic, SlideBranch::Free)
            } else if confidence[i].value <= params.beta / slip {
                (pinned, SlideBranch::Pinned)
            } else {
                (
                    params.gamma * kinematic + (1.0 - params.gamma) * pinned,
                    SlideBranch::Blended,
                )
            }
        } else {
            (kinematic, SlideBranch::PassThrough)
        };
        targets[i] = target;
        branches[i] = branch;
    }

    SlideOutcome { targets, branches }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact_detection::TipContact;
    use crate::force_solver::TipForce;
    use approx::assert_relative_eq;
    use nalgebra::UnitQuaternion;

    fn status_with_normal(n: Vector3<f64>) -> ContactStatus {
        let tip = TipContact {
            point: Vector3::zeros(),
            normal: n,
            distance: 0.0,
            refined_distance: 0.0,
            valid: true,
        };
        ContactStatus {
            tips: [tip; TIP_COUNT],
        }
    }

    fn solution_with_pressure(p: f64) -> ForceSolution {
        let mut sol = ForceSolution::zero(&status_with_normal(Vector3::z()));
        for tip in sol.tips.iter_mut() {
            *tip = TipForce {
                pressure: p,
                ..TipForce::default()
            };
        }
        sol
    }

    fn full_confidence(value: f64) -> [TipConfidence; TIP_COUNT] {
        [TipConfidence {
            observed_count: 75,
            value,
        }; TIP_COUNT]
    }

    #[test]
    fn counting_points_near_tip_sphere() {
        let tip = TipState {
            index: 0,
            center: Vector3::new(0.1, 0.2, 0.3),
            radius: 0.008,
        };
        assert_eq!(count_nearby_points(&[], &tip, 0.003), 0);

        let on_sphere: Vec<Vector3<f64>> = (0..10)
            .map(|k| {
                let angle = k as f64;
                tip.center + 0.008 * Vector3::new(angle.cos(), angle.sin(), 0.0)
            })
            .collect();
        assert_eq!(count_nearby_points(&on_sphere, &tip, 0.003), 10);

        // Brute-force oracle over a random box of points.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let cloud: Vec<Vector3<f64>> = (0..1000)
            .map(|_| {
                tip.center
                    + Vector3::new(
                        rng.gen_range(-0.02..0.02),
                        rng.gen_range(-0.02..0.02),
                        rng.gen_range(-0.02..0.02),
                    )
            })
            .collect();
        let brute = cloud
            .iter()
            .filter(|p| ((*p - tip.center).norm() - tip.radius).abs() < 0.003)
            .count() as u32;
        assert_eq!(count_nearby_points(&cloud, &tip, 0.003), brute);
    }

    #[test]
    fn confidence_formula() {
        assert_eq!(compute_confidence(75, 75), 1.0);
        assert_eq!(compute_confidence(0, 75), 0.0);
        assert_eq!(compute_confidence(30, 75), 0.4);
        assert_eq!(compute_confidence(200, 75), 1.0);
    }

    #[test]
    fn static_object_removes_tangential_motion() {
        let pose = RigidPose::identity();
        let out = no_slide_position(
            &Vector3::new(0.005, 0.0, 0.002),
            &Vector3::zeros(),
            &pose,
            &pose,
            &Vector3::z(),
        );
        assert_relative_eq!(out, Vector3::new(0.0, 0.0, 0.002), epsilon = 1e-15);
    }

    #[test]
    fn transported_previous_tip_is_a_fixed_point() {
        let pose_tm1 = RigidPose::new(
            UnitQuaternion::from_axis_angle(&Vector3::y_axis(), 0.2),
            Vector3::new(0.01, 0.0, 0.0),
        );
        let pose_t = RigidPose::new(
            UnitQuaternion::from_axis_angle(&Vector3::y_axis(), 0.25),
            Vector3::new(0.012, 0.001, 0.0),
        );
        let prev = Vector3::new(0.04, -0.01, 0.06);
        let transported = pose_t
            .compose(&pose_tm1.inverse())
            .transform_point(&prev);
        let out = no_slide_position(
            &transported,
            &prev,
            &pose_t,
            &pose_tm1,
            &Vector3::new(0.0, 0.0, 1.0),
        );
        assert_relative_eq!(out, transported, epsilon = 1e-12);
    }

    #[test]
    fn pure_translation_follows_the_object() {
        // If the object translated by u and the refined tip moved by exactly u,
        // there is no slip to remove.
        let u = Vector3::new(0.003, -0.002, 0.001);
        let pose_tm1 = RigidPose::identity();
        let pose_t = RigidPose::new(UnitQuaternion::identity(), u);
        let prev = Vector3::new(0.05, 0.0, 0.0);
        let refined = prev + u;
        let out = no_slide_position(&refined, &prev, &pose_t, &pose_tm1, &Vector3::z());
        assert_relative_eq!(out, refined, epsilon = 1e-15);
    }

    #[test]
    fn low_pressure_keeps_refined_position() {
        // G_o = 0.2 * 9.81 = 1.962 N; threshold = 0.3 * G_o = 0.5886 N.
        let params = SlideParams::default();
        let cs = status_with_normal(Vector3::z());
        let refined = [Vector3::new(0.01, 0.0, 0.0); TIP_COUNT];
        let prev = [Some(Vector3::zeros()); TIP_COUNT];
        let out = refine_tip_positions(
            &refined,
            &solution_with_pressure(0.3),
            &full_confidence(1.0),
            &prev,
            &RigidPose::identity(),
            &RigidPose::identity(),
            &cs,
            &params,
            0.2,
        );
        assert_eq!(out.branches[0], SlideBranch::Free);
        assert_eq!(out.targets[0], refined[0]);
    }

    #[test]
    fn high_pressure_low_confidence_pins() {
        let params = SlideParams::default();
        let cs = status_with_normal(Vector3::z());
        // 20 mm tangential slip; C = 0.2 <= 5mm/20mm = 0.25.
        let refined = [Vector3::new(0.02, 0.0, 0.0); TIP_COUNT];
        let prev = [Some(Vector3::zeros()); TIP_COUNT];
        let out = refine_tip_positions(
            &refined,
            &solution_with_pressure(1.0),
            &full_confidence(0.2),
            &prev,
            &RigidPose::identity(),
            &RigidPose::identity(),
            &cs,
            &params,
            0.2,
        );
        assert_eq!(out.branches[0], SlideBranch::Pinned);
        assert_relative_eq!(out.targets[0], Vector3::zeros(), epsilon = 1e-12);
    }

    #[test]
    fn high_pressure_high_confidence_blends() {
        let params = SlideParams::default();
        let cs = status_with_normal(Vector3::z());
        let refined = [Vector3::new(0.02, 0.0, 0.0); TIP_COUNT];
        let prev = [Some(Vector3::zeros()); TIP_COUNT];
        let out = refine_tip_positions(
            &refined,
            &solution_with_pressure(1.0),
            &full_confidence(0.5),
            &prev,
            &RigidPose::identity(),
            &RigidPose::identity(),
            &cs,
            &params,
            0.2,
        );
        assert_eq!(out.branches[0], SlideBranch::Blended);
        assert_relative_eq!(
            out.targets[0],
            Vector3::new(0.01, 0.0, 0.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn branch_boundaries_at_nano_newton() {
        let params = SlideParams::default();
        let threshold = params.alpha * 0.2 * params.gravity_norm;
        assert_relative_eq!(threshold, 0.5886, epsilon = 1e-12);
        let cs = status_with_normal(Vector3::z());
        let refined = [Vector3::new(0.02, 0.0, 0.0); TIP_COUNT];
        let prev = [Some(Vector3::zeros()); TIP_COUNT];

        let below = refine_tip_positions(
            &refined,
            &solution_with_pressure(threshold - 1e-9),
            &full_confidence(0.0),
            &prev,
            &RigidPose::identity(),
            &RigidPose::identity(),
            &cs,
            &params,
            0.2,
        );
        assert_eq!(below.branches[0], SlideBranch::Free);

        let above = refine_tip_positions(
            &refined,
            &solution_with_pressure(threshold + 1e-9),
            &full_confidence(0.0),
            &prev,
            &RigidPose::identity(),
            &RigidPose::identity(),
            &cs,
            &params,
            0.2,
        );
        assert_eq!(above.branches[0], SlideBranch::Pinned);
    }

    #[test]
    fn zero_slip_is_continuous() {
        let params = SlideParams::default();
        let cs = status_with_normal(Vector3::z());
        let p = Vector3::new(0.04, 0.01, -0.02);
        let refined = [p; TIP_COUNT];
        let prev = [Some(p); TIP_COUNT];
        let out = refine_tip_positions(
            &refined,
            &solution_with_pressure(2.0),
            &full_confidence(0.0),
            &prev,
            &RigidPose::identity(),
            &RigidPose::identity(),
            &cs,
            &params,
            0.2,
        );
        // No slip: every branch would return the same point.
        assert_eq!(out.targets[0], p);
    }

    #[test]
    fn output_is_convex_combination() {
        use rand::{Rng, SeedableRng};
        let params = SlideParams::default();
        let cs = status_with_normal(Vector3::new(0.0, 1.0, 0.0));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let refined_pt = Vector3::new(
                rng.gen_range(-0.05..0.05),
                rng.gen_range(-0.05..0.05),
                rng.gen_range(-0.05..0.05),
            );
            let prev_pt = Vector3::new(
                rng.gen_range(-0.05..0.05),
                rng.gen_range(-0.05..0.05),
                rng.gen_range(-0.05..0.05),
            );
            let pressure = rng.gen_range(0.0..3.0);
            let conf = rng.gen_range(0.0..1.0);
            let out = refine_tip_positions(
                &[refined_pt; TIP_COUNT],
                &solution_with_pressure(pressure),
                &full_confidence(conf),
                &[Some(prev_pt); TIP_COUNT],
                &RigidPose::identity(),
                &RigidPose::identity(),
                &cs,
                &params,
                0.2,
            );
            let pinned = no_slide_position(
                &refined_pt,
                &prev_pt,
                &RigidPose::identity(),
                &RigidPose::identity(),
                &Vector3::new(0.0, 1.0, 0.0),
            );
            // Target lies on the segment [pinned, refined].
            let seg = refined_pt - pinned;
            let t = if seg.norm() > 1e-12 {
                (out.targets[0] - pinned).dot(&seg) / seg.norm_squared()
            } else {
                1.0
            };
            assert!((-1e-9..=1.0 + 1e-9).contains(&t), "t = {t}");
            let off_segment = (out.targets[0] - (pinned + t.clamp(0.0, 1.0) * seg)).norm();
            assert!(off_segment < 1e-9);
        }
    }

    #[test]
    fn branch_selection_is_rigid_invariant() {
        let params = SlideParams::default();
        let n = Vector3::new(0.0, 0.0, 1.0);
        let cs = status_with_normal(n);
        let refined_pt = Vector3::new(0.02, 0.01, 0.0);
        let prev_pt = Vector3::new(0.001, -0.002, 0.0);
        let pose_t = RigidPose::new(
            UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 0.05),
            Vector3::new(0.002, 0.0, 0.001),
        );
        let pose_tm1 = RigidPose::identity();

        let base = refine_tip_positions(
            &[refined_pt; TIP_COUNT],
            &solution_with_pressure(1.0),
            &full_confidence(0.4),
            &[Some(prev_pt); TIP_COUNT],
            &pose_t,
            &pose_tm1,
            &cs,
            &params,
            0.2,
        );

        let q = RigidPose::new(
            UnitQuaternion::from_axis_angle(
                &nalgebra::Unit::new_normalize(Vector3::new(1.0, 1.0, 0.2)),
                0.8,
            ),
            Vector3::new(0.1, -0.05, 0.03),
        );
        let cs_moved = status_with_normal(q.transform_direction(&n));
        let moved = refine_tip_positions(
            &[q.transform_point(&refined_pt); TIP_COUNT],
            &solution_with_pressure(1.0),
            &full_confidence(0.4),
            &[Some(q.transform_point(&prev_pt)); TIP_COUNT],
            &q.compose(&pose_t),
            &q.compose(&pose_tm1),
            &cs_moved,
            &params,
            0.2,
        );
        assert_eq!(base.branches[0], moved.branches[0]);
        assert_relative_eq!(
            q.transform_point(&base.targets[0]),
            moved.targets[0],
            epsilon = 1e-9
        );
    }
}
