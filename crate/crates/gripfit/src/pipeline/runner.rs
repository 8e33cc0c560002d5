//! Per-frame orchestration of the refinement stages.
//!
//! Frame flow: contact extraction → finite-difference dynamics → contact
//! force optimization → confidence extraction → slide prevention → inverse
//! kinematics → forward kinematics. The first two frames of a sequence pass
//! kinematics through (three trailing poses are needed for the dynamics).

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::Vector3;

use crate::contact_detection::{extract_contact_status, ContactStatus, TipState, TIP_COUNT};
use crate::error::{Error, Result};
use crate::force_solver::{solve_contact_forces, ForceSolution};
use crate::hand_ik::{forward_kinematics, solve_ik, HandPose, HandSkeleton};
use crate::object_model::{RigidPose, SdfObject};
use crate::pipeline::config::RunConfig;
use crate::pipeline::sequence::{read_point_cloud, FrameRecord, RefinedRecord};
use crate::slide_prevention::{
    confidences_from_counts, count_nearby_points, refine_tip_positions, SlideBranch,
};

/// Wall-clock cost of one refined frame, milliseconds.
#[derive(Debug, Clone, Copy, Default)]
pub struct FrameTimings {
    /// Contact extraction + dynamics + force solve.
    pub stage2_ms: f64,
    /// Slide prevention + final IK + FK.
    pub stage3_ms: f64,
}

impl FrameTimings {
    pub fn total_ms(&self) -> f64 {
        self.stage2_ms + self.stage3_ms
    }
}

/// One processed frame: the serializable record plus its (non-deterministic)
/// timing measurement, kept out of the record so outputs stay byte-stable.
#[derive(Debug, Clone)]
pub struct RefinedFrame {
    pub record: RefinedRecord,
    pub timings: FrameTimings,
}

/// Streaming refinement state for one sequence.
pub struct Pipeline {
    object: SdfObject,
    skeleton: HandSkeleton,
    cfg: RunConfig,
    /// Trailing (timestamp, pose) pairs, most recent last; holds at most 3.
    history: Vec<(f64, RigidPose)>,
    /// Previous frame's final tip-surface contact points (physics frames only).
    prev_surface: [Option<Vector3<f64>>; TIP_COUNT],
    prev_theta: Option<HandPose>,
    warm_start: Option<ForceSolution>,
    /// Directory for resolving relative point-cloud paths.
    base_dir: Option<PathBuf>,
}

impl Pipeline {
    pub fn new(object: SdfObject, skeleton: HandSkeleton, cfg: RunConfig) -> Self {
        Self {
            object,
            skeleton,
            cfg,
            history: Vec::new(),
            prev_surface: [None; TIP_COUNT],
            prev_theta: None,
            warm_start: None,
            base_dir: None,
        }
    }

    pub fn with_base_dir(mut self, dir: &Path) -> Self {
        self.base_dir = Some(dir.to_path_buf());
        self
    }

    pub fn object(&self) -> &SdfObject {
        &self.object
    }

    pub fn skeleton(&self) -> &HandSkeleton {
        &self.skeleton
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    fn tip_confidences(&self, rec: &FrameRecord) -> [crate::slide_prevention::TipConfidence; TIP_COUNT] {
        let saturation = self.cfg.slide.saturation_count;
        if let Some(counts) = rec.observed_counts {
            return confidences_from_counts(&counts, saturation);
        }
        if let Some(rel) = &rec.point_cloud_path {
            let path = match &self.base_dir {
                Some(dir) => dir.join(rel),
                None => PathBuf::from(rel),
            };
            match read_point_cloud(&path) {
                Ok(cloud) => {
                    let mut counts = [0u32; TIP_COUNT];
                    for (i, tip) in rec.tips_kinematic.iter().enumerate() {
                        counts[i] =
                            count_nearby_points(&cloud, tip, self.cfg.slide.near_threshold);
                    }
                    return confidences_from_counts(&counts, saturation);
                }
                Err(e) => {
                    log::warn!(
                        "frame {}: point cloud {} unreadable ({e}); assuming full visibility",
                        rec.frame_index,
                        path.display()
                    );
                }
            }
        }
        confidences_from_counts(&[saturation; TIP_COUNT], saturation)
    }

    /// Process one frame, updating the temporal state.
    pub fn process_frame(&mut self, rec: &FrameRecord) -> Result<RefinedFrame> {
        let stage2_start = Instant::now();
        self.history.push((rec.timestamp, rec.object_pose));
        if self.history.len() > 3 {
            self.history.remove(0);
        }

        let mut cs = extract_contact_status(
            &rec.tips_kinematic,
            &rec.object_pose,
            &self.object.grid,
            self.cfg.tip_samples,
        );
        let confidences = self.tip_confidences(rec);

        let physics_ready = self.history.len() == 3;
        let mut passthrough = !physics_ready;
        let mut solution = ForceSolution::zero(&cs);
        if physics_ready {
            let (ts_tm2, pose_tm2) = self.history[0];
            let (ts_tm1, pose_tm1) = self.history[1];
            let (ts_t, pose_t) = self.history[2];
            let mut dt = ts_t - ts_tm1;
            if !(dt > 0.0) {
                dt = self.cfg.default_dt;
            }
            let _ = ts_tm2;
            match crate::rigid_dynamics::finite_difference_dynamics(
                &pose_tm2,
                &pose_tm1,
                &pose_t,
                dt,
                &self.object.properties,
            )
            .and_then(|dynamics| {
                solve_contact_forces(
                    &mut cs,
                    &dynamics,
                    &self.object.properties,
                    &self.cfg.solver,
                    self.warm_start.as_ref(),
                )
            }) {
                Ok(sol) => solution = sol,
                Err(e) => {
                    log::warn!(
                        "frame {}: force solve failed ({e}); passing kinematics through",
                        rec.frame_index
                    );
                    passthrough = true;
                    solution = ForceSolution::zero(&cs);
                }
            }
        }
        let stage2_ms = stage2_start.elapsed().as_secs_f64() * 1e3;

        // Kinematic hand pose: fit the tracked tip centers, warm-started from
        // the previous final pose. This stands in for the upstream tracker's
        // pose estimate and is not counted against the refinement budget.
        let kinematic_centers: [Vector3<f64>; TIP_COUNT] =
            std::array::from_fn(|i| rec.tips_kinematic[i].center);
        let ik_weights = [self.cfg.ik_tip_weight; TIP_COUNT];
        let theta_prev = self.prev_theta.unwrap_or_default();
        let theta_kin = solve_ik(
            &self.skeleton,
            &theta_prev,
            &kinematic_centers,
            &ik_weights,
            &self.cfg.ik_options(),
        )?
        .pose;

        let stage3_start = Instant::now();
        // Refined tip-surface positions for valid tips; kinematic centers
        // stand in for invalid ones (and pass straight through the slide rule).
        let tip_refined: [Vector3<f64>; TIP_COUNT] = std::array::from_fn(|i| {
            let tip = &cs.tips[i];
            if tip.valid && !passthrough {
                tip.point + tip.refined_distance * tip.normal
            } else {
                kinematic_centers[i]
            }
        });

        let (tip_slide, branches) = if passthrough {
            (kinematic_centers, [SlideBranch::PassThrough; TIP_COUNT])
        } else {
            let (_, pose_tm1) = self.history[self.history.len() - 2];
            let out = refine_tip_positions(
                &tip_refined,
                &solution,
                &confidences,
                &self.prev_surface,
                &rec.object_pose,
                &pose_tm1,
                &cs,
                &self.cfg.slide,
                self.cfg.solver.mass,
            );
            (out.targets, out.branches)
        };

        // IK targets are tip centers: surface points move out one tip radius
        // along the contact normal.
        let ik_targets: [Vector3<f64>; TIP_COUNT] = std::array::from_fn(|i| {
            if cs.tips[i].valid && !passthrough {
                tip_slide[i] + rec.tips_kinematic[i].radius * cs.tips[i].normal
            } else {
                kinematic_centers[i]
            }
        });

        let theta = if passthrough {
            theta_kin
        } else {
            solve_ik(
                &self.skeleton,
                &theta_kin,
                &ik_targets,
                &ik_weights,
                &self.cfg.ik_options(),
            )?
            .pose
        };
        let tip_final = forward_kinematics(&self.skeleton, &theta);
        let stage3_ms = stage3_start.elapsed().as_secs_f64() * 1e3;

        // State updates for the next frame.
        if !passthrough {
            for i in 0..TIP_COUNT {
                self.prev_surface[i] = if cs.tips[i].valid {
                    Some(tip_final[i] - rec.tips_kinematic[i].radius * cs.tips[i].normal)
                } else {
                    None
                };
            }
            self.warm_start = Some(solution.clone());
        } else {
            self.prev_surface = [None; TIP_COUNT];
            self.warm_start = None;
        }
        self.prev_theta = Some(theta);

        let record = RefinedRecord {
            frame_index: rec.frame_index,
            timestamp: rec.timestamp,
            object_pose: rec.object_pose,
            tips_kinematic: rec.tips_kinematic,
            observed_counts: rec.observed_counts,
            ground_truth: rec.ground_truth.clone(),
            passthrough,
            valid: std::array::from_fn(|i| cs.tips[i].valid),
            contact_point: std::array::from_fn(|i| cs.tips[i].point.into()),
            contact_normal: std::array::from_fn(|i| cs.tips[i].normal.into()),
            distance: std::array::from_fn(|i| cs.tips[i].distance),
            refined_distance: std::array::from_fn(|i| cs.tips[i].refined_distance),
            coefficients: std::array::from_fn(|i| solution.tips[i].coefficients),
            force: std::array::from_fn(|i| solution.tips[i].force.into()),
            pressure: std::array::from_fn(|i| solution.tips[i].pressure),
            confidence: std::array::from_fn(|i| confidences[i].value),
            branch: branches,
            tip_refined: std::array::from_fn(|i| tip_refined[i].into()),
            tip_slide: std::array::from_fn(|i| tip_slide[i].into()),
            theta: theta.theta,
            tip_final: std::array::from_fn(|i| tip_final[i].into()),
            solver_iterations: solution.iterations,
            solver_converged: solution.converged,
            energies: solution.energies,
        };

        Ok(RefinedFrame {
            record,
            timings: FrameTimings {
                stage2_ms,
                stage3_ms,
            },
        })
    }
}

/// Fraction of frames in which fewer than two tips are within
/// `contact_epsilon` of the object (refined distances).
pub fn compute_plausibility(records: &[RefinedRecord], contact_epsilon: f64) -> f64 {
    assert!(contact_epsilon > 0.0);
    if records.is_empty() {
        return 0.0;
    }
    let implausible = records
        .iter()
        .filter(|r| contact_count(r, contact_epsilon, true) < 2)
        .count();
    implausible as f64 / records.len() as f64
}

/// Contacts in one record, using refined or extracted distances.
pub fn contact_count(record: &RefinedRecord, epsilon: f64, refined: bool) -> usize {
    (0..TIP_COUNT)
        .filter(|&i| {
            record.valid[i]
                && if refined {
                    record.refined_distance[i] < epsilon
                } else {
                    record.distance[i] < epsilon
                }
        })
        .count()
}

/// Convenience: process an entire in-memory sequence.
pub fn refine_records(
    pipeline: &mut Pipeline,
    records: &[FrameRecord],
) -> Result<Vec<RefinedFrame>> {
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        out.push(pipeline.process_frame(rec)?);
    }
    Ok(out)
}

/// Quick contact status extraction used by callers that only need geometry.
pub fn extract_only(
    object: &SdfObject,
    tips: &[TipState; TIP_COUNT],
    pose: &RigidPose,
    samples: usize,
) -> ContactStatus {
    extract_contact_status(tips, pose, &object.grid, samples)
}

impl Error {
    /// True when the error indicates unusable input data (CLI exit code 2).
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::Io { .. } | Error::OpenSurface(_) | Error::EmptySurface
        )
    }
}
