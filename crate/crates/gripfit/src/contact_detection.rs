//! Initial contact status extraction.
//!
//! Each fingertip is a sphere; we sample points on it, look the samples up in
//! the object SDF (canonical frame), keep the closest one, and project it
//! onto the surface to obtain the contact candidate point, normal, and
//! tip-to-surface distance.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::object_model::{RigidPose, SdfGrid};

/// Number of tracked fingertips (thumb through little finger).
pub const TIP_COUNT: usize = 5;

/// Default number of sphere samples per fingertip.
pub const DEFAULT_TIP_SAMPLES: usize = 32;

/// Default iteration count for the surface projection.
pub const DEFAULT_PROJECTION_ITERATIONS: usize = 3;

/// One fingertip as tracked by the upstream kinematic system.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TipState {
    /// 0 = thumb … 4 = little finger.
    pub index: usize,
    /// Sphere center in the live/camera frame, meters.
    #[serde(with = "crate::object_model::vec3_array")]
    pub center: Vector3<f64>,
    /// Sphere radius, meters.
    pub radius: f64,
}

/// Contact candidate for a single tip, all quantities in the live frame.
#[derive(Debug, Clone, Copy)]
pub struct TipContact {
    /// Projection point on the object surface.
    pub point: Vector3<f64>,
    /// Outward unit surface normal at `point`.
    pub normal: Vector3<f64>,
    /// Distance from the selected tip sample to the surface, `>= 0`
    /// (penetrating samples report 0).
    pub distance: f64,
    /// Refined distance written back by the force solver; starts at `distance`.
    pub refined_distance: f64,
    /// False when the tip is too far from the object (or outside the grid)
    /// to produce a usable candidate.
    pub valid: bool,
}

impl TipContact {
    fn invalid(distance: f64) -> Self {
        Self {
            point: Vector3::zeros(),
            normal: Vector3::z(),
            distance,
            refined_distance: distance,
            valid: false,
        }
    }
}

/// Contact status of all five fingertips for one frame.
#[derive(Debug, Clone, Copy)]
pub struct ContactStatus {
    pub tips: [TipContact; TIP_COUNT],
}

impl ContactStatus {
    /// Number of tips whose (refined) distance is below `epsilon`.
    pub fn contact_count(&self, epsilon: f64, refined: bool) -> usize {
        self.tips
            .iter()
            .filter(|t| {
                t.valid
                    && if refined {
                        t.refined_distance < epsilon
                    } else {
                        t.distance < epsilon
                    }
            })
            .count()
    }
}

/// Deterministic, nearly uniform sample points on the tip sphere.
///
/// Fibonacci spiral anchored at the +z pole: `count == 1` returns exactly the
/// pole point.
pub fn sample_tip_points(tip: &TipState, count: usize) -> Vec<Vector3<f64>> {
    assert!(count >= 1, "need at least one sample");
    if count == 1 {
        return vec![tip.center + tip.radius * Vector3::z()];
    }
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|k| {
            let z = 1.0 - 2.0 * k as f64 / (count - 1) as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * k as f64;
            tip.center + tip.radius * Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// Project a canonical-space point onto the zero isosurface along the SDF
/// gradient, with a fixed iteration count.
///
/// Returns the surface point, the outward unit normal there, and the
/// non-negative distance reported for the query (penetration clamps to 0).
pub fn project_to_surface(
    x: &Vector3<f64>,
    grid: &SdfGrid,
    iterations: usize,
) -> Result<(Vector3<f64>, Vector3<f64>, f64)> {
    let first = grid.sample(x);
    let mut p = *x;
    for _ in 0..iterations {
        let s = grid.sample(&p);
        let g_norm = s.gradient.norm();
        if g_norm < 1e-6 {
            return Err(Error::DegenerateGradient);
        }
        p -= s.distance * s.gradient / g_norm;
    }
    let at_surface = grid.sample(&p);
    let g_norm = at_surface.gradient.norm();
    if g_norm < 1e-6 {
        return Err(Error::DegenerateGradient);
    }
    let normal = at_surface.gradient / g_norm;
    Ok((p, normal, first.distance.max(0.0)))
}

/// Extract the contact status of all five tips against the posed object.
///
/// Samples each tip sphere, maps samples into the canonical frame, selects
/// the minimum-distance sample (ties break toward the lowest sample index),
/// projects it to the surface, and maps the result back to the live frame.
/// Tips with no usable in-grid sample, or whose closest sample is a full
/// truncation away, are marked invalid.
pub fn extract_contact_status(
    tips: &[TipState; TIP_COUNT],
    object_pose: &RigidPose,
    grid: &SdfGrid,
    sample_count: usize,
) -> ContactStatus {
    let inverse_pose = object_pose.inverse();
    let truncation = grid.truncation();

    let mut out = [TipContact::invalid(truncation); TIP_COUNT];
    for (slot, tip) in tips.iter().enumerate() {
        // Sample in the canonical frame (tip center mapped through the
        // inverse pose, pattern axes = object axes): the candidate choice is
        // then a function of the canonical geometry alone, which makes the
        // extraction exactly equivariant under rigid motions of the scene.
        let canonical_tip = TipState {
            index: tip.index,
            center: inverse_pose.transform_point(&tip.center),
            radius: tip.radius,
        };
        let samples = sample_tip_points(&canonical_tip, sample_count);
        let mut best: Option<(f64, Vector3<f64>)> = None;
        for s_canon in &samples {
            let sample = grid.sample(s_canon);
            if sample.clamped {
                continue;
            }
            let better = match best {
                None => true,
                Some((d, _)) => sample.distance < d,
            };
            if better {
                best = Some((sample.distance, *s_canon));
            }
        }

        let Some((min_d, canon_point)) = best else {
            out[slot] = TipContact::invalid(truncation);
            continue;
        };
        if min_d >= truncation * (1.0 - 1e-9) {
            out[slot] = TipContact::invalid(truncation);
            continue;
        }
        match project_to_surface(&canon_point, grid, DEFAULT_PROJECTION_ITERATIONS) {
            Ok((p_canon, n_canon, d)) => {
                out[slot] = TipContact {
                    point: object_pose.transform_point(&p_canon),
                    normal: object_pose.transform_direction(&n_canon),
                    distance: d,
                    refined_distance: d,
                    valid: true,
                };
            }
            Err(_) => {
                out[slot] = TipContact::invalid(truncation);
            }
        }
    }
    ContactStatus { tips: out }
}
