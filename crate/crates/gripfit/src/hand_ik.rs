//! Simplified articulated hand: forward kinematics and damped least-squares
//! inverse kinematics on fingertip targets.
//!
//! The pose vector has 28 entries: 6 wrist DOF (translation + xyz Euler
//! rotation), then 4 DOF per finger (MCP abduction, MCP flexion, PIP, DIP),
//! thumb through little finger. The two spare entries stay zero. Fingers
//! extend along the wrist +x axis at rest and flex about the local y axis.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Rotation3, Vector3};

use crate::contact_detection::TIP_COUNT;
use crate::error::{Error, Result};
use crate::lm::{self, LmOptions};

/// Total pose vector length (two entries are unused and pinned to zero).
pub const POSE_DOF: usize = 28;
/// Number of actuated DOF: 6 wrist + 4 per finger.
pub const ACTIVE_DOF: usize = 6 + 4 * TIP_COUNT;

/// Geometry of one finger chain.
#[derive(Debug, Clone, Copy)]
pub struct FingerSpec {
    /// MCP joint position in the wrist frame, meters.
    pub base_offset: Vector3<f64>,
    /// Proximal, middle, distal bone lengths, meters.
    pub bone_lengths: [f64; 3],
    /// Fingertip sphere radius, meters.
    pub tip_radius: f64,
}

/// Joint angle limits shared by all fingers, radians.
#[derive(Debug, Clone, Copy)]
pub struct JointLimits {
    pub mcp_abduction: (f64, f64),
    pub mcp_flexion: (f64, f64),
    pub pip_flexion: (f64, f64),
    pub dip_flexion: (f64, f64),
}

#[derive(Debug, Clone, Copy)]
pub struct HandSkeleton {
    pub fingers: [FingerSpec; TIP_COUNT],
    pub limits: JointLimits,
}

impl Default for HandSkeleton {
    fn default() -> Self {
        // Index-finger template 45/28/18 mm, scaled per finger.
        let template = [0.045, 0.028, 0.018];
        let scales = [0.85, 1.0, 1.08, 1.0, 0.80];
        let offsets = [
            Vector3::new(0.025, 0.045, -0.008), // thumb
            Vector3::new(0.080, 0.022, 0.0),    // index
            Vector3::new(0.082, 0.000, 0.0),    // middle
            Vector3::new(0.078, -0.022, 0.0),   // ring
            Vector3::new(0.072, -0.042, 0.0),   // little
        ];
        let mut fingers = [FingerSpec {
            base_offset: Vector3::zeros(),
            bone_lengths: template,
            tip_radius: 0.008,
        }; TIP_COUNT];
        for f in 0..TIP_COUNT {
            fingers[f] = FingerSpec {
                base_offset: offsets[f],
                bone_lengths: [
                    template[0] * scales[f],
                    template[1] * scales[f],
                    template[2] * scales[f],
                ],
                tip_radius: 0.008,
            };
        }
        Self {
            fingers,
            limits: JointLimits {
                mcp_abduction: (-25f64.to_radians(), 25f64.to_radians()),
                mcp_flexion: (-15f64.to_radians(), 100f64.to_radians()),
                pip_flexion: (0.0, 110f64.to_radians()),
                dip_flexion: (0.0, 80f64.to_radians()),
            },
        }
    }
}

impl HandSkeleton {
    /// Maximum reach of a finger from its base, meters.
    pub fn finger_reach(&self, finger: usize) -> f64 {
        self.fingers[finger].bone_lengths.iter().sum()
    }

    /// Lower/upper bounds for the 26 active DOF (wrist unbounded).
    fn active_bounds(&self) -> (DVector<f64>, DVector<f64>) {
        let mut lo = DVector::from_element(ACTIVE_DOF, f64::NEG_INFINITY);
        let mut hi = DVector::from_element(ACTIVE_DOF, f64::INFINITY);
        for f in 0..TIP_COUNT {
            let base = 6 + 4 * f;
            let l = &self.limits;
            lo[base] = l.mcp_abduction.0;
            hi[base] = l.mcp_abduction.1;
            lo[base + 1] = l.mcp_flexion.0;
            hi[base + 1] = l.mcp_flexion.1;
            lo[base + 2] = l.pip_flexion.0;
            hi[base + 2] = l.pip_flexion.1;
            lo[base + 3] = l.dip_flexion.0;
            hi[base + 3] = l.dip_flexion.1;
        }
        (lo, hi)
    }
}

/// Full hand pose; entries 26 and 27 are unused and stay zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandPose {
    pub theta: [f64; POSE_DOF],
}

impl Default for HandPose {
    fn default() -> Self {
        Self {
            theta: [0.0; POSE_DOF],
        }
    }
}

impl HandPose {
    pub fn wrist_translation(&self) -> Vector3<f64> {
        Vector3::new(self.theta[0], self.theta[1], self.theta[2])
    }

    pub fn wrist_rotation(&self) -> Rotation3<f64> {
        Rotation3::from_euler_angles(self.theta[3], self.theta[4], self.theta[5])
    }

    /// Clamp finger joints into the skeleton limits; returns true when any
    /// entry moved.
    pub fn clamp_to_limits(&mut self, skeleton: &HandSkeleton) -> bool {
        let (lo, hi) = skeleton.active_bounds();
        let mut changed = false;
        for a in 6..ACTIVE_DOF {
            let clamped = self.theta[a].clamp(lo[a], hi[a]);
            if clamped != self.theta[a] {
                self.theta[a] = clamped;
                changed = true;
            }
        }
        changed
    }

    fn from_active(active: &DVector<f64>) -> Self {
        let mut theta = [0.0; POSE_DOF];
        theta[..ACTIVE_DOF].copy_from_slice(active.as_slice());
        Self { theta }
    }

    fn active(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.theta[..ACTIVE_DOF])
    }
}

/// Fingertip centers for a pose: serial chain wrist → MCP → PIP → DIP → tip.
pub fn forward_kinematics(skeleton: &HandSkeleton, pose: &HandPose) -> [Vector3<f64>; TIP_COUNT] {
    let wrist_r = pose.wrist_rotation();
    let wrist_t = pose.wrist_translation();

    let mut tips = [Vector3::zeros(); TIP_COUNT];
    for f in 0..TIP_COUNT {
        let spec = &skeleton.fingers[f];
        let base = 6 + 4 * f;
        let abduction = pose.theta[base];
        let mcp = pose.theta[base + 1];
        let pip = pose.theta[base + 2];
        let dip = pose.theta[base + 3];

        let q_mcp = Rotation3::from_axis_angle(&Vector3::z_axis(), abduction)
            * Rotation3::from_axis_angle(&Vector3::y_axis(), mcp);
        let q_pip = q_mcp * Rotation3::from_axis_angle(&Vector3::y_axis(), pip);
        let q_dip = q_pip * Rotation3::from_axis_angle(&Vector3::y_axis(), dip);

        let local = spec.base_offset
            + q_mcp * (spec.bone_lengths[0] * Vector3::x())
            + q_pip * (spec.bone_lengths[1] * Vector3::x())
            + q_dip * (spec.bone_lengths[2] * Vector3::x());
        tips[f] = wrist_r * local + wrist_t;
    }
    tips
}

/// Options for the IK solve.
#[derive(Debug, Clone, Copy)]
pub struct IkOptions {
    /// Pose regularization weight pulling toward the initial pose.
    pub lambda_pose: f64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    /// Residual threshold below which a tip counts as reached, meters.
    pub reach_tolerance: f64,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self {
            lambda_pose: 1e-2,
            max_iterations: 150,
            gradient_tolerance: 1e-10,
            reach_tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IkResult {
    pub pose: HandPose,
    /// Final distance of each tip to its target, meters.
    pub tip_residuals: [f64; TIP_COUNT],
    /// Per-tip: residual below the reach tolerance.
    pub reached: [bool; TIP_COUNT],
    pub iterations: usize,
    pub converged: bool,
}

/// Damped least-squares IK with joint limits and pose regularization.
///
/// Minimizes `Σ w_i ‖FK_i(θ) − target_i‖² + λ_pose ‖θ − θ_init‖²` over the
/// active DOF; limits are enforced by projection, so the output pose is
/// always feasible. Unreachable targets yield the best-effort pose with the
/// corresponding `reached` flags cleared.
pub fn solve_ik(
    skeleton: &HandSkeleton,
    theta_init: &HandPose,
    targets: &[Vector3<f64>; TIP_COUNT],
    target_weights: &[f64; TIP_COUNT],
    opts: &IkOptions,
) -> Result<IkResult> {
    let mut init = *theta_init;
    init.clamp_to_limits(skeleton);
    let init_active = init.active();

    let sqrt_w: Vec<f64> = target_weights.iter().map(|w| w.max(0.0).sqrt()).collect();
    let sqrt_pose = opts.lambda_pose.max(0.0).sqrt();
    let row_count = 3 * TIP_COUNT + ACTIVE_DOF;

    let residual = |x: &DVector<f64>| -> DVector<f64> {
        let pose = HandPose::from_active(x);
        let tips = forward_kinematics(skeleton, &pose);
        let mut r = DVector::zeros(row_count);
        for f in 0..TIP_COUNT {
            let e = tips[f] - targets[f];
            for a in 0..3 {
                r[3 * f + a] = sqrt_w[f] * e[a];
            }
        }
        for a in 0..ACTIVE_DOF {
            r[3 * TIP_COUNT + a] = sqrt_pose * (x[a] - init_active[a]);
        }
        r
    };

    // Central-difference Jacobian over the active DOF; FK is cheap.
    let jacobian = |x: &DVector<f64>| -> DMatrix<f64> {
        let mut j = DMatrix::zeros(row_count, ACTIVE_DOF);
        let h = 1e-6;
        for col in 0..ACTIVE_DOF {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[col] += h;
            xm[col] -= h;
            let tp = forward_kinematics(skeleton, &HandPose::from_active(&xp));
            let tm = forward_kinematics(skeleton, &HandPose::from_active(&xm));
            for f in 0..TIP_COUNT {
                for a in 0..3 {
                    j[(3 * f + a, col)] = sqrt_w[f] * (tp[f][a] - tm[f][a]) / (2.0 * h);
                }
            }
            j[(3 * TIP_COUNT + col, col)] = sqrt_pose;
        }
        j
    };

    let (lo, hi) = skeleton.active_bounds();
    let outcome = lm::minimize(
        &residual,
        &jacobian,
        init_active.clone(),
        &lo,
        &hi,
        &LmOptions {
            max_iterations: opts.max_iterations,
            gradient_tolerance: opts.gradient_tolerance,
            damping_init: 1e-3,
            damping_increase: 10.0,
            damping_decrease: 0.2,
        },
    )?;

    let mut pose = HandPose::from_active(&outcome.x);
    pose.clamp_to_limits(skeleton);
    let tips = forward_kinematics(skeleton, &pose);
    let mut tip_residuals = [0.0; TIP_COUNT];
    let mut reached = [false; TIP_COUNT];
    for f in 0..TIP_COUNT {
        tip_residuals[f] = (tips[f] - targets[f]).norm();
        reached[f] = tip_residuals[f] < opts.reach_tolerance;
    }

    Ok(IkResult {
        pose,
        tip_residuals,
        reached,
        iterations: outcome.iterations,
        converged: outcome.converged,
    })
}

/// Read a skeleton definition from key-value text. Unknown keys warn.
pub fn read_skeleton(path: &Path) -> Result<HandSkeleton> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_skeleton(&text, &path.display().to_string())
}

pub fn parse_skeleton(text: &str, path: &str) -> Result<HandSkeleton> {
    let mut skeleton = HandSkeleton::default();
    let mut entries: HashMap<String, (usize, String)> = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::parse(path, lineno + 1, "expected `key = value`"));
        };
        entries.insert(
            key.trim().to_string(),
            (lineno + 1, value.trim().to_string()),
        );
    }

    let parse_floats = |line: usize, value: &str, n: usize| -> Result<Vec<f64>> {
        let parts: Vec<f64> = value
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(path, line, format!("bad number: {e}")))?;
        if parts.len() != n {
            return Err(Error::parse(path, line, format!("expected {n} numbers")));
        }
        Ok(parts)
    };

    let mut consumed: Vec<String> = Vec::new();
    for f in 0..TIP_COUNT {
        let key = format!("finger_{f}_offset");
        if let Some((line, value)) = entries.get(&key) {
            let v = parse_floats(*line, value, 3)?;
            skeleton.fingers[f].base_offset = Vector3::new(v[0], v[1], v[2]);
            consumed.push(key);
        }
        let key = format!("finger_{f}_lengths");
        if let Some((line, value)) = entries.get(&key) {
            let v = parse_floats(*line, value, 3)?;
            if v.iter().any(|&l| l <= 0.0) {
                return Err(Error::parse(path, *line, "bone lengths must be positive"));
            }
            skeleton.fingers[f].bone_lengths = [v[0], v[1], v[2]];
            consumed.push(key);
        }
        let key = format!("finger_{f}_tip_radius");
        if let Some((line, value)) = entries.get(&key) {
            let v = parse_floats(*line, value, 1)?;
            if v[0] <= 0.0 {
                return Err(Error::parse(path, *line, "tip radius must be positive"));
            }
            skeleton.fingers[f].tip_radius = v[0];
            consumed.push(key);
        }
    }
    let limit = |name: &str, slot: &mut (f64, f64), consumed: &mut Vec<String>| -> Result<()> {
        if let Some((line, value)) = entries.get(name) {
            let v = parse_floats(*line, value, 2)?;
            if v[0] >= v[1] {
                return Err(Error::parse(path, *line, "limit lower must be < upper"));
            }
            *slot = (v[0], v[1]);
            consumed.push(name.to_string());
        }
        Ok(())
    };
    limit(
        "limit_mcp_abduction",
        &mut skeleton.limits.mcp_abduction,
        &mut consumed,
    )?;
    limit(
        "limit_mcp_flexion",
        &mut skeleton.limits.mcp_flexion,
        &mut consumed,
    )?;
    limit(
        "limit_pip_flexion",
        &mut skeleton.limits.pip_flexion,
        &mut consumed,
    )?;
    limit(
        "limit_dip_flexion",
        &mut skeleton.limits.dip_flexion,
        &mut consumed,
    )?;

    for key in entries.keys() {
        if !consumed.contains(key) {
            log::warn!("{path}: unknown skeleton key `{key}` ignored");
        }
    }
    Ok(skeleton)
}

/// Write a skeleton definition in the key-value format read by
/// [`read_skeleton`].
pub fn write_skeleton(skeleton: &HandSkeleton, path: &Path) -> Result<()> {
    use std::fmt::Write as _;
    let mut out = String::new();
    out.push_str("# gripfit hand skeleton (meters, radians)\n");
    for (f, finger) in skeleton.fingers.iter().enumerate() {
        let o = finger.base_offset;
        let _ = writeln!(out, "finger_{f}_offset = {} {} {}", o.x, o.y, o.z);
        let l = finger.bone_lengths;
        let _ = writeln!(out, "finger_{f}_lengths = {} {} {}", l[0], l[1], l[2]);
        let _ = writeln!(out, "finger_{f}_tip_radius = {}", finger.tip_radius);
    }
    let lim = &skeleton.limits;
    let _ = writeln!(
        out,
        "limit_mcp_abduction = {} {}",
        lim.mcp_abduction.0, lim.mcp_abduction.1
    );
    let _ = writeln!(
        out,
        "limit_mcp_flexion = {} {}",
        lim.mcp_flexion.0, lim.mcp_flexion.1
    );
    let _ = writeln!(
        out,
        "limit_pip_flexion = {} {}",
        lim.pip_flexion.0, lim.pip_flexion.1
    );
    let _ = writeln!(
        out,
        "limit_dip_flexion = {} {}",
        lim.dip_flexion.0, lim.dip_flexion.1
    );
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}
