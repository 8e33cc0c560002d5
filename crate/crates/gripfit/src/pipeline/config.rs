//! Run configuration: every tunable of the refinement pipeline in one
//! key-value text file.

use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::force_solver::SolverConfig;
use crate::slide_prevention::SlideParams;

/// Full pipeline configuration.
#[derive(Debug, Clone, Copy)]
pub struct RunConfig {
    pub solver: SolverConfig,
    pub slide: SlideParams,
    /// Sphere samples per fingertip during contact extraction.
    pub tip_samples: usize,
    /// Frame spacing used when timestamps are absent or degenerate, seconds.
    pub default_dt: f64,
    /// Contact distance below which a tip counts as touching, meters.
    pub contact_epsilon: f64,
    /// IK tip weight (per squared meter of tip error).
    pub ik_tip_weight: f64,
    /// IK pose regularization toward the initial pose.
    pub ik_lambda_pose: f64,
    pub ik_max_iterations: usize,
    /// Grid defaults used when baking meshes.
    pub bake_voxel_size: f64,
    pub bake_truncation: f64,
    pub bake_padding: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            slide: SlideParams::default(),
            tip_samples: crate::contact_detection::DEFAULT_TIP_SAMPLES,
            default_dt: 1.0 / 30.0,
            contact_epsilon: 0.002,
            ik_tip_weight: 1e4,
            ik_lambda_pose: 1e-2,
            ik_max_iterations: 150,
            bake_voxel_size: crate::object_model::DEFAULT_VOXEL_SIZE,
            bake_truncation: crate::object_model::DEFAULT_TRUNCATION,
            bake_padding: crate::object_model::DEFAULT_PADDING,
        }
    }
}

impl RunConfig {
    pub fn ik_options(&self) -> crate::hand_ik::IkOptions {
        crate::hand_ik::IkOptions {
            lambda_pose: self.ik_lambda_pose,
            max_iterations: self.ik_max_iterations,
            ..Default::default()
        }
    }
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_config(&text, &path.display().to_string())
}

/// Parse key-value text into a [`RunConfig`]. Unknown keys produce a warning,
/// not an error.
pub fn parse_config(text: &str, path: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::parse(path, lineno, "expected `key = value`"));
        };
        let key = key.trim();
        let value = value.trim();
        let float = || -> Result<f64> {
            value
                .parse::<f64>()
                .map_err(|e| Error::parse(path, lineno, format!("bad number `{value}`: {e}")))
        };
        let positive = || -> Result<f64> {
            let v = float()?;
            if v <= 0.0 {
                return Err(Error::parse(path, lineno, format!("`{key}` must be > 0")));
            }
            Ok(v)
        };
        let integer = || -> Result<usize> {
            value
                .parse::<usize>()
                .map_err(|e| Error::parse(path, lineno, format!("bad integer `{value}`: {e}")))
        };
        match key {
            "lambda_force" => cfg.solver.lambda_force = positive()?,
            "lambda_moment" => cfg.solver.lambda_moment = positive()?,
            "lambda_reg" => cfg.solver.lambda_reg = positive()?,
            "lambda_contact" => cfg.solver.lambda_contact = positive()?,
            "lambda_smooth" => cfg.solver.lambda_smooth = positive()?,
            "force_scale" => {
                cfg.solver.force_scale = if value == "auto" {
                    None
                } else {
                    Some(positive()?)
                }
            }
            "length_scale" => cfg.solver.length_scale = positive()?,
            "solver_max_iterations" => cfg.solver.max_iterations = integer()?.max(1),
            "solver_gradient_tolerance" => cfg.solver.gradient_tolerance = positive()?,
            "solver_damping_init" => cfg.solver.damping_init = positive()?,
            "solver_damping_increase" => cfg.solver.damping_increase = positive()?,
            "solver_damping_decrease" => cfg.solver.damping_decrease = positive()?,
            "mass" => cfg.solver.mass = positive()?,
            "mu" => cfg.solver.mu = positive()?,
            "gravity" => {
                let parts: Vec<f64> = value
                    .split_whitespace()
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::parse(path, lineno, format!("bad gravity: {e}")))?;
                if parts.len() != 3 {
                    return Err(Error::parse(path, lineno, "gravity needs 3 numbers"));
                }
                cfg.solver.gravity = Vector3::new(parts[0], parts[1], parts[2]);
                cfg.slide.gravity_norm = cfg.solver.gravity.norm();
            }
            "alpha" => cfg.slide.alpha = positive()?,
            "beta" => cfg.slide.beta = positive()?,
            "gamma" => {
                let v = float()?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::parse(path, lineno, "gamma must be in [0, 1]"));
                }
                cfg.slide.gamma = v;
            }
            "saturation_count" => cfg.slide.saturation_count = integer()?.max(1) as u32,
            "near_threshold" => cfg.slide.near_threshold = positive()?,
            "tip_samples" => cfg.tip_samples = integer()?.max(1),
            "default_dt" => cfg.default_dt = positive()?,
            "contact_epsilon" => cfg.contact_epsilon = positive()?,
            "ik_tip_weight" => cfg.ik_tip_weight = positive()?,
            "ik_lambda_pose" => cfg.ik_lambda_pose = positive()?,
            "ik_max_iterations" => cfg.ik_max_iterations = integer()?.max(1),
            "bake_voxel_size" => cfg.bake_voxel_size = positive()?,
            "bake_truncation" => cfg.bake_truncation = positive()?,
            "bake_padding" => cfg.bake_padding = float()?,
            other => log::warn!("{path}:{lineno}: unknown config key `{other}` ignored"),
        }
    }
    Ok(cfg)
}

/// Write the configuration in the key-value format read by [`read_config`].
pub fn write_config(cfg: &RunConfig, path: &Path) -> Result<()> {
    use std::fmt::Write as _;
    let mut out = String::new();
    out.push_str("# gripfit run configuration\n\n# contact energy weights\n");
    let s = &cfg.solver;
    let _ = writeln!(out, "lambda_force = {}", s.lambda_force);
    let _ = writeln!(out, "lambda_moment = {}", s.lambda_moment);
    let _ = writeln!(out, "lambda_reg = {}", s.lambda_reg);
    let _ = writeln!(out, "lambda_contact = {}", s.lambda_contact);
    let _ = writeln!(out, "lambda_smooth = {}", s.lambda_smooth);
    match s.force_scale {
        Some(v) => {
            let _ = writeln!(out, "force_scale = {v}");
        }
        None => {
            let _ = writeln!(out, "force_scale = auto");
        }
    }
    let _ = writeln!(out, "length_scale = {}", s.length_scale);
    let _ = writeln!(out, "solver_max_iterations = {}", s.max_iterations);
    let _ = writeln!(out, "solver_gradient_tolerance = {}", s.gradient_tolerance);
    let _ = writeln!(out, "solver_damping_init = {}", s.damping_init);
    let _ = writeln!(out, "solver_damping_increase = {}", s.damping_increase);
    let _ = writeln!(out, "solver_damping_decrease = {}", s.damping_decrease);
    out.push_str("\n# object physics\n");
    let _ = writeln!(out, "mass = {}", s.mass);
    let _ = writeln!(out, "mu = {}", s.mu);
    let _ = writeln!(out, "gravity = {} {} {}", s.gravity.x, s.gravity.y, s.gravity.z);
    out.push_str("\n# slide prevention\n");
    let _ = writeln!(out, "alpha = {}", cfg.slide.alpha);
    let _ = writeln!(out, "beta = {}", cfg.slide.beta);
    let _ = writeln!(out, "gamma = {}", cfg.slide.gamma);
    let _ = writeln!(out, "saturation_count = {}", cfg.slide.saturation_count);
    let _ = writeln!(out, "near_threshold = {}", cfg.slide.near_threshold);
    out.push_str("\n# contact extraction and pipeline\n");
    let _ = writeln!(out, "tip_samples = {}", cfg.tip_samples);
    let _ = writeln!(out, "default_dt = {}", cfg.default_dt);
    let _ = writeln!(out, "contact_epsilon = {}", cfg.contact_epsilon);
    out.push_str("\n# inverse kinematics\n");
    let _ = writeln!(out, "ik_tip_weight = {}", cfg.ik_tip_weight);
    let _ = writeln!(out, "ik_lambda_pose = {}", cfg.ik_lambda_pose);
    let _ = writeln!(out, "ik_max_iterations = {}", cfg.ik_max_iterations);
    out.push_str("\n# mesh baking defaults\n");
    let _ = writeln!(out, "bake_voxel_size = {}", cfg.bake_voxel_size);
    let _ = writeln!(out, "bake_truncation = {}", cfg.bake_truncation);
    let _ = writeln!(out, "bake_padding = {}", cfg.bake_padding);
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}
