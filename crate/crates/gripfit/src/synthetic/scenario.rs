//! Scenario specification: object primitive, grasp, motion, and perturbation.
//!
//! Scenarios are either built in by name or read from a key-value text file.

use std::path::Path;

use nalgebra::Vector3;

use crate::contact_detection::TIP_COUNT;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectSpec {
    Sphere { radius: f64 },
    Box { half_extents: Vector3<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MotionSpec {
    Static,
    ConstantVelocity { velocity: Vector3<f64> },
    SinusoidalRotation {
        axis: Vector3<f64>,
        /// Peak rotation angle, radians.
        amplitude: f64,
        /// Oscillation frequency, Hz.
        frequency: f64,
    },
    FreeFall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraspSpec {
    /// Thumb and index pinch opposite x faces (box) or antipodal equator
    /// points (sphere); remaining tips hover above.
    PinchX,
    /// Thumb opposes four fingers spread across the +x face of a box.
    FiveFinger,
    /// Thumb, index, middle at 120° on the equator; ring and little hover.
    Tripod,
    /// No contact at all.
    None,
}

/// Per-tip corruption applied to the true tip positions to simulate tracking
/// error.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TipPerturbation {
    /// Constant offset along the outward contact normal, meters.
    pub offset_normal: f64,
    /// Amplitude of sinusoidal tangential slip, meters.
    pub slip_amplitude: f64,
    /// Slip frequency, Hz.
    pub slip_frequency: f64,
    /// Standard deviation of iid Gaussian position noise, meters.
    pub noise_sigma: f64,
    /// Occluded tips report `occluded_count` observed points instead of the
    /// saturation count.
    pub occluded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub object: ObjectSpec,
    pub grasp: GraspSpec,
    pub motion: MotionSpec,
    pub frames: usize,
    pub dt: f64,
    /// World position of the object's canonical origin at t = 0.
    pub base_translation: Vector3<f64>,
    pub perturbation: [TipPerturbation; TIP_COUNT],
    /// Observed-point count reported for occluded tips.
    pub occluded_count: u32,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.frames < 3 {
            return Err(Error::Parameter(format!(
                "scenario needs >= 3 frames, got {}",
                self.frames
            )));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Parameter(format!("dt {} must be positive", self.dt)));
        }
        match self.object {
            ObjectSpec::Sphere { radius } if radius <= 0.0 => {
                return Err(Error::Parameter("sphere radius must be positive".into()))
            }
            ObjectSpec::Box { half_extents } if half_extents.min() <= 0.0 => {
                return Err(Error::Parameter("box half extents must be positive".into()))
            }
            _ => {}
        }
        Ok(())
    }

    /// A quiet default: static box held in a two-tip pinch.
    fn base(name: &str) -> Self {
        Self {
            name: name.to_string(),
            object: ObjectSpec::Box {
                half_extents: Vector3::new(0.05, 0.05, 0.05),
            },
            grasp: GraspSpec::PinchX,
            motion: MotionSpec::Static,
            frames: 30,
            dt: 1.0 / 30.0,
            base_translation: Vector3::new(0.0, 0.0, 0.15),
            perturbation: [TipPerturbation::default(); TIP_COUNT],
            occluded_count: 0,
            seed: 42,
        }
    }

    /// Built-in scenarios by name.
    pub fn built_in(name: &str) -> Option<Self> {
        match name {
            // Static two-tip pinch, clean input. The force-oracle scene.
            "static_pinch" => Some(Self::base(name)),
            // Tip 1 lifted 8 mm off the surface; contact must be recovered.
            "contact_recovery" => {
                let mut s = Self::base(name);
                s.frames = 100;
                s.perturbation[1].offset_normal = 0.008;
                s.perturbation[1].occluded = true;
                Some(s)
            }
            // No grasp, object accelerating at g.
            "free_fall" => {
                let mut s = Self::base(name);
                s.grasp = GraspSpec::None;
                s.motion = MotionSpec::FreeFall;
                s.frames = 30;
                Some(s)
            }
            // Noisy five-finger static grasp with an occluded, slipping thumb.
            "noisy_grasp_static" => {
                let mut s = Self::base(name);
                s.grasp = GraspSpec::FiveFinger;
                s.frames = 120;
                for p in s.perturbation.iter_mut() {
                    p.noise_sigma = 0.003;
                }
                s.perturbation[0].occluded = true;
                s.perturbation[0].slip_amplitude = 0.012;
                s.perturbation[0].slip_frequency = 0.4;
                s.occluded_count = 10;
                s.seed = 7;
                Some(s)
            }
            // Same grasp carried at constant velocity; index occluded.
            "noisy_carry" => {
                let mut s = Self::base(name);
                s.grasp = GraspSpec::FiveFinger;
                s.motion = MotionSpec::ConstantVelocity {
                    velocity: Vector3::new(0.05, 0.0, 0.02),
                };
                s.frames = 120;
                for p in s.perturbation.iter_mut() {
                    p.noise_sigma = 0.003;
                }
                s.perturbation[1].occluded = true;
                s.perturbation[1].slip_amplitude = 0.012;
                s.perturbation[1].slip_frequency = 0.3;
                s.occluded_count = 10;
                s.seed = 8;
                Some(s)
            }
            // Tripod grasp of a sphere rocking about z; middle finger occluded.
            "noisy_rotate" => {
                let mut s = Self::base(name);
                s.object = ObjectSpec::Sphere { radius: 0.06 };
                s.grasp = GraspSpec::Tripod;
                s.motion = MotionSpec::SinusoidalRotation {
                    axis: Vector3::z(),
                    amplitude: 0.35,
                    frequency: 0.5,
                };
                s.frames = 120;
                for p in s.perturbation.iter_mut() {
                    p.noise_sigma = 0.003;
                }
                s.perturbation[2].occluded = true;
                s.perturbation[2].slip_amplitude = 0.010;
                s.perturbation[2].slip_frequency = 0.5;
                s.occluded_count = 10;
                s.seed = 9;
                Some(s)
            }
            _ => None,
        }
    }

    pub fn built_in_names() -> &'static [&'static str] {
        &[
            "static_pinch",
            "contact_recovery",
            "free_fall",
            "noisy_grasp_static",
            "noisy_carry",
            "noisy_rotate",
        ]
    }
}

/// Read a scenario from key-value text. Unknown keys warn; missing keys keep
/// the `static_pinch` defaults.
pub fn read_scenario(path: &Path) -> Result<Scenario> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_scenario(&text, &path.display().to_string())
}

pub fn parse_scenario(text: &str, path: &str) -> Result<Scenario> {
    let mut s = Scenario::base("custom");
    let mut radius: Option<f64> = None;
    let mut half_extents: Option<Vector3<f64>> = None;
    let mut object_kind: Option<String> = None;
    let mut motion_kind: Option<String> = None;
    let mut velocity = Vector3::zeros();
    let mut rot_axis = Vector3::z();
    let mut rot_amp = 0.0;
    let mut rot_freq = 0.0;

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
        let floats = |n: usize| -> Result<Vec<f64>> {
            let v: Vec<f64> = value
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(path, lineno, format!("bad number: {e}")))?;
            if v.len() != n {
                return Err(Error::parse(path, lineno, format!("expected {n} numbers")));
            }
            Ok(v)
        };
        let vec3 = || -> Result<Vector3<f64>> {
            let v = floats(3)?;
            Ok(Vector3::new(v[0], v[1], v[2]))
        };

        // Per-tip keys look like `tip_3_noise_sigma`.
        if let Some(rest) = key.strip_prefix("tip_") {
            let (idx_str, field) = rest
                .split_once('_')
                .ok_or_else(|| Error::parse(path, lineno, "bad tip key"))?;
            let idx: usize = idx_str
                .parse()
                .map_err(|_| Error::parse(path, lineno, "bad tip index"))?;
            if idx >= TIP_COUNT {
                return Err(Error::parse(path, lineno, "tip index out of range"));
            }
            match field {
                "offset_normal" => s.perturbation[idx].offset_normal = floats(1)?[0],
                "slip_amplitude" => s.perturbation[idx].slip_amplitude = floats(1)?[0],
                "slip_frequency" => s.perturbation[idx].slip_frequency = floats(1)?[0],
                "noise_sigma" => s.perturbation[idx].noise_sigma = floats(1)?[0],
                "occluded" => {
                    s.perturbation[idx].occluded = matches!(value, "1" | "true" | "yes")
                }
                _ => log::warn!("{path}:{lineno}: unknown tip key `{key}` ignored"),
            }
            continue;
        }

        match key {
            "name" => s.name = value.to_string(),
            "object" => object_kind = Some(value.to_string()),
            "radius" => radius = Some(floats(1)?[0]),
            "half_extents" => half_extents = Some(vec3()?),
            "grasp" => {
                s.grasp = match value {
                    "pinch_x" => GraspSpec::PinchX,
                    "five_finger" => GraspSpec::FiveFinger,
                    "tripod" => GraspSpec::Tripod,
                    "none" => GraspSpec::None,
                    other => {
                        return Err(Error::parse(path, lineno, format!("unknown grasp `{other}`")))
                    }
                }
            }
            "motion" => motion_kind = Some(value.to_string()),
            "velocity" => velocity = vec3()?,
            "rotation_axis" => rot_axis = vec3()?,
            "rotation_amplitude" => rot_amp = floats(1)?[0],
            "rotation_frequency" => rot_freq = floats(1)?[0],
            "frames" => {
                s.frames = value
                    .parse()
                    .map_err(|e| Error::parse(path, lineno, format!("bad frames: {e}")))?
            }
            "dt" => s.dt = floats(1)?[0],
            "base_translation" => s.base_translation = vec3()?,
            "noise_sigma" => {
                let sigma = floats(1)?[0];
                for p in s.perturbation.iter_mut() {
                    p.noise_sigma = sigma;
                }
            }
            "occluded_count" => {
                s.occluded_count = value
                    .parse()
                    .map_err(|e| Error::parse(path, lineno, format!("bad count: {e}")))?
            }
            "seed" => {
                s.seed = value
                    .parse()
                    .map_err(|e| Error::parse(path, lineno, format!("bad seed: {e}")))?
            }
            other => log::warn!("{path}:{lineno}: unknown scenario key `{other}` ignored"),
        }
    }

    match object_kind.as_deref() {
        Some("sphere") => {
            s.object = ObjectSpec::Sphere {
                radius: radius.ok_or_else(|| Error::parse(path, 0, "sphere needs `radius`"))?,
            }
        }
        Some("box") => {
            s.object = ObjectSpec::Box {
                half_extents: half_extents
                    .ok_or_else(|| Error::parse(path, 0, "box needs `half_extents`"))?,
            }
        }
        Some(other) => {
            return Err(Error::parse(path, 0, format!("unknown object `{other}`")));
        }
        None => {}
    }
    match motion_kind.as_deref() {
        Some("static") | None => {}
        Some("constant_velocity") => s.motion = MotionSpec::ConstantVelocity { velocity },
        Some("sinusoidal_rotation") => {
            s.motion = MotionSpec::SinusoidalRotation {
                axis: rot_axis.normalize(),
                amplitude: rot_amp,
                frequency: rot_freq,
            }
        }
        Some("free_fall") => s.motion = MotionSpec::FreeFall,
        Some(other) => {
            return Err(Error::parse(path, 0, format!("unknown motion `{other}`")));
        }
    }

    s.validate()?;
    Ok(s)
}

/// Write a scenario as key-value text (readable by [`read_scenario`]).
pub fn write_scenario(s: &Scenario, path: &Path) -> Result<()> {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(out, "name = {}", s.name);
    match s.object {
        ObjectSpec::Sphere { radius } => {
            let _ = writeln!(out, "object = sphere");
            let _ = writeln!(out, "radius = {radius}");
        }
        ObjectSpec::Box { half_extents } => {
            let _ = writeln!(out, "object = box");
            let _ = writeln!(
                out,
                "half_extents = {} {} {}",
                half_extents.x, half_extents.y, half_extents.z
            );
        }
    }
    let grasp = match s.grasp {
        GraspSpec::PinchX => "pinch_x",
        GraspSpec::FiveFinger => "five_finger",
        GraspSpec::Tripod => "tripod",
        GraspSpec::None => "none",
    };
    let _ = writeln!(out, "grasp = {grasp}");
    match s.motion {
        MotionSpec::Static => {
            let _ = writeln!(out, "motion = static");
        }
        MotionSpec::ConstantVelocity { velocity } => {
            let _ = writeln!(out, "motion = constant_velocity");
            let _ = writeln!(out, "velocity = {} {} {}", velocity.x, velocity.y, velocity.z);
        }
        MotionSpec::SinusoidalRotation {
            axis,
            amplitude,
            frequency,
        } => {
            let _ = writeln!(out, "motion = sinusoidal_rotation");
            let _ = writeln!(out, "rotation_axis = {} {} {}", axis.x, axis.y, axis.z);
            let _ = writeln!(out, "rotation_amplitude = {amplitude}");
            let _ = writeln!(out, "rotation_frequency = {frequency}");
        }
        MotionSpec::FreeFall => {
            let _ = writeln!(out, "motion = free_fall");
        }
    }
    let _ = writeln!(out, "frames = {}", s.frames);
    let _ = writeln!(out, "dt = {}", s.dt);
    let _ = writeln!(
        out,
        "base_translation = {} {} {}",
        s.base_translation.x, s.base_translation.y, s.base_translation.z
    );
    let _ = writeln!(out, "occluded_count = {}", s.occluded_count);
    let _ = writeln!(out, "seed = {}", s.seed);
    for (i, p) in s.perturbation.iter().enumerate() {
        if p.offset_normal != 0.0 {
            let _ = writeln!(out, "tip_{i}_offset_normal = {}", p.offset_normal);
        }
        if p.slip_amplitude != 0.0 {
            let _ = writeln!(out, "tip_{i}_slip_amplitude = {}", p.slip_amplitude);
            let _ = writeln!(out, "tip_{i}_slip_frequency = {}", p.slip_frequency);
        }
        if p.noise_sigma != 0.0 {
            let _ = writeln!(out, "tip_{i}_noise_sigma = {}", p.noise_sigma);
        }
        if p.occluded {
            let _ = writeln!(out, "tip_{i}_occluded = 1");
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}
