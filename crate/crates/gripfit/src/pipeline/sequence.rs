//! Line-delimited sequence files.
//!
//! Both the input (kinematic) and output (refined) sequences are JSON-lines:
//! a versioned header object on the first line, then one record per line.
//! The format is streamable, diffable, and byte-stable for identical inputs.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::contact_detection::{TipState, TIP_COUNT};
use crate::error::{Error, Result};
use crate::force_solver::EnergyTerms;
use crate::object_model::RigidPose;
use crate::slide_prevention::SlideBranch;

pub const SEQUENCE_FORMAT: &str = "gripfit-seq";
pub const REFINED_FORMAT: &str = "gripfit-refined";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

/// Optional per-frame ground truth emitted by the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// True fingertip centers, meters.
    pub tips: [[f64; 3]; TIP_COUNT],
    /// True contact forces, newtons.
    pub forces: [[f64; 3]; TIP_COUNT],
    /// True contact flags.
    pub contact_flags: [bool; TIP_COUNT],
}

/// One frame of an input sequence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_index: u64,
    /// Seconds; non-decreasing within a sequence.
    pub timestamp: f64,
    pub object_pose: RigidPose,
    /// Kinematically tracked fingertip spheres, thumb..little.
    pub tips_kinematic: [TipState; TIP_COUNT],
    /// Depth points observed near each tip, when the tracker supplies them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_counts: Option<[u32; TIP_COUNT]>,
    /// Per-frame point cloud file (`x y z` per line, meters), relative to the
    /// sequence file, used to compute confidences when counts are absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point_cloud_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruth>,
}

/// One frame of refined output: everything needed to evaluate and plot
/// without rerunning the physics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinedRecord {
    pub frame_index: u64,
    pub timestamp: f64,
    pub object_pose: RigidPose,
    pub tips_kinematic: [TipState; TIP_COUNT],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_counts: Option<[u32; TIP_COUNT]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruth>,
    /// True for warm-up or failed frames that passed kinematics through.
    pub passthrough: bool,
    pub valid: [bool; TIP_COUNT],
    pub contact_point: [[f64; 3]; TIP_COUNT],
    pub contact_normal: [[f64; 3]; TIP_COUNT],
    /// Extracted tip-surface distances, meters.
    pub distance: [f64; TIP_COUNT],
    /// Refined distances after the force solve, meters.
    pub refined_distance: [f64; TIP_COUNT],
    /// Cone coefficients per tip, newtons.
    pub coefficients: [[f64; 4]; TIP_COUNT],
    /// World-frame tip forces, newtons.
    pub force: [[f64; 3]; TIP_COUNT],
    /// Normal pressures, newtons.
    pub pressure: [f64; TIP_COUNT],
    pub confidence: [f64; TIP_COUNT],
    pub branch: [SlideBranch; TIP_COUNT],
    /// Refined tip-surface positions (contact point + refined distance along
    /// the normal), meters.
    pub tip_refined: [[f64; 3]; TIP_COUNT],
    /// Slide-corrected tip-surface positions, meters.
    pub tip_slide: [[f64; 3]; TIP_COUNT],
    /// Final hand pose vector.
    pub theta: [f64; 28],
    /// Final tip centers from forward kinematics, meters.
    pub tip_final: [[f64; 3]; TIP_COUNT],
    pub solver_iterations: usize,
    pub solver_converged: bool,
    pub energies: EnergyTerms,
}

fn write_lines<T: Serialize>(path: &Path, format: &str, records: &[T]) -> Result<()> {
    let p = path.display().to_string();
    let file = std::fs::File::create(path).map_err(|e| Error::io(&*p, e))?;
    let mut out = BufWriter::new(file);
    let header = Header {
        format: format.to_string(),
        version: FORMAT_VERSION,
    };
    serde_json::to_writer(&mut out, &header)
        .map_err(|e| Error::parse(&p, 1, e.to_string()))?;
    out.write_all(b"\n").map_err(|e| Error::io(&*p, e))?;
    for (i, rec) in records.iter().enumerate() {
        serde_json::to_writer(&mut out, rec)
            .map_err(|e| Error::parse(&p, i + 2, e.to_string()))?;
        out.write_all(b"\n").map_err(|e| Error::io(&*p, e))?;
    }
    Ok(())
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path, format: &str) -> Result<Vec<T>> {
    let p = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::io(&*p, e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let header_line = match lines.next() {
        Some((_, line)) => line.map_err(|e| Error::io(&*p, e))?,
        None => return Err(Error::parse(&p, 1, "empty file, expected header")),
    };
    let header: Header = serde_json::from_str(&header_line)
        .map_err(|e| Error::parse(&p, 1, format!("bad header: {e}")))?;
    if header.format != format {
        return Err(Error::parse(
            &p,
            1,
            format!("expected format `{format}`, found `{}`", header.format),
        ));
    }
    if header.version != FORMAT_VERSION {
        return Err(Error::parse(
            &p,
            1,
            format!("unsupported version {}", header.version),
        ));
    }

    let mut records = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| Error::io(&*p, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: T = serde_json::from_str(&line)
            .map_err(|e| Error::parse(&p, idx + 1, e.to_string()))?;
        records.push(rec);
    }
    Ok(records)
}

pub fn write_sequence(path: &Path, records: &[FrameRecord]) -> Result<()> {
    write_lines(path, SEQUENCE_FORMAT, records)
}

/// Read and validate an input sequence (frame indices strictly increasing,
/// timestamps non-decreasing).
pub fn read_sequence(path: &Path) -> Result<Vec<FrameRecord>> {
    let records: Vec<FrameRecord> = read_lines(path, SEQUENCE_FORMAT)?;
    let p = path.display().to_string();
    for pair in records.windows(2) {
        if pair[1].frame_index <= pair[0].frame_index {
            return Err(Error::parse(
                &p,
                pair[1].frame_index as usize + 2,
                format!(
                    "frame_index not strictly increasing ({} then {})",
                    pair[0].frame_index, pair[1].frame_index
                ),
            ));
        }
        if pair[1].timestamp < pair[0].timestamp {
            return Err(Error::parse(
                &p,
                pair[1].frame_index as usize + 2,
                "timestamps must be non-decreasing",
            ));
        }
    }
    Ok(records)
}

pub fn write_refined(path: &Path, records: &[RefinedRecord]) -> Result<()> {
    write_lines(path, REFINED_FORMAT, records)
}

pub fn read_refined(path: &Path) -> Result<Vec<RefinedRecord>> {
    read_lines(path, REFINED_FORMAT)
}

/// Read a point cloud file: one `x y z` triple per line, meters.
pub fn read_point_cloud(path: &Path) -> Result<Vec<nalgebra::Vector3<f64>>> {
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(&*p, e))?;
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let coords: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(&p, lineno + 1, format!("bad point: {e}")))?;
        if coords.len() != 3 {
            return Err(Error::parse(&p, lineno + 1, "expected `x y z`"));
        }
        points.push(nalgebra::Vector3::new(coords[0], coords[1], coords[2]));
    }
    Ok(points)
}
