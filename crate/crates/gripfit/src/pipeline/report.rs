//! Refinement metrics: per-frame rows, aggregates, CSV and summary output.
//!
//! The CSV report is deterministic (floats printed in shortest round-trip
//! form, no wall-clock content); timing statistics live in `timings.csv` and
//! the human-readable summary only.

use std::path::Path;

use crate::contact_detection::TIP_COUNT;
use crate::error::{Error, Result};
use crate::pipeline::runner::{contact_count, FrameTimings, RefinedFrame};
use crate::pipeline::sequence::RefinedRecord;
use crate::slide_prevention::SlideBranch;

/// Confidence below which a tip counts as occluded in the aggregates.
pub const OCCLUDED_CONFIDENCE: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct FrameMetrics {
    pub frame_index: u64,
    pub timestamp: f64,
    pub passthrough: bool,
    pub contacts_before: usize,
    pub contacts_after: usize,
    pub solver_iterations: usize,
    pub solver_converged: bool,
    pub energy_force: f64,
    pub energy_moment: f64,
    pub energy_reg: f64,
    pub energy_contact: f64,
    pub energy_smooth: f64,
    pub valid: [bool; TIP_COUNT],
    pub confidence: [f64; TIP_COUNT],
    pub distance_mm: [f64; TIP_COUNT],
    pub refined_distance_mm: [f64; TIP_COUNT],
    pub pressure: [f64; TIP_COUNT],
    pub branch: [SlideBranch; TIP_COUNT],
    /// Tip errors against ground truth, millimeters; `None` without GT.
    pub error_before_mm: [Option<f64>; TIP_COUNT],
    pub error_after_mm: [Option<f64>; TIP_COUNT],
}

impl FrameMetrics {
    pub fn from_record(record: &RefinedRecord, contact_epsilon: f64) -> Self {
        let mut error_before_mm = [None; TIP_COUNT];
        let mut error_after_mm = [None; TIP_COUNT];
        if let Some(gt) = &record.ground_truth {
            for i in 0..TIP_COUNT {
                let truth = nalgebra::Vector3::from(gt.tips[i]);
                let kin = record.tips_kinematic[i].center;
                let fin = nalgebra::Vector3::from(record.tip_final[i]);
                error_before_mm[i] = Some((kin - truth).norm() * 1e3);
                error_after_mm[i] = Some((fin - truth).norm() * 1e3);
            }
        }
        Self {
            frame_index: record.frame_index,
            timestamp: record.timestamp,
            passthrough: record.passthrough,
            contacts_before: contact_count(record, contact_epsilon, false),
            contacts_after: contact_count(record, contact_epsilon, true),
            solver_iterations: record.solver_iterations,
            solver_converged: record.solver_converged,
            energy_force: record.energies.force,
            energy_moment: record.energies.moment,
            energy_reg: record.energies.reg,
            energy_contact: record.energies.contact,
            energy_smooth: record.energies.smooth,
            valid: record.valid,
            confidence: record.confidence,
            distance_mm: std::array::from_fn(|i| record.distance[i] * 1e3),
            refined_distance_mm: std::array::from_fn(|i| record.refined_distance[i] * 1e3),
            pressure: record.pressure,
            branch: record.branch,
            error_before_mm,
            error_after_mm,
        }
    }
}

/// Aggregates over a whole run. All error statistics are millimeters.
#[derive(Debug, Clone, Default)]
pub struct ReportSummary {
    pub frames: usize,
    pub physics_frames: usize,
    pub implausible_ratio_before: f64,
    pub implausible_ratio_after: f64,
    pub mean_error_before: Option<f64>,
    pub mean_error_after: Option<f64>,
    pub occluded_error_before: Option<f64>,
    pub occluded_error_after: Option<f64>,
    pub mean_contacts_after: f64,
    pub mean_solver_iterations: f64,
    /// Stage II+III wall time statistics; absent when re-evaluated from file.
    pub time_mean_ms: Option<f64>,
    pub time_p95_ms: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct RefinementReport {
    pub rows: Vec<FrameMetrics>,
    pub summary: ReportSummary,
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let idx = ((sorted.len() as f64 - 1.0) * q).round() as usize;
    Some(sorted[idx.min(sorted.len() - 1)])
}

/// Build the aggregate summary from per-frame rows (and timings when the run
/// is live rather than re-evaluated).
pub fn summarize(rows: &[FrameMetrics], timings: Option<&[FrameTimings]>) -> ReportSummary {
    let frames = rows.len();
    let physics_frames = rows.iter().filter(|r| !r.passthrough).count();
    let implausible_before = rows.iter().filter(|r| r.contacts_before < 2).count();
    let implausible_after = rows.iter().filter(|r| r.contacts_after < 2).count();

    let mut before = Vec::new();
    let mut after = Vec::new();
    let mut occ_before = Vec::new();
    let mut occ_after = Vec::new();
    for row in rows {
        for i in 0..TIP_COUNT {
            if let (Some(b), Some(a)) = (row.error_before_mm[i], row.error_after_mm[i]) {
                before.push(b);
                after.push(a);
                if row.confidence[i] < OCCLUDED_CONFIDENCE {
                    occ_before.push(b);
                    occ_after.push(a);
                }
            }
        }
    }

    let (time_mean_ms, time_p95_ms) = match timings {
        Some(t) if !t.is_empty() => {
            let mut totals: Vec<f64> = t.iter().map(|x| x.total_ms()).collect();
            totals.sort_by(f64::total_cmp);
            (mean(&totals), percentile(&totals, 0.95))
        }
        _ => (None, None),
    };

    ReportSummary {
        frames,
        physics_frames,
        implausible_ratio_before: if frames == 0 {
            0.0
        } else {
            implausible_before as f64 / frames as f64
        },
        implausible_ratio_after: if frames == 0 {
            0.0
        } else {
            implausible_after as f64 / frames as f64
        },
        mean_error_before: mean(&before),
        mean_error_after: mean(&after),
        occluded_error_before: mean(&occ_before),
        occluded_error_after: mean(&occ_after),
        mean_contacts_after: if frames == 0 {
            0.0
        } else {
            rows.iter().map(|r| r.contacts_after as f64).sum::<f64>() / frames as f64
        },
        mean_solver_iterations: if physics_frames == 0 {
            0.0
        } else {
            rows.iter()
                .filter(|r| !r.passthrough)
                .map(|r| r.solver_iterations as f64)
                .sum::<f64>()
                / physics_frames as f64
        },
        time_mean_ms,
        time_p95_ms,
    }
}

/// Build the full report from refined frames.
pub fn build_report(frames: &[RefinedFrame], contact_epsilon: f64) -> RefinementReport {
    let rows: Vec<FrameMetrics> = frames
        .iter()
        .map(|f| FrameMetrics::from_record(&f.record, contact_epsilon))
        .collect();
    let timings: Vec<FrameTimings> = frames
        .iter()
        .filter(|f| !f.record.passthrough)
        .map(|f| f.timings)
        .collect();
    let summary = summarize(&rows, Some(&timings));
    RefinementReport { rows, summary }
}

/// Re-derive the report from a refined sequence file (no timing stats).
pub fn report_from_records(records: &[RefinedRecord], contact_epsilon: f64) -> RefinementReport {
    let rows: Vec<FrameMetrics> = records
        .iter()
        .map(|r| FrameMetrics::from_record(r, contact_epsilon))
        .collect();
    let summary = summarize(&rows, None);
    RefinementReport { rows, summary }
}

fn branch_code(b: SlideBranch) -> &'static str {
    match b {
        SlideBranch::Free => "free",
        SlideBranch::Pinned => "pinned",
        SlideBranch::Blended => "blended",
        SlideBranch::PassThrough => "pass",
    }
}

fn branch_from_code(s: &str) -> Option<SlideBranch> {
    Some(match s {
        "free" => SlideBranch::Free,
        "pinned" => SlideBranch::Pinned,
        "blended" => SlideBranch::Blended,
        "pass" => SlideBranch::PassThrough,
        _ => return None,
    })
}

/// Write the per-frame CSV. One row per frame; per-tip columns are suffixed
/// `_0`..`_4` (thumb..little); error columns are empty without ground truth.
pub fn write_report_csv(report: &RefinementReport, path: &Path) -> Result<()> {
    use std::fmt::Write as _;
    let mut out = String::new();
    out.push_str("frame,timestamp,passthrough,contacts_before,contacts_after,iterations,converged,e_force,e_moment,e_reg,e_contact,e_smooth");
    for i in 0..TIP_COUNT {
        let _ = write!(
            out,
            ",valid_{i},conf_{i},d_mm_{i},d_ref_mm_{i},pressure_{i},branch_{i},err_before_mm_{i},err_after_mm_{i}"
        );
    }
    out.push('\n');
    for r in &report.rows {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.frame_index,
            r.timestamp,
            r.passthrough as u8,
            r.contacts_before,
            r.contacts_after,
            r.solver_iterations,
            r.solver_converged as u8,
            r.energy_force,
            r.energy_moment,
            r.energy_reg,
            r.energy_contact,
            r.energy_smooth
        );
        for i in 0..TIP_COUNT {
            let _ = write!(
                out,
                ",{},{},{},{},{},{}",
                r.valid[i] as u8,
                r.confidence[i],
                r.distance_mm[i],
                r.refined_distance_mm[i],
                r.pressure[i],
                branch_code(r.branch[i])
            );
            match r.error_before_mm[i] {
                Some(v) => {
                    let _ = write!(out, ",{v}");
                }
                None => out.push(','),
            }
            match r.error_after_mm[i] {
                Some(v) => {
                    let _ = write!(out, ",{v}");
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Parse a report CSV back into rows (used by `plot` and the aggregate
/// recomputation check).
pub fn read_report_csv(path: &Path) -> Result<Vec<FrameMetrics>> {
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(&*p, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(&p, 1, "empty csv"))?;
    let expected_cols = 12 + 8 * TIP_COUNT;
    if header.split(',').count() != expected_cols {
        return Err(Error::parse(&p, 1, "unexpected column count"));
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != expected_cols {
            return Err(Error::parse(&p, lineno + 2, "unexpected column count"));
        }
        let f = |idx: usize| -> Result<f64> {
            cells[idx]
                .parse::<f64>()
                .map_err(|e| Error::parse(&p, lineno + 2, format!("bad float: {e}")))
        };
        let u = |idx: usize| -> Result<usize> {
            cells[idx]
                .parse::<usize>()
                .map_err(|e| Error::parse(&p, lineno + 2, format!("bad integer: {e}")))
        };
        let opt = |idx: usize| -> Result<Option<f64>> {
            if cells[idx].is_empty() {
                Ok(None)
            } else {
                Ok(Some(f(idx)?))
            }
        };
        let mut row = FrameMetrics {
            frame_index: u(0)? as u64,
            timestamp: f(1)?,
            passthrough: cells[2] == "1",
            contacts_before: u(3)?,
            contacts_after: u(4)?,
            solver_iterations: u(5)?,
            solver_converged: cells[6] == "1",
            energy_force: f(7)?,
            energy_moment: f(8)?,
            energy_reg: f(9)?,
            energy_contact: f(10)?,
            energy_smooth: f(11)?,
            valid: [false; TIP_COUNT],
            confidence: [0.0; TIP_COUNT],
            distance_mm: [0.0; TIP_COUNT],
            refined_distance_mm: [0.0; TIP_COUNT],
            pressure: [0.0; TIP_COUNT],
            branch: [SlideBranch::PassThrough; TIP_COUNT],
            error_before_mm: [None; TIP_COUNT],
            error_after_mm: [None; TIP_COUNT],
        };
        for i in 0..TIP_COUNT {
            let base = 12 + 8 * i;
            row.valid[i] = cells[base] == "1";
            row.confidence[i] = f(base + 1)?;
            row.distance_mm[i] = f(base + 2)?;
            row.refined_distance_mm[i] = f(base + 3)?;
            row.pressure[i] = f(base + 4)?;
            row.branch[i] = branch_from_code(cells[base + 5])
                .ok_or_else(|| Error::parse(&p, lineno + 2, "bad branch"))?;
            row.error_before_mm[i] = opt(base + 6)?;
            row.error_after_mm[i] = opt(base + 7)?;
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Write per-frame wall-clock timings (non-deterministic by nature).
pub fn write_timings_csv(frames: &[RefinedFrame], path: &Path) -> Result<()> {
    use std::fmt::Write as _;
    let mut out = String::from("frame,stage2_ms,stage3_ms,total_ms\n");
    for f in frames {
        let _ = writeln!(
            out,
            "{},{:.4},{:.4},{:.4}",
            f.record.frame_index,
            f.timings.stage2_ms,
            f.timings.stage3_ms,
            f.timings.total_ms()
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Human-readable run summary. Timing lines appear only for live runs.
pub fn write_summary(report: &RefinementReport, path: &Path) -> Result<()> {
    use std::fmt::Write as _;
    let s = &report.summary;
    let mut out = String::new();
    let _ = writeln!(out, "frames processed        : {}", s.frames);
    let _ = writeln!(out, "physics frames          : {}", s.physics_frames);
    let _ = writeln!(
        out,
        "implausible ratio before: {:.1}%",
        100.0 * s.implausible_ratio_before
    );
    let _ = writeln!(
        out,
        "implausible ratio after : {:.1}%",
        100.0 * s.implausible_ratio_after
    );
    let _ = writeln!(out, "mean contacts after     : {:.2}", s.mean_contacts_after);
    if let (Some(b), Some(a)) = (s.mean_error_before, s.mean_error_after) {
        let _ = writeln!(out, "mean tip error before   : {b:.3} mm");
        let _ = writeln!(out, "mean tip error after    : {a:.3} mm");
    }
    if let (Some(b), Some(a)) = (s.occluded_error_before, s.occluded_error_after) {
        let _ = writeln!(out, "occluded error before   : {b:.3} mm");
        let _ = writeln!(out, "occluded error after    : {a:.3} mm");
    }
    let _ = writeln!(
        out,
        "mean solver iterations  : {:.1}",
        s.mean_solver_iterations
    );
    if let (Some(m), Some(p)) = (s.time_mean_ms, s.time_p95_ms) {
        let _ = writeln!(out, "refine time mean        : {m:.3} ms");
        let _ = writeln!(out, "refine time p95         : {p:.3} ms");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}
