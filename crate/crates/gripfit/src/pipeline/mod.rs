//! Sequence-level refinement: file I/O, per-frame orchestration, metrics,
//! and the operations behind the CLI subcommands.

pub mod config;
pub mod plot;
pub mod report;
pub mod runner;
pub mod sequence;

pub use config::{parse_config, read_config, write_config, RunConfig};
pub use report::{build_report, report_from_records, RefinementReport};
pub use runner::{compute_plausibility, contact_count, FrameTimings, Pipeline, RefinedFrame};
pub use sequence::{
    read_refined, read_sequence, write_refined, write_sequence, FrameRecord, GroundTruth,
    RefinedRecord,
};

use std::path::Path;

use crate::error::{Error, Result};
use crate::hand_ik::{read_skeleton, write_skeleton, HandSkeleton};
use crate::object_model::SdfObject;

/// Load the object model honoring the config's bake parameters for meshes.
fn load_object(path: &Path, cfg: &RunConfig) -> Result<SdfObject> {
    let is_obj = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("obj"))
        .unwrap_or(false);
    let grid = if is_obj {
        let mesh = crate::object_model::read_obj(path)?;
        crate::object_model::bake_sdf(
            &mesh,
            cfg.bake_voxel_size,
            cfg.bake_truncation,
            cfg.bake_padding,
        )?
    } else {
        crate::object_model::read_sdf(path)?
    };
    SdfObject::from_grid(grid, cfg.solver.mass)
}

/// Outputs of one `refine` run.
pub struct RunOutput {
    pub frames: Vec<RefinedFrame>,
    pub report: RefinementReport,
}

/// Refine a sequence file end to end and write the output bundle
/// (`refined.jsonl`, `report.csv`, `summary.txt`, `timings.csv`) into
/// `out_dir`. Deterministic except for `timings.csv` and the timing lines of
/// the summary.
pub fn run_sequence(
    sequence_path: &Path,
    object_path: &Path,
    skeleton_path: Option<&Path>,
    config_path: Option<&Path>,
    out_dir: &Path,
) -> Result<RunOutput> {
    let cfg = match config_path {
        Some(p) => read_config(p)?,
        None => RunConfig::default(),
    };
    let skeleton = match skeleton_path {
        Some(p) => read_skeleton(p)?,
        None => HandSkeleton::default(),
    };
    let object = load_object(object_path, &cfg)?;
    let records = read_sequence(sequence_path)?;

    let base_dir = sequence_path.parent().unwrap_or(Path::new("."));
    let mut pipeline = Pipeline::new(object, skeleton, cfg).with_base_dir(base_dir);

    let mut frames = Vec::with_capacity(records.len());
    for rec in &records {
        match pipeline.process_frame(rec) {
            Ok(frame) => frames.push(frame),
            Err(e) => {
                // Frame-local failures skip the frame; data-level failures abort.
                if e.is_data_error() {
                    return Err(e);
                }
                log::warn!("frame {} skipped: {e}", rec.frame_index);
            }
        }
    }

    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let refined: Vec<RefinedRecord> = frames.iter().map(|f| f.record.clone()).collect();
    write_refined(&out_dir.join("refined.jsonl"), &refined)?;
    let report = build_report(&frames, pipeline.config().contact_epsilon);
    report::write_report_csv(&report, &out_dir.join("report.csv"))?;
    report::write_summary(&report, &out_dir.join("summary.txt"))?;
    report::write_timings_csv(&frames, &out_dir.join("timings.csv"))?;

    Ok(RunOutput { frames, report })
}

/// Recompute the report from a refined sequence file (`eval` subcommand).
pub fn evaluate_refined(
    refined_path: &Path,
    report_dir: &Path,
    contact_epsilon: f64,
) -> Result<RefinementReport> {
    let records = read_refined(refined_path)?;
    let report = report_from_records(&records, contact_epsilon);
    std::fs::create_dir_all(report_dir)
        .map_err(|e| Error::io(report_dir.display().to_string(), e))?;
    report::write_report_csv(&report, &report_dir.join("report.csv"))?;
    report::write_summary(&report, &report_dir.join("summary.txt"))?;
    Ok(report)
}

/// Render plots from a report directory (`plot` subcommand).
pub fn plot_report(report_dir: &Path) -> Result<()> {
    let rows = report::read_report_csv(&report_dir.join("report.csv"))?;
    plot::plot_force_magnitude(&rows, report_dir)?;
    plot::plot_contact_count(&rows, report_dir)
}

/// Generate a synthetic scenario bundle (`synth` subcommand): the sequence,
/// the object grid, plus a skeleton and config so `refine` can run on the
/// directory as-is.
pub fn synthesize_to_dir(scenario: &crate::synthetic::Scenario, out_dir: &Path) -> Result<()> {
    let cfg = RunConfig::default();
    let skeleton = HandSkeleton::default();
    let tip_radius = skeleton.fingers[1].tip_radius;
    let generated = crate::synthetic::generate(scenario, &cfg.solver, tip_radius)?;

    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    crate::object_model::write_sdf(&generated.grid, &out_dir.join("object.sdf"))?;
    write_sequence(&out_dir.join("sequence.jsonl"), &generated.records)?;
    crate::synthetic::write_scenario(scenario, &out_dir.join("scenario.cfg"))?;
    write_skeleton(&skeleton, &out_dir.join("skeleton.cfg"))?;
    write_config(&cfg, &out_dir.join("gripfit.cfg"))?;
    Ok(())
}
