//! Batch CLI for the gripfit refinement library.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (unreadable or
//! malformed input files).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "gripfit",
    version,
    about = "Physics-based refinement of tracked hand-object interaction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Refine a tracked sequence against an object model.
    Refine {
        /// Input sequence (JSON-lines, `gripfit-seq` format).
        #[arg(long)]
        sequence: PathBuf,
        /// Object model: baked `.sdf` grid or triangle `.obj` mesh.
        #[arg(long)]
        object: PathBuf,
        /// Hand skeleton definition (key-value text); built-in default if omitted.
        #[arg(long)]
        skeleton: Option<PathBuf>,
        /// Run configuration (key-value text); defaults if omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for refined.jsonl, report.csv, summary.txt, timings.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute the report from a refined sequence file.
    Eval {
        /// refined.jsonl produced by `refine`.
        #[arg(long)]
        refined: PathBuf,
        /// Output directory for report.csv and summary.txt.
        #[arg(long)]
        report: PathBuf,
        /// Contact distance threshold for the plausibility metric, meters.
        #[arg(long, default_value_t = 0.002)]
        contact_epsilon: f64,
    },
    /// Render force-magnitude and contact-count charts from a report.
    Plot {
        /// Directory containing report.csv; images and series CSVs are
        /// written next to it.
        #[arg(long)]
        report: PathBuf,
    },
    /// Generate a synthetic ground-truth scenario bundle.
    Synth {
        /// Built-in scenario name or path to a scenario spec file.
        scenario: String,
        /// Output directory for sequence.jsonl, object.sdf, scenario.cfg,
        /// skeleton.cfg, gripfit.cfg.
        #[arg(long)]
        out: PathBuf,
        /// List built-in scenario names and exit.
        #[arg(long, default_value_t = false)]
        list: bool,
    },
}

fn run(cli: Cli) -> gripfit::Result<()> {
    match cli.command {
        Command::Refine {
            sequence,
            object,
            skeleton,
            config,
            out,
        } => {
            let output = gripfit::pipeline::run_sequence(
                &sequence,
                &object,
                skeleton.as_deref(),
                config.as_deref(),
                &out,
            )?;
            let s = &output.report.summary;
            println!(
                "refined {} frames ({} physics); implausible {:.1}% -> {:.1}%",
                s.frames,
                s.physics_frames,
                100.0 * s.implausible_ratio_before,
                100.0 * s.implausible_ratio_after,
            );
            if let (Some(b), Some(a)) = (s.mean_error_before, s.mean_error_after) {
                println!("mean tip error {b:.3} mm -> {a:.3} mm");
            }
            if let (Some(m), Some(p)) = (s.time_mean_ms, s.time_p95_ms) {
                println!("refine time mean {m:.3} ms, p95 {p:.3} ms");
            }
            println!("outputs in {}", out.display());
            Ok(())
        }
        Command::Eval {
            refined,
            report,
            contact_epsilon,
        } => {
            let rep = gripfit::pipeline::evaluate_refined(&refined, &report, contact_epsilon)?;
            println!(
                "evaluated {} frames; implausible after: {:.1}%",
                rep.summary.frames,
                100.0 * rep.summary.implausible_ratio_after
            );
            println!("report in {}", report.display());
            Ok(())
        }
        Command::Plot { report } => {
            gripfit::pipeline::plot_report(&report)?;
            println!(
                "wrote force_magnitude.png/.csv and contact_count.png/.csv to {}",
                report.display()
            );
            Ok(())
        }
        Command::Synth { scenario, out, list } => {
            if list {
                for name in gripfit::synthetic::Scenario::built_in_names() {
                    println!("{name}");
                }
                return Ok(());
            }
            let spec = match gripfit::synthetic::Scenario::built_in(&scenario) {
                Some(s) => s,
                None => gripfit::synthetic::read_scenario(std::path::Path::new(&scenario))?,
            };
            gripfit::pipeline::synthesize_to_dir(&spec, &out)?;
            println!("scenario `{}` written to {}", spec.name, out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version are not usage errors.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
