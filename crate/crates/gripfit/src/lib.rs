//! Physics-based refinement of kinematically tracked hand-object interaction.
//!
//! Given a sequence of object rigid poses and five fingertip positions per
//! frame plus an object model (signed distance grid), this crate estimates
//! per-tip contact forces that explain the object's motion, recovers contacts
//! hidden from the tracker, suppresses non-physical fingertip sliding using
//! kinematic confidence, and solves a final hand pose by inverse kinematics.
//!
//! The main entry points:
//!
//! - [`object_model`] — SDF grids, surface extraction, mass properties.
//! - [`rigid_dynamics`] — finite-difference velocities and driving torque.
//! - [`contact_detection`] — per-tip contact status from tip spheres + SDF.
//! - [`force_solver`] — the contact force / contact distance optimizer.
//! - [`slide_prevention`] — confidence-based slide correction of tip targets.
//! - [`hand_ik`] — simplified articulated hand, forward/inverse kinematics.
//! - [`pipeline`] — per-frame orchestration, sequence file I/O, metrics, CLI glue.
//! - [`synthetic`] — ground-truth scenario generation and the independent
//!   force oracle used for verification.
//!
//! See the `examples/` directory for one runnable example per capability and
//! the `gripfit` binary for the batch CLI (`refine`, `eval`, `plot`, `synth`).

pub mod contact_detection;
pub mod error;
pub mod force_solver;
pub mod hand_ik;
mod lm;
pub mod object_model;
pub mod pipeline;
pub mod rigid_dynamics;
pub mod slide_prevention;
pub mod synthetic;

pub use error::{Error, Result};
