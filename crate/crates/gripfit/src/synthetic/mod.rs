//! Synthetic ground-truth scenarios and the independent force oracle.
//!
//! Everything here exists to verify the refinement pipeline: primitive
//! objects with closed-form geometry, scripted motions and grasp layouts,
//! deterministic tracking-error corruption, and a KKT-certified active-set
//! solver that is independent of the production optimizer.

mod generate;
mod oracle;
mod scenario;

pub use generate::{
    bake_primitive, box_sdf, generate, render_counts, sphere_sdf, GeneratedScenario,
};
pub use oracle::{qp_oracle, OracleSolution};
pub use scenario::{
    parse_scenario, read_scenario, write_scenario, GraspSpec, MotionSpec, ObjectSpec, Scenario,
    TipPerturbation,
};
