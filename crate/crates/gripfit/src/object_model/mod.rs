//! Canonical object representation: signed distance grid, surface mesh,
//! rigid pose, and inherent physical attributes.
//!
//! All types here are immutable after construction and cheap to share across
//! threads; the operations are pure functions.

mod bake;
mod grid;
mod mesh;
mod pose;
mod properties;
mod sdf_io;
mod surface;

pub use bake::bake_sdf;
pub use grid::{SdfGrid, SdfSample};
pub use mesh::{parse_obj, read_obj, write_obj, SurfaceMesh};
pub use pose::RigidPose;
pub(crate) use pose::vec3_array;
pub use properties::{compute_physical_properties, PhysicalProperties};
pub use sdf_io::{read_sdf, write_sdf};
pub use surface::extract_surface;

use std::path::Path;

use crate::error::Result;

/// Default grid resolution used when baking object meshes, meters.
pub const DEFAULT_VOXEL_SIZE: f64 = 0.002;
/// Default signed-distance truncation, meters.
pub const DEFAULT_TRUNCATION: f64 = 0.01;
/// Default grid padding beyond the mesh bounds, meters.
pub const DEFAULT_PADDING: f64 = 0.02;

/// The full canonical object model used by the refinement pipeline.
#[derive(Debug, Clone)]
pub struct SdfObject {
    pub grid: SdfGrid,
    pub mesh: SurfaceMesh,
    pub properties: PhysicalProperties,
}

impl SdfObject {
    /// Bundle a grid with its extracted surface and mass properties.
    pub fn from_grid(grid: SdfGrid, mass: f64) -> Result<Self> {
        let mesh = extract_surface(&grid)?;
        let properties = compute_physical_properties(&mesh, mass)?;
        Ok(Self {
            grid,
            mesh,
            properties,
        })
    }

    /// Load either a baked `.sdf` grid or a triangle `.obj` mesh (baked with
    /// the default grid parameters).
    pub fn load(path: &Path, mass: f64) -> Result<Self> {
        let is_obj = path
            .extension()
            .map(|e| e.eq_ignore_ascii_case("obj"))
            .unwrap_or(false);
        let grid = if is_obj {
            let mesh = read_obj(path)?;
            bake_sdf(&mesh, DEFAULT_VOXEL_SIZE, DEFAULT_TRUNCATION, DEFAULT_PADDING)?
        } else {
            read_sdf(path)?
        };
        Self::from_grid(grid, mass)
    }
}
