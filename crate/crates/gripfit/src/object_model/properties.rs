//! Inherent physical attributes of the object: mass, center of mass, inertia.
//!
//! The object is treated as hollow with its mass spread uniformly over the
//! surface vertices, so the center of mass is the plain vertex mean and the
//! inertia tensor is the vertex-sum point-mass tensor about it.

use nalgebra::{Matrix3, Vector3};

use super::mesh::SurfaceMesh;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct PhysicalProperties {
    /// Total mass, kg.
    pub mass: f64,
    /// Center of mass in canonical space, meters.
    pub center_of_mass: Vector3<f64>,
    /// Inertia tensor about the center of mass, canonical axes, kg·m².
    pub inertia: Matrix3<f64>,
}

/// Compute mass properties from the mesh vertex set.
///
/// `center = mean(v_k)`, `I = (m/N) Σ (‖r_k‖² I₃ − r_k r_kᵀ)` with
/// `r_k = v_k − center`.
pub fn compute_physical_properties(mesh: &SurfaceMesh, mass: f64) -> Result<PhysicalProperties> {
    if mesh.vertices.is_empty() {
        return Err(Error::Parameter("mesh has no vertices".into()));
    }
    if !(mass > 0.0) {
        return Err(Error::Parameter(format!("mass {mass} must be positive")));
    }
    let n = mesh.vertices.len() as f64;
    let center: Vector3<f64> = mesh.vertices.iter().sum::<Vector3<f64>>() / n;

    let mut accum = Matrix3::zeros();
    for v in &mesh.vertices {
        let r = v - center;
        accum += r.norm_squared() * Matrix3::identity() - r * r.transpose();
    }
    let inertia = (mass / n) * accum;

    Ok(PhysicalProperties {
        mass,
        center_of_mass: center,
        inertia,
    })
}
