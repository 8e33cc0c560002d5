//! Dense truncated signed distance grid with trilinear sampling.
//!
//! Sign convention: negative inside the object, positive outside, so the
//! outward surface normal is `+∇d`. Values are clamped to `±truncation`.

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// One sampled SDF value with its trilinear-interpolant gradient.
#[derive(Debug, Clone, Copy)]
pub struct SdfSample {
    /// Interpolated signed distance, meters.
    pub distance: f64,
    /// Analytic gradient of the trilinear interpolant at the query point.
    pub gradient: Vector3<f64>,
    /// True when the query point was outside the grid and clamped to it.
    pub clamped: bool,
}

/// Truncated signed distance values on a regular grid.
///
/// Storage is x-fastest, then y, then z: `values[ix + nx*(iy + ny*iz)]`,
/// matching the on-disk layout. Node `(i,j,k)` sits at
/// `origin + voxel_size * (i,j,k)`.
#[derive(Debug, Clone)]
pub struct SdfGrid {
    dims: [usize; 3],
    origin: Vector3<f64>,
    voxel_size: f64,
    truncation: f64,
    values: Vec<f32>,
}

impl SdfGrid {
    /// Wrap raw node values. Values are clamped to `±truncation`.
    pub fn new(
        dims: [usize; 3],
        origin: Vector3<f64>,
        voxel_size: f64,
        truncation: f64,
        mut values: Vec<f32>,
    ) -> Result<Self> {
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::Parameter(format!(
                "grid dims {dims:?} must all be >= 2"
            )));
        }
        if !(voxel_size > 0.0) {
            return Err(Error::Parameter(format!("voxel_size {voxel_size} <= 0")));
        }
        if !(truncation > 0.0) {
            return Err(Error::Parameter(format!("truncation {truncation} <= 0")));
        }
        let expected = dims[0] * dims[1] * dims[2];
        if values.len() != expected {
            return Err(Error::Parameter(format!(
                "value count {} does not match dims {:?} ({} nodes)",
                values.len(),
                dims,
                expected
            )));
        }
        let t = truncation as f32;
        for v in &mut values {
            if !v.is_finite() {
                return Err(Error::Parameter("non-finite SDF value".into()));
            }
            *v = v.clamp(-t, t);
        }
        Ok(Self {
            dims,
            origin,
            voxel_size,
            truncation,
            values,
        })
    }

    /// Evaluate `f` at every node of a grid covering `[origin, origin + voxel*(dims-1)]`.
    pub fn from_fn(
        dims: [usize; 3],
        origin: Vector3<f64>,
        voxel_size: f64,
        truncation: f64,
        f: impl Fn(Vector3<f64>) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let p = origin
                        + voxel_size * Vector3::new(i as f64, j as f64, k as f64);
                    values.push(f(p) as f32);
                }
            }
        }
        Self::new(dims, origin, voxel_size, truncation, values)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn origin(&self) -> Vector3<f64> {
        self.origin
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Position of the last node along each axis.
    pub fn max_corner(&self) -> Vector3<f64> {
        self.origin
            + self.voxel_size
                * Vector3::new(
                    (self.dims[0] - 1) as f64,
                    (self.dims[1] - 1) as f64,
                    (self.dims[2] - 1) as f64,
                )
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn node_value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.node_index(i, j, k)] as f64
    }

    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.origin + self.voxel_size * Vector3::new(i as f64, j as f64, k as f64)
    }

    /// Trilinear interpolation of the stored distance plus the interpolant's
    /// analytic gradient.
    ///
    /// Out-of-bounds queries are clamped to the grid boundary and flagged in
    /// the returned sample; callers that care (contact extraction) treat
    /// clamped samples as unusable.
    pub fn sample(&self, x: &Vector3<f64>) -> SdfSample {
        let h = self.voxel_size;
        let local = (x - self.origin) / h;

        let mut clamped = false;
        let mut cell = [0usize; 3];
        let mut frac = [0f64; 3];
        for a in 0..3 {
            let max = (self.dims[a] - 1) as f64;
            let mut l = local[a];
            if l < 0.0 {
                l = 0.0;
                clamped = true;
            } else if l > max {
                l = max;
                clamped = true;
            }
            let i = (l.floor() as usize).min(self.dims[a] - 2);
            cell[a] = i;
            frac[a] = l - i as f64;
        }

        let (i, j, k) = (cell[0], cell[1], cell[2]);
        let (u, v, w) = (frac[0], frac[1], frac[2]);
        let c000 = self.node_value(i, j, k);
        let c100 = self.node_value(i + 1, j, k);
        let c010 = self.node_value(i, j + 1, k);
        let c110 = self.node_value(i + 1, j + 1, k);
        let c001 = self.node_value(i, j, k + 1);
        let c101 = self.node_value(i + 1, j, k + 1);
        let c011 = self.node_value(i, j + 1, k + 1);
        let c111 = self.node_value(i + 1, j + 1, k + 1);

        let c00 = c000 * (1.0 - u) + c100 * u;
        let c10 = c010 * (1.0 - u) + c110 * u;
        let c01 = c001 * (1.0 - u) + c101 * u;
        let c11 = c011 * (1.0 - u) + c111 * u;
        let c0 = c00 * (1.0 - v) + c10 * v;
        let c1 = c01 * (1.0 - v) + c11 * v;
        let distance = c0 * (1.0 - w) + c1 * w;

        let ddx = (((c100 - c000) * (1.0 - v) + (c110 - c010) * v) * (1.0 - w)
            + ((c101 - c001) * (1.0 - v) + (c111 - c011) * v) * w)
            / h;
        let ddy = (((c010 - c000) * (1.0 - u) + (c110 - c100) * u) * (1.0 - w)
            + ((c011 - c001) * (1.0 - u) + (c111 - c101) * u) * w)
            / h;
        let ddz = (((c001 - c000) * (1.0 - u) + (c101 - c100) * u) * (1.0 - v)
            + ((c011 - c010) * (1.0 - u) + (c111 - c110) * u) * v)
            / h;

        SdfSample {
            distance,
            gradient: Vector3::new(ddx, ddy, ddz),
            clamped,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sphere_grid(r: f64) -> SdfGrid {
        // Spans ±0.12 m: covers the r=0.1 sphere plus the truncation band.
        SdfGrid::from_fn(
            [121, 121, 121],
            Vector3::new(-0.12, -0.12, -0.12),
            0.002,
            0.01,
            |p| p.norm() - r,
        )
        .unwrap()
    }

    #[test]
    fn node_query_returns_stored_value() {
        let grid = sphere_grid(0.1);
        let p = grid.node_position(10, 20, 30);
        let s = grid.sample(&p);
        assert_eq!(s.distance, grid.node_value(10, 20, 30));
        assert!(!s.clamped);
    }

    #[test]
    fn sphere_gradient_points_radially() {
        let grid = sphere_grid(0.1);
        // On the +z axis outside the sphere but inside the truncation band.
        // The query sits on a lattice plane, so the trilinear gradient carries
        // a half-voxel lateral bias of order h/(2r); allow for it.
        let s = grid.sample(&Vector3::new(0.0, 0.0, 0.105));
        let g = s.gradient.normalize();
        let angle = g.dot(&Vector3::z()).clamp(-1.0, 1.0).acos();
        assert!(angle < 0.02, "gradient tilts {angle} rad off +z: {g:?}");
    }

    #[test]
    fn out_of_bounds_is_clamped_and_flagged() {
        let grid = sphere_grid(0.1);
        let s = grid.sample(&Vector3::new(10.0, 0.0, 0.0));
        assert!(s.clamped);
        assert!(s.distance.is_finite());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let grid = sphere_grid(0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = grid.voxel_size();
        let step = 0.05 * h;
        let mut checked = 0;
        while checked < 100 {
            // Pick a point well inside one cell so both FD probes stay in it.
            let i = rng.gen_range(1..grid.dims()[0] - 2);
            let j = rng.gen_range(1..grid.dims()[1] - 2);
            let k = rng.gen_range(1..grid.dims()[2] - 2);
            let frac = Vector3::new(
                rng.gen_range(0.3..0.7),
                rng.gen_range(0.3..0.7),
                rng.gen_range(0.3..0.7),
            );
            let p = grid.node_position(i, j, k) + h * frac;
            let s = grid.sample(&p);
            if s.gradient.norm() < 0.1 {
                continue; // deep in the truncated region, gradient is flat
            }
            for axis in 0..3 {
                let mut dp = Vector3::zeros();
                dp[axis] = step;
                let fd = (grid.sample(&(p + dp)).distance - grid.sample(&(p - dp)).distance)
                    / (2.0 * step);
                let rel = (fd - s.gradient[axis]).abs() / s.gradient.norm().max(1e-9);
                assert!(rel < 1e-3, "axis {axis}: fd {fd} vs {}", s.gradient[axis]);
            }
            checked += 1;
        }
    }

    #[test]
    fn interpolation_is_continuous_across_cell_boundaries() {
        let grid = sphere_grid(0.1);
        // Straddle the boundary plane between two cells.
        let p = grid.node_position(31, 30, 30);
        let eps = 1e-10;
        let left = grid.sample(&(p - Vector3::new(eps, 0.0, 0.0))).distance;
        let right = grid.sample(&(p + Vector3::new(eps, 0.0, 0.0))).distance;
        assert_relative_eq!(left, right, epsilon = 1e-7);
    }

    #[test]
    fn rejects_bad_dims_and_sizes() {
        assert!(SdfGrid::new([1, 4, 4], Vector3::zeros(), 0.01, 0.01, vec![0.0; 16]).is_err());
        assert!(SdfGrid::new([2, 2, 2], Vector3::zeros(), 0.0, 0.01, vec![0.0; 8]).is_err());
        assert!(SdfGrid::new([2, 2, 2], Vector3::zeros(), 0.01, -1.0, vec![0.0; 8]).is_err());
        assert!(SdfGrid::new([2, 2, 2], Vector3::zeros(), 0.01, 0.01, vec![0.0; 7]).is_err());
    }

    #[test]
    fn values_are_clamped_to_truncation() {
        let grid = SdfGrid::new(
            [2, 2, 2],
            Vector3::zeros(),
            0.01,
            0.05,
            vec![1.0, -1.0, 0.02, -0.02, 1.0, -1.0, 0.02, -0.02],
        )
        .unwrap();
        for v in grid.values() {
            assert!(v.abs() <= 0.05);
        }
    }
}
