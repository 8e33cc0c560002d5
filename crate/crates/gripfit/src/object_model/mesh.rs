//! Triangle surface mesh in canonical object space.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Indexed triangle mesh with per-vertex outward normals.
#[derive(Debug, Clone, Default)]
pub struct SurfaceMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub normals: Vec<Vector3<f64>>,
    pub triangles: Vec<[u32; 3]>,
}

impl SurfaceMesh {
    /// Validate index bounds and normal lengths.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::Parameter(format!(
                    "triangle {t} references vertex out of range"
                )));
            }
        }
        if !self.normals.is_empty() && self.normals.len() != self.vertices.len() {
            return Err(Error::Parameter(
                "normal count does not match vertex count".into(),
            ));
        }
        for (i, nrm) in self.normals.iter().enumerate() {
            if (nrm.norm() - 1.0).abs() > 1e-6 {
                return Err(Error::Parameter(format!("normal {i} is not unit length")));
            }
        }
        Ok(())
    }

    /// Check that every directed edge is matched by exactly one reverse edge,
    /// i.e. the mesh is closed and consistently oriented.
    pub fn check_closed(&self) -> Result<()> {
        if self.triangles.is_empty() {
            return Err(Error::OpenSurface("mesh has no triangles".into()));
        }
        let mut directed: HashMap<(u32, u32), usize> = HashMap::new();
        for tri in &self.triangles {
            for e in 0..3 {
                let a = tri[e];
                let b = tri[(e + 1) % 3];
                if a == b {
                    return Err(Error::OpenSurface("degenerate edge in triangle".into()));
                }
                *directed.entry((a, b)).or_insert(0) += 1;
            }
        }
        for (&(a, b), &count) in &directed {
            if count != 1 {
                return Err(Error::OpenSurface(format!(
                    "edge ({a},{b}) used {count} times"
                )));
            }
            if !directed.contains_key(&(b, a)) {
                return Err(Error::OpenSurface(format!("edge ({a},{b}) has no mate")));
            }
        }
        Ok(())
    }

    pub fn aabb(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let first = *self.vertices.first()?;
        let mut lo = first;
        let mut hi = first;
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        Some((lo, hi))
    }

    pub fn total_area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let a = self.vertices[t[0] as usize];
                let b = self.vertices[t[1] as usize];
                let c = self.vertices[t[2] as usize];
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .sum()
    }

    /// Closed axis-aligned box centered at the origin, 12 triangles with
    /// outward orientation.
    pub fn axis_aligned_box(half_extents: Vector3<f64>) -> Self {
        let h = half_extents;
        let vertices = vec![
            Vector3::new(-h.x, -h.y, -h.z),
            Vector3::new(h.x, -h.y, -h.z),
            Vector3::new(h.x, h.y, -h.z),
            Vector3::new(-h.x, h.y, -h.z),
            Vector3::new(-h.x, -h.y, h.z),
            Vector3::new(h.x, -h.y, h.z),
            Vector3::new(h.x, h.y, h.z),
            Vector3::new(-h.x, h.y, h.z),
        ];
        let triangles = vec![
            // bottom (z = -h), outward -z
            [0, 2, 1],
            [0, 3, 2],
            // top (z = +h), outward +z
            [4, 5, 6],
            [4, 6, 7],
            // front (y = -h)
            [0, 1, 5],
            [0, 5, 4],
            // right (x = +h)
            [1, 2, 6],
            [1, 6, 5],
            // back (y = +h)
            [2, 3, 7],
            [2, 7, 6],
            // left (x = -h)
            [3, 0, 4],
            [3, 4, 7],
        ];
        let normals = vertices.iter().map(|v| v.normalize()).collect();
        Self {
            vertices,
            normals,
            triangles,
        }
    }

    /// Closed UV sphere with `rings` latitude bands and `segments` longitude
    /// steps; radial normals.
    pub fn uv_sphere(radius: f64, rings: usize, segments: usize) -> Self {
        assert!(rings >= 2 && segments >= 3);
        let mut vertices = vec![Vector3::new(0.0, 0.0, radius)];
        for ring in 1..rings {
            let theta = std::f64::consts::PI * ring as f64 / rings as f64;
            for seg in 0..segments {
                let phi = 2.0 * std::f64::consts::PI * seg as f64 / segments as f64;
                vertices.push(Vector3::new(
                    radius * theta.sin() * phi.cos(),
                    radius * theta.sin() * phi.sin(),
                    radius * theta.cos(),
                ));
            }
        }
        vertices.push(Vector3::new(0.0, 0.0, -radius));
        let south = (vertices.len() - 1) as u32;

        let idx = |ring: usize, seg: usize| -> u32 { (1 + (ring - 1) * segments + seg % segments) as u32 };
        let mut triangles = Vec::new();
        for seg in 0..segments {
            triangles.push([0, idx(1, seg), idx(1, seg + 1)]);
        }
        for ring in 1..rings - 1 {
            for seg in 0..segments {
                let a = idx(ring, seg);
                let b = idx(ring, seg + 1);
                let c = idx(ring + 1, seg);
                let d = idx(ring + 1, seg + 1);
                triangles.push([a, c, d]);
                triangles.push([a, d, b]);
            }
        }
        for seg in 0..segments {
            triangles.push([south, idx(rings - 1, seg + 1), idx(rings - 1, seg)]);
        }

        let normals = vertices.iter().map(|v| v.normalize()).collect();
        Self {
            vertices,
            normals,
            triangles,
        }
    }
}

/// Read a Wavefront OBJ file. Units are meters; only triangular faces are
/// accepted (quads and larger polygons are rejected).
pub fn read_obj(path: &Path) -> Result<SurfaceMesh> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = BufReader::new(file);
    parse_obj(reader, &path.display().to_string())
}

pub fn parse_obj(reader: impl BufRead, path: &str) -> Result<SurfaceMesh> {
    let mut mesh = SurfaceMesh::default();
    let mut raw_normals: Vec<Vector3<f64>> = Vec::new();
    let mut normal_of_vertex: HashMap<u32, u32> = HashMap::new();

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(path.to_string(), e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let coords: Vec<f64> = parts
                    .take(3)
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::parse(path, lineno, format!("bad vertex: {e}")))?;
                if coords.len() != 3 {
                    return Err(Error::parse(path, lineno, "vertex needs 3 coordinates"));
                }
                mesh.vertices
                    .push(Vector3::new(coords[0], coords[1], coords[2]));
            }
            Some("vn") => {
                let coords: Vec<f64> = parts
                    .take(3)
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::parse(path, lineno, format!("bad normal: {e}")))?;
                if coords.len() != 3 {
                    return Err(Error::parse(path, lineno, "normal needs 3 coordinates"));
                }
                raw_normals.push(Vector3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let refs: Vec<&str> = parts.collect();
                if refs.len() != 3 {
                    return Err(Error::parse(
                        path,
                        lineno,
                        format!("face with {} vertices; triangles only", refs.len()),
                    ));
                }
                let mut tri = [0u32; 3];
                for (slot, r) in refs.iter().enumerate() {
                    let mut fields = r.split('/');
                    let v_idx: usize = fields
                        .next()
                        .unwrap()
                        .parse()
                        .map_err(|e| Error::parse(path, lineno, format!("bad face index: {e}")))?;
                    if v_idx == 0 || v_idx > mesh.vertices.len() {
                        return Err(Error::parse(
                            path,
                            lineno,
                            format!("face index {v_idx} out of range"),
                        ));
                    }
                    tri[slot] = (v_idx - 1) as u32;
                    // optional texture index slot, then normal index
                    let _ = fields.next();
                    if let Some(n) = fields.next() {
                        if !n.is_empty() {
                            let n_idx: usize = n.parse().map_err(|e| {
                                Error::parse(path, lineno, format!("bad normal index: {e}"))
                            })?;
                            if n_idx == 0 || n_idx > raw_normals.len() {
                                return Err(Error::parse(
                                    path,
                                    lineno,
                                    format!("normal index {n_idx} out of range"),
                                ));
                            }
                            normal_of_vertex.insert(tri[slot], (n_idx - 1) as u32);
                        }
                    }
                }
                mesh.triangles.push(tri);
            }
            _ => {} // ignore groups, materials, etc.
        }
    }

    if !normal_of_vertex.is_empty() {
        mesh.normals = (0..mesh.vertices.len() as u32)
            .map(|v| {
                normal_of_vertex
                    .get(&v)
                    .map(|&n| raw_normals[n as usize])
                    .unwrap_or_else(Vector3::z)
                    .normalize()
            })
            .collect();
    }

    mesh.validate()?;
    Ok(mesh)
}

/// Write a mesh as Wavefront OBJ (vertices, normals if present, faces).
pub fn write_obj(mesh: &SurfaceMesh, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?,
    );
    let io_err = |e| Error::io(path.display().to_string(), e);
    for v in &mesh.vertices {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z).map_err(io_err)?;
    }
    for n in &mesh.normals {
        writeln!(out, "vn {} {} {}", n.x, n.y, n.z).map_err(io_err)?;
    }
    let with_normals = mesh.normals.len() == mesh.vertices.len();
    for t in &mesh.triangles {
        if with_normals {
            writeln!(
                out,
                "f {}//{} {}//{} {}//{}",
                t[0] + 1,
                t[0] + 1,
                t[1] + 1,
                t[1] + 1,
                t[2] + 1,
                t[2] + 1
            )
            .map_err(io_err)?;
        } else {
            writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).map_err(io_err)?;
        }
    }
    Ok(())
}
