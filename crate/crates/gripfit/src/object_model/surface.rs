//! Zero-isosurface extraction from a signed distance grid (marching cubes).
//!
//! Vertices are zero crossings on cube edges, deduplicated across cells.
//! Instead of the classic 256-case table, each cell's polygons are built by
//! running marching squares on the six cell faces and stitching the face
//! segments into closed loops; the face rule (with a center-sign decider for
//! the ambiguous case) is evaluated identically from both cells sharing a
//! face, so the mesh is crack-free. Triangle orientation follows the SDF
//! gradient, normals are the normalized gradient.

use std::collections::HashMap;

use nalgebra::Vector3;

use super::grid::SdfGrid;
use super::mesh::SurfaceMesh;
use crate::error::{Error, Result};

/// Cube faces as cyclic corner quads. Corner bit layout: bit0 = +x,
/// bit1 = +y, bit2 = +z.
const FACES: [[usize; 4]; 6] = [
    [0, 2, 6, 4], // x = 0
    [1, 3, 7, 5], // x = 1
    [0, 1, 5, 4], // y = 0
    [2, 3, 7, 6], // y = 1
    [0, 1, 3, 2], // z = 0
    [4, 5, 7, 6], // z = 1
];

/// Extract the `d = 0` isosurface of `grid` as a triangle mesh.
///
/// Errors with `EmptySurface` when the grid contains no sign change.
pub fn extract_surface(grid: &SdfGrid) -> Result<SurfaceMesh> {
    let dims = grid.dims();
    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    // Crossing vertices keyed by the global node pair of their cube edge.
    let mut edge_vertex: HashMap<(usize, usize), u32> = HashMap::new();

    let corner_offset = |c: usize| -> (usize, usize, usize) { (c & 1, (c >> 1) & 1, (c >> 2) & 1) };

    for k in 0..dims[2] - 1 {
        for j in 0..dims[1] - 1 {
            for i in 0..dims[0] - 1 {
                let mut values = [0.0f64; 8];
                let mut nodes = [0usize; 8];
                let mut positions = [Vector3::zeros(); 8];
                let mut any_neg = false;
                let mut any_pos = false;
                for c in 0..8 {
                    let (di, dj, dk) = corner_offset(c);
                    let (ci, cj, ck) = (i + di, j + dj, k + dk);
                    values[c] = grid.node_value(ci, cj, ck);
                    nodes[c] = grid.node_index(ci, cj, ck);
                    positions[c] = grid.node_position(ci, cj, ck);
                    if values[c] < 0.0 {
                        any_neg = true;
                    } else {
                        any_pos = true;
                    }
                }
                if !(any_neg && any_pos) {
                    continue;
                }

                polygonize_cell(
                    grid,
                    &values,
                    &nodes,
                    &positions,
                    &mut vertices,
                    &mut triangles,
                    &mut edge_vertex,
                );
            }
        }
    }

    if triangles.is_empty() {
        return Err(Error::EmptySurface);
    }

    // Normals from the SDF gradient; fall back to averaged face normals where
    // the gradient degenerates (flat truncated regions should never reach here).
    let mut face_accum = vec![Vector3::zeros(); vertices.len()];
    for t in &triangles {
        let a = vertices[t[0] as usize];
        let b = vertices[t[1] as usize];
        let c = vertices[t[2] as usize];
        let n = (b - a).cross(&(c - a));
        for &v in t {
            face_accum[v as usize] += n;
        }
    }
    let mut normals = vec![Vector3::zeros(); vertices.len()];
    for (v, out) in normals.iter_mut().enumerate() {
        let g = grid.sample(&vertices[v]).gradient;
        *out = if g.norm() > 1e-9 {
            g.normalize()
        } else if face_accum[v].norm() > 1e-18 {
            face_accum[v].normalize()
        } else {
            Vector3::z()
        };
    }

    let mesh = SurfaceMesh {
        vertices,
        normals,
        triangles,
    };
    mesh.validate()?;
    Ok(mesh)
}

#[allow(clippy::too_many_arguments)]
fn polygonize_cell(
    grid: &SdfGrid,
    values: &[f64; 8],
    nodes: &[usize; 8],
    positions: &[Vector3<f64>; 8],
    vertices: &mut Vec<Vector3<f64>>,
    triangles: &mut Vec<[u32; 3]>,
    edge_vertex: &mut HashMap<(usize, usize), u32>,
) {
    let inside = |c: usize| values[c] < 0.0;

    let mut crossing = |a: usize, b: usize| -> u32 {
        let key = if nodes[a] < nodes[b] {
            (nodes[a], nodes[b])
        } else {
            (nodes[b], nodes[a])
        };
        *edge_vertex.entry(key).or_insert_with(|| {
            let (va, vb) = (values[a], values[b]);
            let t = va / (va - vb);
            let p = positions[a] + t * (positions[b] - positions[a]);
            vertices.push(p);
            (vertices.len() - 1) as u32
        })
    };

    // Marching squares on each face: segments between crossing vertices.
    let mut segments: Vec<(u32, u32)> = Vec::new();
    for face in &FACES {
        let mut slots: Vec<(usize, u32)> = Vec::new(); // (perimeter slot, vertex)
        for s in 0..4 {
            let a = face[s];
            let b = face[(s + 1) % 4];
            if inside(a) != inside(b) {
                slots.push((s, crossing(a, b)));
            }
        }
        match slots.len() {
            0 => {}
            2 => segments.push((slots[0].1, slots[1].1)),
            4 => {
                // Ambiguous face: both diagonals crossed. Decide by the face
                // center's sign; isolate the corners whose sign differs from
                // the center. Slots are 0..3 in perimeter order; the corner
                // between slot s and slot s+1 is face[s+1].
                let center = 0.25 * face.iter().map(|&c| values[c]).sum::<f64>();
                let center_inside = center < 0.0;
                // Corner between slot 0 and slot 1:
                let corner01_inside = inside(face[1]);
                if corner01_inside != center_inside {
                    segments.push((slots[0].1, slots[1].1));
                    segments.push((slots[2].1, slots[3].1));
                } else {
                    segments.push((slots[1].1, slots[2].1));
                    segments.push((slots[3].1, slots[0].1));
                }
            }
            _ => unreachable!("odd crossing count on a cyclic quad"),
        }
    }
    if segments.is_empty() {
        return;
    }

    // Stitch segments into closed loops; every crossing vertex has exactly
    // two incident segments within the cell.
    let mut adjacency: HashMap<u32, Vec<u32>> = HashMap::new();
    for &(a, b) in &segments {
        adjacency.entry(a).or_default().push(b);
        adjacency.entry(b).or_default().push(a);
    }
    let mut visited: HashMap<u32, bool> = HashMap::new();
    for &(start, _) in &segments {
        if *visited.get(&start).unwrap_or(&false) {
            continue;
        }
        let mut loop_vertices = vec![start];
        visited.insert(start, true);
        let mut current = start;
        let mut previous: Option<u32> = None;
        loop {
            let next = adjacency[&current]
                .iter()
                .copied()
                .find(|&n| Some(n) != previous && !*visited.get(&n).unwrap_or(&false));
            match next {
                Some(n) => {
                    visited.insert(n, true);
                    loop_vertices.push(n);
                    previous = Some(current);
                    current = n;
                }
                None => break,
            }
        }
        if loop_vertices.len() < 3 {
            continue;
        }

        // Orient the whole loop once (Newell normal against the SDF gradient
        // at the loop centroid): per-triangle decisions could disagree within
        // one fan and break the closed-surface pairing of directed edges.
        let mut newell = Vector3::zeros();
        let mut centroid = Vector3::zeros();
        for w in 0..loop_vertices.len() {
            let a = vertices[loop_vertices[w] as usize];
            let b = vertices[loop_vertices[(w + 1) % loop_vertices.len()] as usize];
            newell += a.cross(&b);
            centroid += a;
        }
        centroid /= loop_vertices.len() as f64;
        if newell.dot(&grid.sample(&centroid).gradient) < 0.0 {
            loop_vertices.reverse();
        }

        for w in 1..loop_vertices.len() - 1 {
            triangles.push([loop_vertices[0], loop_vertices[w], loop_vertices[w + 1]]);
        }
    }
}
