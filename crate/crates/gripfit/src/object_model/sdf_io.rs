//! On-disk SDF grid format.
//!
//! A single text header line
//!
//! ```text
//! SDF1 nx ny nz ox oy oz voxel trunc
//! ```
//!
//! followed by `nx*ny*nz` little-endian IEEE 754 f32 values, x-fastest,
//! then y, then z.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use super::grid::SdfGrid;
use crate::error::{Error, Result};

pub fn write_sdf(grid: &SdfGrid, path: &Path) -> Result<()> {
    let p = path.display().to_string();
    let file = std::fs::File::create(path).map_err(|e| Error::io(&*p, e))?;
    let mut out = BufWriter::new(file);
    let d = grid.dims();
    let o = grid.origin();
    writeln!(
        out,
        "SDF1 {} {} {} {} {} {} {} {}",
        d[0],
        d[1],
        d[2],
        o.x,
        o.y,
        o.z,
        grid.voxel_size(),
        grid.truncation()
    )
    .map_err(|e| Error::io(&*p, e))?;
    for v in grid.values() {
        out.write_all(&v.to_le_bytes()).map_err(|e| Error::io(&*p, e))?;
    }
    Ok(())
}

pub fn read_sdf(path: &Path) -> Result<SdfGrid> {
    let p = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::io(&*p, e))?;
    let mut reader = BufReader::new(file);

    // Read the header line byte-by-byte; everything after the newline is binary.
    let mut header = Vec::new();
    loop {
        let mut byte = [0u8; 1];
        reader
            .read_exact(&mut byte)
            .map_err(|e| Error::io(&*p, e))?;
        if byte[0] == b'\n' {
            break;
        }
        header.push(byte[0]);
        if header.len() > 4096 {
            return Err(Error::parse(&p, 1, "header line too long"));
        }
    }
    let header = String::from_utf8(header).map_err(|_| Error::parse(&p, 1, "non-utf8 header"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 9 || fields[0] != "SDF1" {
        return Err(Error::parse(
            &p,
            1,
            "expected `SDF1 nx ny nz ox oy oz voxel trunc`",
        ));
    }
    let dim = |s: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|e| Error::parse(&p, 1, format!("bad dimension `{s}`: {e}")))
    };
    let num = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|e| Error::parse(&p, 1, format!("bad number `{s}`: {e}")))
    };
    let dims = [dim(fields[1])?, dim(fields[2])?, dim(fields[3])?];
    let origin = Vector3::new(num(fields[4])?, num(fields[5])?, num(fields[6])?);
    let voxel = num(fields[7])?;
    let trunc = num(fields[8])?;

    let count = dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .ok_or_else(|| Error::parse(&p, 1, "dimension overflow"))?;
    let mut raw = vec![0u8; count * 4];
    reader.read_exact(&mut raw).map_err(|e| Error::io(&*p, e))?;
    let values: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    SdfGrid::new(dims, origin, voxel, trunc, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_everything() {
        let grid = SdfGrid::from_fn(
            [5, 6, 7],
            Vector3::new(-0.01, 0.02, -0.03),
            0.002,
            0.01,
            |p| p.norm() - 0.05,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.sdf");
        write_sdf(&grid, &path).unwrap();
        let back = read_sdf(&path).unwrap();
        assert_eq!(back.dims(), grid.dims());
        assert_eq!(back.origin(), grid.origin());
        assert_eq!(back.voxel_size(), grid.voxel_size());
        assert_eq!(back.truncation(), grid.truncation());
        assert_eq!(back.values(), grid.values());
    }

    #[test]
    fn bad_header_is_reported_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.sdf");
        std::fs::write(&path, b"SDF9 1 2\n").unwrap();
        let err = read_sdf(&path).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn truncated_payload_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.sdf");
        std::fs::write(&path, b"SDF1 2 2 2 0 0 0 0.01 0.01\n\x00\x00").unwrap();
        assert!(read_sdf(&path).is_err());
    }
}
