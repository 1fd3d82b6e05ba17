//! File writers for contours and sampled grids.
//!
//! * OBJ: `v` records, then `l` polylines (2D, z written as 0) or `f`
//!   triangles (3D), 1-based indices.
//! * PGM (2D grids): binary P5, row 0 is the top of the image (largest y).
//!   Values map affinely onto 0..=255; the mapping goes to a sidecar JSON.
//! * Raw (3D grids): little-endian f32, x fastest, with a sidecar JSON header.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{IsoContour, ScalarGrid};
use crate::error::{Error, Result};

/// Affine byte mapping recorded next to a PGM dump:
/// `value = lo + byte * (hi - lo) / 255`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PgmMapping {
    pub width: usize,
    pub height: usize,
    pub lo: f64,
    pub hi: f64,
    pub domain_lo: Vec<f64>,
    pub domain_hi: Vec<f64>,
}

/// Header written next to a raw 3D dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawHeader {
    pub dtype: String,
    pub endianness: String,
    pub order: String,
    pub resolution: Vec<usize>,
    pub domain_lo: Vec<f64>,
    pub domain_hi: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// Sidecar path: `frame.pgm` -> `frame.pgm.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn obj_string(contour: &IsoContour) -> String {
    let mut out = String::new();
    for v in contour.vertices().iter() {
        match v.len() {
            2 => writeln!(out, "v {} {} 0", v[0], v[1]),
            _ => writeln!(out, "v {} {} {}", v[0], v[1], v[2]),
        }
        .expect("string write");
    }
    match contour {
        IsoContour::Polylines { lines, .. } => {
            for l in lines {
                out.push('l');
                for i in l {
                    write!(out, " {}", i + 1).expect("string write");
                }
                out.push('\n');
            }
        }
        IsoContour::Mesh { faces, .. } => {
            for f in faces {
                writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).expect("string write");
            }
        }
    }
    out
}

pub fn write_obj(contour: &IsoContour, path: &Path) -> Result<()> {
    std::fs::write(path, obj_string(contour)).map_err(|e| Error::io(path, e))
}

/// Encodes a 2D grid as P5 bytes plus its value mapping. A constant grid
/// maps to all zeros with `lo == hi`.
pub fn pgm_bytes(grid: &ScalarGrid) -> Result<(Vec<u8>, PgmMapping)> {
    if grid.domain.dim() != 2 {
        return Err(Error::dim("PGM export needs a 2D grid"));
    }
    if grid.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Range("PGM export of non-finite values".into()));
    }
    let (w, h) = (grid.resolution[0], grid.resolution[1]);
    let lo = grid.values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grid.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    for row in (0..h).rev() {
        for col in 0..w {
            let v = grid.values[row * w + col];
            let b = if hi > lo { ((v - lo) / (hi - lo) * 255.0).round() } else { 0.0 };
            bytes.push(b as u8);
        }
    }
    let mapping = PgmMapping {
        width: w,
        height: h,
        lo,
        hi,
        domain_lo: grid.domain.lo().to_vec(),
        domain_hi: grid.domain.hi().to_vec(),
    };
    Ok((bytes, mapping))
}

pub fn write_pgm(grid: &ScalarGrid, path: &Path) -> Result<()> {
    let (bytes, mapping) = pgm_bytes(grid)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&mapping)?;
    std::fs::write(&side, json).map_err(|e| Error::io(side, e))
}

pub fn write_raw(grid: &ScalarGrid, path: &Path, config_hash: Option<&str>) -> Result<()> {
    let mut bytes = Vec::with_capacity(4 * grid.values.len());
    for v in &grid.values {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let header = RawHeader {
        dtype: "float32".into(),
        endianness: "little".into(),
        order: "x-fastest".into(),
        resolution: grid.resolution.clone(),
        domain_lo: grid.domain.lo().to_vec(),
        domain_hi: grid.domain.hi().to_vec(),
        config_hash: config_hash.map(str::to_owned),
    };
    let side = sidecar_path(path);
    std::fs::write(&side, serde_json::to_string_pretty(&header)?).map_err(|e| Error::io(side, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;
    use crate::geometry::marching_squares;

    #[test]
    fn obj_polyline_records() {
        let g = ScalarGrid::new(DomainSpec::unit_box(2), vec![2, 2], vec![1.0, -1.0, -1.0, -1.0]).unwrap();
        let s = obj_string(&marching_squares(&g).unwrap());
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("v ") && lines[0].ends_with(" 0"));
        assert_eq!(lines[2], "l 1 2");
    }

    #[test]
    fn pgm_header_and_mapping() {
        let g = ScalarGrid::new(DomainSpec::unit_box(2), vec![3, 2], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let (bytes, m) = pgm_bytes(&g).unwrap();
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        // Top row of the image is the largest y.
        assert_eq!(&bytes[header.len()..], &[153, 204, 255, 0, 51, 102]);
        assert_eq!((m.lo, m.hi), (0.0, 5.0));
    }

    #[test]
    fn raw_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.raw");
        let g = ScalarGrid::new(DomainSpec::unit_box(3), vec![2, 2, 2], (0..8).map(|i| i as f64 * 0.5).collect()).unwrap();
        write_raw(&g, &p, Some("abc")).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let vals: Vec<f32> = bytes.chunks(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        assert_eq!(vals, (0..8).map(|i| i as f32 * 0.5).collect::<Vec<_>>());
        let h: RawHeader = serde_json::from_str(&std::fs::read_to_string(sidecar_path(&p)).unwrap()).unwrap();
        assert_eq!(h.resolution, vec![2, 2, 2]);
        assert_eq!(h.config_hash.as_deref(), Some("abc"));
    }
}
