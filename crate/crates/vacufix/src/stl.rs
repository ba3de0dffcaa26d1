//! STL reading and writing.
//!
//! Supports ASCII and binary STL (little-endian, 80-byte header, 50-byte
//! triangle records). Coordinates are interpreted as millimeters. Vertices
//! are welded on exact coordinate equality so shared edges become shared
//! indices; CAD exporters repeat identical float values for coincident
//! corners, which is what makes mesh-wide edge bookkeeping possible at all.

use std::collections::HashMap;
use std::fs;
use std::io::{Error as IoError, ErrorKind};
use std::path::Path;

use nalgebra::Point3;

use crate::error::{Error, Result};

const BINARY_HEADER_LEN: usize = 80;
const BINARY_RECORD_LEN: usize = 50;

/// Indexed triangle soup as read from disk, before any validation.
#[derive(Debug, Clone)]
pub struct RawMesh {
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[u32; 3]>,
}

/// Reads an STL file, auto-detecting ASCII vs binary.
pub fn read_stl(path: &Path) -> Result<RawMesh> {
    let bytes = fs::read(path).map_err(|source| Error::UnreadableFile {
        path: path.display().to_string(),
        source,
    })?;
    parse_stl(&bytes).map_err(|source| {
        if let Some(marker) = source.get_ref().and_then(|e| e.downcast_ref::<TruncatedMarker>()) {
            return Error::TruncatedBinary {
                declared: marker.declared,
                actual: marker.actual,
            };
        }
        Error::UnreadableFile {
            path: path.display().to_string(),
            source,
        }
    })
}

/// Parses STL bytes. Exposed separately so tests can feed in-memory data.
pub fn parse_stl(bytes: &[u8]) -> std::result::Result<RawMesh, IoError> {
    if looks_ascii(bytes) {
        parse_ascii(bytes)
    } else {
        parse_binary(bytes)
    }
}

fn looks_ascii(bytes: &[u8]) -> bool {
    // A binary file can also start with "solid"; require the ASCII keyword
    // "facet" somewhere in the first kilobyte to accept the text path.
    let head = &bytes[..bytes.len().min(1024)];
    let text = String::from_utf8_lossy(head);
    text.trim_start().starts_with("solid") && text.contains("facet")
}

fn parse_ascii(bytes: &[u8]) -> std::result::Result<RawMesh, IoError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| IoError::new(ErrorKind::InvalidData, format!("not UTF-8: {e}")))?;
    let mut welder = Welder::default();
    let mut corners: Vec<u32> = Vec::with_capacity(3);
    let mut triangles = Vec::new();
    for line in text.lines() {
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("vertex") => {
                let mut coord = [0.0f64; 3];
                for c in &mut coord {
                    let tok = tokens.next().ok_or_else(|| {
                        IoError::new(ErrorKind::InvalidData, "vertex line with fewer than 3 coords")
                    })?;
                    *c = tok.parse::<f64>().map_err(|e| {
                        IoError::new(ErrorKind::InvalidData, format!("bad coordinate {tok:?}: {e}"))
                    })?;
                }
                corners.push(welder.intern(Point3::new(coord[0], coord[1], coord[2])));
            }
            Some("endfacet") => {
                if corners.len() != 3 {
                    return Err(IoError::new(
                        ErrorKind::InvalidData,
                        format!("facet with {} vertices", corners.len()),
                    ));
                }
                triangles.push([corners[0], corners[1], corners[2]]);
                corners.clear();
            }
            _ => {}
        }
    }
    Ok(RawMesh {
        vertices: welder.vertices,
        triangles,
    })
}

fn parse_binary(bytes: &[u8]) -> std::result::Result<RawMesh, IoError> {
    if bytes.len() < BINARY_HEADER_LEN + 4 {
        return Err(IoError::new(ErrorKind::InvalidData, "binary STL shorter than header"));
    }
    let declared = u32::from_le_bytes(bytes[80..84].try_into().unwrap());
    let payload = &bytes[84..];
    let actual = (payload.len() / BINARY_RECORD_LEN) as u32;
    if actual < declared {
        // Promoted to Error::TruncatedBinary by the caller.
        return Err(IoError::new(
            ErrorKind::UnexpectedEof,
            TruncatedMarker { declared, actual },
        ));
    }
    let mut welder = Welder::default();
    let mut triangles = Vec::with_capacity(declared as usize);
    for i in 0..declared as usize {
        let rec = &payload[i * BINARY_RECORD_LEN..(i + 1) * BINARY_RECORD_LEN];
        // 12 bytes of facet normal ignored; geometry defines orientation.
        let mut tri = [0u32; 3];
        for (k, t) in tri.iter_mut().enumerate() {
            let off = 12 + k * 12;
            let x = f32::from_le_bytes(rec[off..off + 4].try_into().unwrap()) as f64;
            let y = f32::from_le_bytes(rec[off + 4..off + 8].try_into().unwrap()) as f64;
            let z = f32::from_le_bytes(rec[off + 8..off + 12].try_into().unwrap()) as f64;
            *t = welder.intern(Point3::new(x, y, z));
        }
        triangles.push(tri);
    }
    Ok(RawMesh {
        vertices: welder.vertices,
        triangles,
    })
}

/// Internal sentinel so `read_stl` can map truncation to a typed error.
#[derive(Debug)]
struct TruncatedMarker {
    declared: u32,
    actual: u32,
}

impl std::fmt::Display for TruncatedMarker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "declared {} triangles, payload holds {}", self.declared, self.actual)
    }
}

impl std::error::Error for TruncatedMarker {}

/// Writes a binary STL.
pub fn write_binary_stl(
    path: &Path,
    vertices: &[Point3<f64>],
    triangles: &[[u32; 3]],
) -> Result<()> {
    let mut out = Vec::with_capacity(84 + triangles.len() * BINARY_RECORD_LEN);
    let mut header = [0u8; BINARY_HEADER_LEN];
    let tag = b"vacufix binary stl";
    header[..tag.len()].copy_from_slice(tag);
    out.extend_from_slice(&header);
    out.extend_from_slice(&(triangles.len() as u32).to_le_bytes());
    for tri in triangles {
        let [a, b, c] = [
            vertices[tri[0] as usize],
            vertices[tri[1] as usize],
            vertices[tri[2] as usize],
        ];
        let n = (b - a).cross(&(c - a));
        let n = if n.norm() > 0.0 { n.normalize() } else { n };
        for v in [n.x, n.y, n.z] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        for p in [a, b, c] {
            for v in [p.x, p.y, p.z] {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&0u16.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

#[derive(Default)]
struct Welder {
    vertices: Vec<Point3<f64>>,
    seen: HashMap<[u64; 3], u32>,
}

impl Welder {
    fn intern(&mut self, p: Point3<f64>) -> u32 {
        let key = [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
        *self.seen.entry(key).or_insert_with(|| {
            self.vertices.push(p);
            (self.vertices.len() - 1) as u32
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_cube_parses_and_welds() {
        let text = crate::meshgen::ascii_stl_cube();
        let raw = parse_stl(text.as_bytes()).unwrap();
        assert_eq!(raw.triangles.len(), 12);
        assert_eq!(raw.vertices.len(), 8); // welded corners
    }

    #[test]
    fn binary_roundtrip() {
        let mesh = crate::meshgen::boxmesh([0.0, 0.0, 0.0], [2.0, 3.0, 4.0]);
        let dir = std::env::temp_dir().join("vacufix_stl_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("box.stl");
        write_binary_stl(&path, &mesh.vertices, &mesh.triangles).unwrap();
        let raw = read_stl(&path).unwrap();
        assert_eq!(raw.triangles.len(), 12);
        assert_eq!(raw.vertices.len(), 8);
    }

    #[test]
    fn truncated_binary_detected() {
        let mut bytes = vec![0u8; 84 + 40 * BINARY_RECORD_LEN];
        bytes[80..84].copy_from_slice(&100u32.to_le_bytes());
        let err = parse_stl(&bytes).unwrap_err();
        assert_eq!(err.kind(), ErrorKind::UnexpectedEof);
    }
}
