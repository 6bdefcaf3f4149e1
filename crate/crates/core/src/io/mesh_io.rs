use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::geometry::{validate_mesh, SurfaceMesh, Triangle};
use crate::Vec3;

/// First bytes of a binary mesh frame. The header continues with the
/// vertex and triangle counts as little-endian `u32`, followed by `3V`
/// little-endian `f64` coordinates and `3F` little-endian `u32` indices.
pub const BINARY_MAGIC: &[u8; 8] = b"ESFMESH1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeshFormat {
    /// `OFF` header, `V F E` counts, `V` coordinate lines, `F` lines `3 i j k`.
    #[default]
    Off,
    Binary,
}

impl MeshFormat {
    /// `.bin` and `.esfm` files are binary, anything else is OFF.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("esfm") => MeshFormat::Binary,
            _ => MeshFormat::Off,
        }
    }

    pub fn extension(&self) -> &'static str {
        match self {
            MeshFormat::Off => "off",
            MeshFormat::Binary => "bin",
        }
    }
}

/// Reads and validates one mesh frame (frame time 0).
pub fn read_mesh_frame(path: &Path, format: MeshFormat) -> Result<SurfaceMesh, IoError> {
    let mesh = match format {
        MeshFormat::Off => {
            let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
            parse_off(&text, path)?
        }
        MeshFormat::Binary => {
            let bytes = fs::read(path).map_err(|e| IoError::io(path, e))?;
            parse_binary(&bytes, path)?
        }
    };
    validate_mesh(&mesh).check().map_err(|source| IoError::Geometry {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(mesh)
}

pub fn write_mesh_frame(path: &Path, mesh: &SurfaceMesh, format: MeshFormat) -> Result<(), IoError> {
    match format {
        MeshFormat::Off => write_off(path, mesh),
        MeshFormat::Binary => write_binary(path, mesh),
    }
}

/// Parses OFF text. Blank lines and `#` comments are skipped. `path` only
/// labels diagnostics. The result is not validated.
pub fn parse_off(text: &str, path: &Path) -> Result<SurfaceMesh, IoError> {
    let err = |line: usize, message: String| IoError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().filter_map(|(i, l)| {
        let content = l.split('#').next().unwrap_or("").trim();
        (!content.is_empty()).then_some((i + 1, content))
    });

    let (line, header) = lines.next().ok_or_else(|| err(1, "empty file, expected OFF header".into()))?;
    // Some writers put the counts on the header line itself.
    let rest = header
        .strip_prefix("OFF")
        .ok_or_else(|| err(line, format!("expected OFF header, found {header:?}")))?
        .trim();
    let (count_line, counts) = if rest.is_empty() {
        lines.next().ok_or_else(|| err(line + 1, "missing vertex/face counts".into()))?
    } else {
        (line, rest)
    };
    let counts: Vec<usize> = counts
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| err(count_line, format!("bad counts line {counts:?}: {e}")))?;
    if counts.len() < 2 || counts.len() > 3 {
        return Err(err(count_line, format!("expected \"V F E\", found {} numbers", counts.len())));
    }
    let (nv, nf) = (counts[0], counts[1]);

    let mut vertices = Vec::with_capacity(nv);
    for k in 0..nv {
        let (line, content) = lines
            .next()
            .ok_or_else(|| err(text.lines().count() + 1, format!("file ends after {k} of {nv} vertices")))?;
        let coords: Vec<f64> = content
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| err(line, format!("bad vertex {k}: {e}")))?;
        if coords.len() != 3 {
            return Err(err(line, format!("vertex {k} has {} coordinates, expected 3", coords.len())));
        }
        if !coords.iter().all(|c| c.is_finite()) {
            return Err(err(line, format!("vertex {k} has a non-finite coordinate")));
        }
        vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
    }

    let mut triangles: Vec<Triangle> = Vec::with_capacity(nf);
    for k in 0..nf {
        let (line, content) = lines
            .next()
            .ok_or_else(|| err(text.lines().count() + 1, format!("file ends after {k} of {nf} faces")))?;
        let idx: Vec<usize> = content
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| err(line, format!("bad face {k}: {e}")))?;
        if idx.first() != Some(&3) || idx.len() != 4 {
            return Err(err(line, format!("face {k} is not a triangle line \"3 i j k\"")));
        }
        if let Some(&bad) = idx[1..].iter().find(|&&i| i >= nv) {
            return Err(err(line, format!("face {k} references vertex {bad}, but there are {nv} vertices")));
        }
        triangles.push([idx[1], idx[2], idx[3]]);
    }
    if let Some((line, extra)) = lines.next() {
        return Err(err(line, format!("unexpected trailing content {extra:?}")));
    }
    Ok(SurfaceMesh::new(vertices, triangles, 0.0))
}

/// OFF text with shortest round-trip decimal coordinates.
pub fn off_string(mesh: &SurfaceMesh) -> String {
    let mut s = String::with_capacity(40 * (mesh.vertex_count() + mesh.triangle_count()));
    let _ = writeln!(s, "OFF\n{} {} 0", mesh.vertex_count(), mesh.triangle_count());
    for p in mesh.vertices() {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    for [a, b, c] in mesh.triangles() {
        let _ = writeln!(s, "3 {a} {b} {c}");
    }
    s
}

pub fn write_off(path: &Path, mesh: &SurfaceMesh) -> Result<(), IoError> {
    fs::write(path, off_string(mesh)).map_err(|e| IoError::io(path, e))
}

pub fn write_binary(path: &Path, mesh: &SurfaceMesh) -> Result<(), IoError> {
    let count = |n: usize| -> Result<u32, IoError> {
        u32::try_from(n).map_err(|_| IoError::invalid(path, format!("{n} exceeds the binary format's u32 counts")))
    };
    let mut bytes = Vec::with_capacity(16 + 24 * mesh.vertex_count() + 12 * mesh.triangle_count());
    bytes.extend_from_slice(BINARY_MAGIC);
    bytes.extend_from_slice(&count(mesh.vertex_count())?.to_le_bytes());
    bytes.extend_from_slice(&count(mesh.triangle_count())?.to_le_bytes());
    for p in mesh.vertices() {
        for c in p.iter() {
            bytes.extend_from_slice(&c.to_le_bytes());
        }
    }
    for tri in mesh.triangles() {
        for &i in tri {
            bytes.extend_from_slice(&count(i)?.to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| IoError::io(path, e))
}

fn parse_binary(bytes: &[u8], path: &Path) -> Result<SurfaceMesh, IoError> {
    let err = |offset: usize, message: String| IoError::Binary {
        path: path.to_path_buf(),
        offset,
        message,
    };
    if bytes.len() < 16 || &bytes[..8] != BINARY_MAGIC {
        return Err(err(0, "missing binary mesh magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4-byte slice")) as usize;
    let (nv, nf) = (u32_at(8), u32_at(12));
    let expected = 16 + 24 * nv + 12 * nf;
    if bytes.len() != expected {
        return Err(err(
            bytes.len().min(expected),
            format!("expected {expected} bytes for {nv} vertices and {nf} triangles, found {}", bytes.len()),
        ));
    }
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8-byte slice"));
    let mut vertices = Vec::with_capacity(nv);
    for k in 0..nv {
        let o = 16 + 24 * k;
        let p = Vec3::new(f64_at(o), f64_at(o + 8), f64_at(o + 16));
        if !p.iter().all(|c| c.is_finite()) {
            return Err(err(o, format!("vertex {k} has a non-finite coordinate")));
        }
        vertices.push(p);
    }
    let base = 16 + 24 * nv;
    let mut triangles = Vec::with_capacity(nf);
    for k in 0..nf {
        let o = base + 12 * k;
        let tri = [u32_at(o), u32_at(o + 4), u32_at(o + 8)];
        if let Some(&bad) = tri.iter().find(|&&i| i >= nv) {
            return Err(err(o, format!("triangle {k} references vertex {bad}, but there are {nv} vertices")));
        }
        triangles.push(tri);
    }
    Ok(SurfaceMesh::new(vertices, triangles, 0.0))
}
