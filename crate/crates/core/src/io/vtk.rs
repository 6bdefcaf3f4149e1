use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::IoError;
use crate::geometry::SurfaceMesh;

/// Legacy VTK ASCII polydata with one `SCALARS` block per field, in the order
/// given. Numbers use the shortest decimal form that reads back exactly, so
/// identical input always gives identical bytes.
pub fn vtk_string(mesh: &SurfaceMesh, title: &str, fields: &[(&str, &[f64])]) -> Result<String, String> {
    let nv = mesh.vertex_count();
    for (name, values) in fields {
        if values.len() != nv {
            return Err(format!("field {name} has {} values for {nv} vertices", values.len()));
        }
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(format!("field name {name:?} must be a single non-empty word"));
        }
    }
    let title: String = title.chars().filter(|c| *c != '\n').take(255).collect();
    let nf = mesh.triangle_count();
    let mut s = String::with_capacity(64 * (nv + nf) * (1 + fields.len()));
    let _ = write!(s, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET POLYDATA\nPOINTS {nv} double\n");
    for p in mesh.vertices() {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    let _ = writeln!(s, "POLYGONS {nf} {}", 4 * nf);
    for [a, b, c] in mesh.triangles() {
        let _ = writeln!(s, "3 {a} {b} {c}");
    }
    if !fields.is_empty() {
        let _ = writeln!(s, "POINT_DATA {nv}");
        for (name, values) in fields {
            let _ = write!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default\n");
            for v in values.iter() {
                let _ = writeln!(s, "{v}");
            }
        }
    }
    Ok(s)
}

pub fn write_vtk_frame(path: &Path, mesh: &SurfaceMesh, title: &str, fields: &[(&str, &[f64])]) -> Result<(), IoError> {
    let text = vtk_string(mesh, title, fields).map_err(|m| IoError::invalid(path, m))?;
    fs::write(path, text).map_err(|e| IoError::io(path, e))
}
