use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use super::GeometryError;
use crate::Vec3;

/// Vertex indices of one triangle, counter-clockwise seen from outside.
pub type Triangle = [usize; 3];

/// Triangles whose area falls below this fraction of the squared mesh
/// diameter are treated as degenerate.
pub const DEGENERATE_AREA_RATIO: f64 = 1e-12;

/// One triangulated closed surface at a single instant.
///
/// The triangle list is reference counted so that every frame of a sequence
/// shares the same connectivity allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    vertices: Vec<Vec3>,
    triangles: Arc<[Triangle]>,
    frame_time: f64,
}

impl SurfaceMesh {
    /// Builds a mesh without checking any invariant. See [`validate_mesh`].
    pub fn new(vertices: Vec<Vec3>, triangles: impl Into<Arc<[Triangle]>>, frame_time: f64) -> Self {
        Self {
            vertices,
            triangles: triangles.into(),
            frame_time,
        }
    }

    /// Builds a mesh and rejects it unless it is a closed, consistently
    /// oriented genus-zero surface without degenerate triangles.
    pub fn validated(
        vertices: Vec<Vec3>,
        triangles: impl Into<Arc<[Triangle]>>,
        frame_time: f64,
    ) -> Result<Self, GeometryError> {
        let mesh = Self::new(vertices, triangles, frame_time);
        validate_mesh(&mesh).check()?;
        Ok(mesh)
    }

    /// A new frame with the same connectivity and different positions.
    pub fn with_vertices(&self, vertices: Vec<Vec3>, frame_time: f64) -> Self {
        debug_assert_eq!(vertices.len(), self.vertices.len());
        Self {
            vertices,
            triangles: Arc::clone(&self.triangles),
            frame_time,
        }
    }

    pub fn into_vertices(self) -> Vec<Vec3> {
        self.vertices
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn connectivity(&self) -> &Arc<[Triangle]> {
        &self.triangles
    }

    pub fn frame_time(&self) -> f64 {
        self.frame_time
    }

    pub fn set_frame_time(&mut self, t: f64) {
        self.frame_time = t;
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Length of the bounding-box diagonal.
    pub fn diameter(&self) -> f64 {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        if self.vertices.is_empty() {
            0.0
        } else {
            (hi - lo).norm()
        }
    }

    /// Arithmetic mean of the vertex positions.
    pub fn vertex_centroid(&self) -> Vec3 {
        let sum: Vec3 = self.vertices.iter().sum();
        sum / self.vertices.len().max(1) as f64
    }

    /// Radius of the smallest ball centred at the vertex centroid that
    /// contains every vertex.
    pub fn bounding_radius(&self) -> f64 {
        let c = self.vertex_centroid();
        self.vertices
            .iter()
            .map(|v| (v - c).norm())
            .fold(0.0, f64::max)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangle_count())
            .map(|t| {
                let [a, b, c] = self.triangle_points(t);
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .sum()
    }

    /// Longest edge over all triangles.
    pub fn max_element_diameter(&self) -> f64 {
        max_element_diameter(self)
    }

    /// Same surface with every triangle's orientation flipped.
    pub fn reversed(&self) -> Self {
        let triangles: Vec<Triangle> = self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect();
        Self::new(self.vertices.clone(), triangles, self.frame_time)
    }

    /// Applies `f` to every vertex position, keeping the connectivity.
    pub fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> Self {
        self.with_vertices(self.vertices.iter().map(f).collect(), self.frame_time)
    }
}

/// Longest edge length over all triangles of `mesh`.
pub fn max_element_diameter(mesh: &SurfaceMesh) -> f64 {
    (0..mesh.triangle_count())
        .map(|t| {
            let [a, b, c] = mesh.triangle_points(t);
            (b - a).norm().max((c - b).norm()).max((a - c).norm())
        })
        .fold(0.0, f64::max)
}

/// Outcome of the topological and geometric checks run by [`validate_mesh`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub vertex_count: usize,
    pub edge_count: usize,
    pub triangle_count: usize,
    pub euler_characteristic: i64,
    /// Triangles referencing a vertex index past the end of the vertex list.
    pub invalid_triangles: Vec<usize>,
    /// Edges used by a single triangle.
    pub boundary_edges: Vec<(usize, usize)>,
    /// Edges used by more than two triangles.
    pub non_manifold_edges: Vec<(usize, usize)>,
    /// Edges traversed in the same direction by both of their triangles.
    pub orientation_conflicts: Vec<(usize, usize)>,
    pub degenerate_triangles: Vec<usize>,
    /// Area of each degenerate triangle, parallel to `degenerate_triangles`.
    pub degenerate_areas: Vec<f64>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.check().is_ok()
    }

    /// Converts the first violated invariant class into an error.
    pub fn check(&self) -> Result<(), GeometryError> {
        if let Some(&triangle) = self.invalid_triangles.first() {
            return Err(GeometryError::IndexOutOfRange {
                triangle,
                vertex_count: self.vertex_count,
            });
        }
        if !self.boundary_edges.is_empty() || !self.non_manifold_edges.is_empty() {
            let first = self
                .boundary_edges
                .first()
                .or(self.non_manifold_edges.first())
                .copied()
                .unwrap_or_default();
            return Err(GeometryError::NotClosed {
                boundary: self.boundary_edges.len(),
                non_manifold: self.non_manifold_edges.len(),
                first,
            });
        }
        if let Some(&first) = self.orientation_conflicts.first() {
            return Err(GeometryError::Orientation {
                count: self.orientation_conflicts.len(),
                first,
            });
        }
        if let Some(&triangle) = self.degenerate_triangles.first() {
            return Err(GeometryError::Degenerate {
                triangle,
                area: self.degenerate_areas[0],
            });
        }
        if self.euler_characteristic != 2 {
            return Err(GeometryError::EulerCharacteristic {
                found: self.euler_characteristic,
            });
        }
        Ok(())
    }
}

#[derive(Default)]
struct EdgeUse {
    forward: u32,
    backward: u32,
}

/// Checks closedness, manifoldness, orientation, degeneracy and genus.
pub fn validate_mesh(mesh: &SurfaceMesh) -> ValidationReport {
    let nv = mesh.vertex_count();
    let mut report = ValidationReport {
        vertex_count: nv,
        triangle_count: mesh.triangle_count(),
        ..Default::default()
    };

    for (t, tri) in mesh.triangles().iter().enumerate() {
        if tri.iter().any(|&i| i >= nv) {
            report.invalid_triangles.push(t);
        }
    }
    if !report.invalid_triangles.is_empty() {
        return report;
    }

    let mut edges: HashMap<(usize, usize), EdgeUse> = HashMap::with_capacity(3 * mesh.triangle_count() / 2);
    for &[a, b, c] in mesh.triangles() {
        for (p, q) in [(a, b), (b, c), (c, a)] {
            let entry = edges.entry((p.min(q), p.max(q))).or_default();
            if p < q {
                entry.forward += 1;
            } else {
                entry.backward += 1;
            }
        }
    }
    report.edge_count = edges.len();
    for (&key, usage) in &edges {
        match usage.forward + usage.backward {
            1 => report.boundary_edges.push(key),
            2 => {
                if usage.forward != 1 {
                    report.orientation_conflicts.push(key);
                }
            }
            _ => report.non_manifold_edges.push(key),
        }
    }
    report.boundary_edges.sort_unstable();
    report.non_manifold_edges.sort_unstable();
    report.orientation_conflicts.sort_unstable();

    let min_area = DEGENERATE_AREA_RATIO * mesh.diameter().powi(2);
    for t in 0..mesh.triangle_count() {
        let [a, b, c] = mesh.triangle_points(t);
        let area = 0.5 * (b - a).cross(&(c - a)).norm();
        if !(area > min_area) {
            report.degenerate_triangles.push(t);
            report.degenerate_areas.push(area);
        }
    }

    report.euler_characteristic =
        nv as i64 - report.edge_count as i64 + report.triangle_count as i64;
    report
}

/// Per-triangle normals, areas and tangential gradients of the three P1
/// nodal basis functions.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementGeometry {
    normals: Vec<Vec3>,
    areas: Vec<f64>,
    gradients: Vec<[Vec3; 3]>,
}

impl ElementGeometry {
    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    /// `gradients()[t][k]` is the gradient of the basis function attached to
    /// the `k`-th corner of triangle `t`.
    pub fn gradients(&self) -> &[[Vec3; 3]] {
        &self.gradients
    }

    pub fn len(&self) -> usize {
        self.areas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.areas.is_empty()
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }
}

/// Computes [`ElementGeometry`] for every triangle.
///
/// On a flat triangle with corners `p0, p1, p2`, unit normal `n` and area
/// `A`, the gradient of the barycentric coordinate of `p0` is
/// `n × (p2 - p1) / 2A` (cyclically for the other corners). These vectors lie
/// in the triangle plane and sum to zero.
pub fn element_geometry(mesh: &SurfaceMesh) -> Result<ElementGeometry, GeometryError> {
    let min_area = DEGENERATE_AREA_RATIO * mesh.diameter().powi(2);
    let per_element: Vec<(Vec3, f64, [Vec3; 3])> = (0..mesh.triangle_count())
        .into_par_iter()
        .map(|t| {
            let [p0, p1, p2] = mesh.triangle_points(t);
            let cross = (p1 - p0).cross(&(p2 - p0));
            let twice_area = cross.norm();
            let n = cross / twice_area;
            let grads = [
                n.cross(&(p2 - p1)) / twice_area,
                n.cross(&(p0 - p2)) / twice_area,
                n.cross(&(p1 - p0)) / twice_area,
            ];
            (n, 0.5 * twice_area, grads)
        })
        .collect();

    let mut normals = Vec::with_capacity(per_element.len());
    let mut areas = Vec::with_capacity(per_element.len());
    let mut gradients = Vec::with_capacity(per_element.len());
    for (t, (n, area, grads)) in per_element.into_iter().enumerate() {
        if !(area > min_area) {
            return Err(GeometryError::Degenerate { triangle: t, area });
        }
        normals.push(n);
        areas.push(area);
        gradients.push(grads);
    }
    Ok(ElementGeometry {
        normals,
        areas,
        gradients,
    })
}
