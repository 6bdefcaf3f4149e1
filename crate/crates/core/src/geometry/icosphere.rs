use std::collections::HashMap;

use super::{SurfaceMesh, Triangle};
use crate::Vec3;

const GOLDEN: f64 = 1.618_033_988_749_895;

fn icosahedron() -> (Vec<Vec3>, Vec<Triangle>) {
    let t = GOLDEN;
    let vertices = vec![
        Vec3::new(-1.0, t, 0.0),
        Vec3::new(1.0, t, 0.0),
        Vec3::new(-1.0, -t, 0.0),
        Vec3::new(1.0, -t, 0.0),
        Vec3::new(0.0, -1.0, t),
        Vec3::new(0.0, 1.0, t),
        Vec3::new(0.0, -1.0, -t),
        Vec3::new(0.0, 1.0, -t),
        Vec3::new(t, 0.0, -1.0),
        Vec3::new(t, 0.0, 1.0),
        Vec3::new(-t, 0.0, -1.0),
        Vec3::new(-t, 0.0, 1.0),
    ];
    let triangles = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (vertices, triangles)
}

/// Icosahedron refined `subdivisions` times by 1-to-4 splitting, every
/// vertex projected onto the sphere of the given radius about the origin.
///
/// Level `k` has `10·4^k + 2` vertices and `20·4^k` triangles; level 5 gives
/// 10242 vertices and 20480 triangles.
pub fn icosphere(subdivisions: u32, radius: f64) -> SurfaceMesh {
    let (mut vertices, mut triangles) = icosahedron();
    for v in vertices.iter_mut() {
        *v = v.normalize();
    }
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::with_capacity(triangles.len() * 3 / 2);
        let mut refined = Vec::with_capacity(triangles.len() * 4);
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Vec3>| -> usize {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
                vertices.len() - 1
            })
        };
        for &[a, b, c] in &triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            refined.push([a, ab, ca]);
            refined.push([b, bc, ab]);
            refined.push([c, ca, bc]);
            refined.push([ab, bc, ca]);
        }
        triangles = refined;
    }
    for v in vertices.iter_mut() {
        *v *= radius;
    }
    SurfaceMesh::new(vertices, triangles, 0.0)
}
