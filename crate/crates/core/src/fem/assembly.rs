use std::sync::Arc;

use rayon::prelude::*;

use crate::geometry::{ElementGeometry, SurfaceMesh, Triangle};
use crate::linalg::{CsrMatrix, SparsityPattern};
use crate::Vec3;

/// Local 3x3 element matrix stored row-major: `m[3 * j + k]` couples test
/// function `j` with trial function `k`.
pub type ElementMatrix = [f64; 9];

/// Shared P1 sparsity pattern plus, for every triangle, the positions of its
/// nine local entries in the global value array.
///
/// Built once per connectivity; every operator assembled through the same
/// assembler shares one pattern, so operators can be combined with
/// [`CsrMatrix::axpy`] without any index work.
#[derive(Debug)]
pub struct Assembler {
    pattern: Arc<SparsityPattern>,
    scatter: Vec<[usize; 9]>,
}

impl Assembler {
    pub fn new(vertex_count: usize, triangles: &[Triangle]) -> Self {
        let pattern = SparsityPattern::from_triangles(vertex_count, triangles);
        let scatter = triangles
            .iter()
            .map(|tri| {
                let mut slots = [0usize; 9];
                for j in 0..3 {
                    for k in 0..3 {
                        slots[3 * j + k] = pattern
                            .find(tri[j], tri[k])
                            .expect("vertex adjacency pattern contains every element pair");
                    }
                }
                slots
            })
            .collect();
        Self {
            pattern: Arc::new(pattern),
            scatter,
        }
    }

    pub fn for_mesh(mesh: &SurfaceMesh) -> Self {
        Self::new(mesh.vertex_count(), mesh.triangles())
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn triangle_count(&self) -> usize {
        self.scatter.len()
    }

    /// Evaluates `local(t)` for every triangle (in parallel) and sums the
    /// results into a matrix. The scatter runs in triangle order, so the
    /// result does not depend on the thread count.
    pub fn assemble<F>(&self, local: F) -> CsrMatrix
    where
        F: Fn(usize) -> ElementMatrix + Sync + Send,
    {
        let locals: Vec<ElementMatrix> = (0..self.scatter.len()).into_par_iter().map(local).collect();
        let mut matrix = CsrMatrix::zeros(Arc::clone(&self.pattern));
        let values = matrix.values_mut();
        for (slots, m) in self.scatter.iter().zip(&locals) {
            for (slot, v) in slots.iter().zip(m) {
                values[*slot] += v;
            }
        }
        matrix
    }

    pub fn mass(&self, geom: &ElementGeometry) -> CsrMatrix {
        let areas = geom.areas();
        self.assemble(|t| mass_element(areas[t]))
    }

    pub fn stiffness(&self, geom: &ElementGeometry) -> CsrMatrix {
        self.assemble(|t| stiffness_element(geom.areas()[t], &geom.gradients()[t]))
    }

    /// `b_adv(χ_k, χ_j) = ∫ χ_k (w - v)·∇χ_j` with the tangential velocity
    /// `w - v` sampled at the edge midpoints of every triangle.
    pub fn advection(&self, geom: &ElementGeometry, tangential: &[[Vec3; 3]]) -> CsrMatrix {
        self.assemble(|t| advection_element(geom.areas()[t], &geom.gradients()[t], &tangential[t]))
    }

    /// `∫ (w·∇χ_k)(w·∇χ_j)` without the `D g(h)` factor.
    pub fn streamline(&self, geom: &ElementGeometry, velocity: &[[Vec3; 3]]) -> CsrMatrix {
        self.assemble(|t| streamline_element(geom.areas()[t], &geom.gradients()[t], &velocity[t]))
    }
}

/// Consistent P1 mass matrix of a flat triangle: `area/6` on the diagonal,
/// `area/12` off it.
pub fn mass_element(area: f64) -> ElementMatrix {
    let d = area / 6.0;
    let o = area / 12.0;
    [d, o, o, o, d, o, o, o, d]
}

pub fn stiffness_element(area: f64, grads: &[Vec3; 3]) -> ElementMatrix {
    let mut m = [0.0; 9];
    for j in 0..3 {
        for k in 0..3 {
            m[3 * j + k] = area * grads[j].dot(&grads[k]);
        }
    }
    m
}

/// Local corners `(a, b)` of the edge whose midpoint is quadrature point `q`.
/// Point `q` sits opposite corner `q`.
pub const MIDPOINT_EDGES: [(usize, usize); 3] = [(1, 2), (2, 0), (0, 1)];

/// Values of a P1 vertex field at the three edge midpoints.
pub fn at_midpoints(corner: &[Vec3; 3]) -> [Vec3; 3] {
    MIDPOINT_EDGES.map(|(a, b)| (corner[a] + corner[b]) * 0.5)
}

fn advection_element(area: f64, grads: &[Vec3; 3], tangential: &[Vec3; 3]) -> ElementMatrix {
    // The trial basis function χ_k equals 1/2 at the two midpoints on edges
    // through corner k and 0 at the third.
    let weight = area / 3.0;
    let mut m = [0.0; 9];
    for (q, &(a, b)) in MIDPOINT_EDGES.iter().enumerate() {
        for j in 0..3 {
            let flux = weight * 0.5 * tangential[q].dot(&grads[j]);
            m[3 * j + a] += flux;
            m[3 * j + b] += flux;
        }
    }
    m
}

fn streamline_element(area: f64, grads: &[Vec3; 3], velocity: &[Vec3; 3]) -> ElementMatrix {
    let weight = area / 3.0;
    let mut m = [0.0; 9];
    for w in velocity {
        let d = grads.map(|g| w.dot(&g));
        for j in 0..3 {
            for k in 0..3 {
                m[3 * j + k] += weight * d[j] * d[k];
            }
        }
    }
    m
}

/// Consistent mass matrix of `mesh`.
pub fn assemble_mass(mesh: &SurfaceMesh, geom: &ElementGeometry) -> CsrMatrix {
    Assembler::for_mesh(mesh).mass(geom)
}

/// Laplace-Beltrami stiffness matrix of `mesh`.
pub fn assemble_stiffness(mesh: &SurfaceMesh, geom: &ElementGeometry) -> CsrMatrix {
    Assembler::for_mesh(mesh).stiffness(geom)
}

/// ALE advection matrix for vertex velocity `w` and material velocity `v`,
/// both given at the edge midpoints of every triangle.
pub fn assemble_advection(
    mesh: &SurfaceMesh,
    geom: &ElementGeometry,
    w: &[[Vec3; 3]],
    v: &[[Vec3; 3]],
) -> CsrMatrix {
    let tangential: Vec<[Vec3; 3]> = w
        .iter()
        .zip(v)
        .map(|(wq, vq)| [wq[0] - vq[0], wq[1] - vq[1], wq[2] - vq[2]])
        .collect();
    Assembler::for_mesh(mesh).advection(geom, &tangential)
}

/// Streamline-diffusion matrix `D g(h) ∫ (w·∇χ_k)(w·∇χ_j)`.
pub fn assemble_streamline_diffusion(
    mesh: &SurfaceMesh,
    geom: &ElementGeometry,
    w: &[[Vec3; 3]],
    diffusivity: f64,
    g_h: f64,
) -> CsrMatrix {
    let mut m = Assembler::for_mesh(mesh).streamline(geom, w);
    m.scale(diffusivity * g_h);
    m
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::geometry::{element_geometry, icosphere};

    fn reference_triangle() -> SurfaceMesh {
        SurfaceMesh::new(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
            0.0,
        )
    }

    /// Barycentric gradients from the metric tensor of the affine map
    /// `(s, t) -> p0 + s e1 + t e2`: `∇λ = E G⁻¹ ∇_ref λ`.
    fn gram_gradients(p: [Vec3; 3]) -> [Vec3; 3] {
        let (e1, e2) = (p[1] - p[0], p[2] - p[0]);
        let (g11, g12, g22) = (e1.dot(&e1), e1.dot(&e2), e2.dot(&e2));
        let det = g11 * g22 - g12 * g12;
        let push = |a: f64, b: f64| {
            let (s, t) = ((g22 * a - g12 * b) / det, (g11 * b - g12 * a) / det);
            e1 * s + e2 * t
        };
        [push(-1.0, -1.0), push(1.0, 0.0), push(0.0, 1.0)]
    }

    /// Interior three-point rule at barycentric (2/3, 1/6, 1/6) and
    /// permutations; exact for quadratics and independent of the edge
    /// midpoint rule used by the assembler.
    const INTERIOR: [[f64; 3]; 3] = [
        [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
        [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
        [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
    ];

    fn dense(m: &CsrMatrix) -> Vec<Vec<f64>> {
        m.to_dense()
    }

    fn perturbed_sphere(level: u32, seed: u64) -> SurfaceMesh {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = icosphere(level, 1.0);
        let h = base.max_element_diameter();
        let verts = base
            .vertices()
            .iter()
            .map(|p| p + Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * 0.1 * h)
            .collect();
        base.with_vertices(verts, 0.0)
    }

    #[test]
    fn reference_mass_element() {
        let mesh = reference_triangle();
        let m = dense(&assemble_mass(&mesh, &element_geometry(&mesh).unwrap()));
        for j in 0..3 {
            for k in 0..3 {
                let expected = if j == k { 2.0 / 24.0 } else { 1.0 / 24.0 };
                assert!((m[j][k] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mass_matches_quadrature_of_basis_products() {
        let mesh = perturbed_sphere(1, 7);
        let geom = element_geometry(&mesh).unwrap();
        for t in 0..mesh.triangle_count() {
            let area = geom.areas()[t];
            let local = mass_element(area);
            for j in 0..3 {
                for k in 0..3 {
                    let q: f64 = INTERIOR.iter().map(|l| area / 3.0 * l[j] * l[k]).sum();
                    assert!((local[3 * j + k] - q).abs() < 1e-14 * area.max(1.0));
                }
            }
        }
    }

    #[test]
    fn mass_row_sums_and_total_area() {
        let mesh = icosphere(3, 1.0);
        let geom = element_geometry(&mesh).unwrap();
        let m = assemble_mass(&mesh, &geom);
        let ones = vec![1.0; mesh.vertex_count()];
        let row_sums = m.spmv(&ones).unwrap();
        let total: f64 = row_sums.iter().sum();
        assert!((total - geom.total_area()).abs() < 1e-12);
        let mut lumped = vec![0.0; mesh.vertex_count()];
        for (t, tri) in mesh.triangles().iter().enumerate() {
            for &i in tri {
                lumped[i] += geom.areas()[t] / 3.0;
            }
        }
        for (a, b) in row_sums.iter().zip(&lumped) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn reference_stiffness_element() {
        let mesh = reference_triangle();
        let s = dense(&assemble_stiffness(&mesh, &element_geometry(&mesh).unwrap()));
        let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for j in 0..3 {
            for k in 0..3 {
                assert!((s[j][k] - expected[j][k]).abs() < 1e-15, "{s:?}");
            }
        }
    }

    #[test]
    fn stiffness_kernel_symmetry_and_gram_oracle() {
        let mesh = perturbed_sphere(2, 11);
        let geom = element_geometry(&mesh).unwrap();
        let s = assemble_stiffness(&mesh, &geom);
        let ones = vec![1.0; mesh.vertex_count()];
        assert!(s.spmv(&ones).unwrap().iter().all(|v| v.abs() < 1e-12));
        let d = dense(&s);
        for i in 0..d.len() {
            for j in 0..d.len() {
                assert!((d[i][j] - d[j][i]).abs() < 1e-13);
            }
        }
        for t in 0..mesh.triangle_count() {
            let g = gram_gradients(mesh.triangle_points(t));
            let local = stiffness_element(geom.areas()[t], &geom.gradients()[t]);
            for j in 0..3 {
                for k in 0..3 {
                    let oracle = geom.areas()[t] * g[j].dot(&g[k]);
                    assert!((local[3 * j + k] - oracle).abs() < 1e-10 * oracle.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn first_harmonic_dirichlet_energy() {
        let mesh = icosphere(3, 1.0);
        let s = assemble_stiffness(&mesh, &element_geometry(&mesh).unwrap());
        let x: Vec<f64> = mesh.vertices().iter().map(|p| p.x).collect();
        let energy: f64 = x.iter().zip(s.spmv(&x).unwrap()).map(|(a, b)| a * b).sum();
        let exact = 8.0 * PI / 3.0;
        assert!((energy - exact).abs() / exact < 0.03, "{energy} vs {exact}");
    }

    fn random_velocity(mesh: &SurfaceMesh, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..mesh.vertex_count())
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    fn midpoint_samples(mesh: &SurfaceMesh, w: &[Vec3]) -> Vec<[Vec3; 3]> {
        mesh.triangles().iter().map(|tri| at_midpoints(&tri.map(|i| w[i]))).collect()
    }

    fn normal_part(geom: &ElementGeometry, wq: &[[Vec3; 3]]) -> Vec<[Vec3; 3]> {
        wq.iter()
            .zip(geom.normals())
            .map(|(q, n)| q.map(|x| n * x.dot(n)))
            .collect()
    }

    #[test]
    fn advection_matches_interior_quadrature_oracle() {
        for seed in 0..4 {
            let mesh = perturbed_sphere(2, 100 + seed);
            let geom = element_geometry(&mesh).unwrap();
            let w = random_velocity(&mesh, seed);
            let wq = midpoint_samples(&mesh, &w);
            let a = dense(&assemble_advection(&mesh, &geom, &wq, &normal_part(&geom, &wq)));

            let n = mesh.vertex_count();
            let mut oracle = vec![vec![0.0; n]; n];
            for (t, tri) in mesh.triangles().iter().enumerate() {
                let p = mesh.triangle_points(t);
                let g = gram_gradients(p);
                let e1 = p[1] - p[0];
                let e2 = p[2] - p[0];
                let normal = e1.cross(&e2).normalize();
                let area = 0.5 * e1.cross(&e2).norm();
                for l in INTERIOR {
                    let wl = w[tri[0]] * l[0] + w[tri[1]] * l[1] + w[tri[2]] * l[2];
                    let tangential = wl - normal * wl.dot(&normal);
                    for j in 0..3 {
                        for k in 0..3 {
                            oracle[tri[j]][tri[k]] += area / 3.0 * l[k] * tangential.dot(&g[j]);
                        }
                    }
                }
            }
            for i in 0..n {
                for j in 0..n {
                    assert!((a[i][j] - oracle[i][j]).abs() < 1e-12, "({i},{j}): {} vs {}", a[i][j], oracle[i][j]);
                }
            }
        }
    }

    #[test]
    fn advection_columns_sum_to_zero() {
        let mesh = perturbed_sphere(2, 5);
        let geom = element_geometry(&mesh).unwrap();
        let wq = midpoint_samples(&mesh, &random_velocity(&mesh, 9));
        let a = assemble_advection(&mesh, &geom, &wq, &normal_part(&geom, &wq));
        let ones = vec![1.0; mesh.vertex_count()];
        assert!(a.transpose_spmv(&ones).unwrap().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zero_velocity_gives_zero_operators() {
        let mesh = icosphere(1, 1.0);
        let geom = element_geometry(&mesh).unwrap();
        let zero = vec![[Vec3::zeros(); 3]; mesh.triangle_count()];
        assert_eq!(assemble_advection(&mesh, &geom, &zero, &zero).norm_inf(), 0.0);
        assert_eq!(assemble_streamline_diffusion(&mesh, &geom, &zero, 1.0, 0.1).norm_inf(), 0.0);
    }

    /// For radial motion the P1 velocity is `x` itself on each flat facet,
    /// so its tangential part `x - p0` (with `p0` the facet's foot point) has
    /// size `h` and the matrix entries stay comparable to the mass matrix.
    /// Tested against smooth fields, the operator still vanishes.
    #[test]
    fn radial_motion_advection_vanishes_under_refinement() {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let ratios: Vec<f64> = (1..=5)
            .map(|level| {
                let mesh = icosphere(level, 1.0);
                let geom = element_geometry(&mesh).unwrap();
                let wq = midpoint_samples(&mesh, mesh.vertices());
                let a = assemble_advection(&mesh, &geom, &wq, &normal_part(&geom, &wq));
                let m = assemble_mass(&mesh, &geom);
                let u: Vec<f64> = mesh.vertices().iter().map(|p| p.x + 0.5 * p.y * p.z).collect();
                let v: Vec<f64> = mesh.vertices().iter().map(|p| 1.0 + p.y - p.x * p.z).collect();
                (dot(&v, &a.spmv(&u).unwrap()) / dot(&v, &m.spmv(&u).unwrap())).abs()
            })
            .collect();
        assert!(ratios[4] < 1e-3 * ratios[0], "{ratios:?}");
        assert!(ratios[2..].iter().all(|r| *r < 5e-3), "{ratios:?}");
    }

    #[test]
    fn streamline_is_symmetric_psd_and_quadratic_in_velocity() {
        let mesh = perturbed_sphere(2, 3);
        let geom = element_geometry(&mesh).unwrap();
        let w = random_velocity(&mesh, 4);
        let wq = midpoint_samples(&mesh, &w);
        let wq2: Vec<[Vec3; 3]> = wq.iter().map(|q| q.map(|x| x * 2.0)).collect();
        let s1 = assemble_streamline_diffusion(&mesh, &geom, &wq, 0.7, 0.01);
        let s2 = assemble_streamline_diffusion(&mesh, &geom, &wq2, 0.7, 0.01);
        for (a, b) in s1.values().iter().zip(s2.values()) {
            assert!((4.0 * a - b).abs() < 1e-14 * b.abs().max(1.0));
        }
        let ones = vec![1.0; mesh.vertex_count()];
        assert!(s1.spmv(&ones).unwrap().iter().all(|v| v.abs() < 1e-14));
        let d = dense(&s1);
        for i in 0..d.len() {
            for j in 0..d.len() {
                assert!((d[i][j] - d[j][i]).abs() < 1e-15);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x: Vec<f64> = (0..d.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let q: f64 = x.iter().zip(s1.spmv(&x).unwrap()).map(|(a, b)| a * b).sum();
            assert!(q >= -1e-14);
        }
    }

    #[test]
    fn parallel_assembly_is_deterministic() {
        let mesh = perturbed_sphere(3, 8);
        let geom = element_geometry(&mesh).unwrap();
        let asm = Assembler::for_mesh(&mesh);
        let reference = asm.stiffness(&geom);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let serial = pool.install(|| asm.stiffness(&geom));
        assert_eq!(reference.values(), serial.values());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn advection_kills_constants_for_any_velocity(seed in 0u64..1000) {
            let mesh = perturbed_sphere(1, seed);
            let geom = element_geometry(&mesh).unwrap();
            let wq = midpoint_samples(&mesh, &random_velocity(&mesh, seed + 1));
            let a = assemble_advection(&mesh, &geom, &wq, &normal_part(&geom, &wq));
            let ones = vec![1.0; mesh.vertex_count()];
            for v in a.transpose_spmv(&ones).unwrap() {
                prop_assert!(v.abs() < 1e-12);
            }
        }
    }
}
