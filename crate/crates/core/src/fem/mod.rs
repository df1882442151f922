//! P1 finite-element assembly on [`Mesh`]es.
//!
//! Matrices are first assembled on the full vertex set and then restricted to
//! the free (non-Dirichlet) dofs through a [`DofMap`].

mod problem;
pub mod quadrature;

use std::io::Write as _;
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{CooBuilder, CsrMatrix};
use crate::mesh::{BoundaryTag, Mesh, RegionTag};
use quadrature::{gauss2_unit, TriangleRule};

pub use problem::{
    AffineTerm, AffineVector, ControlModel, FullTerm, OperatorSet, Piece, Problem, Theta,
};

/// Advection field `b(x) = (x2 (1 − x2), 0)`.
pub fn advection_field(x: [f64; 2]) -> [f64; 2] {
    [x[1] * (1.0 - x[1]), 0.0]
}

/// Numbering of the free dofs: every vertex not on a Dirichlet edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DofMap {
    to_free: Vec<Option<usize>>,
    free_vertices: Vec<usize>,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        let dirichlet = mesh.dirichlet_vertices();
        let mut to_free = vec![None; dirichlet.len()];
        let mut free_vertices = Vec::new();
        for (v, &d) in dirichlet.iter().enumerate() {
            if !d {
                to_free[v] = Some(free_vertices.len());
                free_vertices.push(v);
            }
        }
        DofMap {
            to_free,
            free_vertices,
        }
    }

    pub fn n_free(&self) -> usize {
        self.free_vertices.len()
    }

    pub fn n_full(&self) -> usize {
        self.to_free.len()
    }

    pub fn free_index(&self, vertex: usize) -> Option<usize> {
        self.to_free[vertex]
    }

    pub fn free_vertices(&self) -> &[usize] {
        &self.free_vertices
    }

    pub fn is_dirichlet(&self, vertex: usize) -> bool {
        self.to_free[vertex].is_none()
    }

    pub fn restrict_matrix(&self, a: &CsrMatrix) -> CsrMatrix {
        a.restrict(&self.to_free, &self.to_free)
    }

    pub fn restrict_vector(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.n_free(), self.free_vertices.iter().map(|&i| v[i]))
    }

    /// Full-length vector with `free` on the free dofs and `lifting` elsewhere.
    pub fn extend(&self, free: &DVector<f64>, lifting: &DVector<f64>) -> DVector<f64> {
        let mut out = lifting.clone();
        for (k, &v) in self.free_vertices.iter().enumerate() {
            out[v] += free[k];
        }
        out
    }
}

/// Bilinear forms integrated elementwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolumeTerm {
    /// `∫ ∂₁φ_j ∂₁φ_i`
    DiffusionXX,
    /// `∫ ∂₂φ_j ∂₂φ_i`
    DiffusionYY,
    /// `∫ (b·∇φ_j) φ_i`; row `i` is the test function.
    Advection,
    /// `∫ φ_j φ_i`
    Mass,
}

/// Assembles `term` over the triangles whose region passes `filter`, on the full vertex set.
pub fn assemble_volume(
    mesh: &Mesh,
    term: VolumeTerm,
    rule: &TriangleRule,
    filter: impl Fn(RegionTag) -> bool,
) -> CsrMatrix {
    let n = mesh.n_vertices();
    let mut b = CooBuilder::with_capacity(n, n, 9 * mesh.triangles().len());
    let verts = mesh.vertices();
    for (k, (t, &r)) in mesh.triangles().iter().zip(mesh.regions()).enumerate() {
        if !filter(r) {
            continue;
        }
        let p = t.map(|i| verts[i]);
        let area = mesh.triangle_area(k);
        let grad: [[f64; 2]; 3] = std::array::from_fn(|i| {
            let (a, c) = (p[(i + 1) % 3], p[(i + 2) % 3]);
            [(a[1] - c[1]) / (2.0 * area), (c[0] - a[0]) / (2.0 * area)]
        });
        let mut local = [[0.0; 3]; 3];
        match term {
            VolumeTerm::DiffusionXX | VolumeTerm::DiffusionYY => {
                let d = if term == VolumeTerm::DiffusionXX { 0 } else { 1 };
                for i in 0..3 {
                    for j in 0..3 {
                        local[i][j] = area * grad[i][d] * grad[j][d];
                    }
                }
            }
            VolumeTerm::Advection | VolumeTerm::Mass => {
                for (q, w) in rule.points.iter().zip(&rule.weights) {
                    let lam = [1.0 - q[0] - q[1], q[0], q[1]];
                    let x = [
                        lam[0] * p[0][0] + lam[1] * p[1][0] + lam[2] * p[2][0],
                        lam[0] * p[0][1] + lam[1] * p[1][1] + lam[2] * p[2][1],
                    ];
                    let bx = advection_field(x);
                    for i in 0..3 {
                        for j in 0..3 {
                            let v = if term == VolumeTerm::Mass {
                                lam[j]
                            } else {
                                bx[0] * grad[j][0] + bx[1] * grad[j][1]
                            };
                            local[i][j] += w * area * v * lam[i];
                        }
                    }
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                b.push(t[i], t[j], local[i][j]);
            }
        }
    }
    b.build()
}

/// `D_a(μ1) = (1/μ1) ∫∇φ_j·∇φ_i + ∫ (b·∇φ_j) φ_i` on free dofs.
pub fn assemble_state_form(mesh: &Mesh, mu1: f64) -> Result<CsrMatrix> {
    if !(mu1 > 0.0) {
        return Err(Error::ParameterRange {
            name: "mu1",
            value: mu1,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let rule = TriangleRule::degree3();
    let all = |_: RegionTag| true;
    let k = assemble_volume(mesh, VolumeTerm::DiffusionXX, &rule, all)
        .add(&assemble_volume(mesh, VolumeTerm::DiffusionYY, &rule, all));
    let a = assemble_volume(mesh, VolumeTerm::Advection, &rule, all);
    let full = CsrMatrix::linear_combination(&[(1.0 / mu1, &k), (1.0, &a)]);
    Ok(DofMap::new(mesh).restrict_matrix(&full))
}

/// Observation mass `M_o` on free dofs.
pub fn assemble_obs_mass(mesh: &Mesh) -> CsrMatrix {
    let m = assemble_volume(mesh, VolumeTerm::Mass, &TriangleRule::degree3(), |r| {
        r.is_observed()
    });
    DofMap::new(mesh).restrict_matrix(&m)
}

/// Full `H¹` inner-product matrix (stiffness plus mass) on the full vertex set.
pub fn assemble_norm_matrix_full(mesh: &Mesh) -> CsrMatrix {
    let rule = TriangleRule::degree3();
    let all = |_: RegionTag| true;
    CsrMatrix::linear_combination(&[
        (1.0, &assemble_volume(mesh, VolumeTerm::DiffusionXX, &rule, all)),
        (1.0, &assemble_volume(mesh, VolumeTerm::DiffusionYY, &rule, all)),
        (1.0, &assemble_volume(mesh, VolumeTerm::Mass, &rule, all)),
    ])
}

/// `X` on free dofs.
pub fn assemble_norm_matrix(mesh: &Mesh) -> CsrMatrix {
    DofMap::new(mesh).restrict_matrix(&assemble_norm_matrix_full(mesh))
}

/// Homogenised right-hand sides for a constant Dirichlet value `g` and the
/// constant desired state `μ2` on the observation region.
///
/// Returns `(f, y_d_vec, lifting)`: `f = −D_a R g`, `y_d_vec = μ2 M_o 𝟙 − M_o R g`
/// (both on free dofs) and the full-length lifting `R g`.
pub fn assemble_rhs(
    mesh: &Mesh,
    mu1: f64,
    mu2: f64,
    g: f64,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let dofs = DofMap::new(mesh);
    let lifting = dirichlet_lifting(&dofs, g);
    let rule = TriangleRule::degree3();
    let all = |_: RegionTag| true;
    let d_full = CsrMatrix::linear_combination(&[
        (1.0 / mu1, &assemble_volume(mesh, VolumeTerm::DiffusionXX, &rule, all)),
        (1.0 / mu1, &assemble_volume(mesh, VolumeTerm::DiffusionYY, &rule, all)),
        (1.0, &assemble_volume(mesh, VolumeTerm::Advection, &rule, all)),
    ]);
    if !(mu1 > 0.0) {
        return Err(Error::ParameterRange {
            name: "mu1",
            value: mu1,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let m_full = assemble_volume(mesh, VolumeTerm::Mass, &rule, |r| r.is_observed());
    let ones = DVector::from_element(dofs.n_full(), 1.0);
    let f = -dofs.restrict_vector(&d_full.mul_vec(&lifting));
    let yd = dofs.restrict_vector(&(m_full.mul_vec(&ones) * mu2 - m_full.mul_vec(&lifting)));
    Ok((f, yd, lifting))
}

/// Full-length nodal vector equal to `g` on Dirichlet vertices.
pub fn dirichlet_lifting(dofs: &DofMap, g: f64) -> DVector<f64> {
    DVector::from_fn(dofs.n_full(), |i, _| if dofs.is_dirichlet(i) { g } else { 0.0 })
}

/// One candidate boundary edge with its two cubic-exact weighted mass blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeBlock {
    /// Index into [`Mesh::boundary`].
    pub edge: usize,
    pub vertices: [usize; 2],
    /// Region of the triangle carrying the edge.
    pub region: RegionTag,
    /// `blocks[k][i][j] = ∫_e φ_{v_k} φ_{v_i} φ_{v_j} ds`.
    pub blocks: [[[f64; 2]; 2]; 2],
}

/// The matrices `B^k` of every candidate vertex `k`, stored edge by edge, so that
/// `C(χ) = Σ_k χ_k B^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTriples {
    n: usize,
    edges: Vec<EdgeBlock>,
}

impl EdgeTriples {
    pub fn assemble(mesh: &Mesh) -> Self {
        let mut region_of = std::collections::HashMap::new();
        for (t, &r) in mesh.triangles().iter().zip(mesh.regions()) {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                region_of.insert((a.min(b), a.max(b)), r);
            }
        }
        let gauss = gauss2_unit();
        let edges = mesh
            .edges_tagged(BoundaryTag::ControlCandidate)
            .map(|(idx, e)| {
                let len = mesh.edge_length(e);
                let mut blocks = [[[0.0; 2]; 2]; 2];
                for &(s, w) in &gauss {
                    let phi = [1.0 - s, s];
                    for k in 0..2 {
                        for i in 0..2 {
                            for j in 0..2 {
                                blocks[k][i][j] += w * len * phi[k] * phi[i] * phi[j];
                            }
                        }
                    }
                }
                let [a, b] = e.vertices;
                EdgeBlock {
                    edge: idx,
                    vertices: e.vertices,
                    region: region_of[&(a.min(b), a.max(b))],
                    blocks,
                }
            })
            .collect();
        EdgeTriples {
            n: mesh.n_vertices(),
            edges,
        }
    }

    pub fn edges(&self) -> &[EdgeBlock] {
        &self.edges
    }

    /// `Σ_k χ_k B^k` on the full vertex set.
    pub fn weighted(&self, chi: &[f64]) -> CsrMatrix {
        self.weighted_by(chi, |_| 1.0)
    }

    /// `Σ_k χ_k B^k` with every edge contribution scaled by `scale(region)`.
    pub fn weighted_by(&self, chi: &[f64], scale: impl Fn(RegionTag) -> f64) -> CsrMatrix {
        assert_eq!(chi.len(), self.n, "χ must have one entry per vertex");
        let mut b = CooBuilder::with_capacity(self.n, self.n, 4 * self.edges.len());
        for e in &self.edges {
            let s = scale(e.region);
            let w = [chi[e.vertices[0]], chi[e.vertices[1]]];
            if s == 0.0 || (w[0] == 0.0 && w[1] == 0.0) {
                continue;
            }
            for i in 0..2 {
                for j in 0..2 {
                    let v = w[0] * e.blocks[0][i][j] + w[1] * e.blocks[1][i][j];
                    b.push(e.vertices[i], e.vertices[j], s * v);
                }
            }
        }
        b.build()
    }
}

/// Control mass `∫ χ_h φ_j φ_i ds` over the candidate edges with the nodal
/// indicator interpolated at the Gauss points, assembled without `B^k`.
pub fn assemble_control_direct(mesh: &Mesh, chi: &[f64]) -> CsrMatrix {
    let n = mesh.n_vertices();
    let mut b = CooBuilder::new(n, n);
    for (_, e) in mesh.edges_tagged(BoundaryTag::ControlCandidate) {
        let [a, c] = e.vertices;
        let (pa, pc) = (mesh.vertices()[a], mesh.vertices()[c]);
        let len = mesh.edge_length(e);
        for (s, w) in gauss2_unit() {
            let x = [pa[0] + s * (pc[0] - pa[0]), pa[1] + s * (pc[1] - pa[1])];
            let t = ((x[0] - pa[0]) * (pc[0] - pa[0]) + (x[1] - pa[1]) * (pc[1] - pa[1])) / (len * len);
            let phi = [1.0 - t, t];
            let chi_h = phi[0] * chi[a] + phi[1] * chi[c];
            for i in 0..2 {
                for j in 0..2 {
                    b.push(e.vertices[i], e.vertices[j], w * len * chi_h * phi[i] * phi[j]);
                }
            }
        }
    }
    b.build()
}

/// Writes `row col value` triples, one per line.
pub fn export_coo(a: &CsrMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for (i, j, v) in a.triplets() {
        writeln!(w, "{i} {j} {v}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_test1_mesh, BoundaryEdge, Rect};

    fn reference_triangle() -> Mesh {
        let boundary = [[0, 1], [1, 2], [2, 0]]
            .into_iter()
            .map(|vertices| BoundaryEdge {
                vertices,
                tag: BoundaryTag::NeumannFixed,
            })
            .collect();
        Mesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            vec![RegionTag::new(1, true)],
            boundary,
        )
        .unwrap()
    }

    #[test]
    fn reference_triangle_stiffness() {
        let m = reference_triangle();
        let rule = TriangleRule::degree3();
        let k = assemble_volume(&m, VolumeTerm::DiffusionXX, &rule, |_| true)
            .add(&assemble_volume(&m, VolumeTerm::DiffusionYY, &rule, |_| true))
            .to_dense();
        let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[(i, j)] - expected[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn constants_in_kernel_of_diffusion_and_advection() {
        let m = generate_test1_mesh(0.25).unwrap();
        let rule = TriangleRule::degree3();
        let ones = DVector::from_element(m.n_vertices(), 1.0);
        for term in [VolumeTerm::DiffusionXX, VolumeTerm::DiffusionYY, VolumeTerm::Advection] {
            let a = assemble_volume(&m, term, &rule, |_| true);
            assert!(a.mul_vec(&ones).amax() < 1e-14, "{term:?}");
        }
    }

    #[test]
    fn observation_mass_total_and_psd() {
        let m = generate_test1_mesh(0.1).unwrap();
        let mo = assemble_volume(&m, VolumeTerm::Mass, &TriangleRule::degree3(), |r| r.is_observed());
        let ones = DVector::from_element(m.n_vertices(), 1.0);
        assert!((mo.bilinear(&ones, &ones) - 0.4).abs() < 1e-12);
        let coarse = generate_test1_mesh(0.25).unwrap();
        let d = assemble_obs_mass(&coarse).to_dense();
        let min = d.symmetric_eigenvalues().min();
        assert!(min >= -1e-13);
    }

    #[test]
    fn empty_observation_gives_zero_mass() {
        let hole = Rect { x0: 0.4, x1: 0.6, y0: 0.4, y1: 0.6 };
        let m = crate::mesh::generate_holed_square_mesh(0.2, hole).unwrap();
        let z = assemble_volume(&m, VolumeTerm::Mass, &TriangleRule::degree3(), |_| false);
        assert_eq!(z.nnz(), 0);
    }

    #[test]
    fn norm_matrix_decomposition_and_constant() {
        let m = generate_test1_mesh(0.25).unwrap();
        let x = assemble_norm_matrix_full(&m);
        let ones = DVector::from_element(m.n_vertices(), 1.0);
        assert!((x.bilinear(&ones, &ones) - 2.0).abs() < 1e-12);
        let rule = TriangleRule::degree3();
        let parts = CsrMatrix::linear_combination(&[
            (1.0, &assemble_volume(&m, VolumeTerm::DiffusionXX, &rule, |_| true)),
            (1.0, &assemble_volume(&m, VolumeTerm::DiffusionYY, &rule, |_| true)),
            (1.0, &assemble_volume(&m, VolumeTerm::Mass, &rule, |_| true)),
        ]);
        assert!((x.to_dense() - parts.to_dense()).amax() < 1e-14);
        assert!(assemble_norm_matrix(&m).to_dense().cholesky().is_some());
    }

    #[test]
    fn edge_blocks_for_unit_edge() {
        let m = reference_triangle();
        let boundary = vec![
            BoundaryEdge { vertices: [0, 1], tag: BoundaryTag::ControlCandidate },
            BoundaryEdge { vertices: [1, 2], tag: BoundaryTag::NeumannFixed },
            BoundaryEdge { vertices: [2, 0], tag: BoundaryTag::NeumannFixed },
        ];
        let m = Mesh::new(m.vertices().to_vec(), m.triangles().to_vec(), m.regions().to_vec(), boundary)
            .unwrap();
        let t = EdgeTriples::assemble(&m);
        let c = |chi: [f64; 3]| t.weighted(&chi).to_dense();
        let full = c([1.0, 1.0, 0.0]);
        let half = c([1.0, 0.0, 0.0]);
        let close = |a: f64, b: f64| (a - b).abs() < 1e-15;
        assert!(close(full[(0, 0)], 1.0 / 3.0) && close(full[(0, 1)], 1.0 / 6.0));
        assert!(close(half[(0, 0)], 0.25) && close(half[(0, 1)], 1.0 / 12.0) && close(half[(1, 1)], 1.0 / 12.0));
        assert_eq!(t.weighted(&[0.0; 3]).nnz(), 0);
    }

    #[test]
    fn lifting_and_rhs_support() {
        let m = generate_test1_mesh(0.1).unwrap();
        let (f, yd, lift) = assemble_rhs(&m, 10.0, 1.7, 0.0).unwrap();
        assert_eq!(f.amax(), 0.0);
        assert_eq!(lift.amax(), 0.0);
        let (_, yd1, lift1) = assemble_rhs(&m, 10.0, 1.7, 1.0).unwrap();
        assert!(lift1.iter().all(|&v| v == 0.0 || v == 1.0));
        // The Dirichlet corners (1, 0) and (1, 1) touch observed triangles, so
        // the lifting changes y_d_vec exactly at their free observed neighbours.
        let dofs = DofMap::new(&m);
        let changed: Vec<[f64; 2]> = (0..dofs.n_free())
            .filter(|&k| (yd[k] - yd1[k]).abs() > 1e-15)
            .map(|k| m.vertices()[dofs.free_vertices()[k]])
            .collect();
        let near_corner = |v: &[f64; 2]| {
            (v[0] - 1.0).abs() < 0.1 + 1e-12 && (v[1].min(1.0 - v[1])) < 0.1 + 1e-12
        };
        assert!(!changed.is_empty() && changed.iter().all(near_corner), "{changed:?}");
    }

    #[test]
    fn doubled_quadrature_leaves_matrices_unchanged() {
        let m = generate_test1_mesh(0.25).unwrap();
        for term in [VolumeTerm::Advection, VolumeTerm::Mass] {
            let a = assemble_volume(&m, term, &TriangleRule::degree3(), |_| true).to_dense();
            let b = assemble_volume(&m, term, &TriangleRule::degree5(), |_| true).to_dense();
            assert!((&a - &b).amax() <= 1e-13 * a.amax(), "{term:?}");
        }
    }

    #[test]
    fn weighted_form_matches_direct_assembly() {
        let m = generate_test1_mesh(0.1).unwrap();
        let triples = EdgeTriples::assemble(&m);
        let g = crate::mesh::Geometry::Test1;
        for muu in [0.05, 0.31, 0.5, 0.77] {
            let chi = crate::mesh::control_indicator(&m, muu, &g).unwrap().nodal_values;
            let a = triples.weighted(&chi).to_dense();
            let b = assemble_control_direct(&m, &chi).to_dense();
            assert!((&a - &b).amax() < 1e-13);
            assert!(triples.weighted(&chi).asymmetry() <= 1e-13 * a.amax());
        }
    }
}
