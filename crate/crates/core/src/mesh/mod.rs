//! Triangular meshes with tagged boundaries, the built-in geometries and the
//! parametric control-boundary indicator.

mod generate;
mod io;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use generate::{generate_holed_square_mesh, generate_test1_mesh, subdomain};
pub use io::{load_mesh, mesh_to_string, parse_mesh, write_mesh};

/// Boundary condition class of a boundary edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryTag {
    Dirichlet,
    NeumannFixed,
    /// Part of the largest boundary portion on which the control may act.
    ControlCandidate,
}

impl BoundaryTag {
    pub fn keyword(self) -> &'static str {
        match self {
            BoundaryTag::Dirichlet => "dirichlet",
            BoundaryTag::NeumannFixed => "neumann",
            BoundaryTag::ControlCandidate => "control",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        match s {
            "dirichlet" => Some(BoundaryTag::Dirichlet),
            "neumann" => Some(BoundaryTag::NeumannFixed),
            "control" => Some(BoundaryTag::ControlCandidate),
            _ => None,
        }
    }
}

/// Per-triangle region code: subdomain id in the low byte, bit 8 marks the
/// observation region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegionTag(pub u32);

impl RegionTag {
    pub const OBSERVED: u32 = 1 << 8;

    pub fn new(subdomain: u8, observed: bool) -> Self {
        RegionTag(subdomain as u32 | if observed { Self::OBSERVED } else { 0 })
    }

    pub fn subdomain(self) -> u8 {
        (self.0 & 0xff) as u8
    }

    pub fn is_observed(self) -> bool {
        self.0 & Self::OBSERVED != 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
}

/// A conforming 2D triangulation. Immutable once validated.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    regions: Vec<RegionTag>,
    boundary: Vec<BoundaryEdge>,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Mesh {
    /// Builds a mesh and checks every structural invariant. Triangles must be
    /// counter-clockwise; see [`Mesh::new_reoriented`] for tolerant input.
    pub fn new(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        regions: Vec<RegionTag>,
        boundary: Vec<BoundaryEdge>,
    ) -> Result<Self> {
        let mesh = Mesh {
            vertices,
            triangles,
            regions,
            boundary,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Like [`Mesh::new`], flipping clockwise triangles first.
    pub fn new_reoriented(
        vertices: Vec<[f64; 2]>,
        mut triangles: Vec<[usize; 3]>,
        regions: Vec<RegionTag>,
        boundary: Vec<BoundaryEdge>,
    ) -> Result<Self> {
        for t in &mut triangles {
            if t.iter().all(|&v| v < vertices.len()) && signed_area(&vertices, *t) < 0.0 {
                t.swap(1, 2);
            }
        }
        Self::new(vertices, triangles, regions, boundary)
    }

    fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        if self.regions.len() != self.triangles.len() {
            return Err(Error::MeshInvariant(format!(
                "{} region labels for {} triangles",
                self.regions.len(),
                self.triangles.len()
            )));
        }
        let mut face_count: HashMap<(usize, usize), usize> = HashMap::new();
        for (k, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= nv) {
                return Err(Error::MeshInvariant(format!("triangle {k} references a missing vertex")));
            }
            let area = signed_area(&self.vertices, *t);
            if !(area > 0.0) {
                return Err(Error::MeshInvariant(format!(
                    "triangle {k} has non-positive signed area {area:e}"
                )));
            }
            for e in 0..3 {
                *face_count.entry(edge_key(t[e], t[(e + 1) % 3])).or_default() += 1;
            }
        }
        if let Some((e, c)) = face_count.iter().find(|(_, &c)| c > 2) {
            return Err(Error::MeshInvariant(format!("edge {e:?} shared by {c} triangles")));
        }
        let mut tagged: HashMap<(usize, usize), BoundaryTag> = HashMap::new();
        for be in &self.boundary {
            let key = edge_key(be.vertices[0], be.vertices[1]);
            match face_count.get(&key) {
                Some(1) => {}
                Some(_) => {
                    return Err(Error::MeshInvariant(format!(
                        "interior edge {key:?} carries boundary tag {:?}",
                        be.tag
                    )))
                }
                None => {
                    return Err(Error::MeshInvariant(format!(
                        "tagged edge {key:?} is not a triangle face"
                    )))
                }
            }
            if tagged.insert(key, be.tag).is_some() {
                return Err(Error::MeshInvariant(format!("edge {key:?} tagged twice")));
            }
        }
        if let Some((e, _)) = face_count
            .iter()
            .find(|(e, &c)| c == 1 && !tagged.contains_key(e))
        {
            return Err(Error::MeshInvariant(format!("boundary edge {e:?} has no tag")));
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn regions(&self) -> &[RegionTag] {
        &self.regions
    }

    pub fn boundary(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_area(&self, k: usize) -> f64 {
        signed_area(&self.vertices, self.triangles[k])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|k| self.triangle_area(k)).sum()
    }

    pub fn edge_midpoint(&self, e: &BoundaryEdge) -> [f64; 2] {
        let [a, b] = e.vertices;
        [
            0.5 * (self.vertices[a][0] + self.vertices[b][0]),
            0.5 * (self.vertices[a][1] + self.vertices[b][1]),
        ]
    }

    pub fn edge_length(&self, e: &BoundaryEdge) -> f64 {
        let [a, b] = e.vertices;
        let dx = self.vertices[b][0] - self.vertices[a][0];
        let dy = self.vertices[b][1] - self.vertices[a][1];
        dx.hypot(dy)
    }

    pub fn edges_tagged(&self, tag: BoundaryTag) -> impl Iterator<Item = (usize, &BoundaryEdge)> {
        self.boundary
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.tag == tag)
    }

    /// Per-vertex flag: lies on a Dirichlet edge.
    pub fn dirichlet_vertices(&self) -> Vec<bool> {
        let mut flag = vec![false; self.vertices.len()];
        for (_, e) in self.edges_tagged(BoundaryTag::Dirichlet) {
            flag[e.vertices[0]] = true;
            flag[e.vertices[1]] = true;
        }
        flag
    }

    /// Number of distinct edges (interior and boundary).
    pub fn edge_count(&self) -> usize {
        let mut edges: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|t| (0..3).map(move |e| edge_key(t[e], t[(e + 1) % 3])))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges.len()
    }

    /// Same connectivity and tags, vertices moved by `map`.
    pub fn mapped(&self, map: impl Fn([f64; 2], RegionTag) -> [f64; 2]) -> Result<Mesh> {
        let mut moved: Vec<Option<[f64; 2]>> = vec![None; self.vertices.len()];
        for (t, r) in self.triangles.iter().zip(&self.regions) {
            for &v in t {
                if moved[v].is_none() {
                    moved[v] = Some(map(self.vertices[v], *r));
                }
            }
        }
        let vertices = moved
            .into_iter()
            .zip(&self.vertices)
            .map(|(m, &x)| m.unwrap_or(x))
            .collect();
        Mesh::new(
            vertices,
            self.triangles.clone(),
            self.regions.clone(),
            self.boundary.clone(),
        )
    }

    /// Hex-encoded SHA-256 of the canonical text serialisation.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(mesh_to_string(self).as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn signed_area(v: &[[f64; 2]], t: [usize; 3]) -> f64 {
    let [a, b, c] = t.map(|i| v[i]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// Built-in geometries, each with its own control-boundary parametrisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    /// `[0,2]×[0,1]` channel; control on `[1+μ_u, 2] × {0, 1}`.
    Test1,
    /// Unit square with a rectangular hole; control on the hole boundary right of `x1 = μ_u`.
    HoledSquare { hole: Rect },
}

impl Geometry {
    /// Open interval of admissible `μ_u`.
    pub fn muu_interval(&self) -> (f64, f64) {
        match self {
            Geometry::Test1 => (0.0, 1.0),
            Geometry::HoledSquare { hole } => (hole.x0, hole.x1),
        }
    }

    /// Leftmost `x1` of the active control boundary.
    pub fn control_front(&self, muu: f64) -> f64 {
        match self {
            Geometry::Test1 => 1.0 + muu,
            Geometry::HoledSquare { .. } => muu,
        }
    }

    pub fn check_muu(&self, muu: f64) -> Result<()> {
        let (lo, hi) = self.muu_interval();
        if muu > lo && muu < hi {
            Ok(())
        } else {
            Err(Error::ParameterRange {
                name: "mu_u",
                value: muu,
                lo,
                hi,
            })
        }
    }

    pub fn generate(&self, h: f64) -> Result<Mesh> {
        match self {
            Geometry::Test1 => generate_test1_mesh(h),
            Geometry::HoledSquare { hole } => generate_holed_square_mesh(h, *hole),
        }
    }
}

/// Discrete characteristic function of the active control boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlIndicator {
    /// One entry per mesh vertex, each 0 or 1.
    pub nodal_values: Vec<f64>,
    /// Indices into [`Mesh::boundary`] of the active edges.
    pub active_edges: Vec<usize>,
}

impl ControlIndicator {
    pub fn is_empty(&self) -> bool {
        self.active_edges.is_empty()
    }
}

/// Evaluates the control indicator for `μ_u`: a candidate edge is active when
/// its midpoint lies right of the control front.
pub fn control_indicator(mesh: &Mesh, muu: f64, geometry: &Geometry) -> Result<ControlIndicator> {
    geometry.check_muu(muu)?;
    let front = geometry.control_front(muu);
    let mut nodal_values = vec![0.0; mesh.n_vertices()];
    let mut active_edges = Vec::new();
    for (k, e) in mesh.edges_tagged(BoundaryTag::ControlCandidate) {
        if mesh.edge_midpoint(e)[0] >= front {
            active_edges.push(k);
            nodal_values[e.vertices[0]] = 1.0;
            nodal_values[e.vertices[1]] = 1.0;
        }
    }
    Ok(ControlIndicator {
        nodal_values,
        active_edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_triangles() -> (Vec<[f64; 2]>, Vec<[usize; 3]>) {
        (
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![[0, 1, 2], [0, 2, 3]],
        )
    }

    fn all_boundary(tag: BoundaryTag) -> Vec<BoundaryEdge> {
        [[0, 1], [1, 2], [2, 3], [3, 0]]
            .into_iter()
            .map(|vertices| BoundaryEdge { vertices, tag })
            .collect()
    }

    #[test]
    fn region_tag_bits() {
        let r = RegionTag::new(3, true);
        assert_eq!(r.subdomain(), 3);
        assert!(r.is_observed());
        assert!(!RegionTag::new(3, false).is_observed());
    }

    #[test]
    fn untagged_boundary_edge_rejected() {
        let (v, t) = two_triangles();
        let mut b = all_boundary(BoundaryTag::Dirichlet);
        b.pop();
        let err = Mesh::new(v, t, vec![RegionTag(1); 2], b).unwrap_err();
        assert!(err.to_string().contains("no tag"), "{err}");
    }

    #[test]
    fn interior_edge_tag_rejected() {
        let (v, t) = two_triangles();
        let mut b = all_boundary(BoundaryTag::Dirichlet);
        b.push(BoundaryEdge {
            vertices: [0, 2],
            tag: BoundaryTag::Dirichlet,
        });
        let err = Mesh::new(v, t, vec![RegionTag(1); 2], b).unwrap_err();
        assert!(err.to_string().contains("interior edge"), "{err}");
    }

    #[test]
    fn clockwise_triangle_rejected_unless_reoriented() {
        let (v, mut t) = two_triangles();
        t[1] = [0, 3, 2];
        let b = all_boundary(BoundaryTag::NeumannFixed);
        assert!(Mesh::new(v.clone(), t.clone(), vec![RegionTag(1); 2], b.clone()).is_err());
        let m = Mesh::new_reoriented(v, t, vec![RegionTag(1); 2], b).unwrap();
        assert!((m.total_area() - 1.0).abs() < 1e-15);
    }
}
