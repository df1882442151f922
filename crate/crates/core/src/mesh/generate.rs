use super::{BoundaryEdge, BoundaryTag, Mesh, Rect, RegionTag};
use crate::error::{Error, Result};

/// Subdomain ids of the channel geometry. Ω2, Ω3 and Ω4 are split at
/// `x1 = 1.5` into left and right pieces.
pub mod subdomain {
    pub const OMEGA1: u8 = 1;
    pub const OMEGA2_LEFT: u8 = 2;
    pub const OMEGA3_LEFT: u8 = 3;
    pub const OMEGA4_LEFT: u8 = 4;
    pub const OMEGA2_RIGHT: u8 = 5;
    pub const OMEGA3_RIGHT: u8 = 6;
    pub const OMEGA4_RIGHT: u8 = 7;
    /// Whole domain of the holed square.
    pub const SQUARE: u8 = 1;
}

const SNAP: f64 = 1e-9;

/// `1/h` must be an integer so uniform lines hit every unit coordinate.
fn divisions(h: f64) -> Result<usize> {
    if !(h > 0.0) || !h.is_finite() || h > 1.0 {
        return Err(Error::MeshSize {
            h,
            reason: "h must lie in (0, 1]".into(),
        });
    }
    let n = (1.0 / h).round();
    if (n * h - 1.0).abs() > SNAP {
        return Err(Error::MeshSize {
            h,
            reason: format!("1/h = {} is not an integer, so x1 = 1 is not a mesh line", 1.0 / h),
        });
    }
    Ok(n as usize)
}

/// Uniform lines `k/n` on `[0, len]` merged with the interface lines in `extra`.
fn grid_lines(n: usize, len: usize, extra: &[f64]) -> Vec<f64> {
    let mut lines: Vec<f64> = (0..=n * len).map(|k| k as f64 / n as f64).collect();
    for &x in extra {
        match lines.iter_mut().find(|l| (**l - x).abs() < SNAP) {
            Some(l) => *l = x,
            None => lines.push(x),
        }
    }
    lines.sort_by(f64::total_cmp);
    lines
}

/// Structured right-triangle split of the tensor grid `xs × ys`; cells for
/// which `keep` is false are left out. Boundary faces are tagged by `classify`
/// from their midpoint.
fn tensor_mesh(
    xs: &[f64],
    ys: &[f64],
    keep: impl Fn([f64; 2]) -> bool,
    region: impl Fn([f64; 2]) -> RegionTag,
    classify: impl Fn([f64; 2]) -> BoundaryTag,
) -> Result<Mesh> {
    let (nx, ny) = (xs.len(), ys.len());
    let id = |i: usize, j: usize| j * nx + i;
    let mut used = vec![false; nx * ny];
    let mut triangles = Vec::new();
    let mut regions = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let c = [0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1])];
            if !keep(c) {
                continue;
            }
            let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            let r = region(c);
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
            regions.push(r);
            regions.push(r);
            for v in [v00, v10, v01, v11] {
                used[v] = true;
            }
        }
    }
    let mut renumber = vec![usize::MAX; nx * ny];
    let mut vertices = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if used[id(i, j)] {
                renumber[id(i, j)] = vertices.len();
                vertices.push([xs[i], ys[j]]);
            }
        }
    }
    for t in &mut triangles {
        *t = t.map(|v| renumber[v]);
    }

    let mut count = std::collections::HashMap::new();
    for t in &triangles {
        for e in 0..3 {
            let (a, b) = (t[e], t[(e + 1) % 3]);
            *count.entry((a.min(b), a.max(b))).or_insert(0usize) += 1;
        }
    }
    let mut faces: Vec<(usize, usize)> = count
        .into_iter()
        .filter(|&(_, c)| c == 1)
        .map(|(e, _)| e)
        .collect();
    faces.sort_unstable();
    let boundary = faces
        .into_iter()
        .map(|(a, b)| {
            let mid = [
                0.5 * (vertices[a][0] + vertices[b][0]),
                0.5 * (vertices[a][1] + vertices[b][1]),
            ];
            BoundaryEdge {
                vertices: [a, b],
                tag: classify(mid),
            }
        })
        .collect();
    Mesh::new(vertices, triangles, regions, boundary)
}

/// Channel `[0,2]×[0,1]` with observation strips `[1,2]×[0,0.2]` and
/// `[1,2]×[0.8,1]`.
pub fn generate_test1_mesh(h: f64) -> Result<Mesh> {
    use subdomain::*;
    let n = divisions(h)?;
    let xs = grid_lines(n, 2, &[1.0, 1.5]);
    let ys = grid_lines(n, 1, &[0.2, 0.8]);
    let region = |c: [f64; 2]| {
        if c[0] < 1.0 {
            return RegionTag::new(OMEGA1, false);
        }
        let left = c[0] < 1.5;
        let (id, observed) = match (c[1] < 0.2, c[1] > 0.8) {
            (true, _) => (if left { OMEGA4_LEFT } else { OMEGA4_RIGHT }, true),
            (_, true) => (if left { OMEGA3_LEFT } else { OMEGA3_RIGHT }, true),
            _ => (if left { OMEGA2_LEFT } else { OMEGA2_RIGHT }, false),
        };
        RegionTag::new(id, observed)
    };
    let classify = |m: [f64; 2]| {
        if m[0].abs() < SNAP {
            BoundaryTag::Dirichlet
        } else if (m[0] - 2.0).abs() < SNAP {
            BoundaryTag::NeumannFixed
        } else if m[0] < 1.0 {
            BoundaryTag::Dirichlet
        } else {
            BoundaryTag::ControlCandidate
        }
    };
    tensor_mesh(&xs, &ys, |_| true, region, classify)
}

/// Unit square minus `hole`; the whole domain is observed.
pub fn generate_holed_square_mesh(h: f64, hole: Rect) -> Result<Mesh> {
    let n = divisions(h)?;
    if !(hole.x1 > hole.x0 && hole.y1 > hole.y0) {
        return Err(Error::Geometry(format!("degenerate hole {hole:?}")));
    }
    if !(hole.x0 > 0.0 && hole.y0 > 0.0 && hole.x1 < 1.0 && hole.y1 < 1.0) {
        return Err(Error::Geometry(format!(
            "hole {hole:?} must lie strictly inside the unit square"
        )));
    }
    for c in [hole.x0, hole.x1, hole.y0, hole.y1] {
        if ((c * n as f64).round() - c * n as f64).abs() > SNAP * n as f64 {
            return Err(Error::MeshSize {
                h,
                reason: format!("hole coordinate {c} is not a multiple of h"),
            });
        }
    }
    let xs = grid_lines(n, 1, &[hole.x0, hole.x1]);
    let ys = grid_lines(n, 1, &[hole.y0, hole.y1]);
    let inside = |c: [f64; 2]| c[0] > hole.x0 && c[0] < hole.x1 && c[1] > hole.y0 && c[1] < hole.y1;
    let classify = |m: [f64; 2]| {
        if (m[0] - 1.0).abs() < SNAP {
            BoundaryTag::NeumannFixed
        } else if m[0].abs() < SNAP || m[1].abs() < SNAP || (m[1] - 1.0).abs() < SNAP {
            BoundaryTag::Dirichlet
        } else {
            BoundaryTag::ControlCandidate
        }
    };
    tensor_mesh(
        &xs,
        &ys,
        |c| !inside(c),
        |_| RegionTag::new(subdomain::SQUARE, true),
        classify,
    )
}
