//! Line-oriented text format:
//!
//! ```text
//! vbocp-mesh v1
//! vertices N
//! x1 x2            (N lines)
//! triangles M
//! i j k region     (M lines, 0-based vertex indices)
//! boundary K
//! i j tag          (K lines, tag ∈ {dirichlet, neumann, control})
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{BoundaryEdge, BoundaryTag, Mesh, RegionTag};
use crate::error::{Error, Result};

const HEADER: &str = "vbocp-mesh v1";

pub fn mesh_to_string(mesh: &Mesh) -> String {
    let mut s = String::new();
    writeln!(s, "{HEADER}").unwrap();
    writeln!(s, "vertices {}", mesh.vertices.len()).unwrap();
    for v in &mesh.vertices {
        writeln!(s, "{} {}", v[0], v[1]).unwrap();
    }
    writeln!(s, "triangles {}", mesh.triangles.len()).unwrap();
    for (t, r) in mesh.triangles.iter().zip(&mesh.regions) {
        writeln!(s, "{} {} {} {}", t[0], t[1], t[2], r.0).unwrap();
    }
    writeln!(s, "boundary {}", mesh.boundary.len()).unwrap();
    for e in &mesh.boundary {
        writeln!(s, "{} {} {}", e.vertices[0], e.vertices[1], e.tag.keyword()).unwrap();
    }
    s
}

pub fn write_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, mesh_to_string(mesh)).map_err(|e| Error::io(path, e))
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mesh(&text)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next_fields(&mut self) -> Result<(usize, Vec<&'a str>)> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            let fields: Vec<&str> = l.split_whitespace().collect();
            if !fields.is_empty() {
                return Ok((self.line, fields));
            }
        }
        Err(Error::Parse {
            line: self.line + 1,
            msg: "unexpected end of file".into(),
        })
    }

    fn section(&mut self, name: &str) -> Result<usize> {
        let (line, f) = self.next_fields()?;
        match f.as_slice() {
            [n, count] if *n == name => count.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("bad {name} count {count:?}"),
            }),
            _ => Err(Error::Parse {
                line,
                msg: format!("expected `{name} <count>`"),
            }),
        }
    }

    fn record<const K: usize>(&mut self) -> Result<(usize, [&'a str; K])> {
        let (line, f) = self.next_fields()?;
        let arr: [&str; K] = f.try_into().map_err(|f: Vec<&str>| Error::Parse {
            line,
            msg: format!("expected {K} fields, found {}", f.len()),
        })?;
        Ok((line, arr))
    }
}

fn num<T: std::str::FromStr>(line: usize, s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("cannot parse {s:?}"),
    })
}

/// Parses the text format. Clockwise triangles are reoriented; every other
/// invariant violation is an error.
pub fn parse_mesh(text: &str) -> Result<Mesh> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let (line, header) = lines.next_fields()?;
    if header.join(" ") != HEADER {
        return Err(Error::Parse {
            line,
            msg: format!("expected header `{HEADER}`"),
        });
    }
    let nv = lines.section("vertices")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, [x, y]) = lines.record::<2>()?;
        let v: [f64; 2] = [num(line, x)?, num(line, y)?];
        if !v.iter().all(|c| c.is_finite()) {
            return Err(Error::Parse { line, msg: "non-finite coordinate".into() });
        }
        vertices.push(v);
    }
    let nt = lines.section("triangles")?;
    let mut triangles = Vec::with_capacity(nt);
    let mut regions = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (line, [a, b, c, r]) = lines.record::<4>()?;
        let t: [usize; 3] = [num(line, a)?, num(line, b)?, num(line, c)?];
        if t.iter().any(|&i| i >= nv) {
            return Err(Error::Parse { line, msg: "vertex index out of range".into() });
        }
        triangles.push(t);
        regions.push(RegionTag(num(line, r)?));
    }
    let nb = lines.section("boundary")?;
    let mut boundary = Vec::with_capacity(nb);
    for _ in 0..nb {
        let (line, [a, b, tag]) = lines.record::<3>()?;
        let tag = BoundaryTag::from_keyword(tag).ok_or_else(|| Error::Parse {
            line,
            msg: format!("unknown boundary tag {tag:?}"),
        })?;
        boundary.push(BoundaryEdge {
            vertices: [num(line, a)?, num(line, b)?],
            tag,
        });
    }
    Mesh::new_reoriented(vertices, triangles, regions, boundary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_test1_mesh;

    #[test]
    fn round_trip_is_exact() {
        let m = generate_test1_mesh(0.5).unwrap();
        let back = parse_mesh(&mesh_to_string(&m)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn clockwise_triangle_is_fixed() {
        let text = "vbocp-mesh v1\nvertices 3\n0 0\n1 0\n0 1\ntriangles 1\n0 2 1 1\n\
                    boundary 3\n0 1 dirichlet\n1 2 neumann\n2 0 control\n";
        let m = parse_mesh(text).unwrap();
        assert!(m.triangle_area(0) > 0.0);
    }

    #[test]
    fn interior_dirichlet_edge_is_an_error() {
        let text = "vbocp-mesh v1\nvertices 4\n0 0\n1 0\n1 1\n0 1\ntriangles 2\n0 1 2 1\n0 2 3 1\n\
                    boundary 5\n0 1 dirichlet\n1 2 dirichlet\n2 3 dirichlet\n3 0 dirichlet\n0 2 dirichlet\n";
        assert!(matches!(parse_mesh(text), Err(Error::MeshInvariant(_))));
    }

    #[test]
    fn garbage_is_a_parse_error() {
        assert!(matches!(parse_mesh("vbocp-mesh v1\nvertices x\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_mesh("hello"), Err(Error::Parse { .. })));
    }
}
