//! Plain-text mesh files.
//!
//! ```text
//! # comment
//! nv nt nb
//! x y              (nv lines)
//! v0 v1 v2 e       (nt lines, e = local refinement edge)
//! va vb marker     (nb lines)
//! ```

use crate::mesh::{BoundaryEdge, Mesh, MeshError};

fn err(line: usize, msg: impl Into<String>) -> MeshError {
    MeshError::Parse { line, msg: msg.into() }
}

pub fn parse(text: &str) -> Result<Mesh, MeshError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    fn fields<T: std::str::FromStr>(line: usize, s: &str, n: usize) -> Result<Vec<T>, MeshError> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        if parts.len() != n {
            return Err(err(line, format!("expected {n} fields, found {}", parts.len())));
        }
        parts
            .iter()
            .map(|p| p.parse::<T>().map_err(|_| err(line, format!("cannot parse {p:?}"))))
            .collect()
    }

    let (hl, header) = lines.next().ok_or_else(|| err(1, "empty mesh file"))?;
    let counts: Vec<usize> = fields(hl, header, 3)?;
    let (nv, nt, nb) = (counts[0], counts[1], counts[2]);
    let mut next = |what: &str| lines.next().ok_or_else(|| err(0, format!("unexpected end of file reading {what}")));

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (l, s) = next("vertices")?;
        let v: Vec<f64> = fields(l, s, 2)?;
        vertices.push([v[0], v[1]]);
    }
    let mut triangles = Vec::with_capacity(nt);
    let mut refinement = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (l, s) = next("triangles")?;
        let t: Vec<usize> = fields(l, s, 4)?;
        if t[3] > 2 {
            return Err(err(l, format!("refinement edge {} is not in 0..3", t[3])));
        }
        if let Some(&bad) = t[..3].iter().find(|&&v| v >= nv) {
            return Err(err(l, format!("vertex {bad} out of range")));
        }
        triangles.push([t[0], t[1], t[2]]);
        refinement.push(t[3] as u8);
    }
    let mut boundary = Vec::with_capacity(nb);
    for _ in 0..nb {
        let (l, s) = next("boundary sides")?;
        let b: Vec<usize> = fields(l, s, 3)?;
        if let Some(&bad) = b[..2].iter().find(|&&v| v >= nv) {
            return Err(err(l, format!("vertex {bad} out of range")));
        }
        boundary.push(BoundaryEdge { vertices: [b[0], b[1]], marker: b[2] as u32 });
    }
    if let Some((l, _)) = lines.next() {
        return Err(err(l, "trailing data after the last boundary side"));
    }
    Mesh::new(vertices, triangles, refinement, boundary)
}

/// Writes coordinates with round-trip precision.
pub fn format(mesh: &Mesh) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    let _ = writeln!(s, "{} {} {}", mesh.num_vertices(), mesh.num_triangles(), mesh.boundary().len());
    for v in mesh.vertices() {
        let _ = writeln!(s, "{:?} {:?}", v[0], v[1]);
    }
    for (t, e) in mesh.triangles().iter().zip(mesh.refinement_edges()) {
        let _ = writeln!(s, "{} {} {} {}", t[0], t[1], t[2], e);
    }
    for b in mesh.boundary() {
        let _ = writeln!(s, "{} {} {}", b.vertices[0], b.vertices[1], b.marker);
    }
    s
}
