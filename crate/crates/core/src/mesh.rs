//! Conforming triangulations with newest-vertex bisection.
//!
//! Every triangle stores its vertices counter-clockwise together with the
//! local index of its refinement edge. Local edge `k` is the edge opposite
//! local vertex `k`, i.e. the segment `(v[k+1], v[k+2])`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

pub type Point = [f64; 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("vertex index {index} out of range in triangle {triangle}")]
    VertexOutOfRange { triangle: usize, index: usize },
    #[error("refinement edge {edge} of triangle {triangle} is not in 0..3")]
    BadRefinementEdge { triangle: usize, edge: u8 },
    #[error("marked triangle {0} does not exist")]
    MarkedOutOfRange(usize),
    #[error("mesh is not conforming: {0}")]
    NonConforming(String),
    #[error("mesh file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error on {path}: {msg}")]
    Io { path: String, msg: String },
}

/// A boundary side with its marker. Every marker is treated as a
/// homogeneous Dirichlet side by the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub marker: u32,
}

pub const DIRICHLET: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    refinement_edge: Vec<u8>,
    generation: Vec<u32>,
    macro_element: Vec<usize>,
    boundary: Vec<BoundaryEdge>,
}

/// Edge numbering and adjacency derived from a [`Mesh`].
#[derive(Debug, Clone)]
pub struct Topology {
    /// Sorted vertex pairs.
    pub edges: Vec<[usize; 2]>,
    /// Global edge of local edge `k` (opposite local vertex `k`).
    pub triangle_edges: Vec<[usize; 3]>,
    /// Adjacent triangles, the lower index first.
    pub edge_triangles: Vec<[Option<usize>; 2]>,
    pub edge_index: HashMap<[usize; 2], usize>,
    pub vertex_triangles: Vec<Vec<usize>>,
}

impl Topology {
    pub fn is_boundary_edge(&self, edge: usize) -> bool {
        self.edge_triangles[edge][1].is_none()
    }

    pub fn edge_of(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_index.get(&sorted(a, b)).copied()
    }
}

/// The element neighbourhood `N(E)` (all elements touching `E`) and the area
/// of its union.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementPatch {
    pub element: usize,
    pub neighbors: Vec<usize>,
    pub patch_area: f64,
}

/// Diagnostics returned by [`Mesh::validate`]. Empty means every mesh
/// invariant holds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MeshReport {
    pub violations: Vec<String>,
    pub min_angle: f64,
}

impl MeshReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Output of a refinement step: the new mesh and, for every new triangle,
/// the triangle of the input mesh containing it.
#[derive(Debug, Clone)]
pub struct Refinement {
    pub mesh: Mesh,
    pub parent: Vec<usize>,
}

fn sorted(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn midpoint(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

impl Mesh {
    /// Builds a mesh from raw parts. Only index ranges are checked here;
    /// geometric and topological invariants are reported by [`Mesh::validate`].
    pub fn new(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        refinement_edge: Vec<u8>,
        boundary: Vec<BoundaryEdge>,
    ) -> Result<Self, MeshError> {
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= vertices.len() {
                    return Err(MeshError::VertexOutOfRange { triangle: t, index: v });
                }
            }
        }
        if refinement_edge.len() != triangles.len() {
            return Err(MeshError::NonConforming(format!(
                "{} refinement edges for {} triangles",
                refinement_edge.len(),
                triangles.len()
            )));
        }
        for (t, &e) in refinement_edge.iter().enumerate() {
            if e > 2 {
                return Err(MeshError::BadRefinementEdge { triangle: t, edge: e });
            }
        }
        for b in &boundary {
            for &v in &b.vertices {
                if v >= vertices.len() {
                    return Err(MeshError::NonConforming(format!(
                        "boundary edge references missing vertex {v}"
                    )));
                }
            }
        }
        let generation = vec![0; triangles.len()];
        let macro_element = (0..triangles.len()).collect();
        Ok(Self { vertices, triangles, refinement_edge, generation, macro_element, boundary })
    }

    /// Macro mesh from vertices and triangles: orientation is made
    /// counter-clockwise, the refinement edge is the longest edge (ties go to
    /// the edge whose opposite vertex has the lowest index), and every
    /// unshared edge becomes a Dirichlet side.
    pub fn from_triangles(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let mut tris = triangles;
        for tri in tris.iter_mut() {
            for &v in tri.iter() {
                if v >= vertices.len() {
                    return Err(MeshError::VertexOutOfRange { triangle: 0, index: v });
                }
            }
            if signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]) < 0.0 {
                tri.swap(1, 2);
            }
        }
        let refinement_edge = tris
            .iter()
            .map(|tri| {
                let mut best = 0u8;
                let mut best_len = -1.0;
                let mut best_opp = usize::MAX;
                for k in 0..3 {
                    let len = dist(vertices[tri[(k + 1) % 3]], vertices[tri[(k + 2) % 3]]);
                    let opp = tri[k];
                    let longer = len > best_len * (1.0 + 1e-12);
                    let tie = (len - best_len).abs() <= 1e-12 * len;
                    if longer || (tie && opp < best_opp) {
                        best = k as u8;
                        best_len = len;
                        best_opp = opp;
                    }
                }
                best
            })
            .collect();
        let mut count: BTreeMap<[usize; 2], (usize, [usize; 2])> = BTreeMap::new();
        for tri in &tris {
            for k in 0..3 {
                let a = tri[(k + 1) % 3];
                let b = tri[(k + 2) % 3];
                count.entry(sorted(a, b)).or_insert((0, [a, b])).0 += 1;
            }
        }
        let boundary = count
            .values()
            .filter(|(c, _)| *c == 1)
            .map(|&(_, v)| BoundaryEdge { vertices: v, marker: DIRICHLET })
            .collect();
        Self::new(vertices, tris, refinement_edge, boundary)
    }

    /// The unit square split by its diagonal from (0,0) to (1,1).
    pub fn unit_square() -> Self {
        Self::from_triangles(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .expect("unit square macro mesh")
    }

    /// The L-shaped domain (-1,1)^2 minus [0,1)x(-1,0], six triangles.
    pub fn l_shape() -> Self {
        let vertices = vec![
            [-1.0, -1.0],
            [0.0, -1.0],
            [-1.0, 0.0],
            [0.0, 0.0],
            [1.0, 0.0],
            [-1.0, 1.0],
            [0.0, 1.0],
            [1.0, 1.0],
        ];
        let triangles = vec![[0, 1, 3], [0, 3, 2], [2, 3, 6], [2, 6, 5], [3, 4, 7], [3, 7, 6]];
        Self::from_triangles(vertices, triangles).expect("L-shape macro mesh")
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn refinement_edges(&self) -> &[u8] {
        &self.refinement_edge
    }

    pub fn generations(&self) -> &[u32] {
        &self.generation
    }

    /// Index of the macro triangle each triangle descends from.
    pub fn macro_elements(&self) -> &[usize] {
        &self.macro_element
    }

    pub fn boundary(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn corners(&self, t: usize) -> [Point; 3] {
        let tri = self.triangles[t];
        [self.vertices[tri[0]], self.vertices[tri[1]], self.vertices[tri[2]]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        signed_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.area(t)).sum()
    }

    /// `h_E = |E|^{1/2}`.
    pub fn mesh_size(&self, t: usize) -> f64 {
        self.area(t).abs().sqrt()
    }

    /// `h_S = |S|`, the length of the side.
    pub fn side_size(&self, a: usize, b: usize) -> f64 {
        dist(self.vertices[a], self.vertices[b])
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.corners(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn min_angle(&self, t: usize) -> f64 {
        let p = self.corners(t);
        (0..3)
            .map(|k| {
                let o = p[k];
                let u = [p[(k + 1) % 3][0] - o[0], p[(k + 1) % 3][1] - o[1]];
                let v = [p[(k + 2) % 3][0] - o[0], p[(k + 2) % 3][1] - o[1]];
                let c = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
                c.clamp(-1.0, 1.0).acos()
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn mesh_min_angle(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.min_angle(t)).fold(f64::INFINITY, f64::min)
    }

    pub fn topology(&self) -> Topology {
        let mut edges = Vec::new();
        let mut edge_index = HashMap::new();
        let mut edge_triangles: Vec<[Option<usize>; 2]> = Vec::new();
        let mut triangle_edges = Vec::with_capacity(self.triangles.len());
        let mut vertex_triangles = vec![Vec::new(); self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            let mut te = [0; 3];
            for k in 0..3 {
                let key = sorted(tri[(k + 1) % 3], tri[(k + 2) % 3]);
                let e = *edge_index.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edge_triangles.push([None, None]);
                    edges.len() - 1
                });
                let slot = &mut edge_triangles[e];
                if slot[0].is_none() {
                    slot[0] = Some(t);
                } else if slot[1].is_none() {
                    slot[1] = Some(t);
                }
                te[k] = e;
            }
            triangle_edges.push(te);
            for &v in tri {
                vertex_triangles[v].push(t);
            }
        }
        Topology { edges, triangle_edges, edge_triangles, edge_index, vertex_triangles }
    }

    /// Elements sharing at least one vertex with `t`, including `t`.
    pub fn patch(&self, t: usize, topo: &Topology) -> ElementPatch {
        let set: BTreeSet<usize> =
            self.triangles[t].iter().flat_map(|&v| topo.vertex_triangles[v].iter().copied()).collect();
        let neighbors: Vec<usize> = set.into_iter().collect();
        let patch_area = neighbors.iter().map(|&s| self.area(s)).sum();
        ElementPatch { element: t, neighbors, patch_area }
    }

    /// Checks conformity, orientation, boundary closure and reports the
    /// minimum angle.
    pub fn validate(&self) -> MeshReport {
        let mut violations = Vec::new();
        for t in 0..self.num_triangles() {
            let a = self.area(t);
            if a <= 0.0 {
                violations.push(format!("triangle {t} has non-positive oriented area {a:e}"));
            }
        }
        let mut uses: BTreeMap<[usize; 2], usize> = BTreeMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                *uses.entry(sorted(tri[(k + 1) % 3], tri[(k + 2) % 3])).or_default() += 1;
            }
        }
        for (e, &c) in &uses {
            if c > 2 {
                violations.push(format!("edge {e:?} shared by {c} triangles"));
            }
        }
        let boundary_set: BTreeSet<[usize; 2]> =
            self.boundary.iter().map(|b| sorted(b.vertices[0], b.vertices[1])).collect();
        for (e, &c) in &uses {
            if c == 1 && !boundary_set.contains(e) {
                violations.push(format!("edge {e:?} has one triangle but is not a boundary side"));
            }
        }
        for e in &boundary_set {
            if uses.get(e).copied() != Some(1) {
                violations.push(format!("boundary side {e:?} is not an unshared mesh edge"));
            }
        }
        // Hanging vertices: a vertex lying in the interior of some edge.
        let vertex_used: BTreeSet<usize> = self.triangles.iter().flatten().copied().collect();
        for (e, &c) in &uses {
            if c != 1 {
                continue;
            }
            let (p, q) = (self.vertices[e[0]], self.vertices[e[1]]);
            let len = dist(p, q);
            for &v in &vertex_used {
                if v == e[0] || v == e[1] {
                    continue;
                }
                let x = self.vertices[v];
                let along = ((x[0] - p[0]) * (q[0] - p[0]) + (x[1] - p[1]) * (q[1] - p[1])) / (len * len);
                let off = signed_area(p, q, x).abs() * 2.0 / len;
                if along > 1e-12 && along < 1.0 - 1e-12 && off <= 1e-12 * len {
                    violations.push(format!("hanging vertex {v} on edge {e:?}"));
                }
            }
        }
        // Boundary sides must form closed loops.
        let mut degree: BTreeMap<usize, usize> = BTreeMap::new();
        for b in &self.boundary {
            *degree.entry(b.vertices[0]).or_default() += 1;
            *degree.entry(b.vertices[1]).or_default() += 1;
        }
        for (v, d) in degree {
            if d % 2 != 0 {
                violations.push(format!("boundary polygon is open at vertex {v}"));
            }
        }
        MeshReport { violations, min_angle: self.mesh_min_angle() }
    }

    /// Newest-vertex bisection of the marked triangles plus conformity
    /// closure. Each marked triangle is bisected at least once.
    pub fn refine(&self, marked: &BTreeSet<usize>) -> Result<Mesh, MeshError> {
        self.refine_with_parents(marked).map(|r| r.mesh)
    }

    pub fn refine_with_parents(&self, marked: &BTreeSet<usize>) -> Result<Refinement, MeshError> {
        if let Some(&bad) = marked.iter().find(|&&t| t >= self.num_triangles()) {
            return Err(MeshError::MarkedOutOfRange(bad));
        }
        let report = self.validate();
        if !report.is_empty() {
            return Err(MeshError::NonConforming(report.violations.join("; ")));
        }
        let ref_edge = |tri: &[usize; 3], e: u8| -> [usize; 2] {
            let e = e as usize;
            sorted(tri[(e + 1) % 3], tri[(e + 2) % 3])
        };

        // Closure on edges: any triangle containing a marked edge must also
        // have its refinement edge marked.
        let mut edge_marks: BTreeSet<[usize; 2]> =
            marked.iter().map(|&t| ref_edge(&self.triangles[t], self.refinement_edge[t])).collect();
        loop {
            let mut changed = false;
            for (t, tri) in self.triangles.iter().enumerate() {
                let re = ref_edge(tri, self.refinement_edge[t]);
                if edge_marks.contains(&re) {
                    continue;
                }
                let touches = (0..3).any(|k| edge_marks.contains(&sorted(tri[(k + 1) % 3], tri[(k + 2) % 3])));
                if touches {
                    edge_marks.insert(re);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        let mut vertices = self.vertices.clone();
        let mut midpoints: HashMap<[usize; 2], usize> = HashMap::new();
        // (triangle, refinement edge, generation, parent)
        let mut work: Vec<([usize; 3], u8, u32, usize)> = (0..self.num_triangles())
            .map(|t| (self.triangles[t], self.refinement_edge[t], self.generation[t], t))
            .collect();
        loop {
            let mut next = Vec::with_capacity(work.len());
            let mut any = false;
            for (tri, e, g, parent) in work {
                let key = ref_edge(&tri, e);
                if !edge_marks.contains(&key) {
                    next.push((tri, e, g, parent));
                    continue;
                }
                any = true;
                let m = *midpoints.entry(key).or_insert_with(|| {
                    vertices.push(midpoint(vertices[key[0]], vertices[key[1]]));
                    vertices.len() - 1
                });
                let e = e as usize;
                let a = tri[e];
                let b = tri[(e + 1) % 3];
                let c = tri[(e + 2) % 3];
                // (a, b, m) and (a, m, c); the new vertex is opposite the
                // refinement edges of both children.
                next.push(([a, b, m], 2, g + 1, parent));
                next.push(([a, m, c], 1, g + 1, parent));
            }
            work = next;
            if !any {
                break;
            }
        }

        let mut boundary = Vec::with_capacity(self.boundary.len());
        for b in &self.boundary {
            split_boundary(&b.vertices, b.marker, &midpoints, &mut boundary);
        }

        let triangles = work.iter().map(|w| w.0).collect();
        let refinement_edge = work.iter().map(|w| w.1).collect();
        let generation = work.iter().map(|w| w.2).collect();
        let parent: Vec<usize> = work.iter().map(|w| w.3).collect();
        let macro_element = parent.iter().map(|&p| self.macro_element[p]).collect();
        Ok(Refinement {
            mesh: Mesh { vertices, triangles, refinement_edge, generation, macro_element, boundary },
            parent,
        })
    }

    /// Marks every triangle once.
    pub fn refine_uniform(&self) -> Mesh {
        let all: BTreeSet<usize> = (0..self.num_triangles()).collect();
        self.refine(&all).expect("uniform refinement of a valid mesh")
    }

    pub fn refine_uniform_times(&self, k: usize) -> Mesh {
        (0..k).fold(self.clone(), |m, _| m.refine_uniform())
    }

    /// Barycentric coordinates of `x` in triangle `t`.
    pub fn barycentric(&self, t: usize, x: Point) -> [f64; 3] {
        let [a, b, c] = self.corners(t);
        let area = signed_area(a, b, c);
        let l0 = signed_area(x, b, c) / area;
        let l1 = signed_area(a, x, c) / area;
        [l0, l1, 1.0 - l0 - l1]
    }

    /// Index of a triangle containing `x` (closed), if any.
    pub fn locate(&self, x: Point) -> Option<usize> {
        (0..self.num_triangles()).find(|&t| self.barycentric(t, x).iter().all(|&l| l >= -1e-12))
    }

    pub fn read_ascii(text: &str) -> Result<Mesh, MeshError> {
        crate::io::meshfile::parse(text)
    }

    pub fn to_ascii(&self) -> String {
        crate::io::meshfile::format(self)
    }
}

fn split_boundary(edge: &[usize; 2], marker: u32, midpoints: &HashMap<[usize; 2], usize>, out: &mut Vec<BoundaryEdge>) {
    match midpoints.get(&sorted(edge[0], edge[1])) {
        Some(&m) => {
            split_boundary(&[edge[0], m], marker, midpoints, out);
            split_boundary(&[m, edge[1]], marker, midpoints, out);
        }
        None => out.push(BoundaryEdge { vertices: *edge, marker }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn empty_marking_is_identity() {
        let m = Mesh::unit_square();
        let r = m.refine(&BTreeSet::new()).unwrap();
        assert_eq!(r, m);
        assert_eq!(r.num_triangles(), 2);
    }

    #[test]
    fn marking_one_triangle_forces_its_neighbor() {
        let r = Mesh::unit_square().refine(&set(&[0])).unwrap();
        assert_eq!(r.num_triangles(), 4);
        assert!(r.validate().is_empty());
    }

    #[test]
    fn uniform_refinement_doubles() {
        let mut m = Mesh::unit_square();
        for k in 1..=4 {
            m = m.refine_uniform();
            assert_eq!(m.num_triangles(), 2 << k);
        }
        let l = Mesh::l_shape().refine_uniform_times(3);
        assert_eq!(l.num_triangles(), 6 * 8);
    }

    #[test]
    fn mesh_size_values() {
        let m = Mesh::unit_square();
        assert!((m.mesh_size(0) - 0.5f64.sqrt()).abs() < 1e-15);
        let big = Mesh::from_triangles(vec![[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap();
        assert_eq!(big.mesh_size(0), 1.0);
        let r = m.refine(&set(&[0])).unwrap();
        for t in 0..r.num_triangles() {
            assert!((r.mesh_size(t) - m.mesh_size(0) / 2f64.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn side_sizes() {
        let m = Mesh::unit_square();
        assert_eq!(m.side_size(0, 1), 1.0);
        assert!((m.side_size(0, 2) - 2f64.sqrt()).abs() < 1e-15);
        // Children of the unit right triangle: hypotenuse is an old leg.
        let r = m.refine_uniform();
        for t in 0..r.num_triangles() {
            let tri = r.triangles()[t];
            let e = r.refinement_edges()[t] as usize;
            let len = r.side_size(tri[(e + 1) % 3], tri[(e + 2) % 3]);
            assert!((len - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn validate_reports_flipped_triangle() {
        let m = Mesh::unit_square();
        let mut tris = m.triangles().to_vec();
        tris[1].swap(1, 2);
        let bad = Mesh::new(m.vertices().to_vec(), tris, m.refinement_edges().to_vec(), m.boundary().to_vec()).unwrap();
        let rep = bad.validate();
        assert!(rep.violations.iter().any(|v| v.contains("non-positive")));
        assert!(matches!(bad.refine(&set(&[0])), Err(MeshError::NonConforming(_))));
    }

    #[test]
    fn validate_reports_hanging_vertex() {
        // Two triangles on the left and right of x=1 where the right one is
        // split, leaving (1, 0.5) hanging on the left triangle's edge.
        let v = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [2.0, 0.5], [1.0, 0.5]];
        let m = Mesh::from_triangles(v, vec![[0, 1, 2], [1, 3, 4], [4, 3, 2]]).unwrap();
        assert!(m.validate().violations.iter().any(|s| s.contains("hanging")));
    }

    #[test]
    fn patch_of_corner_element() {
        let m = Mesh::unit_square().refine_uniform_times(2);
        let topo = m.topology();
        for t in 0..m.num_triangles() {
            let p = m.patch(t, &topo);
            assert!(p.neighbors.contains(&t));
            assert!(p.patch_area <= 12.0 * m.area(t));
        }
    }

    #[test]
    fn ascii_round_trip() {
        let m = Mesh::l_shape().refine(&set(&[1, 4])).unwrap();
        let back = Mesh::read_ascii(&m.to_ascii()).unwrap();
        assert_eq!(back.vertices(), m.vertices());
        assert_eq!(back.triangles(), m.triangles());
        assert_eq!(back.refinement_edges(), m.refinement_edges());
        assert_eq!(back.boundary(), m.boundary());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn random_marking_stays_conforming(seed in any::<u64>(), lshape in any::<bool>()) {
            let mut mesh = if lshape { Mesh::l_shape() } else { Mesh::unit_square() };
            let macro_angle = mesh.mesh_min_angle();
            let mut state = seed | 1;
            for _ in 0..8 {
                let marked: BTreeSet<usize> = (0..mesh.num_triangles())
                    .filter(|_| {
                        state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                        state % 10 < 3
                    })
                    .collect();
                let r = mesh.refine_with_parents(&marked).unwrap();
                prop_assert!(r.mesh.validate().is_empty());
                prop_assert!(r.mesh.mesh_min_angle() >= 0.5 * macro_angle - 1e-12);
                for &t in &marked {
                    prop_assert!(!r.parent.iter().zip(r.mesh.generations()).any(|(&p, &g)| p == t && g == mesh.generations()[t]));
                }
                mesh = r.mesh;
            }
        }
    }
}
