//! Independent reference computations shared by the integration tests.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use rheo_afem::constitutive::LawField;
use rheo_afem::fespace::FunctionSpacePair;
use rheo_afem::forcing::{Forcing, Manufactured};
use rheo_afem::mesh::Mesh;
use rheo_afem::quadrature::triangle_rule;
use rheo_afem::solver::{linear_solve, DiscreteState};

/// Gradients of the barycentric coordinates of a triangle.
pub fn barycentric_gradients(c: [[f64; 2]; 3]) -> ([[f64; 2]; 3], f64) {
    let det = (c[1][0] - c[0][0]) * (c[2][1] - c[0][1]) - (c[2][0] - c[0][0]) * (c[1][1] - c[0][1]);
    let g = [
        [(c[1][1] - c[2][1]) / det, (c[2][0] - c[1][0]) / det],
        [(c[2][1] - c[0][1]) / det, (c[0][0] - c[2][0]) / det],
        [(c[0][1] - c[1][1]) / det, (c[1][0] - c[0][0]) / det],
    ];
    (g, 0.5 * det.abs())
}

pub fn point(c: [[f64; 2]; 3], l: [f64; 3]) -> [f64; 2] {
    [
        l[0] * c[0][0] + l[1] * c[1][0] + l[2] * c[2][0],
        l[0] * c[0][1] + l[1] * c[1][1] + l[2] * c[2][1],
    ]
}

/// `(int |U - u|^2, int |grad U - grad u|^2)` for the manufactured velocity.
pub fn manufactured_errors(space: &FunctionSpacePair, velocity: &[f64], m: &Manufactured) -> (f64, f64) {
    let q = triangle_rule(10);
    let mut e0 = 0.0;
    let mut e1 = 0.0;
    for t in 0..space.mesh.num_triangles() {
        let c = space.mesh.corners(t);
        let area = space.mesh.area(t);
        for (l, &w) in q.points.iter().zip(&q.weights) {
            let x = point(c, *l);
            let uh = space.velocity_at(velocity, t, *l);
            let u = m.velocity(x);
            let g = m.velocity_gradient(x);
            e0 += 2.0 * area * w * ((uh.value[0] - u[0]).powi(2) + (uh.value[1] - u[1]).powi(2));
            let mut s = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    s += (uh.grad[i][j] - g[i][j]).powi(2);
                }
            }
            e1 += 2.0 * area * w * s;
        }
    }
    (e0, e1)
}

/// `(||V||_2, ||grad V||_2)` of a discrete velocity.
pub fn velocity_norms(space: &FunctionSpacePair, velocity: &[f64]) -> (f64, f64) {
    let q = triangle_rule(6);
    let (mut a, mut b) = (0.0, 0.0);
    for t in 0..space.mesh.num_triangles() {
        let area = space.mesh.area(t);
        for (l, &w) in q.points.iter().zip(&q.weights) {
            let v = space.velocity_at(velocity, t, *l);
            a += 2.0 * area * w * (v.value[0].powi(2) + v.value[1].powi(2));
            b += 2.0 * area * w * v.grad.iter().flatten().map(|x| x * x).sum::<f64>();
        }
    }
    (a.sqrt(), b.sqrt())
}

pub fn forcing_l2(mesh: &Mesh, f: &Forcing) -> f64 {
    let q = triangle_rule(8);
    let mut s = 0.0;
    for t in 0..mesh.num_triangles() {
        let c = mesh.corners(t);
        for (l, &w) in q.points.iter().zip(&q.weights) {
            let v = f.evaluate(point(c, *l));
            s += 2.0 * mesh.area(t) * w * (v[0] * v[0] + v[1] * v[1]);
        }
    }
    s.sqrt()
}

/// Continuous cubic Lagrange nodes on a mesh: vertices, two per edge
/// (ordered from the lower vertex index), one per triangle.
pub struct CubicSpace {
    pub mesh: Mesh,
    /// Per triangle, the ten nodes in the order of [`cubic_basis`].
    pub nodes: Vec<[usize; 10]>,
    pub num_nodes: usize,
    pub boundary: BTreeSet<usize>,
}

impl CubicSpace {
    pub fn new(mesh: Mesh) -> Self {
        let nv = mesh.num_vertices();
        let mut next = nv;
        let mut edge_nodes: HashMap<(usize, usize), [usize; 2]> = HashMap::new();
        let mut nodes = Vec::new();
        for tri in mesh.triangles() {
            let mut local = [0usize; 10];
            local[..3].copy_from_slice(tri);
            // Edge (i, j) carries the node near i then the node near j.
            for (k, &(i, j)) in [(0usize, 1usize), (1, 2), (2, 0)].iter().enumerate() {
                let (a, b) = (tri[i], tri[j]);
                let key = (a.min(b), a.max(b));
                let pair = *edge_nodes.entry(key).or_insert_with(|| {
                    next += 2;
                    [next - 2, next - 1]
                });
                let (near_a, near_b) = if a < b { (pair[0], pair[1]) } else { (pair[1], pair[0]) };
                local[3 + 2 * k] = near_a;
                local[4 + 2 * k] = near_b;
            }
            nodes.push(local);
        }
        for (t, local) in nodes.iter_mut().enumerate() {
            local[9] = next + t;
        }
        let num_nodes = next + mesh.num_triangles();
        let mut boundary = BTreeSet::new();
        for b in mesh.boundary() {
            let (a, c) = (b.vertices[0], b.vertices[1]);
            boundary.insert(a);
            boundary.insert(c);
            let pair = edge_nodes[&(a.min(c), a.max(c))];
            boundary.insert(pair[0]);
            boundary.insert(pair[1]);
        }
        Self { mesh, nodes, num_nodes, boundary }
    }
}

/// Cubic Lagrange basis values and gradients at barycentric `l`.
/// Order: vertices 0..3, then per edge (0,1), (1,2), (2,0) the node near
/// the first vertex and the node near the second, then the bubble.
pub fn cubic_basis(l: [f64; 3], gl: &[[f64; 2]; 3]) -> ([f64; 10], [[f64; 2]; 10]) {
    let mut v = [0.0; 10];
    // Derivatives with respect to the barycentric coordinates.
    let mut dl = [[0.0; 3]; 10];
    for i in 0..3 {
        let x = l[i];
        v[i] = 0.5 * x * (3.0 * x - 1.0) * (3.0 * x - 2.0);
        dl[i][i] = 0.5 * (27.0 * x * x - 18.0 * x + 2.0);
    }
    for (k, &(i, j)) in [(0usize, 1usize), (1, 2), (2, 0)].iter().enumerate() {
        for (slot, (a, b)) in [(3 + 2 * k, (i, j)), (4 + 2 * k, (j, i))] {
            let (x, y) = (l[a], l[b]);
            v[slot] = 4.5 * x * y * (3.0 * x - 1.0);
            dl[slot][a] = 4.5 * y * (6.0 * x - 1.0);
            dl[slot][b] = 4.5 * x * (3.0 * x - 1.0);
        }
    }
    v[9] = 27.0 * l[0] * l[1] * l[2];
    dl[9] = [27.0 * l[1] * l[2], 27.0 * l[0] * l[2], 27.0 * l[0] * l[1]];
    let mut g = [[0.0; 2]; 10];
    for n in 0..10 {
        for k in 0..3 {
            g[n][0] += dl[n][k] * gl[k][0];
            g[n][1] += dl[n][k] * gl[k][1];
        }
    }
    (v, g)
}

/// Lower bound for the dual norm `sup <R(U), phi> / ||grad phi||_2` of the
/// momentum residual, with `phi` ranging over continuous cubic fields on
/// the mesh obtained by `extra` further uniform bisections.
///
/// `R(U)(phi) = int S(DU):D(phi) + b(U, U, phi) - P div(phi) - f.phi`.
pub fn residual_dual_norm(
    space: &FunctionSpacePair,
    laws: &LawField,
    state: &DiscreteState,
    forcing: &Forcing,
    convection: bool,
    extra: usize,
) -> f64 {
    let mut fine = space.mesh.clone();
    let mut parent: Vec<usize> = (0..fine.num_triangles()).collect();
    for _ in 0..extra {
        let all: BTreeSet<usize> = (0..fine.num_triangles()).collect();
        let r = fine.refine_with_parents(&all).expect("uniform bisection");
        parent = r.parent.iter().map(|&p| parent[p]).collect();
        fine = r.mesh;
    }
    let cubic = CubicSpace::new(fine);
    let n = cubic.num_nodes;
    let mut free = vec![usize::MAX; n];
    let mut nf = 0;
    for (i, slot) in free.iter_mut().enumerate() {
        if !cubic.boundary.contains(&i) {
            *slot = nf;
            nf += 1;
        }
    }
    let q = triangle_rule(8);
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; 2 * nf];
    for t in 0..cubic.mesh.num_triangles() {
        let c = cubic.mesh.corners(t);
        let (gl, area) = barycentric_gradients(c);
        let coarse = parent[t];
        let law = laws.at(space.mesh.macro_elements()[coarse]);
        let nodes = cubic.nodes[t];
        for (l, &w) in q.points.iter().zip(&q.weights) {
            let wt = 2.0 * area * w;
            let x = point(c, *l);
            let lc = space.mesh.barycentric(coarse, x);
            let u = space.velocity_at(&state.velocity, coarse, lc);
            let (p, _) = space.pressure_at(&state.pressure, coarse, lc);
            let s = law.stress(u.strain());
            let f = forcing.evaluate(x);
            let (v, g) = cubic_basis(*l, &gl);
            // (U.grad)U
            let ugu = [
                u.value[0] * u.grad[0][0] + u.value[1] * u.grad[0][1],
                u.value[0] * u.grad[1][0] + u.value[1] * u.grad[1][1],
            ];
            for a in 0..10 {
                let ia = free[nodes[a]];
                if ia == usize::MAX {
                    continue;
                }
                for b in 0..10 {
                    let ib = free[nodes[b]];
                    if ib != usize::MAX {
                        triplets.push((ia, ib, wt * (g[a][0] * g[b][0] + g[a][1] * g[b][1])));
                    }
                }
                let ugphi = u.value[0] * g[a][0] + u.value[1] * g[a][1];
                for comp in 0..2 {
                    // phi = v[a] e_comp; D(phi) has (comp, j) entries grad/2.
                    let sd = if comp == 0 {
                        s.xx * g[a][0] + s.xy * g[a][1]
                    } else {
                        s.xy * g[a][0] + s.yy * g[a][1]
                    };
                    let div = g[a][comp];
                    let mut val = sd - p * div - f[comp] * v[a];
                    if convection {
                        val += 0.5 * (ugu[comp] * v[a] - ugphi * u.value[comp]);
                    }
                    rhs[2 * ia + comp] += wt * val;
                }
            }
        }
    }
    let mut total = 0.0;
    for comp in 0..2 {
        let r: Vec<f64> = (0..nf).map(|i| rhs[2 * i + comp]).collect();
        let z = linear_solve(nf, &triplets, &r).expect("cubic stiffness solve");
        total += r.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
    }
    total.max(0.0).sqrt()
}

/// Scalar graph pieces for the brute-force distance: a list of points
/// `(d, s)` on the graph inside `[0, dmax]`.
pub fn sample_graph(pieces: &[Box<dyn Fn(f64) -> (f64, f64)>], points: usize) -> Vec<(f64, f64)> {
    let per = points / pieces.len();
    let mut out = Vec::with_capacity(points);
    for p in pieces {
        for k in 0..per {
            out.push(p(k as f64 / (per - 1) as f64));
        }
    }
    out
}

pub fn brute_force_distance(samples: &[(f64, f64)], r: f64, x: f64, y: f64) -> f64 {
    let rc = r / (r - 1.0);
    samples.iter().map(|&(d, s)| (x - d).abs().powf(r) + (y - s).abs().powf(rc)).fold(f64::INFINITY, f64::min)
}
