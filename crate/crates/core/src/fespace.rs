//! Mixed velocity/pressure spaces on a [`Mesh`].
//!
//! Velocity is continuous piecewise quadratic and vanishes on the Dirichlet
//! boundary. Pressure is continuous P1 (Taylor-Hood) or elementwise constant
//! (P2/P0); continuous P2 pressure exists only as an unstable diagnostic pair.
//!
//! Velocity coefficients are stored in the full node numbering: vertices
//! first, then edge midpoints, two components per node (`2 * node + comp`).

use std::collections::BTreeSet;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::mesh::{Mesh, Point, Topology};
use crate::quadrature::triangle_rule;
use crate::tensor::Sym;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("unsupported element pair '{0}' (expected taylor_hood or p2p0)")]
    UnsupportedPair(String),
    #[error("singular local mass matrix on element {0}")]
    SingularMass(usize),
    #[error("eigenvalue computation failed: {0}")]
    Eigen(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairKind {
    TaylorHood,
    P2P0,
    /// P2/P2: violates the inf-sup condition, used as a negative control.
    EqualOrderP2,
}

impl PairKind {
    pub fn parse(tag: &str) -> Result<Self, SpaceError> {
        match tag {
            "taylor_hood" | "TaylorHood" | "th" => Ok(Self::TaylorHood),
            "p2p0" | "P2P0" => Ok(Self::P2P0),
            other => Err(SpaceError::UnsupportedPair(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::TaylorHood => "taylor_hood",
            Self::P2P0 => "p2p0",
            Self::EqualOrderP2 => "p2p2",
        }
    }

    pub fn pressure_degree(self) -> usize {
        match self {
            Self::TaylorHood => 1,
            Self::P2P0 => 0,
            Self::EqualOrderP2 => 2,
        }
    }

    pub fn pressure_continuous(self) -> bool {
        !matches!(self, Self::P2P0)
    }
}

/// Values and barycentric derivatives of the quadratic Lagrange basis.
/// Local nodes 0..3 are the vertices, 3 + k the midpoint of local edge k.
pub mod p2 {
    pub fn values(l: [f64; 3]) -> [f64; 6] {
        [
            l[0] * (2.0 * l[0] - 1.0),
            l[1] * (2.0 * l[1] - 1.0),
            l[2] * (2.0 * l[2] - 1.0),
            4.0 * l[1] * l[2],
            4.0 * l[2] * l[0],
            4.0 * l[0] * l[1],
        ]
    }

    /// `d phi_i / d lambda_k`.
    pub fn dlambda(l: [f64; 3]) -> [[f64; 3]; 6] {
        [
            [4.0 * l[0] - 1.0, 0.0, 0.0],
            [0.0, 4.0 * l[1] - 1.0, 0.0],
            [0.0, 0.0, 4.0 * l[2] - 1.0],
            [0.0, 4.0 * l[2], 4.0 * l[1]],
            [4.0 * l[2], 0.0, 4.0 * l[0]],
            [4.0 * l[1], 4.0 * l[0], 0.0],
        ]
    }

    /// Constant second barycentric derivatives.
    pub fn d2lambda() -> [[[f64; 3]; 3]; 6] {
        let mut h = [[[0.0; 3]; 3]; 6];
        for (i, hi) in h.iter_mut().take(3).enumerate() {
            hi[i][i] = 4.0;
        }
        for k in 0..3 {
            let (a, b) = ((k + 1) % 3, (k + 2) % 3);
            h[3 + k][a][b] = 4.0;
            h[3 + k][b][a] = 4.0;
        }
        h
    }

    /// Barycentric coordinates of the six nodes.
    pub const NODES: [[f64; 3]; 6] = [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.5, 0.5],
        [0.5, 0.0, 0.5],
        [0.5, 0.5, 0.0],
    ];
}

/// Affine element data: area and the constant gradients of the
/// barycentric coordinates.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub corners: [Point; 3],
    pub area: f64,
    pub grad_lambda: [[f64; 2]; 3],
}

impl ElementGeometry {
    pub fn new(corners: [Point; 3]) -> Self {
        let [a, b, c] = corners;
        let area = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]));
        let inv = 1.0 / (2.0 * area);
        let grad_lambda = [
            [(b[1] - c[1]) * inv, (c[0] - b[0]) * inv],
            [(c[1] - a[1]) * inv, (a[0] - c[0]) * inv],
            [(a[1] - b[1]) * inv, (b[0] - a[0]) * inv],
        ];
        Self { corners, area, grad_lambda }
    }

    pub fn point(&self, l: [f64; 3]) -> Point {
        let [a, b, c] = self.corners;
        [l[0] * a[0] + l[1] * b[0] + l[2] * c[0], l[0] * a[1] + l[1] * b[1] + l[2] * c[1]]
    }

    pub fn grad_from_dlambda(&self, d: [f64; 3]) -> [f64; 2] {
        let g = &self.grad_lambda;
        [
            d[0] * g[0][0] + d[1] * g[1][0] + d[2] * g[2][0],
            d[0] * g[0][1] + d[1] * g[1][1] + d[2] * g[2][1],
        ]
    }

    /// Physical gradients of the six P2 basis functions at `l`.
    pub fn p2_gradients(&self, l: [f64; 3]) -> [[f64; 2]; 6] {
        let d = p2::dlambda(l);
        std::array::from_fn(|i| self.grad_from_dlambda(d[i]))
    }

    /// Physical Hessians of the six P2 basis functions (constant).
    pub fn p2_hessians(&self) -> [[[f64; 2]; 2]; 6] {
        let h = p2::d2lambda();
        let g = &self.grad_lambda;
        std::array::from_fn(|i| {
            let mut out = [[0.0; 2]; 2];
            for (p, row) in out.iter_mut().enumerate() {
                for (q, v) in row.iter_mut().enumerate() {
                    for a in 0..3 {
                        for b in 0..3 {
                            *v += h[i][a][b] * g[a][p] * g[b][q];
                        }
                    }
                }
            }
            out
        })
    }
}

/// Elementwise polynomials in the reference coordinates `(x, y) = (l1, l2)`
/// using the monomials `x^a y^b`, `a + b <= degree`, ordered by total degree.
pub mod monomial {
    pub fn count(degree: usize) -> usize {
        (degree + 1) * (degree + 2) / 2
    }

    pub fn exponents(degree: usize) -> Vec<(i32, i32)> {
        let mut out = Vec::with_capacity(count(degree));
        for total in 0..=degree as i32 {
            for b in 0..=total {
                out.push((total - b, b));
            }
        }
        out
    }

    pub fn values(degree: usize, l: [f64; 3], out: &mut [f64]) {
        for (k, (a, b)) in exponents(degree).into_iter().enumerate() {
            out[k] = l[1].powi(a) * l[2].powi(b);
        }
    }

    /// Derivatives with respect to the reference coordinates.
    pub fn reference_gradients(degree: usize, l: [f64; 3], out: &mut [[f64; 2]]) {
        for (k, (a, b)) in exponents(degree).into_iter().enumerate() {
            let dx = if a > 0 { a as f64 * l[1].powi(a - 1) * l[2].powi(b) } else { 0.0 };
            let dy = if b > 0 { b as f64 * l[1].powi(a) * l[2].powi(b - 1) } else { 0.0 };
            out[k] = [dx, dy];
        }
    }
}

/// Inverse reference Gram matrix of the monomial basis; the physical Gram
/// matrix is `2|E|` times the reference one, so local L2 projections can be
/// computed entirely on the reference element.
fn reference_gram_inverse(degree: usize) -> Arc<DMatrix<f64>> {
    use std::sync::{Mutex, OnceLock};
    static CACHE: OnceLock<Mutex<Vec<Option<Arc<DMatrix<f64>>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(vec![None; 8]));
    let mut guard = cache.lock().expect("gram cache");
    if let Some(m) = &guard[degree] {
        return m.clone();
    }
    let n = monomial::count(degree);
    let q = triangle_rule(2 * degree);
    let mut g = DMatrix::zeros(n, n);
    let mut v = vec![0.0; n];
    for (p, &w) in q.points.iter().zip(&q.weights) {
        monomial::values(degree, *p, &mut v);
        for i in 0..n {
            for j in 0..n {
                g[(i, j)] += w * v[i] * v[j];
            }
        }
    }
    let inv = Arc::new(g.cholesky().expect("monomial Gram matrix is SPD").inverse());
    guard[degree] = Some(inv.clone());
    inv
}

/// Elementwise polynomial scalar field of fixed degree.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementPolynomialField {
    pub degree: usize,
    /// `coeffs[t]` has `monomial::count(degree)` entries.
    pub coeffs: Vec<Vec<f64>>,
}

impl ElementPolynomialField {
    pub fn value(&self, t: usize, l: [f64; 3]) -> f64 {
        let n = monomial::count(self.degree);
        let mut v = [0.0; 36];
        monomial::values(self.degree, l, &mut v[..n]);
        self.coeffs[t].iter().zip(&v[..n]).map(|(c, m)| c * m).sum()
    }

    pub fn gradient(&self, geo: &ElementGeometry, t: usize, l: [f64; 3]) -> [f64; 2] {
        let n = monomial::count(self.degree);
        let mut g = [[0.0; 2]; 36];
        monomial::reference_gradients(self.degree, l, &mut g[..n]);
        let (mut dx, mut dy) = (0.0, 0.0);
        for (c, gi) in self.coeffs[t].iter().zip(&g[..n]) {
            dx += c * gi[0];
            dy += c * gi[1];
        }
        // Reference coordinates are (l1, l2).
        geo.grad_from_dlambda([0.0, dx, dy])
    }
}

/// Elementwise polynomial symmetric tensor field (components xx, xy, yy).
#[derive(Debug, Clone, PartialEq)]
pub struct ElementTensorField {
    pub components: [ElementPolynomialField; 3],
}

impl ElementTensorField {
    pub fn value(&self, t: usize, l: [f64; 3]) -> Sym {
        Sym::new(self.components[0].value(t, l), self.components[1].value(t, l), self.components[2].value(t, l))
    }

    /// Row-wise divergence `(div T)_i = sum_j d_j T_ij`.
    pub fn divergence(&self, geo: &ElementGeometry, t: usize, l: [f64; 3]) -> [f64; 2] {
        let gxx = self.components[0].gradient(geo, t, l);
        let gxy = self.components[1].gradient(geo, t, l);
        let gyy = self.components[2].gradient(geo, t, l);
        [gxx[0] + gxy[1], gxy[0] + gyy[1]]
    }
}

/// Local L2 projection of a sampled scalar onto elementwise polynomials.
pub fn project_scalar<F>(mesh: &Mesh, degree: usize, quad_degree: usize, sample: F) -> ElementPolynomialField
where
    F: Fn(usize, [f64; 3]) -> f64,
{
    let ginv = reference_gram_inverse(degree);
    let n = monomial::count(degree);
    let q = triangle_rule(quad_degree.max(2 * degree));
    let mut m = vec![0.0; n];
    let coeffs = (0..mesh.num_triangles())
        .map(|t| {
            let mut rhs = DVector::zeros(n);
            for (p, &w) in q.points.iter().zip(&q.weights) {
                monomial::values(degree, *p, &mut m);
                let s = sample(t, *p);
                for i in 0..n {
                    rhs[i] += w * m[i] * s;
                }
            }
            (&*ginv * rhs).iter().copied().collect()
        })
        .collect();
    ElementPolynomialField { degree, coeffs }
}

/// Element-local values of a velocity field at a point.
#[derive(Debug, Clone, Copy, Default)]
pub struct VelocityPoint {
    pub value: [f64; 2],
    /// `grad[i][j] = d u_i / d x_j`.
    pub grad: [[f64; 2]; 2],
}

impl VelocityPoint {
    pub fn strain(&self) -> Sym {
        let g = &self.grad;
        Sym::new(g[0][0], 0.5 * (g[0][1] + g[1][0]), g[1][1])
    }

    pub fn divergence(&self) -> f64 {
        self.grad[0][0] + self.grad[1][1]
    }
}

/// Value or gradient of a discrete field at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldValue {
    pub value: Vec<f64>,
    /// One gradient per component.
    pub gradient: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Velocity,
    Pressure,
}

/// A coefficient vector attached to one of the two spaces of a pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldFunction {
    pub kind: FieldKind,
    pub coeffs: Vec<f64>,
}

impl FieldFunction {
    pub fn evaluate(&self, space: &FunctionSpacePair, t: usize, l: [f64; 3]) -> FieldValue {
        match self.kind {
            FieldKind::Velocity => {
                let v = space.velocity_at(&self.coeffs, t, l);
                FieldValue { value: v.value.to_vec(), gradient: v.grad.to_vec() }
            }
            FieldKind::Pressure => {
                let (p, g) = space.pressure_at(&self.coeffs, t, l);
                FieldValue { value: vec![p], gradient: vec![g] }
            }
        }
    }
}

/// A velocity/pressure pair with its degree-of-freedom maps.
#[derive(Debug, Clone)]
pub struct FunctionSpacePair {
    pub mesh: Mesh,
    pub topo: Topology,
    pub pair: PairKind,
    pub velocity_degree: usize,
    geometry: Vec<ElementGeometry>,
    /// Free (non-Dirichlet) index of every full velocity dof.
    free_index: Vec<Option<usize>>,
    free_dofs: Vec<usize>,
    pressure_dofs: usize,
    pressure_local: Vec<Vec<usize>>,
}

impl FunctionSpacePair {
    pub fn new(mesh: Mesh, pair: PairKind) -> Self {
        let topo = mesh.topology();
        let nv = mesh.num_vertices();
        let nnodes = nv + topo.edges.len();
        let mut dirichlet = vec![false; nnodes];
        for b in mesh.boundary() {
            dirichlet[b.vertices[0]] = true;
            dirichlet[b.vertices[1]] = true;
            if let Some(e) = topo.edge_of(b.vertices[0], b.vertices[1]) {
                dirichlet[nv + e] = true;
            }
        }
        let mut free_index = vec![None; 2 * nnodes];
        let mut free_dofs = Vec::new();
        for node in 0..nnodes {
            if dirichlet[node] {
                continue;
            }
            for c in 0..2 {
                free_index[2 * node + c] = Some(free_dofs.len());
                free_dofs.push(2 * node + c);
            }
        }
        let (pressure_dofs, pressure_local) = match pair {
            PairKind::TaylorHood => (nv, mesh.triangles().iter().map(|t| t.to_vec()).collect()),
            PairKind::P2P0 => (mesh.num_triangles(), (0..mesh.num_triangles()).map(|t| vec![t]).collect()),
            PairKind::EqualOrderP2 => (
                nnodes,
                (0..mesh.num_triangles())
                    .map(|t| {
                        let tri = mesh.triangles()[t];
                        let te = topo.triangle_edges[t];
                        vec![tri[0], tri[1], tri[2], nv + te[0], nv + te[1], nv + te[2]]
                    })
                    .collect(),
            ),
        };
        let geometry = (0..mesh.num_triangles()).map(|t| ElementGeometry::new(mesh.corners(t))).collect();
        Self {
            mesh,
            topo,
            pair,
            velocity_degree: 2,
            geometry,
            free_index,
            free_dofs,
            pressure_dofs,
            pressure_local,
        }
    }

    pub fn geometry(&self, t: usize) -> &ElementGeometry {
        &self.geometry[t]
    }

    pub fn num_nodes(&self) -> usize {
        self.mesh.num_vertices() + self.topo.edges.len()
    }

    /// Velocity dofs before boundary conditions.
    pub fn num_velocity_dofs(&self) -> usize {
        2 * self.num_nodes()
    }

    pub fn num_free_velocity_dofs(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn num_pressure_dofs(&self) -> usize {
        self.pressure_dofs
    }

    /// Number of mean-value constraints on the pressure.
    pub fn pressure_constraints(&self) -> usize {
        1
    }

    pub fn free_index(&self, dof: usize) -> Option<usize> {
        self.free_index[dof]
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free_dofs
    }

    /// Global P2 nodes of element `t` in local order.
    pub fn element_nodes(&self, t: usize) -> [usize; 6] {
        let tri = self.mesh.triangles()[t];
        let te = self.topo.triangle_edges[t];
        let nv = self.mesh.num_vertices();
        [tri[0], tri[1], tri[2], nv + te[0], nv + te[1], nv + te[2]]
    }

    /// Full velocity dofs of element `t`, local index `2 * node + comp`.
    pub fn element_velocity_dofs(&self, t: usize) -> [usize; 12] {
        let n = self.element_nodes(t);
        std::array::from_fn(|k| 2 * n[k / 2] + k % 2)
    }

    pub fn element_pressure_dofs(&self, t: usize) -> &[usize] {
        &self.pressure_local[t]
    }

    /// Coordinates of every P2 node.
    pub fn node_coordinates(&self) -> Vec<Point> {
        let v = self.mesh.vertices();
        let mut out = v.to_vec();
        out.extend(self.topo.edges.iter().map(|e| [0.5 * (v[e[0]][0] + v[e[1]][0]), 0.5 * (v[e[0]][1] + v[e[1]][1])]));
        out
    }

    /// Pressure basis values at `l` (local order), and their gradients.
    pub fn pressure_basis(&self, t: usize, l: [f64; 3]) -> (Vec<f64>, Vec<[f64; 2]>) {
        let geo = &self.geometry[t];
        match self.pair {
            PairKind::TaylorHood => (l.to_vec(), geo.grad_lambda.to_vec()),
            PairKind::P2P0 => (vec![1.0], vec![[0.0, 0.0]]),
            PairKind::EqualOrderP2 => (p2::values(l).to_vec(), geo.p2_gradients(l).to_vec()),
        }
    }

    pub fn velocity_at(&self, coeffs: &[f64], t: usize, l: [f64; 3]) -> VelocityPoint {
        let nodes = self.element_nodes(t);
        let phi = p2::values(l);
        let grads = self.geometry[t].p2_gradients(l);
        let mut out = VelocityPoint::default();
        for k in 0..6 {
            for c in 0..2 {
                let u = coeffs[2 * nodes[k] + c];
                out.value[c] += u * phi[k];
                out.grad[c][0] += u * grads[k][0];
                out.grad[c][1] += u * grads[k][1];
            }
        }
        out
    }

    /// Second derivatives `hess[i][p][q] = d^2 u_i / dx_p dx_q` (constant on
    /// each element).
    pub fn velocity_hessian(&self, coeffs: &[f64], t: usize) -> [[[f64; 2]; 2]; 2] {
        let nodes = self.element_nodes(t);
        let h = self.geometry[t].p2_hessians();
        let mut out = [[[0.0; 2]; 2]; 2];
        for k in 0..6 {
            for (c, oc) in out.iter_mut().enumerate() {
                let u = coeffs[2 * nodes[k] + c];
                for p in 0..2 {
                    for q in 0..2 {
                        oc[p][q] += u * h[k][p][q];
                    }
                }
            }
        }
        out
    }

    pub fn pressure_at(&self, coeffs: &[f64], t: usize, l: [f64; 3]) -> (f64, [f64; 2]) {
        let (phi, grads) = self.pressure_basis(t, l);
        let dofs = &self.pressure_local[t];
        let mut p = 0.0;
        let mut g = [0.0; 2];
        for k in 0..dofs.len() {
            p += coeffs[dofs[k]] * phi[k];
            g[0] += coeffs[dofs[k]] * grads[k][0];
            g[1] += coeffs[dofs[k]] * grads[k][1];
        }
        (p, g)
    }

    /// Nodal interpolation of a vector field (boundary values kept).
    pub fn interpolate_velocity<F: Fn(Point) -> [f64; 2]>(&self, f: F) -> Vec<f64> {
        let mut out = vec![0.0; self.num_velocity_dofs()];
        for (n, x) in self.node_coordinates().into_iter().enumerate() {
            let v = f(x);
            out[2 * n] = v[0];
            out[2 * n + 1] = v[1];
        }
        out
    }

    /// Nodal interpolation of a scalar into the pressure space.
    pub fn interpolate_pressure<F: Fn(Point) -> f64>(&self, f: F) -> Vec<f64> {
        match self.pair {
            PairKind::TaylorHood => self.mesh.vertices().iter().map(|&x| f(x)).collect(),
            PairKind::P2P0 => (0..self.mesh.num_triangles()).map(|t| f(self.mesh.centroid(t))).collect(),
            PairKind::EqualOrderP2 => self.node_coordinates().into_iter().map(f).collect(),
        }
    }

    /// Sets every Dirichlet entry of a full velocity vector to zero.
    pub fn apply_dirichlet(&self, coeffs: &mut [f64]) {
        for (dof, idx) in self.free_index.iter().enumerate() {
            if idx.is_none() {
                coeffs[dof] = 0.0;
            }
        }
    }

    /// Elementwise L2 projection of a sampled symmetric tensor onto
    /// polynomials of degree `velocity_degree - 1`.
    pub fn project_stress<F>(&self, quad_degree: usize, sample: F) -> ElementTensorField
    where
        F: Fn(usize, [f64; 3]) -> Sym,
    {
        let degree = self.velocity_degree - 1;
        let ginv = reference_gram_inverse(degree);
        let n = monomial::count(degree);
        let q = triangle_rule(quad_degree.max(2 * degree));
        let mut m = vec![0.0; n];
        let mut comps: [Vec<Vec<f64>>; 3] = Default::default();
        for t in 0..self.mesh.num_triangles() {
            let mut rhs = [DVector::zeros(n), DVector::zeros(n), DVector::zeros(n)];
            for (p, &w) in q.points.iter().zip(&q.weights) {
                monomial::values(degree, *p, &mut m);
                let s = sample(t, *p);
                for i in 0..n {
                    rhs[0][i] += w * m[i] * s.xx;
                    rhs[1][i] += w * m[i] * s.xy;
                    rhs[2][i] += w * m[i] * s.yy;
                }
            }
            for c in 0..3 {
                comps[c].push((&*ginv * &rhs[c]).iter().copied().collect());
            }
        }
        let [a, b, c] = comps;
        ElementTensorField {
            components: [
                ElementPolynomialField { degree, coeffs: a },
                ElementPolynomialField { degree, coeffs: b },
                ElementPolynomialField { degree, coeffs: c },
            ],
        }
    }

    /// Local projection into the pressure space: elementwise means for P0,
    /// and for continuous P1 the Scott-Zhang functional on the lowest-index
    /// element containing each vertex.
    pub fn project_pressure<F>(&self, quad_degree: usize, sample: F) -> Vec<f64>
    where
        F: Fn(usize, [f64; 3]) -> f64,
    {
        let q = triangle_rule(quad_degree);
        match self.pair {
            PairKind::P2P0 => (0..self.mesh.num_triangles())
                .map(|t| {
                    q.points.iter().zip(&q.weights).map(|(p, w)| 2.0 * w * sample(t, *p)).sum::<f64>()
                })
                .collect(),
            PairKind::TaylorHood => {
                let mut out = vec![0.0; self.mesh.num_vertices()];
                for (v, o) in out.iter_mut().enumerate() {
                    let Some(&t) = self.topo.vertex_triangles[v].iter().min() else { continue };
                    let local = self.mesh.triangles()[t].iter().position(|&x| x == v).expect("vertex of element");
                    // Dual basis of P1 with respect to the L2 product on E:
                    // (3 / |E|) (4 l_i - 1); integrated against q over E.
                    *o = q
                        .points
                        .iter()
                        .zip(&q.weights)
                        .map(|(p, w)| 2.0 * w * 3.0 * (4.0 * p[local] - 1.0) * sample(t, *p))
                        .sum();
                }
                out
            }
            PairKind::EqualOrderP2 => {
                // Nodal interpolation at element nodes; only used for the
                // inf-sup control, where exact reproduction is all we need.
                let mut out = vec![0.0; self.num_pressure_dofs()];
                for t in 0..self.mesh.num_triangles() {
                    for (k, &dof) in self.pressure_local[t].iter().enumerate() {
                        out[dof] = sample(t, p2::NODES[k]);
                    }
                }
                out
            }
        }
    }

    /// Transfers a velocity vector from `coarse` into this (refined) space.
    /// `parent[t]` is the coarse element containing fine element `t`.
    pub fn prolongate_velocity(&self, coarse: &FunctionSpacePair, parent: &[usize], coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_velocity_dofs()];
        let mut done = vec![false; self.num_nodes()];
        for t in 0..self.mesh.num_triangles() {
            let nodes = self.element_nodes(t);
            let geo = &self.geometry[t];
            for (k, &n) in nodes.iter().enumerate() {
                if done[n] {
                    continue;
                }
                done[n] = true;
                let x = geo.point(p2::NODES[k]);
                let l = coarse.mesh.barycentric(parent[t], x);
                let v = coarse.velocity_at(coeffs, parent[t], l);
                out[2 * n] = v.value[0];
                out[2 * n + 1] = v.value[1];
            }
        }
        out
    }

    pub fn prolongate_pressure(&self, coarse: &FunctionSpacePair, parent: &[usize], coeffs: &[f64]) -> Vec<f64> {
        match self.pair {
            PairKind::P2P0 => parent.iter().map(|&p| coeffs[p]).collect(),
            _ => {
                let mut out = vec![0.0; self.num_pressure_dofs()];
                for t in 0..self.mesh.num_triangles() {
                    let geo = &self.geometry[t];
                    let nodes: Vec<[f64; 3]> = match self.pair {
                        PairKind::TaylorHood => p2::NODES[..3].to_vec(),
                        _ => p2::NODES.to_vec(),
                    };
                    for (k, &dof) in self.pressure_local[t].iter().enumerate() {
                        let x = geo.point(nodes[k]);
                        let l = coarse.mesh.barycentric(parent[t], x);
                        out[dof] = coarse.pressure_at(coeffs, parent[t], l).0;
                    }
                }
                out
            }
        }
    }

    /// Vector Laplacian on free velocity dofs (the H1_0 seminorm Gram matrix).
    pub fn velocity_gram_dense(&self) -> DMatrix<f64> {
        let n = self.free_dofs.len();
        let mut a = DMatrix::zeros(n, n);
        let q = triangle_rule(2);
        for t in 0..self.mesh.num_triangles() {
            let geo = &self.geometry[t];
            let dofs = self.element_velocity_dofs(t);
            for (p, &w) in q.points.iter().zip(&q.weights) {
                let g = geo.p2_gradients(*p);
                let jw = 2.0 * geo.area * w;
                for i in 0..12 {
                    let Some(fi) = self.free_index[dofs[i]] else { continue };
                    for j in 0..12 {
                        if i % 2 != j % 2 {
                            continue;
                        }
                        let Some(fj) = self.free_index[dofs[j]] else { continue };
                        let gi = g[i / 2];
                        let gj = g[j / 2];
                        a[(fi, fj)] += jw * (gi[0] * gj[0] + gi[1] * gj[1]);
                    }
                }
            }
        }
        a
    }

    /// `B[q, v] = int q div v` (pressure rows, free velocity columns) and the
    /// pressure mass matrix.
    pub fn divergence_and_mass_dense(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let np = self.pressure_dofs;
        let mut b = DMatrix::zeros(np, self.free_dofs.len());
        let mut m = DMatrix::zeros(np, np);
        let q = triangle_rule(4);
        for t in 0..self.mesh.num_triangles() {
            let geo = &self.geometry[t];
            let vd = self.element_velocity_dofs(t);
            let pd = &self.pressure_local[t];
            for (p, &w) in q.points.iter().zip(&q.weights) {
                let g = geo.p2_gradients(*p);
                let (psi, _) = self.pressure_basis(t, *p);
                let jw = 2.0 * geo.area * w;
                for (a, &qa) in pd.iter().enumerate() {
                    for i in 0..12 {
                        let Some(fi) = self.free_index[vd[i]] else { continue };
                        b[(qa, fi)] += jw * psi[a] * g[i / 2][i % 2];
                    }
                    for (c, &qc) in pd.iter().enumerate() {
                        m[(qa, qc)] += jw * psi[a] * psi[c];
                    }
                }
            }
        }
        (b, m)
    }

    /// Discrete inf-sup constant: square root of the smallest eigenvalue of
    /// `B A^{-1} B^T p = lambda M p` on mean-zero pressures.
    pub fn inf_sup_constant(&self) -> Result<f64, SpaceError> {
        let a = self.velocity_gram_dense();
        let (b, m) = self.divergence_and_mass_dense();
        let a_chol = a.cholesky().ok_or_else(|| SpaceError::Eigen("velocity Gram matrix not SPD".into()))?;
        let schur = &b * a_chol.solve(&b.transpose());
        let m_chol = m.cholesky().ok_or_else(|| SpaceError::Eigen("pressure mass matrix not SPD".into()))?;
        let l = m_chol.l();
        let linv = l
            .clone()
            .try_inverse()
            .ok_or_else(|| SpaceError::Eigen("pressure mass factor singular".into()))?;
        let c = &linv * schur * linv.transpose();
        // Remove the constant pressure: w = L^T 1 spans it in these coordinates.
        let np = c.nrows();
        let w = l.transpose() * DVector::from_element(np, 1.0);
        let mut u = w.clone();
        let sign = if u[0] >= 0.0 { 1.0 } else { -1.0 };
        u[0] += sign * w.norm();
        let u = u.normalize();
        let h = DMatrix::identity(np, np) - 2.0 * &u * u.transpose();
        let ch = &h * c * &h;
        let reduced = ch.view((1, 1), (np - 1, np - 1)).into_owned();
        let reduced = 0.5 * (&reduced + reduced.transpose());
        let eig = reduced.symmetric_eigenvalues();
        let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
        if !min.is_finite() {
            return Err(SpaceError::Eigen("non-finite eigenvalue".into()));
        }
        Ok(min.max(0.0).sqrt())
    }

    /// Dirichlet node set (for diagnostics and tests).
    pub fn dirichlet_nodes(&self) -> BTreeSet<usize> {
        (0..self.num_nodes()).filter(|&n| self.free_index[2 * n].is_none()).collect()
    }
}
