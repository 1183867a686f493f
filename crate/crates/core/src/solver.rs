//! Discrete nonlinear system for a regularized law and its solution by
//! damped Newton iteration, with Picard steps and continuation in the
//! smoothing parameter as fallbacks.
//!
//! Unknowns are ordered as free velocity dofs, pressure dofs, and one
//! Lagrange multiplier imposing a zero pressure mean.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use rayon::prelude::*;
use thiserror::Error;

use crate::constitutive::{ConstitutiveError, LawField, Tangent};
use crate::fespace::{p2, FunctionSpacePair, VelocityPoint};
use crate::forcing::Forcing;
use crate::quadrature::triangle_rule;
use crate::tensor::Sym;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("linear solve inaccurate: relative residual {0:e}")]
    InaccurateSolve(f64),
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("nonlinear iteration did not converge after {iterations} steps (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("initial guess has {found} entries, expected {expected}")]
    Dimension { expected: usize, found: usize },
    #[error(transparent)]
    Law(#[from] ConstitutiveError),
}

/// A discrete velocity (full dof numbering), pressure and multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteState {
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
    pub multiplier: f64,
}

impl DiscreteState {
    pub fn zero(space: &FunctionSpacePair) -> Self {
        Self {
            velocity: vec![0.0; space.num_velocity_dofs()],
            pressure: vec![0.0; space.num_pressure_dofs()],
            multiplier: 0.0,
        }
    }

    /// Unknown vector: free velocity dofs, pressure dofs, multiplier.
    pub fn to_unknowns(&self, space: &FunctionSpacePair) -> Vec<f64> {
        let mut x: Vec<f64> = space.free_dofs().iter().map(|&d| self.velocity[d]).collect();
        x.extend_from_slice(&self.pressure);
        x.push(self.multiplier);
        x
    }

    pub fn from_unknowns(space: &FunctionSpacePair, x: &[f64]) -> Self {
        let nf = space.num_free_velocity_dofs();
        let np = space.num_pressure_dofs();
        let mut velocity = vec![0.0; space.num_velocity_dofs()];
        for (k, &d) in space.free_dofs().iter().enumerate() {
            velocity[d] = x[k];
        }
        Self { velocity, pressure: x[nf..nf + np].to_vec(), multiplier: x[nf + np] }
    }
}

/// Everything that defines the discrete problem on one mesh.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub space: &'a FunctionSpacePair,
    pub laws: &'a LawField,
    pub forcing: &'a Forcing,
    pub convection: bool,
    pub quad_degree: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_newton: usize,
    pub max_picard: usize,
    /// Ratio between consecutive smoothing parameters when continuation is
    /// needed.
    pub continuation_factor: f64,
    pub max_continuation: usize,
    pub continuation: bool,
    /// Smallest line-search step before a linearization is abandoned.
    pub min_damping: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_newton: 40,
            max_picard: 200,
            continuation_factor: 0.5,
            max_continuation: 40,
            continuation: true,
            min_damping: 1.0 / 1024.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveReport {
    pub newton_steps: usize,
    pub picard_steps: usize,
    pub continuation_levels: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linearization {
    Newton,
    Picard,
}

/// Residual vector and (optionally) a sparse linearization.
pub struct System {
    pub residual: Vec<f64>,
    pub triplets: Vec<(usize, usize, f64)>,
    pub size: usize,
}

/// `b(v, w, h) = 1/2 ((v.grad) w . h - (v.grad) h . w)` evaluated from
/// point values.
pub fn trilinear_point(v: &VelocityPoint, w: &VelocityPoint, h: &VelocityPoint) -> f64 {
    let conv = |a: &VelocityPoint, b: &VelocityPoint, c: &VelocityPoint| {
        (0..2).map(|i| (0..2).map(|j| a.value[j] * b.grad[i][j]).sum::<f64>() * c.value[i]).sum::<f64>()
    };
    0.5 * (conv(v, w, h) - conv(v, h, w))
}

/// The form `b` integrated over the mesh for three velocity vectors.
pub fn trilinear_form(space: &FunctionSpacePair, v: &[f64], w: &[f64], h: &[f64], quad_degree: usize) -> f64 {
    let q = triangle_rule(quad_degree);
    let mut total = 0.0;
    for t in 0..space.mesh.num_triangles() {
        let area = space.geometry(t).area;
        for (p, &wq) in q.points.iter().zip(&q.weights) {
            let (a, b, c) = (space.velocity_at(v, t, *p), space.velocity_at(w, t, *p), space.velocity_at(h, t, *p));
            total += 2.0 * area * wq * trilinear_point(&a, &b, &c);
        }
    }
    total
}

/// Strong form of the skew-symmetric convection: `(v.grad) v + 1/2 v div v`.
pub fn strong_convection(v: &VelocityPoint) -> [f64; 2] {
    let div = v.divergence();
    std::array::from_fn(|i| v.value[0] * v.grad[i][0] + v.value[1] * v.grad[i][1] + 0.5 * v.value[i] * div)
}

fn strain_of_basis(g: [f64; 2], comp: usize) -> Sym {
    if comp == 0 {
        Sym::new(g[0], 0.5 * g[1], 0.0)
    } else {
        Sym::new(0.0, 0.5 * g[0], g[1])
    }
}

/// `(T grad phi)_c`, i.e. `T : D(phi e_c)` for symmetric `T`.
fn contract(t: Sym, g: [f64; 2], comp: usize) -> f64 {
    if comp == 0 {
        t.xx * g[0] + t.xy * g[1]
    } else {
        t.xy * g[0] + t.yy * g[1]
    }
}

struct LocalSystem {
    rows: Vec<Option<usize>>,
    residual: Vec<f64>,
    matrix: Vec<f64>,
}

impl Problem<'_> {
    pub fn num_unknowns(&self) -> usize {
        self.space.num_free_velocity_dofs() + self.space.num_pressure_dofs() + 1
    }

    fn local(&self, t: usize, state: &DiscreteState, lin: Option<Linearization>) -> LocalSystem {
        let space = self.space;
        let nf = space.num_free_velocity_dofs();
        let np = space.num_pressure_dofs();
        let geo = space.geometry(t);
        let law = self.laws.at(space.mesh.macro_elements()[t]);
        let vdofs = space.element_velocity_dofs(t);
        let pdofs = space.element_pressure_dofs(t);
        let npl = pdofs.len();
        let size = 12 + npl + 1;
        let mut rows: Vec<Option<usize>> = vdofs.iter().map(|&d| space.free_index(d)).collect();
        rows.extend(pdofs.iter().map(|&j| Some(nf + j)));
        rows.push(Some(nf + np));
        let mut res = vec![0.0; size];
        let mut mat = if lin.is_some() { vec![0.0; size * size] } else { Vec::new() };
        let q = triangle_rule(self.quad_degree);
        let ulocal: [f64; 12] = std::array::from_fn(|k| state.velocity[vdofs[k]]);
        let plocal: Vec<f64> = pdofs.iter().map(|&j| state.pressure[j]).collect();
        let lam = state.multiplier;
        let il = 12 + npl;
        for (pt, &wq) in q.points.iter().zip(&q.weights) {
            let w = 2.0 * geo.area * wq;
            let phi = p2::values(*pt);
            let grads = geo.p2_gradients(*pt);
            let mut u = VelocityPoint::default();
            for k in 0..6 {
                for c in 0..2 {
                    let uk = ulocal[2 * k + c];
                    u.value[c] += uk * phi[k];
                    u.grad[c][0] += uk * grads[k][0];
                    u.grad[c][1] += uk * grads[k][1];
                }
            }
            let (psi, _) = space.pressure_basis(t, *pt);
            let p: f64 = psi.iter().zip(&plocal).map(|(a, b)| a * b).sum();
            let divu = u.divergence();
            let (s, tangent) = law.stress_and_tangent(u.strain());
            let f = self.forcing.evaluate(geo.point(*pt));
            let conv: [f64; 2] =
                std::array::from_fn(|c| u.value[0] * u.grad[c][0] + u.value[1] * u.grad[c][1]);
            for k in 0..6 {
                let udotg = u.value[0] * grads[k][0] + u.value[1] * grads[k][1];
                for c in 0..2 {
                    let i = 2 * k + c;
                    let mut r = contract(s, grads[k], c) - p * grads[k][c] - f[c] * phi[k];
                    if self.convection {
                        r += 0.5 * (conv[c] * phi[k] - udotg * u.value[c]);
                    }
                    res[i] += w * r;
                }
            }
            for j in 0..npl {
                res[12 + j] += w * (-psi[j] * divu + lam * psi[j]);
            }
            res[il] += w * p;

            let Some(lin) = lin else { continue };
            let tangent = match lin {
                Linearization::Newton => tangent,
                Linearization::Picard => Tangent { phi: law.scalar(u.strain().norm()).secant, beta: 0.0, dir: Sym::ZERO },
            };
            for l in 0..6 {
                let udotgl = u.value[0] * grads[l][0] + u.value[1] * grads[l][1];
                for e in 0..2 {
                    let m = 2 * l + e;
                    let ts = tangent.apply(strain_of_basis(grads[l], e));
                    for k in 0..6 {
                        let udotgk = u.value[0] * grads[k][0] + u.value[1] * grads[k][1];
                        for c in 0..2 {
                            let i = 2 * k + c;
                            let mut v = contract(ts, grads[k], c);
                            if self.convection {
                                if c == e {
                                    v += 0.5 * (udotgl * phi[k] - udotgk * phi[l]);
                                }
                                if lin == Linearization::Newton {
                                    v += 0.5 * phi[l] * (u.grad[c][e] * phi[k] - grads[k][e] * u.value[c]);
                                }
                            }
                            mat[i * size + m] += w * v;
                        }
                    }
                    for j in 0..npl {
                        let b = -w * psi[j] * grads[l][e];
                        mat[m * size + 12 + j] += b;
                        mat[(12 + j) * size + m] += b;
                    }
                }
            }
            for j in 0..npl {
                mat[(12 + j) * size + il] += w * psi[j];
                mat[il * size + 12 + j] += w * psi[j];
            }
        }
        LocalSystem { rows, residual: res, matrix: mat }
    }

    /// Residual and, when requested, the linearization at `state`.
    /// Elements are integrated in parallel and summed in element order.
    pub fn assemble(&self, state: &DiscreteState, lin: Option<Linearization>) -> System {
        let size = self.num_unknowns();
        let locals: Vec<LocalSystem> =
            (0..self.space.mesh.num_triangles()).into_par_iter().map(|t| self.local(t, state, lin)).collect();
        let mut residual = vec![0.0; size];
        let mut triplets = Vec::new();
        for loc in &locals {
            let n = loc.rows.len();
            for (a, ra) in loc.rows.iter().enumerate() {
                let Some(ra) = *ra else { continue };
                residual[ra] += loc.residual[a];
                if lin.is_some() {
                    for (b, rb) in loc.rows.iter().enumerate() {
                        if let Some(rb) = *rb {
                            let v = loc.matrix[a * n + b];
                            if v != 0.0 {
                                triplets.push((ra, rb, v));
                            }
                        }
                    }
                }
            }
        }
        System { residual, triplets, size }
    }

    /// Norm of the residual at the zero state, i.e. of the load vector.
    pub fn load_norm(&self) -> f64 {
        norm(&self.assemble(&DiscreteState::zero(self.space), None).residual)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves `A x = b` for a square sparse matrix given by (summed) triplets,
/// with an LU factorization and a residual check.
pub fn linear_solve(size: usize, triplets: &[(usize, usize, f64)], rhs: &[f64]) -> Result<Vec<f64>, SolverError> {
    if rhs.iter().any(|v| !v.is_finite()) || triplets.iter().any(|t| !t.2.is_finite()) {
        return Err(SolverError::NonFinite("linear system"));
    }
    let entries: Vec<Triplet<usize, usize, f64>> = triplets.iter().map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(size, size, &entries)
        .map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
    faer::set_global_parallelism(Par::Seq);
    let lu = a.sp_lu().map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
    let mut x = Mat::<f64>::from_fn(size, 1, |i, _| rhs[i]);
    lu.solve_in_place(x.as_mut());
    let sol: Vec<f64> = (0..size).map(|i| x[(i, 0)]).collect();
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::NonFinite("linear solution"));
    }
    let mut r = rhs.to_vec();
    for &(i, j, v) in triplets {
        r[i] -= v * sol[j];
    }
    let rel = norm(&r) / norm(rhs).max(f64::MIN_POSITIVE);
    if rel > 1e-8 {
        return Err(SolverError::InaccurateSolve(rel));
    }
    Ok(sol)
}

/// One damped step with the given linearization. Returns the new state and
/// residual norm, or `None` if no step length reduced the residual.
fn damped_step(
    problem: &Problem,
    state: &DiscreteState,
    res_norm: f64,
    lin: Linearization,
    min_damping: f64,
) -> Result<Option<(DiscreteState, f64)>, SolverError> {
    let sys = problem.assemble(state, Some(lin));
    let rhs: Vec<f64> = sys.residual.iter().map(|v| -v).collect();
    let delta = linear_solve(sys.size, &sys.triplets, &rhs)?;
    let x = state.to_unknowns(problem.space);
    let mut alpha = 1.0;
    while alpha >= min_damping {
        let trial: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + alpha * d).collect();
        let st = DiscreteState::from_unknowns(problem.space, &trial);
        let rn = norm(&problem.assemble(&st, None).residual);
        if rn.is_finite() && rn <= (1.0 - 1e-4 * alpha) * res_norm {
            return Ok(Some((st, rn)));
        }
        alpha *= 0.5;
    }
    Ok(None)
}

/// Newton iteration with line search and Picard fallback for one law.
fn solve_fixed(
    problem: &Problem,
    initial: DiscreteState,
    opts: &SolverOptions,
    report: &mut SolveReport,
) -> Result<DiscreteState, SolverError> {
    let target = opts.tol * problem.load_norm().max(1.0);
    let mut state = initial;
    let mut rn = norm(&problem.assemble(&state, None).residual);
    if !rn.is_finite() {
        return Err(SolverError::NonFinite("residual"));
    }
    let mut picard_left = opts.max_picard;
    let mut newton_left = opts.max_newton;
    while rn > target {
        let mut step = None;
        if newton_left > 0 {
            newton_left -= 1;
            step = damped_step(problem, &state, rn, Linearization::Newton, opts.min_damping)?;
            if step.is_some() {
                report.newton_steps += 1;
            }
        }
        if step.is_none() && picard_left > 0 {
            picard_left -= 1;
            step = damped_step(problem, &state, rn, Linearization::Picard, opts.min_damping)?;
            if step.is_some() {
                report.picard_steps += 1;
            }
        }
        match step {
            Some((s, r)) => {
                state = s;
                rn = r;
            }
            None => {
                return Err(SolverError::NotConverged {
                    iterations: report.newton_steps + report.picard_steps,
                    residual: rn,
                })
            }
        }
    }
    report.residual = rn;
    Ok(state)
}

/// Solves the discrete problem. If the iteration from `initial` fails and
/// continuation is enabled, the smoothing parameter is increased until a
/// solve succeeds and then driven back to its target value.
pub fn solve_discrete(
    problem: &Problem,
    initial: Option<DiscreteState>,
    opts: &SolverOptions,
) -> Result<(DiscreteState, SolveReport), SolverError> {
    let space = problem.space;
    let initial = initial.unwrap_or_else(|| DiscreteState::zero(space));
    if initial.velocity.len() != space.num_velocity_dofs() {
        return Err(SolverError::Dimension { expected: space.num_velocity_dofs(), found: initial.velocity.len() });
    }
    if initial.pressure.len() != space.num_pressure_dofs() {
        return Err(SolverError::Dimension { expected: space.num_pressure_dofs(), found: initial.pressure.len() });
    }
    let mut report = SolveReport::default();
    let first = solve_fixed(problem, initial.clone(), opts, &mut report);
    match first {
        Ok(s) => return Ok((s, report)),
        Err(e @ (SolverError::NotConverged { .. } | SolverError::InaccurateSolve(_))) if opts.continuation => {
            let _ = e;
        }
        Err(e) => return Err(e),
    }
    let tau = problem.laws.tau();
    let mut last_err = None;
    for levels in 1..=opts.max_continuation {
        let taus: Vec<f64> = (0..=levels).rev().map(|j| tau / opts.continuation_factor.powi(j as i32)).collect();
        let mut state = initial.clone();
        let mut ok = true;
        for (i, &tj) in taus.iter().enumerate() {
            let laws = if i + 1 == taus.len() { problem.laws.clone() } else { problem.laws.with_tau(tj)? };
            let sub = Problem { laws: &laws, ..*problem };
            match solve_fixed(&sub, state.clone(), opts, &mut report) {
                Ok(s) => state = s,
                Err(e) => {
                    last_err = Some(e);
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            report.continuation_levels = levels;
            return Ok((state, report));
        }
    }
    Err(last_err.unwrap_or(SolverError::NotConverged { iterations: 0, residual: f64::NAN }))
}

/// Dissipation `int S^n(DU) : DU`, which equals `int f . U` at a solution.
pub fn energy(problem: &Problem, state: &DiscreteState) -> f64 {
    let space = problem.space;
    let q = triangle_rule(problem.quad_degree);
    (0..space.mesh.num_triangles())
        .map(|t| {
            let law = problem.laws.at(space.mesh.macro_elements()[t]);
            let area = space.geometry(t).area;
            q.points
                .iter()
                .zip(&q.weights)
                .map(|(p, &w)| {
                    let d = space.velocity_at(&state.velocity, t, *p).strain();
                    2.0 * area * w * law.stress(d).ddot(d)
                })
                .sum::<f64>()
        })
        .sum()
}

/// `int f . U`.
pub fn work(problem: &Problem, state: &DiscreteState) -> f64 {
    let space = problem.space;
    let q = triangle_rule(problem.quad_degree);
    let mut total = 0.0;
    for t in 0..space.mesh.num_triangles() {
        let geo = space.geometry(t);
        for (p, &w) in q.points.iter().zip(&q.weights) {
            let u = space.velocity_at(&state.velocity, t, *p).value;
            let f = problem.forcing.evaluate(geo.point(*p));
            total += 2.0 * geo.area * w * (f[0] * u[0] + f[1] * u[1]);
        }
    }
    total
}

/// `sup_Q (div U, Q) / |Q|_{L2}` over the discrete pressure space.
pub fn divergence_defect(space: &FunctionSpacePair, velocity: &[f64]) -> Result<f64, SolverError> {
    let np = space.num_pressure_dofs();
    let q = triangle_rule(4);
    let mut r = vec![0.0; np];
    let mut mass = Vec::new();
    for t in 0..space.mesh.num_triangles() {
        let area = space.geometry(t).area;
        let dofs = space.element_pressure_dofs(t);
        for (p, &w) in q.points.iter().zip(&q.weights) {
            let div = space.velocity_at(velocity, t, *p).divergence();
            let (psi, _) = space.pressure_basis(t, *p);
            for (a, &da) in dofs.iter().enumerate() {
                r[da] += 2.0 * area * w * psi[a] * div;
                for (b, &db) in dofs.iter().enumerate() {
                    mass.push((da, db, 2.0 * area * w * psi[a] * psi[b]));
                }
            }
        }
    }
    if norm(&r) == 0.0 {
        return Ok(0.0);
    }
    let y = linear_solve(np, &mass, &r)?;
    Ok(r.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constitutive::{GraphModel, RegularizationKind, RegularizedLaw};
    use crate::fespace::PairKind;
    use crate::forcing::Manufactured;
    use crate::mesh::Mesh;

    fn newtonian(nu: f64) -> LawField {
        LawField::uniform(RegularizedLaw::new(GraphModel::newtonian(nu), RegularizationKind::SimpleTau, 1, 1.0).unwrap())
    }

    #[test]
    fn triplets_are_summed() {
        let x = linear_solve(2, &[(0, 0, 1.0), (0, 0, 1.0), (1, 1, 4.0), (0, 1, 1.0)], &[3.0, 4.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn trilinear_form_is_skew() {
        let space = FunctionSpacePair::new(Mesh::unit_square().refine_uniform_times(2), PairKind::TaylorHood);
        let mut v = space.interpolate_velocity(|p| [p[0] * p[1], 1.0 - p[0]]);
        let mut w = space.interpolate_velocity(|p| [p[1] * p[1], p[0]]);
        let mut h = space.interpolate_velocity(|p| [p[0] - p[1], p[0] * p[0]]);
        for f in [&mut v, &mut w, &mut h] {
            space.apply_dirichlet(f);
        }
        let a = trilinear_form(&space, &v, &w, &h, 6);
        let b = trilinear_form(&space, &v, &h, &w, 6);
        assert!((a + b).abs() < 1e-14);
        assert!(trilinear_form(&space, &v, &w, &w, 6).abs() < 1e-15);
    }

    #[test]
    fn newton_jacobian_matches_finite_differences() {
        let space = FunctionSpacePair::new(Mesh::unit_square().refine_uniform_times(2), PairKind::TaylorHood);
        let laws = LawField::uniform(
            RegularizedLaw::new(GraphModel::bingham(1.0, 1.0), RegularizationKind::SimpleTau, 2, 1.0).unwrap(),
        );
        let forcing = Forcing::Rotational { amplitude: 1.0, center: [0.5, 0.5] };
        let problem = Problem { space: &space, laws: &laws, forcing: &forcing, convection: true, quad_degree: 6 };
        let mut state = DiscreteState::zero(&space);
        state.velocity = space.interpolate_velocity(|p| [p[1] * (1.0 - p[1]) * p[0], -p[0] * (1.0 - p[0])]);
        space.apply_dirichlet(&mut state.velocity);
        state.pressure = space.interpolate_pressure(|p| p[0] * p[1]);
        state.multiplier = 0.3;
        let sys = problem.assemble(&state, Some(Linearization::Newton));
        let n = sys.size;
        let mut dense = vec![0.0; n * n];
        for &(i, j, v) in &sys.triplets {
            dense[i * n + j] += v;
        }
        let x = state.to_unknowns(&space);
        let eps = 1e-6;
        for col in [0, 3, n / 2, n - 2, n - 1] {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[col] += eps;
            xm[col] -= eps;
            let rp = problem.assemble(&DiscreteState::from_unknowns(&space, &xp), None).residual;
            let rm = problem.assemble(&DiscreteState::from_unknowns(&space, &xm), None).residual;
            for row in 0..n {
                let fd = (rp[row] - rm[row]) / (2.0 * eps);
                assert!((fd - dense[row * n + col]).abs() < 1e-6, "({row},{col}): {fd} vs {}", dense[row * n + col]);
            }
        }
    }

    #[test]
    fn manufactured_navier_stokes_solve() {
        let space = FunctionSpacePair::new(Mesh::unit_square().refine_uniform_times(6), PairKind::TaylorHood);
        let laws = newtonian(0.5);
        let forcing = Forcing::Manufactured(Manufactured { nu: 0.5, convection: true });
        let problem = Problem { space: &space, laws: &laws, forcing: &forcing, convection: true, quad_degree: 8 };
        let (state, report) = solve_discrete(&problem, None, &SolverOptions::default()).unwrap();
        assert!(report.residual <= 1e-9 * problem.load_norm().max(1.0));
        assert!(divergence_defect(&space, &state.velocity).unwrap() < 1e-10);
        assert!(state.multiplier.abs() < 1e-10);
        let m = Manufactured { nu: 0.5, convection: true };
        let exact = space.interpolate_velocity(|p| m.velocity(p));
        let err = state.velocity.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-4, "nodal error {err}");
    }
}
