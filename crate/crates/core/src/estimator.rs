//! Residual-based a posteriori indicators.
//!
//! For an element `E` with `h = h_E`:
//!
//! * `pde(E) = |h (-div P_S S + B[U,U] + grad P - f)|^t~_{t~,E}
//!   + sum over interior sides of h_S |[(P_S S - P I) nu]|^t~_{t~,S}
//!   + |S - P_S S|^t~_{t~,E}`
//! * `ic(E) = |div U|^t_{t,E}`
//! * `osc(E) = |h (f - Pi f)|^t~_{t~,E} + |S - P_S S|^t~_{t~,E}`
//!
//! where `S = S^n(DU)`, `P_S` is the elementwise L2 projection onto linear
//! tensors and `Pi` the elementwise L2 projection onto cubic vectors.

use rayon::prelude::*;

use crate::constitutive::{graph_indicator_elements, Exponents};
use crate::fespace::{project_scalar, ElementPolynomialField, ElementTensorField};
use crate::quadrature::{line_rule, triangle_rule, QuadratureRule};
use crate::solver::{strong_convection, DiscreteState, Problem};
use crate::tensor::Sym;

/// Degree of the elementwise forcing approximation in the oscillation.
const FORCING_DEGREE: usize = 3;

/// Per-element indicators and their totals.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorField {
    pub pde: Vec<f64>,
    pub ic: Vec<f64>,
    pub oscillation: Vec<f64>,
    /// Element contributions to the graph indicator.
    pub graph: Vec<f64>,
    pub e_pde: f64,
    pub e_ic: f64,
    pub e_total: f64,
    pub e_a: f64,
    pub e_osc: f64,
    pub exponents: Exponents,
}

impl IndicatorField {
    /// The marking indicator `pde(E) + ic(E)`.
    pub fn element_totals(&self) -> Vec<f64> {
        self.pde.iter().zip(&self.ic).map(|(a, b)| a + b).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.pde
            .iter()
            .chain(&self.ic)
            .chain(&self.oscillation)
            .chain(&self.graph)
            .chain([&self.e_pde, &self.e_ic, &self.e_total, &self.e_a, &self.e_osc])
            .all(|v| v.is_finite())
    }
}

/// Precomputed data shared by the element indicators of one state.
pub struct Estimator<'a> {
    pub problem: Problem<'a>,
    pub state: &'a DiscreteState,
    pub exps: Exponents,
    projected: ElementTensorField,
    forcing_projection: [ElementPolynomialField; 2],
    /// Jump contribution of every side (zero on the boundary).
    side_jumps: Vec<f64>,
}

impl<'a> Estimator<'a> {
    pub fn new(problem: Problem<'a>, state: &'a DiscreteState, exps: Exponents) -> Self {
        let space = problem.space;
        let qd = problem.quad_degree;
        let projected = space.project_stress(qd, |t, l| {
            let law = problem.laws.at(space.mesh.macro_elements()[t]);
            law.stress(space.velocity_at(&state.velocity, t, l).strain())
        });
        let fq = qd.max(2 * FORCING_DEGREE);
        let forcing_projection = [0, 1].map(|c| {
            project_scalar(&space.mesh, FORCING_DEGREE, fq, |t, l| {
                problem.forcing.evaluate(space.geometry(t).point(l))[c]
            })
        });
        let mut est = Self { problem, state, exps, projected, forcing_projection, side_jumps: Vec::new() };
        est.side_jumps =
            (0..space.topo.edges.len()).into_par_iter().map(|e| est.side_jump(e)).collect();
        est
    }

    fn rule(&self) -> &'static QuadratureRule {
        triangle_rule(self.problem.quad_degree)
    }

    fn stress_at(&self, t: usize, l: [f64; 3]) -> Sym {
        let space = self.problem.space;
        let law = self.problem.laws.at(space.mesh.macro_elements()[t]);
        law.stress(space.velocity_at(&self.state.velocity, t, l).strain())
    }

    /// `h_S |[(P_S S - P I) nu]|^t~_{t~,S}` for an interior side, with `nu`
    /// pointing from the lower- to the higher-index neighbour.
    fn side_jump(&self, e: usize) -> f64 {
        let space = self.problem.space;
        let [Some(a), Some(b)] = space.topo.edge_triangles[e] else { return 0.0 };
        let [i, j] = space.topo.edges[e];
        let (p, q) = (space.mesh.vertices()[i], space.mesh.vertices()[j]);
        let len = space.mesh.side_size(i, j);
        let mut nu = [(q[1] - p[1]) / len, -(q[0] - p[0]) / len];
        let ca = space.mesh.centroid(a);
        if (p[0] - ca[0]) * nu[0] + (p[1] - ca[1]) * nu[1] < 0.0 {
            nu = [-nu[0], -nu[1]];
        }
        let traction = |t: usize, x: [f64; 2]| {
            let l = space.mesh.barycentric(t, x);
            let s = self.projected.value(t, l);
            let pr = space.pressure_at(&self.state.pressure, t, l).0;
            (s - pr * Sym::IDENTITY).apply(nu)
        };
        let rule = line_rule(2 * space.velocity_degree);
        let tt = self.exps.t_tilde;
        let integral: f64 = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(&s, &w)| {
                let x = [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])];
                let (ta, tb) = (traction(a, x), traction(b, x));
                w * len * (tb[0] - ta[0]).hypot(tb[1] - ta[1]).powf(tt)
            })
            .sum();
        len * integral
    }

    /// Interior residual `-div P_S S + B[U,U] + grad P - f` at a point.
    pub fn interior_residual(&self, t: usize, l: [f64; 3]) -> [f64; 2] {
        let space = self.problem.space;
        let geo = space.geometry(t);
        let div = self.projected.divergence(geo, t, l);
        let (_, gp) = space.pressure_at(&self.state.pressure, t, l);
        let f = self.problem.forcing.evaluate(geo.point(l));
        let conv = if self.problem.convection {
            strong_convection(&space.velocity_at(&self.state.velocity, t, l))
        } else {
            [0.0, 0.0]
        };
        std::array::from_fn(|c| -div[c] + conv[c] + gp[c] - f[c])
    }

    fn interior_term(&self, t: usize) -> f64 {
        let area = self.problem.space.geometry(t).area;
        let h = self.problem.space.mesh.mesh_size(t);
        let tt = self.exps.t_tilde;
        let q = self.rule();
        let s: f64 = q
            .points
            .iter()
            .zip(&q.weights)
            .map(|(p, &w)| {
                let r = self.interior_residual(t, *p);
                2.0 * area * w * r[0].hypot(r[1]).powf(tt)
            })
            .sum();
        h.powf(tt) * s
    }

    /// `|S - P_S S|^t~_{t~,E}`.
    pub fn projection_defect(&self, t: usize) -> f64 {
        let area = self.problem.space.geometry(t).area;
        let tt = self.exps.t_tilde;
        let q = self.rule();
        q.points
            .iter()
            .zip(&q.weights)
            .map(|(p, &w)| 2.0 * area * w * (self.stress_at(t, *p) - self.projected.value(t, *p)).norm().powf(tt))
            .sum()
    }

    fn jump_term(&self, t: usize) -> f64 {
        self.problem.space.topo.triangle_edges[t].iter().map(|&e| self.side_jumps[e]).sum()
    }

    pub fn element_pde_indicator(&self, t: usize) -> f64 {
        self.interior_term(t) + self.jump_term(t) + self.projection_defect(t)
    }

    pub fn element_ic_indicator(&self, t: usize) -> f64 {
        let space = self.problem.space;
        let area = space.geometry(t).area;
        let q = self.rule();
        q.points
            .iter()
            .zip(&q.weights)
            .map(|(p, &w)| {
                2.0 * area * w * space.velocity_at(&self.state.velocity, t, *p).divergence().abs().powf(self.exps.t)
            })
            .sum()
    }

    pub fn oscillation(&self, t: usize) -> f64 {
        let space = self.problem.space;
        let geo = space.geometry(t);
        let h = space.mesh.mesh_size(t);
        let tt = self.exps.t_tilde;
        let q = triangle_rule(self.problem.quad_degree.max(2 * FORCING_DEGREE));
        let data: f64 = q
            .points
            .iter()
            .zip(&q.weights)
            .map(|(p, &w)| {
                let f = self.problem.forcing.evaluate(geo.point(*p));
                let d0 = f[0] - self.forcing_projection[0].value(t, *p);
                let d1 = f[1] - self.forcing_projection[1].value(t, *p);
                2.0 * geo.area * w * d0.hypot(d1).powf(tt)
            })
            .sum();
        h.powf(tt) * data + self.projection_defect(t)
    }

    /// `|h div S^n(DU)|^t~_{t~,E}` without the stress projection, evaluated
    /// with the given rule. Diagnostic only: this quantity need not be finite
    /// in the limit, which is why the indicator uses `P_S S`.
    pub fn unprojected_divergence(&self, t: usize, rule: &QuadratureRule) -> f64 {
        let space = self.problem.space;
        let law = self.problem.laws.at(space.mesh.macro_elements()[t]);
        let geo = space.geometry(t);
        let h = space.mesh.mesh_size(t);
        let tt = self.exps.t_tilde;
        let hess = space.velocity_hessian(&self.state.velocity, t);
        // d_j D(U), constant on the element.
        let dd: [Sym; 2] = std::array::from_fn(|j| {
            Sym::new(hess[0][0][j], 0.5 * (hess[0][1][j] + hess[1][0][j]), hess[1][1][j])
        });
        let s: f64 = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(p, &w)| {
                let d = space.velocity_at(&self.state.velocity, t, *p).strain();
                let (_, tan) = law.stress_and_tangent(d);
                let (sx, sy) = (tan.apply(dd[0]), tan.apply(dd[1]));
                let div = [sx.xx + sy.xy, sx.xy + sy.yy];
                2.0 * geo.area * w * div[0].hypot(div[1]).powf(tt)
            })
            .sum();
        h.powf(tt) * s
    }

    pub fn assemble(&self) -> IndicatorField {
        let space = self.problem.space;
        let nt = space.mesh.num_triangles();
        let rows: Vec<(f64, f64, f64)> = (0..nt)
            .into_par_iter()
            .map(|t| (self.element_pde_indicator(t), self.element_ic_indicator(t), self.oscillation(t)))
            .collect();
        let laws = self.problem.laws;
        let macros = space.mesh.macro_elements();
        let graph = graph_indicator_elements(
            &|t| laws.at(macros[t]).graph,
            &self.exps,
            &space.mesh,
            self.problem.quad_degree,
            |t, l| {
                let d = space.velocity_at(&self.state.velocity, t, l).strain();
                (d, laws.at(macros[t]).stress(d))
            },
        );
        let pde: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let ic: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let oscillation: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let e_pde = pde.iter().sum::<f64>();
        let e_ic = ic.iter().sum::<f64>();
        IndicatorField {
            e_pde,
            e_ic,
            e_total: e_pde + e_ic,
            e_a: graph.iter().sum(),
            e_osc: oscillation.iter().sum(),
            pde,
            ic,
            oscillation,
            graph,
            exponents: self.exps,
        }
    }
}

/// Indicators of a state.
pub fn assemble_indicators(problem: Problem, state: &DiscreteState, exps: Exponents) -> IndicatorField {
    Estimator::new(problem, state, exps).assemble()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constitutive::{make_exponents, GraphModel, LawField, RegularizationKind, RegularizedLaw};
    use crate::fespace::{FunctionSpacePair, PairKind};
    use crate::forcing::Forcing;
    use crate::mesh::Mesh;

    fn newtonian() -> LawField {
        LawField::uniform(RegularizedLaw::new(GraphModel::newtonian(0.5), RegularizationKind::SimpleTau, 1, 1.0).unwrap())
    }

    #[test]
    fn zero_state_zero_force_gives_zero_indicators() {
        let space = FunctionSpacePair::new(Mesh::unit_square().refine_uniform_times(2), PairKind::TaylorHood);
        let laws = newtonian();
        let forcing = Forcing::Zero;
        let problem = Problem { space: &space, laws: &laws, forcing: &forcing, convection: true, quad_degree: 6 };
        let state = DiscreteState::zero(&space);
        let ind = assemble_indicators(problem, &state, make_exponents(2.0, 2, None).unwrap());
        assert!(ind.pde.iter().chain(&ind.ic).chain(&ind.oscillation).all(|&v| v == 0.0));
        assert_eq!((ind.e_total, ind.e_a), (0.0, 0.0));
    }

    #[test]
    fn ic_indicator_on_unit_right_triangle() {
        let mesh = Mesh::from_triangles(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap();
        let space = FunctionSpacePair::new(mesh, PairKind::TaylorHood);
        let laws = newtonian();
        let forcing = Forcing::Zero;
        let problem = Problem { space: &space, laws: &laws, forcing: &forcing, convection: false, quad_degree: 6 };
        let mut state = DiscreteState::zero(&space);
        state.velocity = space.interpolate_velocity(|p| [p[0], 0.0]);
        let est = Estimator::new(problem, &state, make_exponents(2.0, 2, None).unwrap());
        assert!((est.element_ic_indicator(0) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn continuous_linear_stress_has_no_jump() {
        // U quadratic everywhere: D(U) and hence the Newtonian stress is
        // globally linear, so the projected normal traction is continuous.
        let space = FunctionSpacePair::new(Mesh::unit_square(), PairKind::TaylorHood);
        let laws = newtonian();
        let forcing = Forcing::Zero;
        let problem = Problem { space: &space, laws: &laws, forcing: &forcing, convection: false, quad_degree: 6 };
        let mut state = DiscreteState::zero(&space);
        state.velocity = space.interpolate_velocity(|p| [p[0] * p[0], -2.0 * p[0] * p[1]]);
        state.pressure = space.interpolate_pressure(|p| p[0] - p[1]);
        let est = Estimator::new(problem, &state, make_exponents(2.0, 2, None).unwrap());
        assert!(est.jump_term(0).abs() < 1e-26 && est.jump_term(1).abs() < 1e-26);
        assert!(est.projection_defect(0) < 1e-26);
    }

    #[test]
    fn p2p0_pressure_jumps_are_seen() {
        let space = FunctionSpacePair::new(Mesh::unit_square(), PairKind::P2P0);
        let laws = newtonian();
        let forcing = Forcing::Zero;
        let problem = Problem { space: &space, laws: &laws, forcing: &forcing, convection: false, quad_degree: 6 };
        let mut state = DiscreteState::zero(&space);
        state.pressure = vec![1.0, -1.0];
        let est = Estimator::new(problem, &state, make_exponents(2.0, 2, None).unwrap());
        // |[P nu]| = 2 along the diagonal of length sqrt 2; h_S |J|^2 |S|.
        let expected = 2f64.sqrt() * 4.0 * 2f64.sqrt();
        assert!((est.jump_term(0) - expected).abs() < 1e-12);
        assert_eq!(est.jump_term(0), est.jump_term(1));
    }
}
