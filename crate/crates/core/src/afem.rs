//! The adaptive loop: solve, estimate, then either refine the mesh (when the
//! discretization indicators dominate) or advance the graph approximation
//! index `n` (when the graph indicator dominates).

use std::collections::BTreeSet;
use std::time::Instant;

use thiserror::Error;

use crate::constitutive::{Exponents, LawField};
use crate::estimator::{assemble_indicators, IndicatorField};
use crate::fespace::{FunctionSpacePair, PairKind};
use crate::forcing::Forcing;
use crate::mesh::{Mesh, MeshError};
use crate::solver::{energy, solve_discrete, DiscreteState, Problem, SolverError, SolverOptions};

#[derive(Debug, Error)]
pub enum AfemError {
    #[error("solve failed at iteration {iteration}: {source}")]
    Solver {
        iteration: usize,
        #[source]
        source: SolverError,
        trace: AfemTrace,
    },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("marking parameter theta = {0} is not in (0, 1]")]
    BadTheta(f64),
    #[error("max_iterations must be at least 1")]
    NoIterations,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefinementKind {
    Mesh,
    Graph,
    /// Final row: the loop stopped after estimating.
    Stop,
}

impl RefinementKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Mesh => "mesh",
            Self::Graph => "graph",
            Self::Stop => "stop",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub n: u32,
    pub elements: usize,
    pub dofs: usize,
    pub e_pde: f64,
    pub e_ic: f64,
    pub e_total: f64,
    pub e_a: f64,
    pub energy: f64,
    pub kind: RefinementKind,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AfemTrace {
    pub rows: Vec<TraceRow>,
    /// Stopped by `max_iterations` before reaching the target.
    pub truncated: bool,
}

#[derive(Debug, Clone)]
pub struct AfemConfig {
    pub theta: f64,
    pub max_iterations: usize,
    pub target_total: f64,
    pub pair: PairKind,
    /// Laws at the initial index `n0`.
    pub laws: LawField,
    pub forcing: Forcing,
    pub convection: bool,
    pub exponents: Exponents,
    pub quad_degree: usize,
    pub solver: SolverOptions,
    /// Record wall time per iteration; when off the `seconds` column is 0
    /// and traces are reproducible bit for bit.
    pub timing: bool,
}

/// What an observer sees after each estimate.
pub struct IterationView<'a> {
    pub k: usize,
    pub space: &'a FunctionSpacePair,
    pub state: &'a DiscreteState,
    pub laws: &'a LawField,
    pub indicators: &'a IndicatorField,
    pub row: &'a TraceRow,
}

pub struct AfemOutcome {
    pub trace: AfemTrace,
    pub space: FunctionSpacePair,
    pub state: DiscreteState,
    pub laws: LawField,
    pub indicators: IndicatorField,
}

/// Maximum strategy: all elements with `eta >= theta * max eta`. Empty when
/// every indicator vanishes.
pub fn mark(indicators: &[f64], theta: f64) -> BTreeSet<usize> {
    let max = indicators.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return BTreeSet::new();
    }
    let threshold = theta * max;
    indicators.iter().enumerate().filter(|(_, &v)| v >= threshold).map(|(i, _)| i).collect()
}

/// The decision rule: refine the mesh when `E_total >= E_A`.
pub fn choose_refinement(ind: &IndicatorField) -> RefinementKind {
    if ind.e_total >= ind.e_a {
        RefinementKind::Mesh
    } else {
        RefinementKind::Graph
    }
}

/// One step after an estimate: refine mesh or graph, then solve with a warm
/// start. Returns the new space, laws and state.
pub fn afem_step(
    config: &AfemConfig,
    space: &FunctionSpacePair,
    laws: &LawField,
    state: &DiscreteState,
    indicators: &IndicatorField,
) -> Result<(FunctionSpacePair, LawField, DiscreteState, RefinementKind), SolverError> {
    let kind = choose_refinement(indicators);
    let (new_space, new_laws, warm) = match kind {
        RefinementKind::Mesh => {
            let marked = mark(&indicators.element_totals(), config.theta);
            let refinement = space.mesh.refine_with_parents(&marked).expect("refinement of a validated mesh");
            let fine = FunctionSpacePair::new(refinement.mesh, config.pair);
            let mut velocity = fine.prolongate_velocity(space, &refinement.parent, &state.velocity);
            fine.apply_dirichlet(&mut velocity);
            let pressure = fine.prolongate_pressure(space, &refinement.parent, &state.pressure);
            let warm = DiscreteState { velocity, pressure, multiplier: state.multiplier };
            (fine, laws.clone(), warm)
        }
        _ => (space.clone(), laws.with_index(laws.n() + 1), state.clone()),
    };
    let problem = Problem {
        space: &new_space,
        laws: &new_laws,
        forcing: &config.forcing,
        convection: config.convection,
        quad_degree: config.quad_degree,
    };
    let (solved, _) = solve_discrete(&problem, Some(warm), &config.solver)?;
    Ok((new_space, new_laws, solved, kind))
}

/// Runs the loop from `mesh` until `E_total + E_A <= target_total` or
/// `max_iterations` estimates have been made.
pub fn afem_run(
    config: &AfemConfig,
    mesh: Mesh,
    observer: &mut dyn FnMut(&IterationView),
) -> Result<AfemOutcome, AfemError> {
    if !(config.theta > 0.0 && config.theta <= 1.0) {
        return Err(AfemError::BadTheta(config.theta));
    }
    if config.max_iterations == 0 {
        return Err(AfemError::NoIterations);
    }
    let report = mesh.validate();
    if !report.is_empty() {
        return Err(MeshError::NonConforming(report.violations.join("; ")).into());
    }
    let mut trace = AfemTrace::default();
    let mut clock = Instant::now();
    let mut space = FunctionSpacePair::new(mesh, config.pair);
    let mut laws = config.laws.clone();
    let problem = Problem {
        space: &space,
        laws: &laws,
        forcing: &config.forcing,
        convection: config.convection,
        quad_degree: config.quad_degree,
    };
    let mut state = match solve_discrete(&problem, None, &config.solver) {
        Ok((s, _)) => s,
        Err(source) => return Err(AfemError::Solver { iteration: 0, source, trace }),
    };
    let mut k = 0;
    loop {
        let problem = Problem {
            space: &space,
            laws: &laws,
            forcing: &config.forcing,
            convection: config.convection,
            quad_degree: config.quad_degree,
        };
        let indicators = assemble_indicators(problem, &state, config.exponents);
        let done = indicators.e_total + indicators.e_a <= config.target_total;
        let last = k + 1 >= config.max_iterations;
        let kind = if done || last { RefinementKind::Stop } else { choose_refinement(&indicators) };
        let row = TraceRow {
            k,
            n: laws.n(),
            elements: space.mesh.num_triangles(),
            dofs: space.num_free_velocity_dofs() + space.num_pressure_dofs(),
            e_pde: indicators.e_pde,
            e_ic: indicators.e_ic,
            e_total: indicators.e_total,
            e_a: indicators.e_a,
            energy: energy(&problem, &state),
            kind,
            seconds: if config.timing { clock.elapsed().as_secs_f64() } else { 0.0 },
        };
        observer(&IterationView { k, space: &space, state: &state, laws: &laws, indicators: &indicators, row: &row });
        trace.rows.push(row);
        if kind == RefinementKind::Stop {
            trace.truncated = !done;
            return Ok(AfemOutcome { trace, space, state, laws, indicators });
        }
        clock = Instant::now();
        match afem_step(config, &space, &laws, &state, &indicators) {
            Ok((s, l, st, _)) => {
                space = s;
                laws = l;
                state = st;
            }
            Err(source) => return Err(AfemError::Solver { iteration: k + 1, source, trace }),
        }
        k += 1;
    }
}
