//! Run orchestration: configuration in, `trace.csv`, VTK files and
//! `summary.txt` out.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::afem::{afem_run, AfemError, AfemTrace};
use crate::config::{parse_config_with_overrides, ConfigErrors, RunConfig, SetupError};
use crate::io::trace::{TraceError, TraceWriter};
use crate::io::vtk::{fields_vtk, mesh_vtk, VtkError};

/// Environment variable capping the number of element-parallel workers.
pub const THREADS_ENV: &str = "RHEO_AFEM_THREADS";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration:\n{0}")]
    Config(#[from] ConfigErrors),
    #[error(transparent)]
    Setup(#[from] SetupError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Trace { path: PathBuf, source: TraceError },
    #[error(transparent)]
    Vtk(#[from] VtkError),
    #[error(transparent)]
    Afem(#[from] AfemError),
    #[error("{THREADS_ENV} must be a positive integer, got {0:?}")]
    Threads(String),
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    TargetReached,
    Truncated,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::TargetReached => 0,
            Self::Truncated => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub status: RunStatus,
    pub trace: AfemTrace,
    pub output_dir: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

fn write_file(path: &Path, contents: &str) -> Result<(), RunError> {
    fs::write(path, contents).map_err(io_err(path))
}

/// Worker count from [`THREADS_ENV`], if set.
pub fn thread_limit() -> Result<Option<usize>, RunError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(RunError::Threads(v)),
        },
    }
}

/// Runs a validated configuration, writing into `out`.
///
/// Everything that can be checked without solving (mesh file, laws) is
/// checked before the directory is touched.
pub fn run(config: &RunConfig, out: &Path, quiet: bool) -> Result<RunSummary, RunError> {
    let mesh = config.initial_mesh()?;
    let afem = config.afem_config()?;
    let threads = thread_limit()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| RunError::Pool(e.to_string()))?;

    fs::create_dir_all(out).map_err(io_err(out))?;
    let trace_path = out.join("trace.csv");
    let file = File::create(&trace_path).map_err(io_err(&trace_path))?;
    let trace_err = |source| RunError::Trace { path: trace_path.clone(), source };
    let mut writer = TraceWriter::new(BufWriter::new(file)).map_err(trace_err)?;
    let mut pending: Option<RunError> = None;

    let result = pool.install(|| {
        afem_run(&afem, mesh, &mut |view| {
            if pending.is_some() {
                return;
            }
            let mut step = || -> Result<(), RunError> {
                writer.push(view.row).map_err(|source| RunError::Trace { path: trace_path.clone(), source })?;
                if config.write_fields {
                    write_file(&out.join(format!("mesh_{:04}.vtk", view.k)), &mesh_vtk(&view.space.mesh))?;
                    let fields = fields_vtk(view.space, view.state, Some(view.indicators))?;
                    write_file(&out.join(format!("fields_{:04}.vtk", view.k)), &fields)?;
                }
                if !quiet {
                    let r = view.row;
                    eprintln!(
                        "k={:<3} n={:<3} elements={:<6} E_total={:.3e} E_A={:.3e} -> {}",
                        r.k,
                        r.n,
                        r.elements,
                        r.e_total,
                        r.e_a,
                        r.kind.name()
                    );
                }
                Ok(())
            };
            if let Err(e) = step() {
                pending = Some(e);
            }
        })
    });
    drop(writer);
    if let Some(e) = pending {
        return Err(e);
    }
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            let partial = match &e {
                AfemError::Solver { trace, .. } => Some(trace.clone()),
                _ => None,
            };
            let text = summary_text(config, partial.as_ref(), Some(&e.to_string()));
            write_file(&out.join("summary.txt"), &text)?;
            return Err(e.into());
        }
    };
    let status = if outcome.trace.truncated { RunStatus::Truncated } else { RunStatus::TargetReached };
    write_file(&out.join("summary.txt"), &summary_text(config, Some(&outcome.trace), None))?;
    Ok(RunSummary { status, trace: outcome.trace, output_dir: out.to_path_buf() })
}

/// Plain-text account of a run. Contains no wall-clock data unless timing
/// is enabled.
pub fn summary_text(config: &RunConfig, trace: Option<&AfemTrace>, error: Option<&str>) -> String {
    let mut s = String::new();
    let e = &config.exponents;
    let _ = writeln!(s, "graph: {}", config.graph.name());
    let _ = writeln!(s, "regularization: {} (tau0 = {:e})", config.regularization.name(), config.tau0);
    let _ = writeln!(s, "pair: {}", config.pair.name());
    let _ = writeln!(s, "forcing: {}", config.forcing.name());
    let _ = writeln!(s, "exponents: r = {} t = {} t_tilde = {}", e.r, e.t, e.t_tilde);
    let _ = writeln!(s, "theta: {} max_iterations: {} target_total: {:e}", config.theta, config.max_iterations, config.target_total);
    if let Some(t) = trace {
        let mesh_steps = t.rows.iter().filter(|r| r.kind == crate::afem::RefinementKind::Mesh).count();
        let graph_steps = t.rows.iter().filter(|r| r.kind == crate::afem::RefinementKind::Graph).count();
        let _ = writeln!(s, "iterations: {}", t.rows.len());
        let _ = writeln!(s, "mesh refinements: {mesh_steps}");
        let _ = writeln!(s, "graph refinements: {graph_steps}");
        if let Some(last) = t.rows.last() {
            let _ = writeln!(s, "final: n = {} elements = {} dofs = {}", last.n, last.elements, last.dofs);
            let _ = writeln!(s, "final: E_total = {:e} E_A = {:e} energy = {:e}", last.e_total, last.e_a, last.energy);
        }
        if config.timing {
            let total: f64 = t.rows.iter().map(|r| r.seconds).sum();
            let _ = writeln!(s, "seconds: {total:.3}");
        }
    }
    let status = match (error, trace) {
        (Some(msg), _) => format!("error: {msg}"),
        (None, Some(t)) if t.truncated => "truncated: max_iterations reached before target".to_string(),
        _ => "target reached".to_string(),
    };
    let _ = writeln!(s, "status: {status}");
    s
}

/// Parse, validate and run; returns the process exit code. Diagnostics go
/// to stderr.
pub fn run_from_text(text: &str, overrides: &[String], output: Option<&Path>, quiet: bool) -> i32 {
    let config = match parse_config_with_overrides(text, overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}", RunError::Config(e));
            return 1;
        }
    };
    let out = output.map(Path::to_path_buf).unwrap_or_else(|| config.output_dir.clone());
    match run(&config, &out, quiet) {
        Ok(summary) => summary.status.exit_code(),
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
