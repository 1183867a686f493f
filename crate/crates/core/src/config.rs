//! Run configuration files.
//!
//! Grammar, one item per line:
//!
//! ```text
//! # comment (also allowed after a value)
//! [section]
//! key = value
//! ```
//!
//! Values are numbers, booleans (`true`/`false`), bare words, or
//! comma-separated lists of numbers. Every recognised key is listed below
//! with its default; keys without a default are required.
//!
//! | section   | key                    | default                                  |
//! |-----------|------------------------|------------------------------------------|
//! | `domain`  | `geometry`             | `unit_square` (or `l_shape`)             |
//! | `domain`  | `mesh_file`            | none; replaces `geometry`                |
//! | `domain`  | `refinements`          | `2` uniform refinements of the macro mesh |
//! | `model`   | `r`                    | growth exponent of the graph             |
//! | `model`   | `d`                    | `2` (only 2 is supported)                |
//! | `model`   | `t`                    | midpoint of `(2d/(d+1), r)` when `r` is small |
//! | `model`   | `pair`                 | `taylor_hood` (or `p2p0`)                |
//! | `model`   | `convection`           | `true`                                   |
//! | `model`   | `quad_degree`          | `6`                                      |
//! | `law`     | `graph`                | required: `newtonian`, `power_law`, `bingham`, `herschel_bulkley`, `plateau`, `plateau_jump` |
//! | `law`     | `nu`                   | required for `newtonian`, `bingham`      |
//! | `law`     | `yield_stress`         | required for `bingham`, `herschel_bulkley` |
//! | `law`     | `yield_stress_per_macro` | none; one value per macro triangle     |
//! | `law`     | `c`, `kappa`           | `1`, `0` for the power-law flow curve    |
//! | `law`     | `lower_c`, `lower_kappa`, `lower_q`, `upper_c`, `upper_kappa`, `level` | required for plateaus |
//! | `law`     | `jump_at`              | required for `plateau_jump`              |
//! | `law`     | `regularization`       | `simple_tau` (or `mollified`, `plateau_interp`) |
//! | `law`     | `tau0`                 | `1`                                      |
//! | `forcing` | `kind`                 | `zero` (or `constant`, `rotational`, `manufactured`) |
//! | `forcing` | `value`                | required for `constant`: `fx, fy`        |
//! | `forcing` | `amplitude`, `center`  | `1`, `0.5, 0.5` for `rotational`         |
//! | `afem`    | `theta`                | `0.5`                                    |
//! | `afem`    | `max_iterations`       | `20`                                     |
//! | `afem`    | `target_total`         | `1e-6`                                   |
//! | `afem`    | `timing`               | `false`                                  |
//! | `afem`    | `seed`                 | `0` (accepted; the run is deterministic) |
//! | `solver`  | `tol_newton`           | `1e-9`                                   |
//! | `solver`  | `max_newton`           | `40`                                     |
//! | `solver`  | `max_picard`           | `200`                                    |
//! | `solver`  | `continuation`         | `true`                                   |
//! | `solver`  | `continuation_steps`   | `40`                                     |
//! | `solver`  | `damping`              | `0.0009765625` (smallest line-search step) |
//! | `output`  | `dir`                  | `output`                                 |
//! | `output`  | `fields`               | `true` (write per-iteration VTK files)   |
//!
//! For the power law and Herschel-Bulkley the flow-curve exponent is `r`.
//! The manufactured forcing needs a Newtonian law on the unit square.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;

use crate::afem::AfemConfig;
use crate::constitutive::{
    make_exponents, ConstitutiveError, Exponents, FlowCurve, GraphKind, GraphModel, LawField, RegularizationKind,
    RegularizedLaw,
};
use crate::fespace::PairKind;
use crate::forcing::{Forcing, Manufactured};
use crate::io::meshfile;
use crate::mesh::{Mesh, MeshError};
use crate::solver::SolverOptions;

/// One problem found in a configuration. `line == 0` marks a command-line
/// override.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "override: {}", self.message)
        } else {
            write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ConfigErrors(pub Vec<Diagnostic>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        write!(f, "{}", lines.join("\n"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    UnitSquare,
    LShape,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub geometry: Geometry,
    pub refinements: usize,
    pub exponents: Exponents,
    pub graph: GraphModel,
    /// Replaces the yield stress of `graph` macro element by macro element.
    pub yield_stress_per_macro: Option<Vec<f64>>,
    pub regularization: RegularizationKind,
    pub tau0: f64,
    pub pair: PairKind,
    pub convection: bool,
    pub quad_degree: usize,
    pub forcing: Forcing,
    pub theta: f64,
    pub max_iterations: usize,
    pub target_total: f64,
    pub timing: bool,
    pub seed: u64,
    pub solver: SolverOptions,
    pub output_dir: PathBuf,
    pub write_fields: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum SetupError {
    #[error("cannot read mesh file {path}: {source}")]
    MeshIo { path: PathBuf, source: std::io::Error },
    #[error("mesh file {path}: {source}")]
    MeshParse { path: PathBuf, source: MeshError },
    #[error("yield_stress_per_macro has {given} values, mesh has {macros} macro triangles")]
    MacroCount { given: usize, macros: usize },
    #[error(transparent)]
    Law(#[from] ConstitutiveError),
}

impl RunConfig {
    /// The refined initial mesh.
    pub fn initial_mesh(&self) -> Result<Mesh, SetupError> {
        let macro_mesh = match &self.geometry {
            Geometry::UnitSquare => Mesh::unit_square(),
            Geometry::LShape => Mesh::l_shape(),
            Geometry::File(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|source| SetupError::MeshIo { path: path.clone(), source })?;
                meshfile::parse(&text).map_err(|source| SetupError::MeshParse { path: path.clone(), source })?
            }
        };
        if let Some(v) = &self.yield_stress_per_macro {
            if v.len() != macro_mesh.num_triangles() {
                return Err(SetupError::MacroCount { given: v.len(), macros: macro_mesh.num_triangles() });
            }
        }
        Ok(macro_mesh.refine_uniform_times(self.refinements))
    }

    /// Laws at `n = 1`.
    pub fn law_field(&self) -> Result<LawField, SetupError> {
        let make = |graph: GraphModel| RegularizedLaw::new(graph, self.regularization, 1, self.tau0);
        match &self.yield_stress_per_macro {
            None => Ok(LawField::uniform(make(self.graph)?)),
            Some(values) => {
                let laws = values
                    .iter()
                    .map(|&s| make(with_yield_stress(self.graph, s)))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(LawField::per_macro(laws)?)
            }
        }
    }

    pub fn afem_config(&self) -> Result<AfemConfig, SetupError> {
        Ok(AfemConfig {
            theta: self.theta,
            max_iterations: self.max_iterations,
            target_total: self.target_total,
            pair: self.pair,
            laws: self.law_field()?,
            forcing: self.forcing,
            convection: self.convection,
            exponents: self.exponents,
            quad_degree: self.quad_degree,
            solver: self.solver,
            timing: self.timing,
        })
    }
}

fn with_yield_stress(graph: GraphModel, sigma: f64) -> GraphModel {
    let kind = match graph.kind {
        GraphKind::Bingham { nu, .. } => GraphKind::Bingham { nu, yield_stress: sigma },
        GraphKind::HerschelBulkley { flow, .. } => GraphKind::HerschelBulkley { yield_stress: sigma, flow },
        other => other,
    };
    GraphModel { kind }
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
    key_col: usize,
    val_col: usize,
}

/// `section.key` -> entry.
type Table = BTreeMap<String, Entry>;

fn tokenize(text: &str, diags: &mut Vec<Diagnostic>) -> Table {
    let mut table = Table::new();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let indent = content.len() - content.trim_start().len();
        if let Some(rest) = trimmed.strip_prefix('[') {
            match rest.strip_suffix(']') {
                Some(name) if is_ident(name.trim()) => section = name.trim().to_string(),
                _ => diags.push(Diagnostic {
                    line,
                    column: indent + 1,
                    message: format!("malformed section header {trimmed:?}"),
                }),
            }
            continue;
        }
        let Some(eq) = content.find('=') else {
            diags.push(Diagnostic { line, column: indent + 1, message: "expected `key = value`".into() });
            continue;
        };
        let key = content[..eq].trim();
        let value_part = &content[eq + 1..];
        let value = value_part.trim();
        let val_col = eq + 2 + (value_part.len() - value_part.trim_start().len());
        if !is_ident(key) {
            diags.push(Diagnostic { line, column: indent + 1, message: format!("invalid key {key:?}") });
            continue;
        }
        if value.is_empty() {
            diags.push(Diagnostic { line, column: eq + 2, message: format!("missing value for `{key}`") });
            continue;
        }
        if section.is_empty() {
            diags.push(Diagnostic {
                line,
                column: indent + 1,
                message: format!("key `{key}` appears before any [section]"),
            });
            continue;
        }
        let full = format!("{section}.{key}");
        let entry = Entry { value: value.to_string(), line, key_col: indent + 1, val_col };
        if let Some(prev) = table.get(&full) {
            diags.push(Diagnostic {
                line,
                column: indent + 1,
                message: format!("duplicate key `{full}` (lines {} and {line})", prev.line),
            });
        } else {
            table.insert(full, entry);
        }
    }
    table
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

const KNOWN: &[&str] = &[
    "domain.geometry",
    "domain.mesh_file",
    "domain.refinements",
    "model.r",
    "model.d",
    "model.t",
    "model.pair",
    "model.convection",
    "model.quad_degree",
    "law.graph",
    "law.nu",
    "law.yield_stress",
    "law.yield_stress_per_macro",
    "law.c",
    "law.kappa",
    "law.lower_c",
    "law.lower_kappa",
    "law.lower_q",
    "law.upper_c",
    "law.upper_kappa",
    "law.level",
    "law.jump_at",
    "law.regularization",
    "law.tau0",
    "forcing.kind",
    "forcing.value",
    "forcing.amplitude",
    "forcing.center",
    "afem.theta",
    "afem.max_iterations",
    "afem.target_total",
    "afem.timing",
    "afem.seed",
    "solver.tol_newton",
    "solver.max_newton",
    "solver.max_picard",
    "solver.continuation",
    "solver.continuation_steps",
    "solver.damping",
    "output.dir",
    "output.fields",
];

/// Typed access that records every problem instead of stopping at the first.
struct Reader {
    table: Table,
    used: BTreeSet<String>,
    diags: Vec<Diagnostic>,
}

impl Reader {
    fn entry(&mut self, key: &str) -> Option<Entry> {
        let e = self.table.get(key).cloned();
        if e.is_some() {
            self.used.insert(key.to_string());
        }
        e
    }

    fn has(&self, key: &str) -> bool {
        self.table.contains_key(key)
    }

    fn at(&mut self, e: &Entry, message: String) {
        self.diags.push(Diagnostic { line: e.line, column: e.val_col, message });
    }

    fn missing(&mut self, key: &str, why: &str) {
        // Report at the line that made the key necessary, if any.
        let anchor = ["law.graph", "forcing.kind"]
            .iter()
            .filter_map(|k| self.table.get(*k))
            .next()
            .map(|e| (e.line, e.key_col))
            .unwrap_or((1, 1));
        self.diags.push(Diagnostic {
            line: anchor.0,
            column: anchor.1,
            message: format!("missing required key `{key}`{why}"),
        });
    }

    fn parse<T>(&mut self, key: &str, what: &str, f: impl Fn(&str) -> Option<T>) -> Option<T> {
        let e = self.entry(key)?;
        match f(&e.value) {
            Some(v) => Some(v),
            None => {
                self.at(&e, format!("`{key}` expects {what}, found {:?}", e.value));
                None
            }
        }
    }

    fn real(&mut self, key: &str) -> Option<f64> {
        self.parse(key, "a finite number", |s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
    }

    fn int(&mut self, key: &str) -> Option<usize> {
        self.parse(key, "a non-negative integer", |s| s.parse::<usize>().ok())
    }

    fn boolean(&mut self, key: &str) -> Option<bool> {
        self.parse(key, "`true` or `false`", |s| match s {
            "true" => Some(true),
            "false" => Some(false),
            _ => None,
        })
    }

    fn list(&mut self, key: &str) -> Option<Vec<f64>> {
        self.parse(key, "a comma-separated list of numbers", |s| {
            s.split(',').map(|x| x.trim().parse::<f64>().ok().filter(|v| v.is_finite())).collect()
        })
    }

    fn pair(&mut self, key: &str) -> Option<[f64; 2]> {
        let line = self.table.get(key).cloned();
        let v = self.list(key)?;
        if v.len() == 2 {
            Some([v[0], v[1]])
        } else {
            let e = line.expect("present");
            self.at(&e, format!("`{key}` expects two numbers, found {}", v.len()));
            None
        }
    }

    /// Checks `ok` on a parsed value and reports `msg` at its position.
    fn require<T: Copy>(&mut self, key: &str, v: Option<T>, ok: impl Fn(T) -> bool, msg: &str) -> Option<T> {
        let v = v?;
        if ok(v) {
            Some(v)
        } else {
            let e = self.table.get(key).cloned().expect("parsed keys are present");
            self.at(&e, format!("`{key}` = {}: {msg}", e.value));
            None
        }
    }

    fn required_real(&mut self, key: &str, why: &str) -> Option<f64> {
        if !self.has(key) {
            self.missing(key, why);
            return None;
        }
        self.real(key)
    }
}

/// Parses and validates a configuration. All violations are returned
/// together.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    parse_config_with_overrides(text, &[])
}

/// As [`parse_config`], with `section.key=value` overrides applied on top.
pub fn parse_config_with_overrides(text: &str, overrides: &[String]) -> Result<RunConfig, ConfigErrors> {
    let mut diags = Vec::new();
    let mut table = tokenize(text, &mut diags);
    for o in overrides {
        match o.split_once('=') {
            Some((k, v)) if k.trim().contains('.') && !v.trim().is_empty() => {
                table.insert(
                    k.trim().to_string(),
                    Entry { value: v.trim().to_string(), line: 0, key_col: 0, val_col: 0 },
                );
            }
            _ => diags.push(Diagnostic {
                line: 0,
                column: 0,
                message: format!("expected `section.key=value`, found {o:?}"),
            }),
        }
    }
    let mut r = Reader { table, used: BTreeSet::new(), diags };
    let cfg = build(&mut r);
    let unknown: Vec<Entry> =
        r.table.iter().filter(|(k, _)| !KNOWN.contains(&k.as_str())).map(|(k, e)| Entry { value: k.clone(), ..e.clone() }).collect();
    for e in unknown {
        r.diags.push(Diagnostic { line: e.line, column: e.key_col, message: format!("unknown key `{}`", e.value) });
    }
    let unused: Vec<(String, Entry)> = r
        .table
        .iter()
        .filter(|(k, _)| KNOWN.contains(&k.as_str()) && !r.used.contains(*k))
        .map(|(k, e)| (k.clone(), e.clone()))
        .collect();
    for (k, e) in unused {
        r.diags.push(Diagnostic {
            line: e.line,
            column: e.key_col,
            message: format!("key `{k}` does not apply to this configuration"),
        });
    }
    r.diags.sort_by_key(|d| (d.line, d.column));
    match cfg {
        Some(c) if r.diags.is_empty() => Ok(c),
        _ => {
            if r.diags.is_empty() {
                r.diags.push(Diagnostic { line: 1, column: 1, message: "invalid configuration".into() });
            }
            Err(ConfigErrors(r.diags))
        }
    }
}

fn build(r: &mut Reader) -> Option<RunConfig> {
    // Domain.
    let geometry = if let Some(e) = r.entry("domain.mesh_file") {
        if let Some(g) = r.entry("domain.geometry") {
            r.at(&g, "`domain.geometry` and `domain.mesh_file` are mutually exclusive".into());
        }
        Some(Geometry::File(PathBuf::from(&e.value)))
    } else {
        match r.entry("domain.geometry") {
            None => Some(Geometry::UnitSquare),
            Some(e) => match e.value.as_str() {
                "unit_square" => Some(Geometry::UnitSquare),
                "l_shape" => Some(Geometry::LShape),
                other => {
                    r.at(&e, format!("unknown geometry {other:?} (expected unit_square or l_shape)"));
                    None
                }
            },
        }
    };
    let refinements = r.int("domain.refinements").or(if r.has("domain.refinements") { None } else { Some(2) });
    let refinements = r.require("domain.refinements", refinements, |k| k <= 12, "at most 12 uniform refinements");

    // Law.
    let graph_name = match r.entry("law.graph") {
        Some(e) => Some((e.value.clone(), e)),
        None => {
            r.diags.push(Diagnostic { line: 1, column: 1, message: "missing required key `law.graph`".into() });
            None
        }
    };
    let d = r.int("model.d").unwrap_or(2);
    if d != 2 {
        let e = r.table.get("model.d").cloned().expect("present");
        r.at(&e, format!("only d = 2 is supported, got {d}"));
    }
    let r_given = r.real("model.r");
    let t_given = r.real("model.t");
    let graph_kind = graph_name.as_ref().and_then(|(name, e)| {
        let e = e.clone();
        let r_needed = |r: &mut Reader| {
            if r_given.is_none() && !r.has("model.r") {
                r.missing("model.r", &format!(" for graph {name}"));
            }
            r_given
        };
        let why = format!(" for graph {name}");
        match name.as_str() {
            "newtonian" => {
                let nu = r.required_real("law.nu", &why);
                nu.map(|nu| GraphKind::Newtonian { nu })
            }
            "bingham" => {
                let nu = r.required_real("law.nu", &why);
                let sigma = yield_stress(r, &why);
                Some(GraphKind::Bingham { nu: nu?, yield_stress: sigma? })
            }
            "power_law" => {
                let q = r_needed(r);
                let flow = track_flow(r, q?);
                Some(GraphKind::PowerLaw { flow })
            }
            "herschel_bulkley" => {
                let q = r_needed(r);
                let sigma = yield_stress(r, &why);
                let flow = track_flow(r, q?);
                Some(GraphKind::HerschelBulkley { yield_stress: sigma?, flow })
            }
            "plateau" | "plateau_jump" => {
                let q = r.real("model.r").unwrap_or(2.0);
                let lower_c = r.required_real("law.lower_c", &why);
                let lower_kappa = r.real("law.lower_kappa").unwrap_or(0.0);
                let lower_q = r.required_real("law.lower_q", &why);
                let upper_c = r.required_real("law.upper_c", &why);
                let upper_kappa = r.real("law.upper_kappa").unwrap_or(0.0);
                let level = r.required_real("law.level", &why);
                let lower = FlowCurve { c: lower_c?, kappa: lower_kappa, q: lower_q? };
                let upper = FlowCurve { c: upper_c?, kappa: upper_kappa, q };
                if name == "plateau" {
                    Some(GraphKind::Plateau { lower, upper, level: level? })
                } else {
                    let jump_at = r.required_real("law.jump_at", &why);
                    Some(GraphKind::PlateauWithJump { lower, upper, level: level?, jump_at: jump_at? })
                }
            }
            other => {
                r.at(
                    &e,
                    format!(
                        "unknown graph {other:?} (expected newtonian, power_law, bingham, herschel_bulkley, plateau or plateau_jump)"
                    ),
                );
                None
            }
        }
    });
    let graph = graph_kind.and_then(|kind| match GraphModel::new(kind) {
        Ok(g) => Some(g),
        Err(err) => {
            let e = graph_name.as_ref().expect("graph present").1.clone();
            r.at(&e, err.to_string());
            None
        }
    });
    let per_macro = r.list("law.yield_stress_per_macro");
    if per_macro.is_some()
        && !matches!(graph.map(|g| g.kind), Some(GraphKind::Bingham { .. } | GraphKind::HerschelBulkley { .. }))
    {
        let e = r.table.get("law.yield_stress_per_macro").cloned().expect("present");
        r.at(&e, "`law.yield_stress_per_macro` needs a bingham or herschel_bulkley graph".into());
    }
    if per_macro.as_ref().is_some_and(|v| v.iter().any(|&s| s < 0.0)) {
        let e = r.table.get("law.yield_stress_per_macro").cloned().expect("present");
        r.at(&e, "yield stresses must be >= 0".into());
    }
    if let (Some(v), Some(geo)) = (&per_macro, &geometry) {
        let expected = match geo {
            Geometry::UnitSquare => Some(2),
            Geometry::LShape => Some(6),
            Geometry::File(_) => None,
        };
        if let Some(m) = expected.filter(|&m| m != v.len()) {
            let e = r.table.get("law.yield_stress_per_macro").cloned().expect("present");
            r.at(&e, format!("expected {m} values (one per macro triangle), found {}", v.len()));
        }
    }

    // Exponents: `r` defaults to the growth of the graph and must match it.
    let exponents = graph.and_then(|g| {
        let growth = g.growth_exponent();
        if let Some(rv) = r_given {
            if (rv - growth).abs() > 1e-12 {
                let e = r.table.get("model.r").cloned().expect("present");
                r.at(&e, format!("r = {rv} does not match the growth exponent {growth} of the graph"));
                return None;
            }
        }
        match make_exponents(growth, d, t_given) {
            Ok(x) => Some(x),
            Err(err) => {
                let key = if matches!(err, ConstitutiveError::BadT { .. }) { "model.t" } else { "model.r" };
                let e = r.table.get(key).or_else(|| r.table.get("law.graph")).cloned().expect("graph present");
                r.at(&e, err.to_string());
                None
            }
        }
    });
    // Range errors on r must surface even when the graph is discarded.
    if exponents.is_none() && graph.is_none() {
        if let Some(rv) = r_given {
            if let Err(err @ ConstitutiveError::ExponentOutOfRange { .. }) = make_exponents(rv, d, None) {
                let e = r.table.get("model.r").cloned().expect("present");
                if !r.diags.iter().any(|x| x.line == e.line && x.message == err.to_string()) {
                    r.at(&e, err.to_string());
                }
            }
        }
    }

    let regularization = match r.entry("law.regularization") {
        None => Some(RegularizationKind::SimpleTau),
        Some(e) => {
            let k = RegularizationKind::parse(&e.value);
            if k.is_none() {
                r.at(&e, format!("unknown regularization {:?} (expected simple_tau, mollified or plateau_interp)", e.value));
            }
            k
        }
    };
    let tau0 = r.real("law.tau0").or(if r.has("law.tau0") { None } else { Some(1.0) });
    let tau0 = r.require("law.tau0", tau0, |v| v > 0.0, "must be positive");
    if let (Some(g), Some(reg), Some(t0)) = (graph, regularization, tau0) {
        if let Err(err) = RegularizedLaw::new(g, reg, 1, t0) {
            let e = r.table.get("law.regularization").or_else(|| r.table.get("law.graph")).cloned().expect("present");
            r.at(&e, err.to_string());
        }
    }

    // Discretization.
    let pair = match r.entry("model.pair") {
        None => Some(PairKind::TaylorHood),
        Some(e) => match e.value.as_str() {
            "taylor_hood" => Some(PairKind::TaylorHood),
            "p2p0" => Some(PairKind::P2P0),
            other => {
                r.at(&e, format!("unknown pair {other:?} (expected taylor_hood or p2p0)"));
                None
            }
        },
    };
    let convection = r.boolean("model.convection").unwrap_or(true);
    let quad = r.int("model.quad_degree").or(if r.has("model.quad_degree") { None } else { Some(6) });
    let quad_degree = r.require("model.quad_degree", quad, |q| (2..=20).contains(&q), "must lie in 2..=20");

    // Forcing.
    let forcing = match r.entry("forcing.kind").map(|e| (e.value.clone(), e)) {
        None => Some(Forcing::Zero),
        Some((kind, e)) => match kind.as_str() {
            "zero" => Some(Forcing::Zero),
            "constant" => {
                if r.has("forcing.value") {
                    r.pair("forcing.value").map(Forcing::Constant)
                } else {
                    r.missing("forcing.value", " for constant forcing");
                    None
                }
            }
            "rotational" => {
                let amplitude = r.real("forcing.amplitude").unwrap_or(1.0);
                let center = if r.has("forcing.center") { r.pair("forcing.center") } else { Some([0.5, 0.5]) };
                center.map(|center| Forcing::Rotational { amplitude, center })
            }
            "manufactured" => match graph.map(|g| g.kind) {
                Some(GraphKind::Newtonian { nu }) => {
                    if geometry.as_ref().is_some_and(|g| *g != Geometry::UnitSquare) {
                        r.at(&e, "manufactured forcing is defined on the unit square only".into());
                    }
                    Some(Forcing::Manufactured(Manufactured { nu, convection }))
                }
                Some(_) => {
                    r.at(&e, "manufactured forcing needs a newtonian graph".into());
                    None
                }
                None => None,
            },
            other => {
                r.at(&e, format!("unknown forcing {other:?} (expected zero, constant, rotational or manufactured)"));
                None
            }
        },
    };

    // AFEM and solver.
    let theta = r.real("afem.theta").or(if r.has("afem.theta") { None } else { Some(0.5) });
    let theta = r.require("afem.theta", theta, |t| t > 0.0 && t <= 1.0, "theta must lie in (0, 1]");
    let max_it = r.int("afem.max_iterations").or(if r.has("afem.max_iterations") { None } else { Some(20) });
    let max_iterations = r.require("afem.max_iterations", max_it, |m| m >= 1, "must be at least 1");
    let target = r.real("afem.target_total").or(if r.has("afem.target_total") { None } else { Some(1e-6) });
    let target_total = r.require("afem.target_total", target, |v| v >= 0.0, "must be >= 0");
    let timing = r.boolean("afem.timing").unwrap_or(false);
    let seed = r.parse("afem.seed", "a non-negative integer", |s| s.parse::<u64>().ok()).unwrap_or(0);

    let defaults = SolverOptions::default();
    let tol = r.real("solver.tol_newton").or(if r.has("solver.tol_newton") { None } else { Some(defaults.tol) });
    let tol = r.require("solver.tol_newton", tol, |v| v > 0.0, "must be positive");
    let max_newton = r.int("solver.max_newton").unwrap_or(defaults.max_newton);
    let max_picard = r.int("solver.max_picard").unwrap_or(defaults.max_picard);
    let continuation = r.boolean("solver.continuation").unwrap_or(defaults.continuation);
    let max_continuation = r.int("solver.continuation_steps").unwrap_or(defaults.max_continuation);
    let damping =
        r.real("solver.damping").or(if r.has("solver.damping") { None } else { Some(defaults.min_damping) });
    let damping = r.require("solver.damping", damping, |v| v > 0.0 && v <= 1.0, "must lie in (0, 1]");

    let output_dir = r.entry("output.dir").map(|e| PathBuf::from(e.value)).unwrap_or_else(|| PathBuf::from("output"));
    let write_fields = r.boolean("output.fields").unwrap_or(true);

    Some(RunConfig {
        geometry: geometry?,
        refinements: refinements?,
        exponents: exponents?,
        graph: graph?,
        yield_stress_per_macro: per_macro,
        regularization: regularization?,
        tau0: tau0?,
        pair: pair?,
        convection,
        quad_degree: quad_degree?,
        forcing: forcing?,
        theta: theta?,
        max_iterations: max_iterations?,
        target_total: target_total?,
        timing,
        seed,
        solver: SolverOptions {
            tol: tol?,
            max_newton,
            max_picard,
            continuation_factor: defaults.continuation_factor,
            max_continuation,
            continuation,
            min_damping: damping?,
        },
        output_dir,
        write_fields,
    })
}

fn yield_stress(r: &mut Reader, why: &str) -> Option<f64> {
    if r.has("law.yield_stress_per_macro") && !r.has("law.yield_stress") {
        // The per-macro list supplies the values; the uniform one is a placeholder.
        return Some(0.0);
    }
    let s = r.required_real("law.yield_stress", why);
    r.require("law.yield_stress", s, |v| v >= 0.0, "yield stress must be >= 0")
}

fn track_flow(r: &mut Reader, q: f64) -> FlowCurve {
    let c = r.real("law.c").unwrap_or(1.0);
    let kappa = r.real("law.kappa").unwrap_or(0.0);
    FlowCurve { c, kappa, q }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[law]\ngraph = newtonian\nnu = 1\n";

    #[test]
    fn minimal_newtonian_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.theta, 0.5);
        assert_eq!(c.solver.tol, 1e-9);
        assert_eq!(c.tau0, 1.0);
        assert_eq!(c.geometry, Geometry::UnitSquare);
        assert_eq!(c.pair, PairKind::TaylorHood);
        assert_eq!(c.forcing, Forcing::Zero);
        assert_eq!(c.exponents.r, 2.0);
    }

    #[test]
    fn small_r_is_rejected_with_position() {
        let text = "[model]\nr = 1.2\n[law]\ngraph = power_law\n";
        let err = parse_config(text).unwrap_err();
        let d = err.0.iter().find(|d| d.message.contains("2d/(d+1)")).expect("range diagnostic");
        assert_eq!((d.line, d.column), (2, 5));
    }

    #[test]
    fn duplicate_key_names_both_lines() {
        let text = "[law]\ngraph = newtonian\nnu = 1\n\nnu = 2\n";
        let err = parse_config(text).unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert!(err.0[0].message.contains("lines 3 and 5"), "{}", err.0[0]);
        assert_eq!(err.0[0].line, 5);
    }

    #[test]
    fn collects_all_violations() {
        let text = "[law]\ngraph = bingham\nnu = -1\nyield_stress = 1\ncolour = red\n[afem]\ntheta = 2\n";
        let err = parse_config(text).unwrap_err();
        let msgs: Vec<String> = err.0.iter().map(|d| d.to_string()).collect();
        assert!(msgs.iter().any(|m| m.contains("unknown key `law.colour`") && m.starts_with("line 5, column 1")));
        assert!(msgs.iter().any(|m| m.contains("theta must lie") && m.starts_with("line 7, column 9")));
        assert!(msgs.iter().any(|m| m.contains("nu > 0")));
    }

    #[test]
    fn missing_graph_and_inapplicable_keys() {
        let err = parse_config("[afem]\ntheta = 0.3\n").unwrap_err();
        assert!(err.0.iter().any(|d| d.message.contains("`law.graph`")));
        let err = parse_config("[law]\ngraph = newtonian\nnu = 1\nyield_stress = 2\n").unwrap_err();
        assert!(err.0.iter().any(|d| d.message.contains("does not apply")));
    }

    #[test]
    fn overrides_replace_values() {
        let c = parse_config_with_overrides(MINIMAL, &["afem.theta=0.25".into(), "law.nu=3".into()]).unwrap();
        assert_eq!(c.theta, 0.25);
        assert_eq!(c.graph, GraphModel::newtonian(3.0));
        let err = parse_config_with_overrides(MINIMAL, &["theta".into()]).unwrap_err();
        assert_eq!(err.0[0].line, 0);
    }

    #[test]
    fn bingham_per_macro() {
        let text = "[law]\ngraph = bingham\nnu = 1\nyield_stress_per_macro = 0.5, 2\n";
        let c = parse_config(text).unwrap();
        let field = c.law_field().unwrap();
        assert_eq!(field.laws().len(), 2);
        let bad = "[law]\ngraph = bingham\nnu = 1\nyield_stress_per_macro = 0.5\n";
        assert!(parse_config(bad).is_err());
    }

    #[test]
    fn manufactured_needs_newtonian() {
        let text = "[law]\ngraph = bingham\nnu = 1\nyield_stress = 1\n[forcing]\nkind = manufactured\n";
        let err = parse_config(text).unwrap_err();
        assert!(err.0.iter().any(|d| d.message.contains("newtonian")));
    }
}
