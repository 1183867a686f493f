//! Legacy ASCII VTK (`UNSTRUCTURED_GRID`) output.
//!
//! Mesh files use linear triangles; field files use six-node quadratic
//! triangles on the velocity nodes so the velocity is written exactly.

use std::fmt::Write;

use thiserror::Error;

use crate::estimator::IndicatorField;
use crate::fespace::{FunctionSpacePair, PairKind};
use crate::mesh::{Mesh, Point};
use crate::solver::DiscreteState;

pub const VTK_TRIANGLE: u8 = 5;
pub const VTK_QUADRATIC_TRIANGLE: u8 = 22;

#[derive(Debug, Error)]
pub enum VtkError {
    #[error("{name}: expected {expected} values, got {got}")]
    SizeMismatch { name: String, expected: usize, got: usize },
    #[error("cell {cell} references point {point} of {points}")]
    BadCell { cell: usize, point: usize, points: usize },
}

#[derive(Debug, Clone, Default)]
pub struct VtkData {
    pub point_vectors: Vec<(String, Vec<[f64; 2]>)>,
    pub point_scalars: Vec<(String, Vec<f64>)>,
    pub cell_scalars: Vec<(String, Vec<f64>)>,
}

fn check(name: &str, expected: usize, got: usize) -> Result<(), VtkError> {
    if expected == got {
        Ok(())
    } else {
        Err(VtkError::SizeMismatch { name: name.to_string(), expected, got })
    }
}

pub fn write_unstructured(
    title: &str,
    points: &[Point],
    cells: &[Vec<usize>],
    cell_type: u8,
    data: &VtkData,
) -> Result<String, VtkError> {
    for (c, cell) in cells.iter().enumerate() {
        if let Some(&p) = cell.iter().find(|&&p| p >= points.len()) {
            return Err(VtkError::BadCell { cell: c, point: p, points: points.len() });
        }
    }
    for (name, v) in &data.point_vectors {
        check(name, points.len(), v.len())?;
    }
    for (name, v) in &data.point_scalars {
        check(name, points.len(), v.len())?;
    }
    for (name, v) in &data.cell_scalars {
        check(name, cells.len(), v.len())?;
    }
    let mut out = String::new();
    let w = &mut out;
    // Writing to a String cannot fail.
    let _ = writeln!(w, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(w, "POINTS {} double", points.len());
    for p in points {
        let _ = writeln!(w, "{:?} {:?} 0", p[0], p[1]);
    }
    let size: usize = cells.iter().map(|c| c.len() + 1).sum();
    let _ = writeln!(w, "CELLS {} {size}", cells.len());
    for c in cells {
        let ids: Vec<String> = c.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(w, "{} {}", c.len(), ids.join(" "));
    }
    let _ = writeln!(w, "CELL_TYPES {}", cells.len());
    for _ in cells {
        let _ = writeln!(w, "{cell_type}");
    }
    if !data.point_vectors.is_empty() || !data.point_scalars.is_empty() {
        let _ = writeln!(w, "POINT_DATA {}", points.len());
        for (name, v) in &data.point_vectors {
            let _ = writeln!(w, "VECTORS {name} double");
            for x in v {
                let _ = writeln!(w, "{:?} {:?} 0", x[0], x[1]);
            }
        }
        for (name, v) in &data.point_scalars {
            scalars(w, name, v);
        }
    }
    if !data.cell_scalars.is_empty() {
        let _ = writeln!(w, "CELL_DATA {}", cells.len());
        for (name, v) in &data.cell_scalars {
            scalars(w, name, v);
        }
    }
    Ok(out)
}

fn scalars(w: &mut String, name: &str, v: &[f64]) {
    let _ = writeln!(w, "SCALARS {name} double 1\nLOOKUP_TABLE default");
    for x in v {
        let _ = writeln!(w, "{x:?}");
    }
}

/// The mesh alone, with generation and macro element per triangle.
pub fn mesh_vtk(mesh: &Mesh) -> String {
    let cells: Vec<Vec<usize>> = mesh.triangles().iter().map(|t| t.to_vec()).collect();
    let data = VtkData {
        cell_scalars: vec![
            ("generation".into(), mesh.generations().iter().map(|&g| g as f64).collect()),
            ("macro_element".into(), mesh.macro_elements().iter().map(|&m| m as f64).collect()),
        ],
        ..Default::default()
    };
    write_unstructured("mesh", mesh.vertices(), &cells, VTK_TRIANGLE, &data).expect("consistent mesh arrays")
}

/// Velocity and pressure at the quadratic nodes plus per-cell indicators.
///
/// A discontinuous pressure is also written per cell; its point values are
/// averages over the adjacent triangles.
pub fn fields_vtk(
    space: &FunctionSpacePair,
    state: &DiscreteState,
    indicators: Option<&IndicatorField>,
) -> Result<String, VtkError> {
    check("velocity", space.num_velocity_dofs(), state.velocity.len())?;
    check("pressure", space.num_pressure_dofs(), state.pressure.len())?;
    let nt = space.mesh.num_triangles();
    let points = space.node_coordinates();
    let velocity: Vec<[f64; 2]> = (0..points.len()).map(|i| [state.velocity[2 * i], state.velocity[2 * i + 1]]).collect();
    let mut pressure = vec![0.0; points.len()];
    let mut count = vec![0usize; points.len()];
    let local: [[f64; 3]; 6] = [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.5, 0.5],
        [0.5, 0.0, 0.5],
        [0.5, 0.5, 0.0],
    ];
    let mut cells = Vec::with_capacity(nt);
    for t in 0..nt {
        let nodes = space.element_nodes(t);
        for (k, &node) in nodes.iter().enumerate() {
            pressure[node] += space.pressure_at(&state.pressure, t, local[k]).0;
            count[node] += 1;
        }
        // VTK orders midpoints (0,1), (1,2), (2,0): our local edges 2, 0, 1.
        cells.push(vec![nodes[0], nodes[1], nodes[2], nodes[5], nodes[3], nodes[4]]);
    }
    for (p, &c) in pressure.iter_mut().zip(&count) {
        if c > 0 {
            *p /= c as f64;
        }
    }
    let mut data = VtkData {
        point_vectors: vec![("velocity".into(), velocity)],
        point_scalars: vec![("pressure".into(), pressure)],
        cell_scalars: Vec::new(),
    };
    if space.pair == PairKind::P2P0 {
        data.cell_scalars.push(("pressure_cell".into(), state.pressure.clone()));
    }
    if let Some(ind) = indicators {
        check("indicators", nt, ind.pde.len())?;
        data.cell_scalars.push(("eta_pde".into(), ind.pde.clone()));
        data.cell_scalars.push(("eta_ic".into(), ind.ic.clone()));
        data.cell_scalars.push(("eta_graph".into(), ind.graph.clone()));
        data.cell_scalars.push(("eta_osc".into(), ind.oscillation.clone()));
    }
    write_unstructured("fields", &points, &cells, VTK_QUADRATIC_TRIANGLE, &data)
}
