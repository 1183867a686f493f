//! File formats: the plain-text mesh format, legacy VTK output and the
//! per-iteration trace.

pub mod meshfile;
pub mod trace;
pub mod vtk;
