//! Adaptive finite element approximation of steady incompressible flows
//! whose stress and shear rate are related by a maximal monotone graph.
//!
//! The pipeline: a [`mesh::Mesh`] refined by newest-vertex bisection, an
//! inf-sup stable pair from [`fespace`], a regularized explicit law from
//! [`constitutive`], a Newton solve in [`solver`], a posteriori indicators in
//! [`estimator`], and the refine-or-regularize loop in [`afem`].

pub mod afem;
pub mod config;
pub mod constitutive;
pub mod estimator;
pub mod fespace;
pub mod forcing;
pub mod io;
pub mod mesh;
pub mod quadrature;
pub mod run;
pub mod solver;
pub mod tensor;

pub use constitutive::{GraphKind, GraphModel, RegularizationKind, RegularizedLaw};
pub use fespace::{FunctionSpacePair, PairKind};
pub use mesh::Mesh;
pub use tensor::Sym;
