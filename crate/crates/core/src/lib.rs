//! Adaptive local minimax Galerkin solver for saddle points of semilinear
//! elliptic problems `-ε Δu + q u = f(x, u)` with homogeneous Dirichlet data.
//!
//! The pieces, bottom up: [`mesh`] (newest vertex bisection), [`sparse`]
//! (CSR + conjugate gradients), [`fespace`] (P1 elements), [`problem`] and
//! [`galerkin`] (energy, residual, ε-norms), [`minimax`] (peak selection and
//! the descent step), [`estimator`] (residual indicators, Dörfler marking) and
//! [`driver`] (the adaptive loop).

// `!(x > 0.0)` is used on purpose so NaN takes the error branch.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod driver;
pub mod error;
pub mod estimator;
pub mod fespace;
pub mod galerkin;
pub mod mesh;
pub mod minimax;
pub mod problem;
pub mod quadrature;
pub mod roots;
pub mod sparse;

pub use driver::{
    restart_with_subspace, run_lmmg, sigma, GenerationRecord, InitialGuess, LmmgConfig, Refinement,
    RunFailure, RunLog, RunOutput, StepRecord,
};
pub use error::{LmmgError, Result};
pub use estimator::{dorfler_mark, element_indicators, IndicatorField};
pub use fespace::{
    assemble_gram, assemble_mass, assemble_stiffness, nodal_interpolant, prolongate, FeFunction,
    FeSpace,
};
pub use galerkin::{DiscreteResidual, Discretization};
pub use mesh::{create_square_mesh, ElementGeometry, MeshStatistics, Point, Rectangle, Triangulation};
pub use minimax::{
    minimax_step, peak_select, peak_select_1d, peak_select_nd, peak_select_scaled,
    project_unit_lperp, step_size, MinimaxSettings, MinimaxState, PeakSelection, StepDiagnostics,
    Subspace,
};
pub use problem::{builtin_problem, builtin_problems, Nonlinearity, Reaction, SemilinearProblem, WeightedCubic};
pub use quadrature::QuadratureRule;
pub use sparse::{cg_solve, CsrMatrix};
