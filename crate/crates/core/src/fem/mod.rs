//! Finite-element discretization on uniform grids: Q1 elements, assembly,
//! constraints and linear solvers.

pub mod assembly;
pub mod dofmap;
pub mod element;
pub mod solver;
pub mod source;
pub mod sparse;
pub mod tensor;

pub use assembly::{
    assemble_coupling, assemble_elasticity, assemble_mass_and_diffusion, TensorField,
};
pub use dofmap::{build_dofmap, ConstraintSpec, DofMap, NodeConstraint};
pub use solver::{solve_saddle_or_sequenced, solve_spd, CoupledSystem, SolverSettings, SpdSolver};
pub use source::SourceFields;
pub use sparse::{LinearOperator, SparseMatrix};
pub use tensor::{MaterialSet, SymElasticityTensor};

use serde::{Deserialize, Serialize};

/// Displacement and pressure dof vectors at one time instant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub t: f64,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
}

impl FieldState {
    pub fn zero(n_u: usize, n_p: usize) -> Self {
        Self {
            t: 0.0,
            u: vec![0.0; n_u],
            p: vec![0.0; n_p],
        }
    }
}
