//! Computational homogenization of fibre-reinforced hydrogels.
//!
//! The composite is a periodic arrangement of an elastic fibre scaffold with
//! poroelastic (Biot) gel inclusions. This crate provides
//!
//! * voxelized unit cells and ε-periodic composite meshes ([`geometry`]),
//! * multilinear finite elements, constraints and sparse solvers ([`fem`]),
//! * the discrete coupling/Biot operators of the ε-problem ([`operators`]),
//! * cell problems and effective coefficients ([`cell`]),
//! * time stepping for the direct ε-problem and the two-scale limit ([`simulate`]),
//! * oracles and convergence studies ([`verify`]),
//! * configuration, command dispatch and file output ([`cli`]).
//!
//! All quantities are dimensionless model units.

pub mod cell;
pub mod cli;
pub mod error;
pub mod expr;
pub mod fem;
pub mod geometry;
pub mod operators;
pub mod simulate;
pub mod verify;

pub use error::{Error, Result};
