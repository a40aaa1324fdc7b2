//! Discrete operators of the ε-problem.
//!
//! With `K` the Dirichlet elasticity matrix, `B` the gel coupling matrix
//! (`vᵀ B p = ∫ α p div v`) and `M` the gel pressure mass matrix:
//!
//! * the ε-gradient of a pressure is the load `-B p`, the ε-divergence of a
//!   displacement is `Bᵀ u`, so the two are negative adjoints of each other;
//! * the elastic solve is `u = K⁻¹ f`;
//! * the Biot operator is `p ↦ c M p + Bᵀ K⁻¹ B p`.

use nalgebra::DMatrix;

use crate::fem::assembly::{assemble_vector_laplacian, body_force_load, pressure_source_load};
use crate::fem::solver::{inverse_diagonal, pcg_with};
use crate::fem::{
    assemble_coupling, assemble_elasticity, assemble_mass_and_diffusion, build_dofmap,
    ConstraintSpec, DofMap, MaterialSet, SolverSettings, SourceFields, SparseMatrix, SpdSolver,
    TensorField,
};
use crate::geometry::CompositeMesh;
use crate::{Error, Result};

/// Inverse of the Dirichlet elasticity matrix.
#[derive(Clone, Debug)]
pub struct ElasticSolveOperator {
    solver: SpdSolver,
}

impl ElasticSolveOperator {
    pub fn new(k: SparseMatrix, settings: &SolverSettings) -> Result<Self> {
        // nested inside outer Krylov loops, so solve tighter than the outer tolerance
        let inner = SolverSettings {
            tol_rel: settings.tol_rel * 1e-2,
            ..settings.clone()
        };
        Ok(Self {
            solver: SpdSolver::new(k, &inner)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.solver.dim()
    }

    pub fn matrix(&self) -> &SparseMatrix {
        self.solver.matrix()
    }

    pub fn solve(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.solver.solve(f)
    }
}

/// The coupling matrix and the gradient/divergence pair it realizes.
#[derive(Clone, Debug)]
pub struct CouplingOperators {
    b: SparseMatrix,
}

impl CouplingOperators {
    pub fn new(b: SparseMatrix) -> Self {
        Self { b }
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.b
    }

    /// Force functional of a gel pressure: `-B p`.
    pub fn gradient(&self, p: &[f64]) -> Vec<f64> {
        self.b.matvec(p).into_iter().map(|v| -v).collect()
    }

    /// Gel divergence functional of a displacement: `Bᵀ u`.
    pub fn divergence(&self, u: &[f64]) -> Vec<f64> {
        self.b.matvec_transpose(u)
    }
}

/// `p ↦ c M p + Bᵀ K⁻¹ B p`, available only as an action.
#[derive(Clone, Debug)]
pub struct BiotOperator {
    c_mass: SparseMatrix,
    coupling: CouplingOperators,
    elastic: ElasticSolveOperator,
}

impl BiotOperator {
    pub fn new(c_mass: SparseMatrix, coupling: CouplingOperators, elastic: ElasticSolveOperator) -> Self {
        Self {
            c_mass,
            coupling,
            elastic,
        }
    }

    pub fn dim(&self) -> usize {
        self.c_mass.nrows()
    }

    pub fn apply(&self, p: &[f64]) -> Result<Vec<f64>> {
        let mut q = self.c_mass.matvec(p);
        let u = self.elastic.solve(&self.coupling.matrix().matvec(p))?;
        for (qi, di) in q.iter_mut().zip(self.coupling.divergence(&u)) {
            *qi += di;
        }
        Ok(q)
    }

    pub fn elastic(&self) -> &ElasticSolveOperator {
        &self.elastic
    }

    pub fn coupling(&self) -> &CouplingOperators {
        &self.coupling
    }

    pub fn c_mass(&self) -> &SparseMatrix {
        &self.c_mass
    }

    /// Solves `(ℬ + s D) p = rhs` with `D` SPD by conjugate gradients.
    pub fn solve_shifted(
        &self,
        d: &SparseMatrix,
        s: f64,
        rhs: &[f64],
        x0: Option<&[f64]>,
        settings: &SolverSettings,
    ) -> Result<Vec<f64>> {
        let diag: Vec<f64> = self
            .c_mass
            .diagonal()
            .iter()
            .zip(d.diagonal())
            .map(|(m, a)| m + s * a)
            .collect();
        let inv = inverse_diagonal(&diag)?;
        pcg_with(
            |p| {
                let mut q = self.apply(p)?;
                for (qi, di) in q.iter_mut().zip(d.matvec(p)) {
                    *qi += s * di;
                }
                Ok(q)
            },
            &inv,
            rhs,
            x0,
            settings.tol_rel,
            settings.max_iter,
        )
    }
}

/// `u = K⁻¹ (f - ∇_ε p) = K⁻¹ (f + B p)`.
pub fn displacement_from_pressure(
    elastic: &ElasticSolveOperator,
    coupling: &CouplingOperators,
    p: &[f64],
    forces: &[f64],
) -> Result<Vec<f64>> {
    let mut rhs = forces.to_vec();
    for (r, g) in rhs.iter_mut().zip(coupling.gradient(p)) {
        *r -= g;
    }
    elastic.solve(&rhs)
}

/// How the time derivative of the force lift is obtained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RhsMode {
    /// Exact derivative of the source expressions.
    Exact,
    /// `(F(t) - F(t - dt)) / dt`, the derivative implied by implicit Euler.
    BackwardDifference { dt: f64 },
}

/// The discrete ε-problem on a composite mesh: dof maps and all matrices.
#[derive(Clone, Debug)]
pub struct EpsilonProblem {
    mesh: CompositeMesh,
    materials: MaterialSet,
    gel_mask: Vec<bool>,
    dofs_u: DofMap,
    dofs_p: DofMap,
    stiffness: SparseMatrix,
    coupling: SparseMatrix,
    c_mass: SparseMatrix,
    mass: SparseMatrix,
    diffusion: SparseMatrix,
    grad_p: SparseMatrix,
    laplacian: SparseMatrix,
}

impl EpsilonProblem {
    pub fn new(mesh: CompositeMesh, materials: MaterialSet) -> Result<Self> {
        if materials.dim() != mesh.dim() {
            return Err(Error::Dimension(format!(
                "materials are {}D, mesh is {}D",
                materials.dim(),
                mesh.dim()
            )));
        }
        let grid = mesh.grid();
        let dim = grid.dim();
        let gel_mask = mesh.gel_mask();
        let dofs_u = build_dofmap(grid, dim, ConstraintSpec::DirichletBoundary, None);
        let dofs_p = build_dofmap(grid, 1, ConstraintSpec::UnconstrainedGelPressure, Some(&gel_mask));
        if dofs_p.n_dofs() == 0 {
            log::warn!("mesh has no gel: running as pure elasticity");
        }
        let field = TensorField::from_phases(mesh.phases(), &materials);
        let stiffness = assemble_elasticity(grid, &field, &dofs_u)?;
        let coupling = assemble_coupling(grid, materials.alpha, &gel_mask, &dofs_u, &dofs_p)?;
        let eps2 = mesh.epsilon() * mesh.epsilon();
        let (c_mass, diffusion) = assemble_mass_and_diffusion(
            grid,
            materials.biot_modulus,
            &(&materials.permeability * eps2),
            &gel_mask,
            &dofs_p,
        )?;
        let (mass, grad_p) = assemble_mass_and_diffusion(
            grid,
            1.0,
            &(DMatrix::identity(dim, dim) * eps2),
            &gel_mask,
            &dofs_p,
        )?;
        let laplacian = assemble_vector_laplacian(grid, &dofs_u)?;
        Ok(Self {
            mesh,
            materials,
            gel_mask,
            dofs_u,
            dofs_p,
            stiffness,
            coupling,
            c_mass,
            mass,
            diffusion,
            grad_p,
            laplacian,
        })
    }

    pub fn mesh(&self) -> &CompositeMesh {
        &self.mesh
    }

    pub fn materials(&self) -> &MaterialSet {
        &self.materials
    }

    pub fn gel_mask(&self) -> &[bool] {
        &self.gel_mask
    }

    pub fn dofs_u(&self) -> &DofMap {
        &self.dofs_u
    }

    pub fn dofs_p(&self) -> &DofMap {
        &self.dofs_p
    }

    pub fn n_u(&self) -> usize {
        self.dofs_u.n_dofs()
    }

    pub fn n_p(&self) -> usize {
        self.dofs_p.n_dofs()
    }

    /// Elasticity matrix `K`.
    pub fn stiffness(&self) -> &SparseMatrix {
        &self.stiffness
    }

    /// Coupling matrix `B`.
    pub fn coupling(&self) -> &SparseMatrix {
        &self.coupling
    }

    /// `c M`.
    pub fn c_mass(&self) -> &SparseMatrix {
        &self.c_mass
    }

    /// Unweighted gel mass `M`.
    pub fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    /// `ε² K` diffusion.
    pub fn diffusion(&self) -> &SparseMatrix {
        &self.diffusion
    }

    /// `ε² ∫ ∇p · ∇q` (identity permeability), used for the energy ledger.
    pub fn grad_p(&self) -> &SparseMatrix {
        &self.grad_p
    }

    /// `∫ ∇u : ∇v`, the H¹ seminorm of displacements.
    pub fn vector_laplacian(&self) -> &SparseMatrix {
        &self.laplacian
    }

    pub fn force_load(&self, sources: &SourceFields, t: f64, time_derivative: bool) -> Vec<f64> {
        body_force_load(self.mesh.grid(), self.mesh.phases(), &self.dofs_u, sources, t, time_derivative)
    }

    pub fn pressure_load(&self, sources: &SourceFields, t: f64, time_derivative: bool) -> Vec<f64> {
        pressure_source_load(self.mesh.grid(), &self.gel_mask, &self.dofs_p, sources, t, time_derivative)
    }

    pub fn elastic_operator(&self, settings: &SolverSettings) -> Result<ElasticSolveOperator> {
        ElasticSolveOperator::new(self.stiffness.clone(), settings)
    }

    pub fn coupling_operators(&self) -> CouplingOperators {
        CouplingOperators::new(self.coupling.clone())
    }

    pub fn biot_operator(&self, settings: &SolverSettings) -> Result<BiotOperator> {
        Ok(BiotOperator::new(
            self.c_mass.clone(),
            self.coupling_operators(),
            self.elastic_operator(settings)?,
        ))
    }

    /// Time derivative of the force lift, exact or by backward difference.
    fn force_rate(&self, sources: &SourceFields, t: f64, mode: RhsMode) -> Vec<f64> {
        match mode {
            RhsMode::Exact => self.force_load(sources, t, true),
            RhsMode::BackwardDifference { dt } => {
                let f1 = self.force_load(sources, t, false);
                let f0 = self.force_load(sources, t - dt, false);
                f1.iter().zip(&f0).map(|(a, b)| (a - b) / dt).collect()
            }
        }
    }
}

/// Right-hand side of the operator form, `ℋ = h - ∂_t (Bᵀ K⁻¹ F)`.
pub fn operator_rhs(
    problem: &EpsilonProblem,
    elastic: &ElasticSolveOperator,
    sources: &SourceFields,
    t: f64,
    mode: RhsMode,
) -> Result<Vec<f64>> {
    let mut rhs = problem.pressure_load(sources, t, false);
    if sources.forces_time_independent() {
        return Ok(rhs);
    }
    let rate = problem.force_rate(sources, t, mode);
    let lift = elastic.solve(&rate)?;
    for (r, d) in rhs.iter_mut().zip(problem.coupling().matvec_transpose(&lift)) {
        *r -= d;
    }
    Ok(rhs)
}

/// The lift `Bᵀ K⁻¹ F(t)` whose time derivative enters [`operator_rhs`].
pub fn force_lift(
    problem: &EpsilonProblem,
    elastic: &ElasticSolveOperator,
    sources: &SourceFields,
    t: f64,
) -> Result<Vec<f64>> {
    let u = elastic.solve(&problem.force_load(sources, t, false))?;
    Ok(problem.coupling().matvec_transpose(&u))
}
