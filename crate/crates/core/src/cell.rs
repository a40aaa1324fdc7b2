//! Unit-cell problems and effective coefficients.
//!
//! For every Voigt unit strain `e_I` (the symmetric part of `e_j ⊗ e_k`) the
//! periodic zero-mean corrector `τ_I` solves `∫ A (e_I + e(τ_I)) : e(v) = 0`.
//! The effective tensor is the energy of the corrected strains; the pressure
//! correction `ũ = 𝓛 p` solves `∫ A e(ũ) : e(v) = ∫_gel α p div v`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fem::assembly::assemble_strain_loads;
use crate::fem::element::ElementBasis;
use crate::fem::sparse::dot;
use crate::fem::tensor::{voigt_identity, voigt_index, voigt_pairs, voigt_size};
use crate::fem::{
    assemble_coupling, assemble_elasticity, assemble_mass_and_diffusion, build_dofmap,
    ConstraintSpec, DofMap, MaterialSet, SolverSettings, SourceFields, SparseMatrix, SpdSolver,
    SymElasticityTensor, TensorField,
};
use crate::geometry::{phase_fractions, PeriodicGrid};
use crate::{Error, Result};

/// Periodic discretization of the unit cell shared by all cell-level computations.
#[derive(Clone, Debug)]
pub struct CellProblem {
    grid: PeriodicGrid,
    materials: MaterialSet,
    gel_mask: Vec<bool>,
    field: TensorField,
    dofs_u: DofMap,
    dofs_p: DofMap,
    stiffness: SparseMatrix,
    coupling: SparseMatrix,
    mass: SparseMatrix,
    diffusion: SparseMatrix,
    strain_loads: Vec<Vec<f64>>,
    solver: SpdSolver,
}

impl CellProblem {
    pub fn new(grid: PeriodicGrid, materials: MaterialSet, settings: &SolverSettings) -> Result<Self> {
        if grid.dim() != materials.dim() {
            return Err(Error::Dimension(format!(
                "unit cell is {}D, materials are {}D",
                grid.dim(),
                materials.dim()
            )));
        }
        let g = grid.grid();
        let dim = g.dim();
        let gel_mask = grid.gel_mask();
        let field = TensorField::from_phases(grid.phases(), &materials);
        let dofs_u = build_dofmap(g, dim, ConstraintSpec::PeriodicMeanZero, None);
        let dofs_p = build_dofmap(g, 1, ConstraintSpec::UnconstrainedGelPressure, Some(&gel_mask));
        let stiffness = assemble_elasticity(g, &field, &dofs_u)?;
        let coupling = assemble_coupling(g, materials.alpha, &gel_mask, &dofs_u, &dofs_p)?;
        let (mass, diffusion) =
            assemble_mass_and_diffusion(g, 1.0, &materials.permeability, &gel_mask, &dofs_p)?;
        let strain_loads = assemble_strain_loads(g, &field, &dofs_u)?;
        let solver = SpdSolver::with_mean_zero(stiffness.clone(), dofs_u.mean_zero_groups(), settings)?;
        Ok(Self {
            grid,
            materials,
            gel_mask,
            field,
            dofs_u,
            dofs_p,
            stiffness,
            coupling,
            mass,
            diffusion,
            strain_loads,
            solver,
        })
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn materials(&self) -> &MaterialSet {
        &self.materials
    }

    pub fn gel_mask(&self) -> &[bool] {
        &self.gel_mask
    }

    pub fn tensor_field(&self) -> &TensorField {
        &self.field
    }

    pub fn dofs_u(&self) -> &DofMap {
        &self.dofs_u
    }

    pub fn dofs_p(&self) -> &DofMap {
        &self.dofs_p
    }

    /// Periodic elasticity matrix (singular on constants).
    pub fn stiffness(&self) -> &SparseMatrix {
        &self.stiffness
    }

    /// `vᵀ B p = ∫_gel α p div v`.
    pub fn coupling(&self) -> &SparseMatrix {
        &self.coupling
    }

    /// Unweighted gel mass matrix.
    pub fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    /// `∫_gel K ∇p · ∇q`.
    pub fn diffusion(&self) -> &SparseMatrix {
        &self.diffusion
    }

    /// Loads `-∫ Bᵀ A e_I` of the Voigt unit strains.
    pub fn strain_loads(&self) -> &[Vec<f64>] {
        &self.strain_loads
    }

    pub fn solver(&self) -> &SpdSolver {
        &self.solver
    }

    /// `∫_Y A` in Voigt form.
    pub fn mean_tensor(&self) -> DMatrix<f64> {
        let g = self.grid.grid();
        let nv = voigt_size(self.dim());
        let mut m = DMatrix::zeros(nv, nv);
        for cell in 0..g.n_cells() {
            m += self.field.tensor(cell).voigt() * g.cell_volume();
        }
        m
    }

    /// Zero-mean periodic solution of `K u = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.solver.solve(b)
    }
}

/// Correctors `τ_I` for every Voigt unit strain.
#[derive(Clone, Debug)]
pub struct CellSolutions {
    problem: CellProblem,
    tau: Vec<Vec<f64>>,
}

impl CellSolutions {
    pub fn problem(&self) -> &CellProblem {
        &self.problem
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.problem.grid()
    }

    /// Corrector of Voigt index `I` (dof vector).
    pub fn tau_voigt(&self, i: usize) -> &[f64] {
        &self.tau[i]
    }

    pub fn tau_all(&self) -> &[Vec<f64>] {
        &self.tau
    }

    /// Corrector `τ_jk` (equal to `τ_kj`).
    pub fn tau(&self, j: usize, k: usize) -> &[f64] {
        &self.tau[voigt_index(self.problem.dim(), j, k)]
    }

    pub fn max_abs_tau(&self) -> f64 {
        self.tau
            .iter()
            .flatten()
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    /// Mean of component `comp` of `τ_I` over the unit cell.
    pub fn mean(&self, i: usize, comp: usize) -> f64 {
        let d = self.problem.dim();
        let t = &self.tau[i];
        let n = t.len() / d;
        (0..n).map(|k| t[k * d + comp]).sum::<f64>() / n as f64
    }

    /// `∫ A (e_I + e(τ_I)) : e(τ_J)`, the residual of one corrector tested with another.
    pub fn reciprocity_pair(&self, i: usize, j: usize) -> (f64, f64) {
        let p = &self.problem;
        let ktj = p.stiffness.matvec(&self.tau[j]);
        let kti = p.stiffness.matvec(&self.tau[i]);
        let a = dot(&self.tau[i], &ktj) - dot(&p.strain_loads[i], &self.tau[j]);
        let b = dot(&self.tau[j], &kti) - dot(&p.strain_loads[j], &self.tau[i]);
        (a, b)
    }
}

pub fn solve_cell_problems(
    grid: &PeriodicGrid,
    materials: &MaterialSet,
    settings: &SolverSettings,
) -> Result<CellSolutions> {
    let problem = CellProblem::new(grid.clone(), materials.clone(), settings)?;
    solve_cell_problems_on(problem)
}

/// Solves the correctors on an already assembled cell discretization.
pub fn solve_cell_problems_on(problem: CellProblem) -> Result<CellSolutions> {
    let dim = problem.dim();
    let pairs = voigt_pairs(dim);
    let tau = (0..voigt_size(dim))
        .into_par_iter()
        .map(|i| {
            problem.solve(&problem.strain_loads[i]).map_err(|e| Error::CellProblem {
                index: pairs[i],
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CellSolutions { problem, tau })
}

/// Energy form `∫ A (e_I + e(τ_I)) : (e_J + e(τ_J))`.
pub fn effective_elasticity(cells: &CellSolutions) -> Result<SymElasticityTensor> {
    let p = &cells.problem;
    let nv = voigt_size(p.dim());
    let mean = p.mean_tensor();
    let k_tau: Vec<Vec<f64>> = cells.tau.iter().map(|t| p.stiffness.matvec(t)).collect();
    let mut m = DMatrix::zeros(nv, nv);
    for i in 0..nv {
        for j in i..nv {
            let v = mean[(i, j)] - dot(&p.strain_loads[i], &cells.tau[j])
                - dot(&p.strain_loads[j], &cells.tau[i])
                + dot(&cells.tau[i], &k_tau[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    SymElasticityTensor::from_voigt(p.dim(), m)
}

/// Flux form `∫ A (e_I + e(τ_I)) : e_J`; equals the energy form for exact correctors.
pub fn effective_elasticity_flux(cells: &CellSolutions) -> DMatrix<f64> {
    let p = &cells.problem;
    let nv = voigt_size(p.dim());
    let mean = p.mean_tensor();
    DMatrix::from_fn(nv, nv, |i, j| mean[(i, j)] - dot(&p.strain_loads[j], &cells.tau[i]))
}

/// Effective Biot-Willis data.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BiotCoefficients {
    /// `α (δ_jk + div τ_jk)` averaged over each cell; `None` on fibre cells.
    pub field: Vec<Option<DMatrix<f64>>>,
    /// `α (δ + ∫_Y div τ)`.
    pub average_over_cell: DMatrix<f64>,
    /// Mean of the field over the gel.
    pub average_over_gel: DMatrix<f64>,
}

/// Cell averages of `div τ_I` for every cell and Voigt index: `[cell][I]`.
fn cell_divergences(cells: &CellSolutions) -> Vec<Vec<f64>> {
    let p = &cells.problem;
    let g = p.grid.grid();
    let d = p.dim();
    let e = ElementBasis::new(g);
    let nv = voigt_size(d);
    // ∫_cell div v for each local dof
    let mut div_row = vec![0.0; d * e.n_nodes()];
    for q in 0..e.n_qp() {
        for a in 0..e.n_nodes() {
            for c in 0..d {
                div_row[a * d + c] += e.weight(q) * e.grad(q, a)[c];
            }
        }
    }
    (0..g.n_cells())
        .map(|cell| {
            let dofs = p.dofs_u.cell_dofs(g, cell);
            (0..nv)
                .map(|i| {
                    let t = &cells.tau[i];
                    dofs.iter()
                        .zip(&div_row)
                        .map(|(dof, w)| dof.map_or(0.0, |k| w * t[k]))
                        .sum::<f64>()
                        / g.cell_volume()
                })
                .collect()
        })
        .collect()
}

pub fn effective_biot(cells: &CellSolutions) -> BiotCoefficients {
    let p = &cells.problem;
    let d = p.dim();
    let alpha = p.materials.alpha;
    let g = p.grid.grid();
    let divs = cell_divergences(cells);
    let to_matrix = |v: &dyn Fn(usize) -> f64| {
        DMatrix::from_fn(d, d, |j, k| {
            let delta = if j == k { 1.0 } else { 0.0 };
            alpha * (delta + v(voigt_index(d, j, k)))
        })
    };
    let field: Vec<Option<DMatrix<f64>>> = (0..g.n_cells())
        .map(|cell| p.gel_mask[cell].then(|| to_matrix(&|i| divs[cell][i])))
        .collect();
    let nv = voigt_size(d);
    let mut over_cell = vec![0.0; nv];
    let mut over_gel = vec![0.0; nv];
    let gel_volume = p.gel_mask.iter().filter(|&&m| m).count() as f64 * g.cell_volume();
    for cell in 0..g.n_cells() {
        for i in 0..nv {
            let v = divs[cell][i] * g.cell_volume();
            over_cell[i] += v / g.volume();
            if p.gel_mask[cell] {
                over_gel[i] += v / gel_volume;
            }
        }
    }
    BiotCoefficients {
        average_over_cell: to_matrix(&|i| over_cell[i]),
        average_over_gel: to_matrix(&|i| over_gel[i]),
        field,
    }
}

/// `∫_{Y^f} f + ∫_{Y^g} g` for sources that do not vary over the cell.
pub fn average_forces(sources: &SourceFields, grid: &PeriodicGrid, t: f64, x: &[f64]) -> [f64; 3] {
    sources.averaged_force(phase_fractions(grid.phases()), t, x, false)
}

/// Zero-mean periodic `ũ = 𝓛 p` for a gel pressure given on the gel nodes.
pub fn micro_correction(problem: &CellProblem, p: &[f64]) -> Result<Vec<f64>> {
    if p.len() != problem.dofs_p.n_dofs() {
        return Err(Error::Dimension(format!(
            "pressure has {} entries, cell has {} gel nodes",
            p.len(),
            problem.dofs_p.n_dofs()
        )));
    }
    problem.solve(&problem.coupling.matvec(p))
}

/// Everything the two-scale model needs from the unit cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EffectiveCoefficients {
    pub a_h: SymElasticityTensor,
    pub biot: BiotCoefficients,
    pub fibre_fraction: f64,
    pub gel_fraction: f64,
}

pub fn effective_coefficients(cells: &CellSolutions) -> Result<EffectiveCoefficients> {
    let (fibre_fraction, gel_fraction) = phase_fractions(cells.grid().phases());
    Ok(EffectiveCoefficients {
        a_h: effective_elasticity(cells)?,
        biot: effective_biot(cells),
        fibre_fraction,
        gel_fraction,
    })
}

/// `[A e(u)]_Y` in Voigt form for a periodic displacement `u`.
pub fn mean_stress(problem: &CellProblem, u: &[f64]) -> Vec<f64> {
    problem.strain_loads.iter().map(|f| -dot(f, u)).collect()
}

/// Voigt identity `m` (trace functional on Voigt strains).
pub fn trace_vector(dim: usize) -> Vec<f64> {
    voigt_identity(dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_unit_cell, InclusionSpec};

    fn mats(contrast: f64) -> MaterialSet {
        MaterialSet::isotropic(2, (10.0 * contrast, 0.3), (10.0, 0.3), 0.8, 1.0, 1.0).unwrap()
    }

    #[test]
    fn homogeneous_cell_has_zero_correctors() {
        let grid = build_unit_cell(2, 8, InclusionSpec::Ball { radius: 0.25 }).unwrap();
        let m = mats(1.0);
        let cells = solve_cell_problems(&grid, &m, &SolverSettings::default()).unwrap();
        assert!(cells.max_abs_tau() < 1e-9);
        let ah = effective_elasticity(&cells).unwrap();
        let diff = (ah.voigt() - m.fibre.voigt()).abs().max();
        assert!(diff < 1e-8 * m.fibre.max_abs());
        let biot = effective_biot(&cells);
        assert!((biot.average_over_gel.clone() - DMatrix::identity(2, 2) * 0.8).abs().max() < 1e-9);
    }

    #[test]
    fn energy_and_flux_forms_agree() {
        let grid = build_unit_cell(2, 8, InclusionSpec::Ball { radius: 0.3 }).unwrap();
        let cells = solve_cell_problems(&grid, &mats(5.0), &SolverSettings::default()).unwrap();
        let e = effective_elasticity(&cells).unwrap();
        let f = effective_elasticity_flux(&cells);
        assert!((e.voigt() - f).abs().max() < 1e-9 * e.max_abs());
        for i in 0..3 {
            assert!(cells.mean(i, 0).abs() < 1e-10 && cells.mean(i, 1).abs() < 1e-10);
        }
    }

    #[test]
    fn divergence_of_correctors_integrates_to_zero() {
        let grid = build_unit_cell(2, 8, InclusionSpec::Ball { radius: 0.3 }).unwrap();
        let cells = solve_cell_problems(&grid, &mats(4.0), &SolverSettings::default()).unwrap();
        let b = effective_biot(&cells);
        assert!((b.average_over_cell - DMatrix::identity(2, 2) * 0.8).abs().max() < 1e-12);
    }
}
