//! Coupled two-scale solver for the homogenized limit.
//!
//! Unknowns are the macroscopic displacement `U` (Q1, Dirichlet on ∂Ω) and one
//! micro pressure field `p_q` on the gel nodes of the shared unit cell per
//! macro Gauss point. The micro displacement is `U¹ = Σ_I τ_I e_I(U) + ũ` with
//! `ũ = 𝓛 p` the periodic response to the gel pressure.
//!
//! With `Bᵧ` the cell coupling matrix, `M` the gel mass, `Aᵧ` the cell
//! diffusion, `G[:, I] = α m_I M 1 + Bᵧᵀ τ_I` and `G_𝓛 = Bᵧᵀ 𝓛`, one implicit
//! Euler step reads
//!
//! ```text
//! K^h U¹ - Σ_q w_q B_qᵀ Gᵀ p_q¹                  = F(t¹)
//! G B_q U¹ + (c M + dt Aᵧ + G_𝓛) p_q¹            = (c M + G_𝓛) p_q⁰ + G B_q U⁰ + dt h(t¹, x_q) M 1
//! ```
//!
//! and is solved by a fixed-stress fixed-point iteration: macro solve with the
//! previous pressures, then all micro solves with a stabilization `L M`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::{effective_coefficients, CellSolutions, EffectiveCoefficients};
use crate::fem::assembly::assemble_vector_load;
use crate::fem::element::ElementBasis;
use crate::fem::tensor::{voigt_identity, voigt_size};
use crate::fem::{
    assemble_elasticity, build_dofmap, ConstraintSpec, DofMap, FieldState, SolverSettings,
    SourceFields, SpdSolver, TensorField,
};
use crate::geometry::{MacroMesh, StructuredGrid};
use crate::simulate::{is_saved, TimeGrid, Trajectory};
use crate::{Error, Result};

/// Micro systems are small; factor them densely up to this size.
const MICRO_DENSE_LIMIT: usize = 3000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoScaleState {
    pub t: f64,
    /// Macro displacement dofs.
    pub u: Vec<f64>,
    /// Micro gel pressure per macro quadrature point.
    pub p: Vec<Vec<f64>>,
}

/// Everything a two-scale run needs besides the sources and the time grid.
#[derive(Clone, Debug)]
pub struct TwoScaleSetup {
    pub macro_mesh: MacroMesh,
    pub cells: CellSolutions,
}

pub struct TwoScaleSolver {
    grid: StructuredGrid,
    dofs: DofMap,
    macro_k: SpdSolver,
    elem: ElementBasis,
    qp_strain: Vec<DMatrix<f64>>,
    elem_dofs: Vec<Vec<Option<usize>>>,
    qp_pos: Vec<[f64; 3]>,
    cells: CellSolutions,
    coefficients: EffectiveCoefficients,
    sources: SourceFields,
    time: TimeGrid,
    settings: SolverSettings,
    c: f64,
    /// Dense `𝓛` (cell displacement dofs × gel nodes).
    lift: DMatrix<f64>,
    g: DMatrix<f64>,
    mass: DMatrix<f64>,
    mass_one: DVector<f64>,
    /// `c M + G_𝓛`.
    hold: DMatrix<f64>,
    /// `c M + dt Aᵧ + G_𝓛`.
    implicit: DMatrix<f64>,
    stabilization: f64,
    micro: Option<Cholesky<f64, Dyn>>,
}

impl TwoScaleSolver {
    pub fn new(
        macro_mesh: &MacroMesh,
        cells: CellSolutions,
        sources: SourceFields,
        time: TimeGrid,
        settings: &SolverSettings,
    ) -> Result<Self> {
        let dim = macro_mesh.dim();
        if cells.grid().dim() != dim {
            return Err(Error::Dimension("macro mesh and unit cell differ in dimension".into()));
        }
        if cells.grid().is_laminate() {
            return Err(Error::Unsupported(
                "laminate cells touch the cell boundary; use a ball inclusion for the two-scale model".into(),
            ));
        }
        sources.validate(dim)?;
        time.validate()?;
        let coefficients = effective_coefficients(&cells)?;
        let grid = macro_mesh.grid().clone();
        let dofs = build_dofmap(&grid, dim, ConstraintSpec::DirichletBoundary, None);
        let field = TensorField::uniform(coefficients.a_h.clone(), grid.n_cells());
        let big = SolverSettings {
            dense_limit: settings.dense_limit.max(MICRO_DENSE_LIMIT),
            ..settings.clone()
        };
        let macro_k = SpdSolver::new(assemble_elasticity(&grid, &field, &dofs)?, &big)?;
        let elem = ElementBasis::new(&grid);
        let qp_strain: Vec<DMatrix<f64>> = (0..elem.n_qp()).map(|q| elem.strain_matrix(q)).collect();
        let elem_dofs: Vec<Vec<Option<usize>>> =
            (0..grid.n_cells()).map(|c| dofs.cell_dofs(&grid, c)).collect();
        let mut qp_pos = Vec::with_capacity(grid.n_cells() * elem.n_qp());
        for cell in 0..grid.n_cells() {
            let cc = grid.cell_coords(cell);
            let mut origin = [0.0; 3];
            for a in 0..dim {
                origin[a] = cc[a] as f64 * grid.spacing()[a];
            }
            for q in 0..elem.n_qp() {
                qp_pos.push(elem.qp_position(&origin, q));
            }
        }

        let problem = cells.problem();
        let materials = problem.materials();
        let c = materials.biot_modulus;
        let n_p = problem.dofs_p().n_dofs();
        let n_u = problem.dofs_u().n_dofs();
        let nv = voigt_size(dim);
        let micro_k = SpdSolver::with_mean_zero(
            problem.stiffness().clone(),
            problem.dofs_u().mean_zero_groups(),
            &big,
        )?;
        let by = problem.coupling();
        let columns: Vec<Vec<f64>> = (0..n_p)
            .into_par_iter()
            .map(|a| {
                let mut e = vec![0.0; n_p];
                e[a] = 1.0;
                micro_k.solve(&by.matvec(&e))
            })
            .collect::<Result<_>>()?;
        let lift = DMatrix::from_fn(n_u, n_p, |i, a| columns[a][i]);
        let mut g_lift = DMatrix::zeros(n_p, n_p);
        for a in 0..n_p {
            let col = by.matvec_transpose(&columns[a]);
            for b in 0..n_p {
                g_lift[(b, a)] = col[b];
            }
        }
        // symmetric by construction up to round-off
        g_lift = (&g_lift + g_lift.transpose()) * 0.5;
        let mass = problem.mass().to_dense();
        let mass_one = &mass * DVector::from_element(n_p, 1.0);
        let m = voigt_identity(dim);
        let mut g = DMatrix::zeros(n_p, nv);
        for i in 0..nv {
            let bt_tau = by.matvec_transpose(cells.tau_voigt(i));
            for a in 0..n_p {
                g[(a, i)] = materials.alpha * m[i] * mass_one[a] + bt_tau[a];
            }
        }
        let hold = &mass * c + &g_lift;
        let implicit = &hold + problem.diffusion().to_dense() * time.dt();
        let beta = materials.alpha * materials.alpha * materials.inverse_bulk_bound()?;
        let stabilization = 0.5 * beta;
        let micro = if n_p > 0 {
            Some(
                Cholesky::new(&implicit + &mass * stabilization).ok_or_else(|| {
                    Error::Singular("micro pressure matrix is not positive definite".into())
                })?,
            )
        } else {
            log::warn!("unit cell has no gel: two-scale run reduces to homogenized elasticity");
            None
        };
        Ok(Self {
            grid,
            dofs,
            macro_k,
            elem,
            qp_strain,
            elem_dofs,
            qp_pos,
            cells,
            coefficients,
            sources,
            time,
            settings: settings.clone(),
            c,
            lift,
            g,
            mass,
            mass_one,
            hold,
            implicit,
            stabilization,
            micro,
        })
    }

    pub fn macro_grid(&self) -> &StructuredGrid {
        &self.grid
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn cells(&self) -> &CellSolutions {
        &self.cells
    }

    pub fn coefficients(&self) -> &EffectiveCoefficients {
        &self.coefficients
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn n_qp(&self) -> usize {
        self.qp_pos.len()
    }

    pub fn n_p(&self) -> usize {
        self.mass_one.len()
    }

    pub fn qp_position(&self, q: usize) -> [f64; 3] {
        self.qp_pos[q]
    }

    /// Fixed-stress parameter `L` of the micro pressure update.
    pub fn stabilization(&self) -> f64 {
        self.stabilization
    }

    fn qp_weight(&self, q: usize) -> f64 {
        self.elem.weight(q % self.elem.n_qp())
    }

    /// Voigt strain of the macro displacement at quadrature point `q`.
    pub fn strain(&self, u: &[f64], q: usize) -> DVector<f64> {
        let nq = self.elem.n_qp();
        let b = &self.qp_strain[q % nq];
        let ue = DVector::from_iterator(
            b.ncols(),
            self.elem_dofs[q / nq].iter().map(|d| d.map_or(0.0, |k| u[k])),
        );
        b * ue
    }

    fn macro_force(&self, t: f64) -> Vec<f64> {
        let fractions = (self.coefficients.fibre_fraction, self.coefficients.gel_fraction);
        let dim = self.grid.dim();
        assemble_vector_load(&self.grid, &self.dofs, |_, x| {
            Some(self.sources.averaged_force(fractions, t, &x[..dim], false))
        })
    }

    /// `Σ_q w_q B_qᵀ Gᵀ p_q` scattered into macro dofs.
    fn pressure_load(&self, p: &[Vec<f64>]) -> Vec<f64> {
        let nq = self.elem.n_qp();
        let mut f = vec![0.0; self.dofs.n_dofs()];
        if self.n_p() == 0 {
            return f;
        }
        for (qg, pq) in p.iter().enumerate() {
            let s = self.g.transpose() * DVector::from_column_slice(pq);
            let local = self.qp_strain[qg % nq].transpose() * s * self.qp_weight(qg);
            for (k, d) in self.elem_dofs[qg / nq].iter().enumerate() {
                if let Some(d) = d {
                    f[*d] += local[k];
                }
            }
        }
        f
    }

    pub fn initial_state(&self) -> Result<TwoScaleState> {
        Ok(TwoScaleState {
            t: 0.0,
            u: self.macro_k.solve(&self.macro_force(0.0))?,
            p: vec![vec![0.0; self.n_p()]; self.n_qp()],
        })
    }

    /// Right-hand sides of the micro pressure equations for the step from `state`.
    fn micro_base(&self, state: &TwoScaleState, t1: f64) -> Vec<DVector<f64>> {
        let dt = self.time.dt();
        let dim = self.grid.dim();
        (0..self.n_qp())
            .into_par_iter()
            .map(|q| {
                let h = self.sources.pressure_source(t1, &self.qp_pos[q][..dim], false);
                &self.hold * DVector::from_column_slice(&state.p[q])
                    + &self.g * self.strain(&state.u, q)
                    + &self.mass_one * (dt * h)
            })
            .collect()
    }

    /// One implicit Euler step; returns the new state and the fixed-point iteration count.
    pub fn step(&self, state: &TwoScaleState) -> Result<(TwoScaleState, usize)> {
        let t1 = state.t + self.time.dt();
        let f = self.macro_force(t1);
        let base = self.micro_base(state, t1);
        let mut u = state.u.clone();
        let mut p = state.p.clone();
        let (mut du, mut dp) = (f64::INFINITY, f64::INFINITY);
        for it in 1..=self.settings.max_fp {
            let mut load = self.pressure_load(&p);
            for (l, fi) in load.iter_mut().zip(&f) {
                *l += fi;
            }
            let u_new = self.macro_k.solve_from(&load, Some(&u))?;
            let p_new: Vec<Vec<f64>> = match &self.micro {
                None => p.clone(),
                Some(ch) => (0..self.n_qp())
                    .into_par_iter()
                    .map(|q| {
                        let pq = DVector::from_column_slice(&p[q]);
                        let rhs = &base[q] - &self.g * self.strain(&u_new, q)
                            + &self.mass * pq * self.stabilization;
                        ch.solve(&rhs).as_slice().to_vec()
                    })
                    .collect(),
            };
            du = relative_change(&u_new, &u);
            dp = relative_change(
                &p_new.iter().flatten().copied().collect::<Vec<_>>(),
                &p.iter().flatten().copied().collect::<Vec<_>>(),
            );
            u = u_new;
            p = p_new;
            if du <= self.settings.tol_fp && dp <= self.settings.tol_fp {
                return Ok((TwoScaleState { t: t1, u, p }, it));
            }
        }
        Err(Error::FixedPoint {
            iterations: self.settings.max_fp,
            du,
            dp,
        })
    }

    /// The same step solved as one dense linear system; only sensible for tiny meshes.
    pub fn step_monolithic_dense(&self, state: &TwoScaleState) -> Result<TwoScaleState> {
        let t1 = state.t + self.time.dt();
        let nu = self.dofs.n_dofs();
        let np = self.n_p();
        let nqp = self.n_qp();
        let nq = self.elem.n_qp();
        let n = nu + nqp * np;
        let mut a = DMatrix::zeros(n, n);
        let mut rhs = DVector::zeros(n);
        a.view_mut((0, 0), (nu, nu)).copy_from(&self.macro_k.matrix().to_dense());
        let f = self.macro_force(t1);
        rhs.rows_mut(0, nu).copy_from(&DVector::from_vec(f));
        let base = self.micro_base(state, t1);
        for qg in 0..nqp {
            let off = nu + qg * np;
            let b = &self.qp_strain[qg % nq];
            let gb = &self.g * b;
            let w = self.qp_weight(qg);
            for (k, d) in self.elem_dofs[qg / nq].iter().enumerate() {
                let Some(d) = d else { continue };
                for r in 0..np {
                    a[(off + r, *d)] += gb[(r, k)];
                    a[(*d, off + r)] -= w * gb[(r, k)];
                }
            }
            a.view_mut((off, off), (np, np)).copy_from(&self.implicit);
            rhs.rows_mut(off, np).copy_from(&base[qg]);
        }
        let x = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("monolithic two-scale matrix is singular".into()))?;
        Ok(TwoScaleState {
            t: t1,
            u: x.rows(0, nu).iter().copied().collect(),
            p: (0..nqp)
                .map(|q| x.rows(nu + q * np, np).iter().copied().collect())
                .collect(),
        })
    }

    /// Relative defect of `d/dt ∫_gel (c p + α div U¹_total) = ∫_gel h` at every quadrature point.
    pub fn mass_balance(&self, s0: &TwoScaleState, s1: &TwoScaleState) -> f64 {
        let dt = s1.t - s0.t;
        let dim = self.grid.dim();
        let ones = DVector::from_element(self.n_p(), 1.0);
        (0..self.n_qp())
            .map(|q| {
                let dp = DVector::from_column_slice(&s1.p[q]) - DVector::from_column_slice(&s0.p[q]);
                let de = self.strain(&s1.u, q) - self.strain(&s0.u, q);
                let storage = ones.dot(&(&self.hold * &dp)) + ones.dot(&(&self.g * &de));
                let source = dt
                    * self.sources.pressure_source(s1.t, &self.qp_pos[q][..dim], false)
                    * self.mass_one.sum();
                let scale = storage.abs().max(source.abs()).max(1e-300);
                (storage - source).abs() / scale
            })
            .fold(0.0, f64::max)
    }

    /// `ũ = 𝓛 p_q`.
    pub fn micro_correction(&self, state: &TwoScaleState, q: usize) -> Vec<f64> {
        (&self.lift * DVector::from_column_slice(&state.p[q])).as_slice().to_vec()
    }

    /// `U¹ = Σ_I τ_I e_I(U) + ũ` at quadrature point `q`.
    pub fn micro_displacement(&self, state: &TwoScaleState, q: usize) -> Vec<f64> {
        let mut u1 = self.micro_correction(state, q);
        let e = self.strain(&state.u, q);
        for (i, ei) in e.iter().enumerate() {
            for (v, t) in u1.iter_mut().zip(self.cells.tau_voigt(i)) {
                *v += ei * t;
            }
        }
        u1
    }

    /// `[A e(ũ)]_Y` at quadrature point `q` (Voigt).
    pub fn micro_stress(&self, state: &TwoScaleState, q: usize) -> Vec<f64> {
        crate::cell::mean_stress(self.cells.problem(), &self.micro_correction(state, q))
    }

    /// Gel average of the micro pressure at each quadrature point.
    pub fn gel_average_pressure(&self, state: &TwoScaleState) -> Vec<f64> {
        let vol = self.mass_one.sum();
        state
            .p
            .iter()
            .map(|pq| {
                if vol > 0.0 {
                    self.mass_one.dot(&DVector::from_column_slice(pq)) / vol
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Macro quadrature point closest to `x`.
    pub fn nearest_qp(&self, x: &[f64]) -> usize {
        let dim = self.grid.dim();
        let (cell, xi) = self.grid.locate(x);
        let mut q = 0;
        for axis in 0..dim {
            if xi[axis] >= 0.5 {
                q |= 1 << axis;
            }
        }
        cell * self.elem.n_qp() + q
    }

    fn snapshot(&self, s: &TwoScaleState) -> FieldState {
        FieldState {
            t: s.t,
            u: s.u.clone(),
            p: self.gel_average_pressure(s),
        }
    }

    pub fn run(&self, save_every: usize) -> Result<(Trajectory, TwoScaleState)> {
        let n = self.time.n_steps;
        let mut state = self.initial_state()?;
        let mut traj = Trajectory::default();
        traj.states.push(self.snapshot(&state));
        for k in 1..=n {
            let (next, its) = self.step(&state).map_err(|e| e.at_step(k))?;
            traj.fp_iterations.push(its);
            traj.mass_balance.push(self.mass_balance(&state, &next));
            if is_saved(k, n, save_every) {
                traj.states.push(self.snapshot(&next));
            }
            state = next;
        }
        Ok((traj, state))
    }

    pub fn biot_modulus(&self) -> f64 {
        self.c
    }
}

fn relative_change(new: &[f64], old: &[f64]) -> f64 {
    let diff: f64 = new.iter().zip(old).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let size: f64 = new.iter().map(|a| a * a).sum::<f64>().sqrt();
    if diff == 0.0 {
        0.0
    } else {
        diff / size.max(1e-300)
    }
}

/// Full two-scale run; returns the trajectory and the final state.
pub fn twoscale_run(
    setup: TwoScaleSetup,
    sources: SourceFields,
    time: TimeGrid,
    settings: &SolverSettings,
    save_every: usize,
) -> Result<(Trajectory, TwoScaleState)> {
    TwoScaleSolver::new(&setup.macro_mesh, setup.cells, sources, time, settings)?.run(save_every)
}
