//! Direct simulation of the ε-problem.
//!
//! One implicit Euler step solves
//!
//! ```text
//! K U¹ - B p¹                = F(t¹)
//! Bᵀ U¹ + (c M + dt A) p¹    = c M p⁰ + Bᵀ U⁰ + dt H(t¹)
//! ```
//!
//! as a single coupled system.

use crate::fem::sparse::dot;
use crate::fem::{CoupledSystem, FieldState, SolverSettings, SourceFields, SpdSolver};
use crate::operators::{force_lift, operator_rhs, EpsilonProblem, RhsMode};
use crate::simulate::{is_saved, EnergyEntry, TimeGrid, Trajectory};
use crate::{Error, Result};

/// Direct solver with its step matrix factored (or preconditioned) once.
pub struct DnsSolver {
    problem: EpsilonProblem,
    sources: SourceFields,
    time: TimeGrid,
    system: CoupledSystem,
    elastic: SpdSolver,
}

impl DnsSolver {
    pub fn new(
        problem: EpsilonProblem,
        sources: SourceFields,
        time: TimeGrid,
        settings: &SolverSettings,
    ) -> Result<Self> {
        sources.validate(problem.mesh().dim())?;
        time.validate()?;
        let s = problem.c_mass().add_scaled(problem.diffusion(), time.dt());
        let system = CoupledSystem::new(
            problem.stiffness().clone(),
            problem.coupling().clone(),
            s,
            settings,
        )?;
        let elastic = SpdSolver::new(problem.stiffness().clone(), settings)?;
        Ok(Self {
            problem,
            sources,
            time,
            system,
            elastic,
        })
    }

    pub fn problem(&self) -> &EpsilonProblem {
        &self.problem
    }

    pub fn sources(&self) -> &SourceFields {
        &self.sources
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    /// `p = 0` and `U` in equilibrium with the forces at `t = 0`.
    pub fn initial_state(&self) -> Result<FieldState> {
        let f = self.problem.force_load(&self.sources, 0.0, false);
        Ok(FieldState {
            t: 0.0,
            u: self.elastic.solve(&f)?,
            p: vec![0.0; self.problem.n_p()],
        })
    }

    /// Advances `state` by one step of the configured size.
    pub fn step(&self, state: &FieldState) -> Result<FieldState> {
        let dt = self.time.dt();
        let t1 = state.t + dt;
        let p = &self.problem;
        let rhs_u = p.force_load(&self.sources, t1, false);
        let mut rhs_p = p.c_mass().matvec(&state.p);
        let h = p.pressure_load(&self.sources, t1, false);
        for ((r, b), h) in rhs_p.iter_mut().zip(p.coupling().matvec_transpose(&state.u)).zip(&h) {
            *r += b + dt * h;
        }
        let (u, p1) = self.system.solve(&rhs_u, &rhs_p, Some((&state.u, &state.p)))?;
        Ok(FieldState { t: t1, u, p: p1 })
    }

    /// Ledger entry for the step `prev -> next` (pass `prev = None` at `t = 0`).
    pub fn energy_entry(
        &self,
        step: usize,
        prev: Option<(&FieldState, &EnergyEntry)>,
        next: &FieldState,
    ) -> EnergyEntry {
        let p = &self.problem;
        let c = p.materials().biot_modulus;
        let pressure_l2 = p.mass().quad_form(&next.p);
        let elastic = p.stiffness().quad_form(&next.u);
        let displacement_h1 = p.vector_laplacian().quad_form(&next.u);
        let (dissipation, balance_lhs, balance_rhs) = match prev {
            None => (0.0, 0.0, 0.0),
            Some((s0, e0)) => {
                let dt = next.t - s0.t;
                let grad = p.grad_p().quad_form(&next.p);
                let diss = p.diffusion().quad_form(&next.p);
                let du: Vec<f64> = next.u.iter().zip(&s0.u).map(|(a, b)| a - b).collect();
                let f1 = p.force_load(&self.sources, next.t, false);
                let h1 = p.pressure_load(&self.sources, next.t, false);
                let lhs = (elastic + c * pressure_l2) - (e0.elastic + c * e0.pressure_l2) + 2.0 * dt * diss;
                let rhs = 2.0 * dot(&f1, &du) + 2.0 * dt * dot(&h1, &next.p);
                (e0.dissipation + dt * grad, lhs, rhs)
            }
        };
        EnergyEntry {
            step,
            t: next.t,
            pressure_l2,
            elastic,
            displacement_h1,
            dissipation,
            balance_lhs,
            balance_rhs,
        }
    }

    /// Runs all steps, saving every `save_every`-th state (0: first and last only).
    pub fn run(&self, save_every: usize) -> Result<Trajectory> {
        let n = self.time.n_steps;
        let mut state = self.initial_state()?;
        let mut traj = Trajectory::default();
        let mut entry = self.energy_entry(0, None, &state);
        traj.states.push(state.clone());
        traj.energy.push(entry.clone());
        for k in 1..=n {
            let next = self.step(&state).map_err(|e| e.at_step(k))?;
            entry = self.energy_entry(k, Some((&state, &entry)), &next);
            traj.energy.push(entry.clone());
            if is_saved(k, n, save_every) {
                traj.states.push(next.clone());
            }
            state = next;
        }
        Ok(traj)
    }
}

/// Equilibrium state at `t = 0` with zero pressure.
pub fn dns_initial_state(
    problem: &EpsilonProblem,
    sources: &SourceFields,
    settings: &SolverSettings,
) -> Result<FieldState> {
    let f = problem.force_load(sources, 0.0, false);
    Ok(FieldState {
        t: 0.0,
        u: SpdSolver::new(problem.stiffness().clone(), settings)?.solve(&f)?,
        p: vec![0.0; problem.n_p()],
    })
}

/// One implicit Euler step of size `dt`.
pub fn dns_step(
    state: &FieldState,
    dt: f64,
    problem: &EpsilonProblem,
    sources: &SourceFields,
    settings: &SolverSettings,
) -> Result<FieldState> {
    let time = TimeGrid::new(dt, 1)?;
    DnsSolver::new(problem.clone(), sources.clone(), time, settings)?.step(state)
}

/// Full direct run; see [`DnsSolver::run`].
pub fn dns_run(
    problem: EpsilonProblem,
    sources: SourceFields,
    time: TimeGrid,
    settings: &SolverSettings,
    save_every: usize,
) -> Result<Trajectory> {
    DnsSolver::new(problem, sources, time, settings)?.run(save_every)
}

/// The same evolution written for the pressure alone:
/// `(ℬ + dt A) p¹ = ℬ p⁰ + dt ℋ¹` with `U = K⁻¹ (F + B p)` recovered afterwards.
/// The force-lift derivative uses the backward difference implied by implicit
/// Euler, so this reproduces the direct trajectory up to solver tolerance.
pub fn operator_form_run(
    problem: &EpsilonProblem,
    sources: &SourceFields,
    time: TimeGrid,
    settings: &SolverSettings,
    save_every: usize,
) -> Result<Trajectory> {
    let biot = problem.biot_operator(settings)?;
    let elastic = biot.elastic();
    let coupling = biot.coupling();
    let dt = time.dt();
    let n = time.n_steps;
    let f0 = problem.force_load(sources, 0.0, false);
    let mut state = FieldState {
        t: 0.0,
        u: elastic.solve(&f0)?,
        p: vec![0.0; problem.n_p()],
    };
    let mut traj = Trajectory::default();
    traj.states.push(state.clone());
    for k in 1..=n {
        let t1 = time.time(k);
        let mut rhs = biot.apply(&state.p)?;
        let h = operator_rhs(problem, elastic, sources, t1, RhsMode::BackwardDifference { dt })?;
        for (r, h) in rhs.iter_mut().zip(&h) {
            *r += dt * h;
        }
        let p1 = biot
            .solve_shifted(problem.diffusion(), dt, &rhs, Some(&state.p), settings)
            .map_err(|e| e.at_step(k))?;
        let f1 = problem.force_load(sources, t1, false);
        let u1 = crate::operators::displacement_from_pressure(elastic, coupling, &p1, &f1)?;
        state = FieldState { t: t1, u: u1, p: p1 };
        if is_saved(k, n, save_every) {
            traj.states.push(state.clone());
        }
    }
    Ok(traj)
}

/// Finite-difference check helper: `(lift(t + h) - lift(t - h)) / 2h`.
pub fn force_lift_rate_fd(
    problem: &EpsilonProblem,
    sources: &SourceFields,
    t: f64,
    h: f64,
    settings: &SolverSettings,
) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::Unsupported("finite-difference step must be positive".into()));
    }
    let elastic = problem.elastic_operator(settings)?;
    let a = force_lift(problem, &elastic, sources, t + h)?;
    let b = force_lift(problem, &elastic, sources, t - h)?;
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * h)).collect())
}
