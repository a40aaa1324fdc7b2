//! Time-dependent solvers: the direct ε-problem on a composite mesh and the
//! coupled two-scale limit system. Both use implicit Euler on a uniform grid.

pub mod dns;
pub mod twoscale;

use serde::{Deserialize, Serialize};

use crate::fem::FieldState;
use crate::{Error, Result};

pub use dns::{dns_initial_state, dns_run, dns_step, operator_form_run, DnsSolver};
pub use twoscale::{twoscale_run, TwoScaleSetup, TwoScaleSolver, TwoScaleState};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t_end: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, n_steps: usize) -> Result<Self> {
        let g = Self { t_end, n_steps };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::Config(vec![format!(
                "time.t_end must be positive, got {}",
                self.t_end
            )]));
        }
        Ok(())
    }

    /// Step size; `t_end` itself when there are no steps.
    pub fn dt(&self) -> f64 {
        self.t_end / self.n_steps.max(1) as f64
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt()
    }
}

/// Per-step energy bookkeeping of the direct solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyEntry {
    pub step: usize,
    pub t: f64,
    /// `‖p‖²` over the gel.
    pub pressure_l2: f64,
    /// `∫ A e(U) : e(U)`.
    pub elastic: f64,
    /// `‖∇U‖²`.
    pub displacement_h1: f64,
    /// `Σ dt ε² ‖∇p‖²` up to this step.
    pub dissipation: f64,
    /// Left side of the discrete energy inequality of this step.
    pub balance_lhs: f64,
    /// Data side of the discrete energy inequality of this step.
    pub balance_rhs: f64,
}

impl EnergyEntry {
    /// Per-step inequality with a relative slack for solver round-off.
    pub fn inequality_holds(&self, rel_tol: f64) -> bool {
        let scale = self.balance_lhs.abs().max(self.balance_rhs.abs()).max(1e-300);
        self.balance_lhs <= self.balance_rhs + rel_tol * scale
    }
}

/// Saved states of a run together with its per-step ledgers.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<FieldState>,
    pub energy: Vec<EnergyEntry>,
    /// Fixed-point iterations per two-scale step.
    pub fp_iterations: Vec<usize>,
    /// Largest relative micro mass-balance defect per two-scale step.
    pub mass_balance: Vec<f64>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> Option<&FieldState> {
        self.states.last()
    }
}

/// Whether step `n` of `n_steps` is written out with cadence `every` (0 = final only).
pub(crate) fn is_saved(n: usize, n_steps: usize, every: usize) -> bool {
    n == 0 || n == n_steps || (every > 0 && n.is_multiple_of(every))
}
