//! Oracles and studies that check the solvers against independent answers:
//! phase-average bounds, the exact laminate, structural operator properties,
//! energy audits of direct runs and the direct-vs-homogenized comparison.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::{effective_elasticity, CellSolutions};
use crate::fem::assembly::assemble_vector_mass;
use crate::fem::element::shape_values;
use crate::fem::sparse::dot;
use crate::fem::tensor::{symmetric_min_eigenvalue, voigt_pairs};
use crate::fem::{MaterialSet, SolverSettings, SourceFields, SymElasticityTensor};
use crate::geometry::{build_dns_mesh, phase_fractions, MacroMesh, PeriodicGrid, StructuredGrid};
use crate::operators::{BiotOperator, EpsilonProblem};
use crate::simulate::{dns_run, TimeGrid, Trajectory, TwoScaleSolver};
use crate::{Error, Result};

/// Where an expected value comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Closed-form value.
    Analytic,
    /// Computed by a separate, simpler method.
    IndependentOracle,
    /// A structural inequality or identity that must hold.
    Property,
}

/// One expected/computed pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub expected: f64,
    pub computed: f64,
    /// `|computed - expected| / max(|expected|, scale)`, or the signed slack for
    /// one-sided checks (negative means violated).
    pub error: f64,
    pub tolerance: f64,
    pub provenance: Provenance,
    pub pass: bool,
}

impl OracleCheck {
    /// Two-sided relative comparison.
    pub fn relative(name: impl Into<String>, expected: f64, computed: f64, tolerance: f64, provenance: Provenance) -> Self {
        let error = (computed - expected).abs() / expected.abs().max(f64::MIN_POSITIVE);
        Self {
            name: name.into(),
            expected,
            computed,
            error,
            tolerance,
            provenance,
            pass: error <= tolerance,
        }
    }

    /// Absolute comparison.
    pub fn absolute(name: impl Into<String>, expected: f64, computed: f64, tolerance: f64, provenance: Provenance) -> Self {
        let error = (computed - expected).abs();
        Self {
            name: name.into(),
            expected,
            computed,
            error,
            tolerance,
            provenance,
            pass: error <= tolerance,
        }
    }

    /// `computed >= bound - tolerance`.
    pub fn at_least(name: impl Into<String>, bound: f64, computed: f64, tolerance: f64) -> Self {
        let error = computed - bound;
        Self {
            name: name.into(),
            expected: bound,
            computed,
            error,
            tolerance,
            provenance: Provenance::Property,
            pass: error >= -tolerance,
        }
    }

    /// `computed <= bound + tolerance`.
    pub fn at_most(name: impl Into<String>, bound: f64, computed: f64, tolerance: f64) -> Self {
        let error = bound - computed;
        Self {
            name: name.into(),
            expected: bound,
            computed,
            error,
            tolerance,
            provenance: Provenance::Property,
            pass: error >= -tolerance,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub name: String,
    pub checks: Vec<OracleCheck>,
}

impl OracleReport {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            checks: Vec::new(),
        }
    }

    pub fn push(&mut self, check: OracleCheck) {
        self.checks.push(check);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &OracleCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Arithmetic (Voigt) and harmonic (Reuss) phase averages of the elasticity tensors.
pub fn voigt_reuss(
    materials: &MaterialSet,
    fractions: (f64, f64),
) -> Result<(SymElasticityTensor, SymElasticityTensor)> {
    let (f, g) = fractions;
    if f < 0.0 || g < 0.0 || ((f + g) - 1.0).abs() > 1e-12 {
        return Err(Error::Material(format!("phase fractions ({f}, {g}) must be non-negative and sum to 1")));
    }
    let dim = materials.dim();
    let voigt = materials.fibre.voigt() * f + materials.gel.voigt() * g;
    let compliance = materials.fibre.compliance()? * f + materials.gel.compliance()? * g;
    let reuss = compliance
        .try_inverse()
        .ok_or_else(|| Error::Singular("averaged compliance".into()))?;
    let reuss = (&reuss + reuss.transpose()) * 0.5;
    Ok((
        SymElasticityTensor::from_voigt(dim, voigt)?,
        SymElasticityTensor::from_voigt(dim, reuss)?,
    ))
}

/// Smallest eigenvalues of `A - reuss` and `voigt - A`, scaled by `‖voigt‖_max`.
pub fn sandwich_margins(a: &SymElasticityTensor, voigt: &SymElasticityTensor, reuss: &SymElasticityTensor) -> (f64, f64) {
    let scale = voigt.max_abs();
    (
        symmetric_min_eigenvalue(&(a.voigt() - reuss.voigt())) / scale,
        symmetric_min_eigenvalue(&(voigt.voigt() - a.voigt())) / scale,
    )
}

/// Diagonal Voigt entries of the exact effective tensor of a laminate made of
/// uncoupled (diagonal) phases: harmonic means for components that involve
/// the normal, arithmetic means for the rest. `gel_fraction` is the gel layer
/// thickness.
pub fn laminate_exact(materials: &MaterialSet, gel_fraction: f64, normal: usize) -> Result<Vec<f64>> {
    let dim = materials.dim();
    for (name, t) in [("fibre", &materials.fibre), ("gel", &materials.gel)] {
        if !t.is_diagonal(1e-12) {
            return Err(Error::Unsupported(format!(
                "the laminate formula needs diagonal tensors; the {name} tensor is coupled"
            )));
        }
    }
    if normal >= dim || !(0.0..=1.0).contains(&gel_fraction) {
        return Err(Error::Geometry("laminate normal or fraction out of range".into()));
    }
    let g = gel_fraction;
    Ok(voigt_pairs(dim)
        .iter()
        .enumerate()
        .map(|(i, &(j, k))| {
            let (a, b) = (materials.fibre.voigt()[(i, i)], materials.gel.voigt()[(i, i)]);
            if j == normal || k == normal {
                1.0 / ((1.0 - g) / a + g / b)
            } else {
                (1.0 - g) * a + g * b
            }
        })
        .collect())
}

/// Compares `A^h` with the phase tensor of a homogeneous material.
pub fn homogeneous_oracle(cells: &CellSolutions, tol_tensor: f64, tol_tau: f64) -> Result<OracleReport> {
    let materials = cells.problem().materials();
    let a_h = effective_elasticity(cells)?;
    let c = &materials.fibre;
    let err = (a_h.voigt() - c.voigt()).abs().max() / c.max_abs();
    let mut report = OracleReport::new("homogeneous reduction");
    report.push(OracleCheck::absolute("max |A^h - C| / max |C|", 0.0, err, tol_tensor, Provenance::Analytic));
    report.push(OracleCheck::absolute("max |tau|", 0.0, cells.max_abs_tau(), tol_tau, Provenance::Analytic));
    Ok(report)
}

/// Compares the diagonal of `A^h` of a laminate cell with [`laminate_exact`].
pub fn laminate_oracle(cells: &CellSolutions, tolerance: f64) -> Result<OracleReport> {
    let grid = cells.grid();
    let Some(crate::geometry::InclusionSpec::Laminate { fraction, normal }) = grid.inclusion() else {
        return Err(Error::Unsupported("laminate oracle needs a laminate unit cell".into()));
    };
    let (_, gel) = phase_fractions(grid.phases());
    if (gel - fraction).abs() > 1e-12 {
        log::warn!("voxelized laminate fraction {gel} differs from the requested {fraction}");
    }
    let exact = laminate_exact(cells.problem().materials(), fraction, normal)?;
    let a_h = effective_elasticity(cells)?;
    let mut report = OracleReport::new("laminate");
    for (i, &(j, k)) in voigt_pairs(grid.dim()).iter().enumerate() {
        report.push(OracleCheck::relative(
            format!("A^h[{a}{b}{a}{b}]", a = j + 1, b = k + 1),
            exact[i],
            a_h.voigt()[(i, i)],
            tolerance,
            Provenance::Analytic,
        ));
    }
    Ok(report)
}

/// Checks `Reuss ⪯ A^h ⪯ Voigt` with the given (relative) eigenvalue slack.
pub fn sandwich_oracle(cells: &CellSolutions, slack: f64) -> Result<OracleReport> {
    let materials = cells.problem().materials();
    let fractions = phase_fractions(cells.grid().phases());
    let (voigt, reuss) = voigt_reuss(materials, fractions)?;
    let a_h = effective_elasticity(cells)?;
    let (lower, upper) = sandwich_margins(&a_h, &voigt, &reuss);
    let mut report = OracleReport::new("voigt-reuss sandwich");
    report.push(OracleCheck::at_least("min eig(A^h - Reuss) / max |Voigt|", 0.0, lower, slack));
    report.push(OracleCheck::at_least("min eig(Voigt - A^h) / max |Voigt|", 0.0, upper, slack));
    Ok(report)
}

/// Random-probe checks of symmetry and of `pᵀ ℬ p >= c pᵀ M p`.
pub fn biot_operator_oracle(biot: &BiotOperator, probes: usize, seed: u64, tolerance: f64) -> Result<OracleReport> {
    let n = biot.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vectors: Vec<Vec<f64>> = (0..probes + 1)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let applied: Vec<Vec<f64>> = vectors.par_iter().map(|p| biot.apply(p)).collect::<Result<_>>()?;
    let mut worst_asym: f64 = 0.0;
    let mut worst_margin = f64::INFINITY;
    for i in 0..probes {
        let (p1, p2) = (&vectors[i], &vectors[i + 1]);
        let (q1, q2) = (&applied[i], &applied[i + 1]);
        let a = dot(q2, p1);
        let b = dot(q1, p2);
        let scale = (dot(q1, p1).abs() * dot(q2, p2).abs()).sqrt().max(f64::MIN_POSITIVE);
        worst_asym = worst_asym.max((a - b).abs() / scale);
        let bp = dot(q1, p1);
        let mp = biot.c_mass().quad_form(p1);
        worst_margin = worst_margin.min((bp - mp) / mp.abs().max(f64::MIN_POSITIVE));
    }
    let mut report = OracleReport::new("biot operator");
    report.push(OracleCheck::absolute("max relative asymmetry", 0.0, worst_asym, tolerance, Provenance::Property));
    report.push(OracleCheck::at_least(
        "min (pᵀℬp - c pᵀMp) / c pᵀMp",
        0.0,
        if probes == 0 { 0.0 } else { worst_margin },
        tolerance,
    ));
    Ok(report)
}

/// Sup/sum quantities a direct run is estimated by.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimateQuantities {
    /// `max_t ‖p‖²`.
    pub pressure_linf_l2: f64,
    /// `max_t ‖∇U‖²`.
    pub displacement_linf_h1: f64,
    /// `Σ dt ε² ‖∇p‖²`.
    pub pressure_gradient_l2l2: f64,
}

impl EstimateQuantities {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let mut q = Self::default();
        for e in &traj.energy {
            q.pressure_linf_l2 = q.pressure_linf_l2.max(e.pressure_l2);
            q.displacement_linf_h1 = q.displacement_linf_h1.max(e.displacement_h1);
            q.pressure_gradient_l2l2 = q.pressure_gradient_l2l2.max(e.dissipation);
        }
        q
    }

    pub fn total(&self) -> f64 {
        self.pressure_linf_l2 + self.displacement_linf_h1 + self.pressure_gradient_l2l2
    }
}

/// `‖f‖²_{C¹(L²)} + ‖g‖²_{C¹(L²)} + ‖h‖²_{L²(L²)}` over `Ω x (0, T)`, sampled
/// on a midpoint grid with `samples` points per axis and at the time steps.
pub fn data_norm(sources: &SourceFields, extent: &[f64], time: &TimeGrid, samples: usize) -> Result<f64> {
    let dim = extent.len();
    let grid = StructuredGrid::new(dim, &vec![samples.max(1); dim], extent)?;
    let dv = grid.cell_volume();
    let points: Vec<[f64; 3]> = (0..grid.n_cells()).map(|c| grid.cell_centroid(c)).collect();
    let l2 = |field: &dyn Fn(&[f64]) -> f64| points.iter().map(|x| field(&x[..dim]).powi(2)).sum::<f64>() * dv;
    let vec_l2 = |exprs: &[crate::expr::Expr], t: f64, deriv: bool| {
        exprs
            .iter()
            .take(dim)
            .map(|e| l2(&|x| if deriv { e.eval_dt(t, x) } else { e.eval(t, x) }))
            .sum::<f64>()
            .sqrt()
    };
    let n = time.n_steps.max(1);
    let times: Vec<f64> = (0..=n).map(|k| time.time(k)).collect();
    let c1 = |exprs: &[crate::expr::Expr]| {
        let v = times.iter().map(|&t| vec_l2(exprs, t, false)).fold(0.0, f64::max);
        let d = times.iter().map(|&t| vec_l2(exprs, t, true)).fold(0.0, f64::max);
        (v + d).powi(2)
    };
    let h2: f64 = times[1..]
        .iter()
        .map(|&t| time.dt() * l2(&|x| sources.h.eval(t, x)))
        .sum();
    Ok(c1(&sources.f) + c1(&sources.g) + h2)
}

/// Per-step energy inequality and monotone dissipation of a direct run.
pub fn audit_energy(traj: &Trajectory, rel_tol: f64) -> OracleReport {
    let mut report = OracleReport::new("energy audit");
    let violations = traj.energy.iter().filter(|e| !e.inequality_holds(rel_tol)).count();
    let worst = traj
        .energy
        .iter()
        .filter(|e| e.step > 0)
        .map(|e| {
            let scale = e.balance_lhs.abs().max(e.balance_rhs.abs()).max(f64::MIN_POSITIVE);
            (e.balance_rhs - e.balance_lhs) / scale
        })
        .fold(f64::INFINITY, f64::min);
    report.push(OracleCheck::absolute(
        "steps violating the discrete energy inequality",
        0.0,
        violations as f64,
        0.0,
        Provenance::Property,
    ));
    report.push(OracleCheck::at_least(
        "min relative slack of the energy inequality",
        0.0,
        if worst.is_finite() { worst } else { 0.0 },
        rel_tol,
    ));
    let monotone = traj
        .energy
        .windows(2)
        .all(|w| w[1].dissipation >= w[0].dissipation && w[0].dissipation >= 0.0);
    report.push(OracleCheck::absolute(
        "cumulative gradient term non-decreasing",
        1.0,
        if monotone { 1.0 } else { 0.0 },
        0.0,
        Provenance::Property,
    ));
    report
}

/// Inputs of a direct-vs-homogenized comparison.
#[derive(Clone, Debug)]
pub struct StudySetup {
    pub unit_cell: PeriodicGrid,
    pub materials: MaterialSet,
    pub sources: SourceFields,
    pub extent: Vec<f64>,
    pub macro_resolution: Vec<usize>,
    pub oversample: usize,
    pub time: TimeGrid,
    pub settings: SolverSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub epsilons: Vec<f64>,
    /// `‖U_ε - U‖_{L²(S×Ω)}` with the macro field interpolated on the direct grid.
    pub displacement_errors: Vec<f64>,
    /// The same divided by `‖U‖_{L²(S×Ω)}`.
    pub relative_displacement_errors: Vec<f64>,
    /// Gel averages per ε-cell against the micro gel average at the nearest macro quadrature point.
    pub pressure_errors: Vec<f64>,
    pub estimates: Vec<EstimateQuantities>,
    /// Whether the per-step energy inequality held at every step of each run.
    pub energy_inequality: Vec<bool>,
    pub data_norm: f64,
    /// `total estimate / data norm` at the coarsest ε.
    pub fitted_constant: f64,
    /// Largest `total estimate / (fitted constant x data norm)` over the sweep.
    pub estimate_ratio: f64,
    /// Least-squares slope of `log error` against `log ε`.
    pub fitted_rate: f64,
    pub errors_decrease: bool,
}

/// Q1 interpolation of a nodal vector field given on `grid` at the point `x`.
fn interpolate(grid: &StructuredGrid, nodal: &[f64], ncomp: usize, x: &[f64]) -> [f64; 3] {
    let (cell, xi) = grid.locate(x);
    let nodes = grid.cell_nodes(cell);
    let n = shape_values(grid.dim(), &xi);
    let mut out = [0.0; 3];
    for a in 0..grid.nodes_per_cell() {
        for c in 0..ncomp {
            out[c] += n[a] * nodal[nodes[a] * ncomp + c];
        }
    }
    out
}

struct DirectRun {
    displacement_error: f64,
    displacement_norm: f64,
    pressure_error: f64,
    estimates: EstimateQuantities,
    inequality: bool,
}

fn direct_run(setup: &StudySetup, eps: f64, macro_solver: &TwoScaleSolver, macro_traj: &Trajectory) -> Result<DirectRun> {
    let dim = setup.unit_cell.dim();
    let mesh = build_dns_mesh(&setup.unit_cell, eps, &setup.extent, setup.oversample)?;
    let problem = EpsilonProblem::new(mesh, setup.materials.clone())?;
    let traj = dns_run(problem.clone(), setup.sources.clone(), setup.time, &setup.settings, 1)?;
    let grid = problem.mesh().grid();
    let dofs = problem.dofs_u();
    let mass = assemble_vector_mass(grid, dofs)?;
    let macro_grid = macro_solver.macro_grid();
    let dt = setup.time.dt();

    let owners = dofs.owner_nodes();
    let gel = problem.gel_mask();
    let n_tiles = problem.mesh().n_tiles();
    let mut tile_gel_volume = vec![0.0; n_tiles];
    let mut tile_center = vec![[0.0; 3]; n_tiles];
    let mut tile_cells = vec![0usize; n_tiles];
    for cell in 0..grid.n_cells() {
        let t = problem.mesh().tile_of_cell(cell);
        let c = grid.cell_centroid(cell);
        for a in 0..dim {
            tile_center[t][a] += c[a];
        }
        tile_cells[t] += 1;
        if gel[cell] {
            tile_gel_volume[t] += grid.cell_volume();
        }
    }
    let tile_qp: Vec<usize> = tile_center
        .iter()
        .zip(&tile_cells)
        .map(|(c, &n)| {
            let x: Vec<f64> = c[..dim].iter().map(|v| v / n as f64).collect();
            macro_solver.nearest_qp(&x)
        })
        .collect();
    let tile_volume = grid.volume() / n_tiles as f64;

    let (mut err2, mut norm2, mut perr2) = (0.0, 0.0, 0.0);
    for (k, (direct, homog)) in traj.states.iter().zip(&macro_traj.states).enumerate().skip(1) {
        debug_assert_eq!(k, (direct.t / dt).round() as usize);
        let macro_nodal = macro_solver.dofs().expand(&homog.u);
        let mut interp = vec![0.0; dofs.n_dofs()];
        for (slot, &node) in owners.iter().enumerate() {
            let x = grid.node_position(node);
            let v = interpolate(macro_grid, &macro_nodal, dim, &x[..dim]);
            interp[slot * dim..(slot + 1) * dim].copy_from_slice(&v[..dim]);
        }
        let diff: Vec<f64> = direct.u.iter().zip(&interp).map(|(a, b)| a - b).collect();
        err2 += dt * mass.quad_form(&diff);
        norm2 += dt * mass.quad_form(&interp);

        let p_nodal = problem.dofs_p().expand(&direct.p);
        let mut tile_p = vec![0.0; n_tiles];
        for cell in (0..grid.n_cells()).filter(|&c| gel[c]) {
            let nodes = grid.cell_nodes(cell);
            let mean = nodes[..grid.nodes_per_cell()].iter().map(|&n| p_nodal[n]).sum::<f64>()
                / grid.nodes_per_cell() as f64;
            tile_p[problem.mesh().tile_of_cell(cell)] += mean * grid.cell_volume();
        }
        for t in 0..n_tiles {
            if tile_gel_volume[t] > 0.0 {
                let d = tile_p[t] / tile_gel_volume[t] - homog.p[tile_qp[t]];
                perr2 += dt * tile_volume * d * d;
            }
        }
    }
    Ok(DirectRun {
        displacement_error: err2.sqrt(),
        displacement_norm: norm2.sqrt(),
        pressure_error: perr2.sqrt(),
        estimates: EstimateQuantities::from_trajectory(&traj),
        inequality: traj.energy.iter().all(|e| e.inequality_holds(1e-8)),
    })
}

/// Runs the homogenized model once and a direct simulation per `ε`, and
/// compares them. `epsilons` should be ordered from coarse to fine.
pub fn convergence_study(setup: &StudySetup, epsilons: &[f64]) -> Result<ConvergenceReport> {
    if epsilons.is_empty() {
        return Err(Error::Config(vec!["epsilons must not be empty".into()]));
    }
    let dim = setup.unit_cell.dim();
    // fail fast on tiling problems before the expensive runs
    for &eps in epsilons {
        build_dns_mesh(&setup.unit_cell, eps, &setup.extent, setup.oversample)?;
    }
    let cells = crate::cell::solve_cell_problems(&setup.unit_cell, &setup.materials, &setup.settings)?;
    let macro_mesh = MacroMesh::new(dim, &setup.extent, &setup.macro_resolution)?;
    let solver = TwoScaleSolver::new(&macro_mesh, cells, setup.sources.clone(), setup.time, &setup.settings)?;
    let (macro_traj, _) = solver.run(1)?;
    let runs: Vec<DirectRun> = epsilons
        .iter()
        .map(|&eps| direct_run(setup, eps, &solver, &macro_traj))
        .collect::<Result<_>>()?;

    let data = data_norm(&setup.sources, &setup.extent, &setup.time, 64)?;
    let estimates: Vec<EstimateQuantities> = runs.iter().map(|r| r.estimates.clone()).collect();
    let fitted_constant = if data > 0.0 { estimates[0].total() / data } else { 0.0 };
    let estimate_ratio = estimates
        .iter()
        .map(|e| {
            let bound = fitted_constant * data;
            if bound > 0.0 {
                e.total() / bound
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    let errors: Vec<f64> = runs.iter().map(|r| r.displacement_error).collect();
    let errors_decrease = errors.windows(2).all(|w| w[1] < w[0]);
    Ok(ConvergenceReport {
        epsilons: epsilons.to_vec(),
        relative_displacement_errors: runs
            .iter()
            .map(|r| r.displacement_error / r.displacement_norm.max(f64::MIN_POSITIVE))
            .collect(),
        pressure_errors: runs.iter().map(|r| r.pressure_error).collect(),
        estimates,
        energy_inequality: runs.iter().map(|r| r.inequality).collect(),
        data_norm: data,
        fitted_constant,
        estimate_ratio,
        fitted_rate: log_slope(epsilons, &errors),
        errors_decrease,
        displacement_errors: errors,
    })
}

fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn scalar_pair(dim: usize, a: f64, b: f64) -> MaterialSet {
        MaterialSet::new(
            SymElasticityTensor::scalar_diagonal(dim, a).unwrap(),
            SymElasticityTensor::scalar_diagonal(dim, b).unwrap(),
            1.0,
            1.0,
            DMatrix::identity(dim, dim),
        )
        .unwrap()
    }

    #[test]
    fn half_half_bounds_of_one_and_three() {
        let (v, r) = voigt_reuss(&scalar_pair(2, 1.0, 3.0), (0.5, 0.5)).unwrap();
        for i in 0..3 {
            assert!((v.voigt()[(i, i)] - 2.0).abs() < 1e-14);
            assert!((r.voigt()[(i, i)] - 1.5).abs() < 1e-14);
        }
    }

    #[test]
    fn identical_phases_give_identical_bounds() {
        let m = MaterialSet::isotropic(2, (3.0, 0.25), (3.0, 0.25), 1.0, 1.0, 1.0).unwrap();
        let (v, r) = voigt_reuss(&m, (0.3, 0.7)).unwrap();
        assert!((v.voigt() - m.fibre.voigt()).abs().max() < 1e-12);
        assert!((r.voigt() - m.fibre.voigt()).abs().max() < 1e-12);
    }

    #[test]
    fn fractions_must_sum_to_one() {
        assert!(voigt_reuss(&scalar_pair(2, 1.0, 3.0), (0.5, 0.6)).is_err());
    }

    #[test]
    fn laminate_formula() {
        let e = laminate_exact(&scalar_pair(2, 1.0, 3.0), 0.5, 0).unwrap();
        assert!((e[0] - 1.5).abs() < 1e-14);
        assert!((e[1] - 2.0).abs() < 1e-14);
        let e = laminate_exact(&scalar_pair(3, 2.0, 2.0), 0.3, 1).unwrap();
        assert!(e.iter().all(|v| (v - 2.0).abs() < 1e-14));
        let e = laminate_exact(&scalar_pair(2, 1.0, 3.0), 1e-9, 0).unwrap();
        assert!(e.iter().all(|v| (v - 1.0).abs() < 1e-8));
    }

    #[test]
    fn laminate_rejects_coupled_tensors() {
        let m = MaterialSet::isotropic(2, (1.0, 0.3), (3.0, 0.3), 1.0, 1.0, 1.0).unwrap();
        assert!(laminate_exact(&m, 0.5, 0).is_err());
    }

    #[test]
    fn log_slope_of_power_law() {
        let x = [0.5, 0.25, 0.125];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((log_slope(&x, &y) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn data_norm_of_zero_sources_is_zero() {
        let t = TimeGrid::new(1.0, 4).unwrap();
        assert_eq!(data_norm(&SourceFields::zero(2), &[1.0, 1.0], &t, 8).unwrap(), 0.0);
    }

    #[test]
    fn data_norm_is_quadratic() {
        let t = TimeGrid::new(1.0, 4).unwrap();
        let s = SourceFields::parse(&["t*x0", "1"], &["0", "sin(x1)"], "x0 + t").unwrap();
        let a = data_norm(&s, &[1.0, 1.0], &t, 8).unwrap();
        let b = data_norm(&s.scaled(2.0), &[1.0, 1.0], &t, 8).unwrap();
        assert!((b / a - 4.0).abs() < 1e-12);
    }
}
