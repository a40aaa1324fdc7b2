//! The five commands and their outputs.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::json;

use crate::cell::{effective_coefficients, solve_cell_problems, CellSolutions};
use crate::cli::config::SimConfig;
use crate::cli::output::{matrix_csv, tensor_csv, write_json, write_vtk, Field, RunReport};
use crate::fem::tensor::voigt_pairs;
use crate::geometry::{build_dns_mesh, build_unit_cell, phase_fractions, MacroMesh, Phase, PeriodicGrid};
use crate::operators::EpsilonProblem;
use crate::simulate::{dns_run, Trajectory, TwoScaleSolver};
use crate::verify::{
    audit_energy, biot_operator_oracle, convergence_study, homogeneous_oracle, laminate_oracle,
    sandwich_oracle, OracleCheck, OracleReport, StudySetup,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    /// Cell problems and effective coefficients.
    Cell,
    /// Direct simulation for every configured ε.
    Dns,
    /// Two-scale homogenized simulation.
    Macro,
    /// Direct vs homogenized convergence study over the configured ε.
    Compare,
    /// Built-in oracles on the configured geometry and materials.
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Cell => "cell",
            Command::Dns => "dns",
            Command::Macro => "macro",
            Command::Compare => "compare",
            Command::Verify => "verify",
        }
    }
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_SOLVER: u8 = 2;
pub const EXIT_VERIFICATION: u8 = 3;

/// Maps an outcome to the process exit status.
pub fn exit_code(outcome: &Result<RunReport>) -> u8 {
    match outcome {
        Ok(r) if r.pass => EXIT_OK,
        Ok(_) => EXIT_VERIFICATION,
        Err(e) if e.is_solver_failure() => EXIT_SOLVER,
        Err(_) => EXIT_CONFIG,
    }
}

/// Runs `command`, writes its artifacts into `out` and returns the report
/// (which is also written as `<command>.json`).
pub fn run(command: Command, config: &SimConfig, out: &Path) -> Result<RunReport> {
    std::fs::create_dir_all(out)?;
    let report = match command {
        Command::Cell => run_cell(config, out)?,
        Command::Dns => run_dns(config, out)?,
        Command::Macro => run_macro(config, out)?,
        Command::Compare => run_compare(config)?,
        Command::Verify => run_verify(config)?,
    };
    let report = RunReport::new(command.name(), serde_json::to_value(config)?, report.0, report.1);
    write_json(&out.join(format!("{}.json", command.name())), &report)?;
    Ok(report)
}

type Outcome = (Vec<OracleReport>, serde_json::Value);

fn unit_cell(config: &SimConfig) -> Result<PeriodicGrid> {
    build_unit_cell(config.dim, config.geometry.cell_resolution, config.geometry.inclusion)
}

fn cells(config: &SimConfig) -> Result<CellSolutions> {
    solve_cell_problems(&unit_cell(config)?, &config.material_set()?, &config.solver)
}

fn phase_field(phases: &[Phase]) -> Vec<f64> {
    phases.iter().map(|p| if *p == Phase::Gel { 1.0 } else { 0.0 }).collect()
}

fn run_cell(config: &SimConfig, out: &Path) -> Result<Outcome> {
    let cells = cells(config)?;
    let coeffs = effective_coefficients(&cells)?;
    let a_h = &coeffs.a_h;
    let scale = a_h.max_abs();

    let mut tensor = OracleReport::new("effective tensor");
    tensor.push(OracleCheck::at_most("max |A - Aᵀ| / max |A|", 0.0, a_h.asymmetry() / scale, 1e-10));
    tensor.push(OracleCheck::at_least("min eigenvalue / max |A|", 0.0, a_h.min_eigenvalue() / scale, 0.0));
    let mut checks = vec![tensor];
    if cells.grid().is_laminate() {
        if cells.problem().materials().fibre.is_diagonal(1e-12) && cells.problem().materials().gel.is_diagonal(1e-12) {
            checks.push(laminate_oracle(&cells, 0.01)?);
        }
    } else {
        checks.push(sandwich_oracle(&cells, 1e-6)?);
    }
    if cells.problem().materials().is_homogeneous() {
        checks.push(homogeneous_oracle(&cells, 1e-8, 1e-9)?);
    }

    std::fs::write(out.join("effective_elasticity.csv"), tensor_csv(a_h))?;
    std::fs::write(out.join("biot_over_cell.csv"), matrix_csv(&coeffs.biot.average_over_cell))?;
    std::fs::write(out.join("biot_over_gel.csv"), matrix_csv(&coeffs.biot.average_over_gel))?;
    if config.output.fields {
        let grid = cells.grid().grid();
        let dofs = cells.problem().dofs_u();
        let pairs = voigt_pairs(config.dim);
        let names: Vec<String> = pairs.iter().map(|(j, k)| format!("tau_{}{}", j + 1, k + 1)).collect();
        let nodal: Vec<Vec<f64>> = cells.tau_all().iter().map(|t| dofs.expand(t)).collect();
        let points: Vec<Field> = names
            .iter()
            .zip(&nodal)
            .map(|(n, v)| Field { name: n, ncomp: config.dim, values: v })
            .collect();
        let phase = phase_field(cells.grid().phases());
        write_vtk(
            &out.join("cell.vtk"),
            "unit cell correctors",
            grid,
            &points,
            &[Field { name: "gel", ncomp: 1, values: &phase }],
        )?;
    }
    let results = json!({
        "effective_elasticity_voigt": a_h.voigt(),
        "biot_over_cell": coeffs.biot.average_over_cell,
        "biot_over_gel": coeffs.biot.average_over_gel,
        "fibre_fraction": coeffs.fibre_fraction,
        "gel_fraction": coeffs.gel_fraction,
        "max_abs_corrector": cells.max_abs_tau(),
    });
    Ok((checks, results))
}

fn energy_csv(traj: &Trajectory) -> String {
    let mut s = String::from("step,t,pressure_l2,elastic,displacement_h1,dissipation,balance_lhs,balance_rhs\n");
    for e in &traj.energy {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            e.step, e.t, e.pressure_l2, e.elastic, e.displacement_h1, e.dissipation, e.balance_lhs, e.balance_rhs
        );
    }
    s
}

fn run_dns(config: &SimConfig, out: &Path) -> Result<Outcome> {
    let unit = unit_cell(config)?;
    let materials = config.material_set()?;
    let sources = config.source_fields()?;
    let mut checks = Vec::new();
    let mut runs = Vec::new();
    for (i, &eps) in config.epsilons.iter().enumerate() {
        let mesh = build_dns_mesh(&unit, eps, &config.extent(), config.geometry.oversample)?;
        let problem = EpsilonProblem::new(mesh, materials.clone())?;
        let traj = dns_run(problem.clone(), sources.clone(), config.time, &config.solver, config.output.save_every)?;
        let mut audit = audit_energy(&traj, 1e-8);
        audit.name = format!("energy audit, epsilon = {eps}");
        checks.push(audit);
        std::fs::write(out.join(format!("dns_{i}_energy.csv")), energy_csv(&traj))?;
        if config.output.fields {
            let grid = problem.mesh().grid();
            let phase = phase_field(problem.mesh().phases());
            for (k, s) in traj.states.iter().enumerate() {
                let u = problem.dofs_u().expand(&s.u);
                let p = problem.dofs_p().expand(&s.p);
                write_vtk(
                    &out.join(format!("dns_{i}_{k:04}.vtk")),
                    &format!("direct simulation, epsilon = {eps}, t = {}", s.t),
                    grid,
                    &[
                        Field { name: "displacement", ncomp: config.dim, values: &u },
                        Field { name: "pressure", ncomp: 1, values: &p },
                    ],
                    &[Field { name: "gel", ncomp: 1, values: &phase }],
                )?;
            }
        }
        let last = traj.energy.last().cloned();
        runs.push(json!({
            "epsilon": eps,
            "n_displacement_dofs": problem.n_u(),
            "n_pressure_dofs": problem.n_p(),
            "final_energy": last,
            "saved_times": traj.times(),
        }));
    }
    Ok((checks, json!({ "runs": runs })))
}

fn run_macro(config: &SimConfig, out: &Path) -> Result<Outcome> {
    let cells = cells(config)?;
    let mesh = MacroMesh::new(config.dim, &config.extent(), &config.macro_resolution())?;
    let solver = TwoScaleSolver::new(&mesh, cells, config.source_fields()?, config.time, &config.solver)?;
    let (traj, last) = solver.run(config.output.save_every)?;
    let worst = traj.mass_balance.iter().copied().fold(0.0, f64::max);
    let mut balance = OracleReport::new("micro mass balance");
    balance.push(OracleCheck::at_most(
        "max relative mass-balance defect",
        0.0,
        worst,
        (100.0 * config.solver.tol_fp).max(1e-8),
    ));

    let mut steps = String::from("step,fp_iterations,mass_balance\n");
    for (k, (it, mb)) in traj.fp_iterations.iter().zip(&traj.mass_balance).enumerate() {
        let _ = writeln!(steps, "{},{},{}", k + 1, it, mb);
    }
    std::fs::write(out.join("macro_steps.csv"), steps)?;
    if config.output.fields {
        let grid = solver.macro_grid();
        let nq = solver.n_qp() / grid.n_cells();
        for (k, s) in traj.states.iter().enumerate() {
            let u = solver.dofs().expand(&s.u);
            let p: Vec<f64> = s.p.chunks(nq).map(|c| c.iter().sum::<f64>() / nq as f64).collect();
            write_vtk(
                &out.join(format!("macro_{k:04}.vtk")),
                &format!("two-scale simulation, t = {}", s.t),
                grid,
                &[Field { name: "displacement", ncomp: config.dim, values: &u }],
                &[Field { name: "gel_average_pressure", ncomp: 1, values: &p }],
            )?;
        }
    }
    let coeffs = solver.coefficients();
    let results = json!({
        "effective_elasticity_voigt": coeffs.a_h.voigt(),
        "fixed_point_iterations": traj.fp_iterations,
        "mass_balance": traj.mass_balance,
        "stabilization": solver.stabilization(),
        "final_time": last.t,
        "final_displacement_max": last.u.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        "saved_times": traj.times(),
    });
    Ok((vec![balance], results))
}

fn run_compare(config: &SimConfig) -> Result<Outcome> {
    let setup = StudySetup {
        unit_cell: unit_cell(config)?,
        materials: config.material_set()?,
        sources: config.source_fields()?,
        extent: config.extent(),
        macro_resolution: config.macro_resolution(),
        oversample: config.geometry.oversample,
        time: config.time,
        settings: config.solver.clone(),
    };
    let report = convergence_study(&setup, &config.epsilons)?;
    let mut checks = OracleReport::new("two-scale convergence");
    if report.epsilons.len() > 1 {
        checks.push(OracleCheck::absolute(
            "displacement errors strictly decrease",
            1.0,
            if report.errors_decrease { 1.0 } else { 0.0 },
            0.0,
            crate::verify::Provenance::Property,
        ));
    }
    checks.push(OracleCheck::absolute(
        "runs violating the energy inequality",
        0.0,
        report.energy_inequality.iter().filter(|ok| !**ok).count() as f64,
        0.0,
        crate::verify::Provenance::Property,
    ));
    checks.push(OracleCheck::at_most("estimate / fitted bound", 2.0, report.estimate_ratio, 0.0));
    Ok((vec![checks], serde_json::to_value(&report)?))
}

fn run_verify(config: &SimConfig) -> Result<Outcome> {
    let materials = config.material_set()?;
    let unit = unit_cell(config)?;
    let mut checks = Vec::new();

    let homogeneous = crate::fem::MaterialSet {
        gel: materials.fibre.clone(),
        ..materials.clone()
    };
    let cells_h = solve_cell_problems(&unit, &homogeneous, &config.solver)?;
    checks.push(homogeneous_oracle(&cells_h, 1e-8, 1e-9)?);

    let cells = solve_cell_problems(&unit, &materials, &config.solver)?;
    if unit.is_laminate() {
        if !(materials.fibre.is_diagonal(1e-12) && materials.gel.is_diagonal(1e-12)) {
            return Err(Error::Config(vec![
                "verify on a laminate cell needs diagonal (scalar or voigt) tensors".into(),
            ]));
        }
        checks.push(laminate_oracle(&cells, 0.01)?);
        let (_, gel) = phase_fractions(unit.phases());
        return Ok((checks, json!({ "gel_fraction": gel })));
    }
    checks.push(sandwich_oracle(&cells, 1e-6)?);

    let eps = config.epsilons[0];
    let mesh = build_dns_mesh(&unit, eps, &config.extent(), config.geometry.oversample)?;
    let problem = EpsilonProblem::new(mesh, materials)?;
    let biot = problem.biot_operator(&config.solver)?;
    checks.push(biot_operator_oracle(&biot, 20, 7, 1e-10)?);
    let traj = dns_run(problem, config.source_fields()?, config.time, &config.solver, 0)?;
    checks.push(audit_energy(&traj, 1e-8));
    Ok((checks, json!({ "epsilon": eps })))
}
