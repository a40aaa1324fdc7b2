//! Acceptance run: one line per criterion, non-zero exit if any fails.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use porohom::cell::{effective_elasticity, solve_cell_problems};
use porohom::fem::{FieldState, MaterialSet, SolverSettings, SourceFields, SymElasticityTensor};
use porohom::geometry::{build_dns_mesh, build_unit_cell, InclusionSpec, MacroMesh};
use porohom::operators::EpsilonProblem;
use porohom::simulate::{dns_run, operator_form_run, TimeGrid, TwoScaleSolver};
use porohom::verify::{
    biot_operator_oracle, convergence_study, homogeneous_oracle, laminate_oracle, sandwich_oracle, ConvergenceReport,
    OracleReport, StudySetup,
};
use porohom::Result;

type Outcome = Result<(bool, String)>;

fn materials(alpha: f64) -> MaterialSet {
    MaterialSet::isotropic(2, (10.0, 0.3), (1.0, 0.2), alpha, 0.5, 1.0).unwrap()
}

fn sources() -> SourceFields {
    SourceFields::parse(
        &["sin(3.14159*x0)*(1+t)", "0.5*t"],
        &["sin(3.14159*x0)*(1+t)", "0.5*t"],
        "1 + x0*t",
    )
    .unwrap()
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let s: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    d / s.max(1e-300)
}

fn summary(report: &OracleReport) -> String {
    report
        .checks
        .iter()
        .map(|c| format!("{} = {:.3e}", c.name, c.computed))
        .collect::<Vec<_>>()
        .join(", ")
}

fn homogeneous() -> Outcome {
    let unit = build_unit_cell(2, 32, InclusionSpec::Ball { radius: 0.25 })?;
    let m = MaterialSet::isotropic(2, (4.0, 0.3), (4.0, 0.3), 0.5, 1.0, 1.0)?;
    let cells = solve_cell_problems(&unit, &m, &SolverSettings::default())?;
    let report = homogeneous_oracle(&cells, 1e-8, 1e-9)?;
    Ok((report.passed(), summary(&report)))
}

fn laminate() -> Outcome {
    let unit = build_unit_cell(2, 64, InclusionSpec::Laminate { fraction: 0.5, normal: 0 })?;
    let m = MaterialSet::new(
        SymElasticityTensor::scalar_diagonal(2, 1.0)?,
        SymElasticityTensor::scalar_diagonal(2, 3.0)?,
        1.0,
        1.0,
        DMatrix::identity(2, 2),
    )?;
    let cells = solve_cell_problems(&unit, &m, &SolverSettings::default())?;
    let report = laminate_oracle(&cells, 0.01)?;
    let a = effective_elasticity(&cells)?;
    let detail = format!("A^h[1111] = {:.6}, A^h[2222] = {:.6}", a.voigt()[(0, 0)], a.voigt()[(1, 1)]);
    Ok((report.passed(), detail))
}

fn random_spd(rng: &mut ChaCha8Rng) -> SymElasticityTensor {
    let q = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
    let m = &q * q.transpose() + DMatrix::identity(3, 3) * rng.gen_range(0.1..1.0);
    SymElasticityTensor::from_voigt(2, m * rng.gen_range(0.5..20.0)).unwrap()
}

fn sandwich() -> Outcome {
    let unit = build_unit_cell(2, 32, InclusionSpec::Ball { radius: 0.3 })?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = f64::INFINITY;
    let mut pass = true;
    for _ in 0..20 {
        let m = MaterialSet::new(random_spd(&mut rng), random_spd(&mut rng), 0.5, 1.0, DMatrix::identity(2, 2))?;
        let cells = solve_cell_problems(&unit, &m, &SolverSettings::default())?;
        let report = sandwich_oracle(&cells, 1e-6)?;
        pass &= report.passed();
        worst = report.checks.iter().map(|c| c.computed).fold(worst, f64::min);
    }
    Ok((pass, format!("20 pairs, worst eigenvalue margin {worst:.3e}")))
}

fn biot_operator() -> Outcome {
    let unit = build_unit_cell(2, 8, InclusionSpec::Ball { radius: 0.25 })?;
    let mesh = build_dns_mesh(&unit, 0.5, &[1.0, 1.0], 1)?;
    let problem = EpsilonProblem::new(mesh, materials(0.8))?;
    let biot = problem.biot_operator(&SolverSettings::default())?;
    let report = biot_operator_oracle(&biot, 100, 11, 1e-10)?;
    Ok((report.passed(), summary(&report)))
}

fn study() -> Result<ConvergenceReport> {
    let setup = StudySetup {
        unit_cell: build_unit_cell(2, 8, InclusionSpec::Ball { radius: 0.25 })?,
        materials: materials(0.8),
        sources: sources(),
        extent: vec![1.0, 1.0],
        macro_resolution: vec![16, 16],
        oversample: 1,
        time: TimeGrid::new(1.0, 10)?,
        settings: SolverSettings::default(),
    };
    convergence_study(&setup, &[0.5, 0.25, 0.125])
}

fn energy(report: &ConvergenceReport) -> Outcome {
    let holds = report.energy_inequality.iter().all(|b| *b);
    Ok((
        holds && report.estimate_ratio <= 2.0,
        format!(
            "inequality at every step: {holds}, estimate ratio {:.4} (limit 2)",
            report.estimate_ratio
        ),
    ))
}

fn convergence(report: &ConvergenceReport) -> Outcome {
    let e = &report.displacement_errors;
    Ok((
        report.errors_decrease,
        format!("errors {:.3e} {:.3e} {:.3e}, rate {:.2}", e[0], e[1], e[2], report.fitted_rate),
    ))
}

fn micro_pressure() -> Outcome {
    let unit = build_unit_cell(2, 8, InclusionSpec::Ball { radius: 0.25 })?;
    let settings = SolverSettings::default();
    let cells = solve_cell_problems(&unit, &materials(0.0), &settings)?;
    let mesh = MacroMesh::new(2, &[1.0, 1.0], &[4, 4])?;
    let h = 3.0;
    let src = SourceFields::parse(&["1", "x1"], &["0", "t"], "3")?;
    let solver = TwoScaleSolver::new(&mesh, cells, src, TimeGrid::new(1.0, 5)?, &settings)?;
    let c = solver.biot_modulus();
    let mut state = solver.initial_state()?;
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        state = solver.step(&state)?.0;
        let exact = h * state.t / c;
        for p in state.p.iter().flatten() {
            worst = worst.max((p - exact).abs() / exact);
        }
    }
    Ok((worst <= 1e-8, format!("max relative deviation from h t / c: {worst:.3e}")))
}

fn form_equivalence() -> Outcome {
    let unit = build_unit_cell(2, 8, InclusionSpec::Ball { radius: 0.25 })?;
    let problem = EpsilonProblem::new(build_dns_mesh(&unit, 0.5, &[1.0, 1.0], 1)?, materials(0.8))?;
    let settings = SolverSettings::default();
    let time = TimeGrid::new(1.0, 10)?;
    let direct = dns_run(problem.clone(), sources(), time, &settings, 1)?;
    let operator = operator_form_run(&problem, &sources(), time, &settings, 1)?;
    let mut worst: f64 = 0.0;
    for (a, b) in direct.states.iter().zip(&operator.states).skip(1) {
        worst = worst.max(rel_diff(&b.u, &a.u)).max(rel_diff(&b.p, &a.p));
    }
    let complete = direct.states.len() == 11 && operator.states.len() == 11;
    Ok((complete && worst <= 1e-8, format!("max relative difference over 10 steps: {worst:.3e}")))
}

fn smoke_3d() -> Outcome {
    let unit = build_unit_cell(3, 8, InclusionSpec::Ball { radius: 0.3 })?;
    let m = MaterialSet::isotropic(3, (10.0, 0.3), (1.0, 0.2), 0.8, 0.5, 1.0)?;
    let cells = solve_cell_problems(&unit, &m, &SolverSettings::default())?;
    let a = effective_elasticity(&cells)?;
    let asym = a.asymmetry() / a.max_abs();
    let min_eig = a.min_eigenvalue();
    Ok((
        asym <= 1e-10 && min_eig > 0.0,
        format!("6 cell problems solved, asymmetry {asym:.1e}, min eigenvalue {min_eig:.4}"),
    ))
}

fn joined(s: &FieldState) -> Vec<f64> {
    s.u.iter().chain(&s.p).copied().collect()
}

fn linearity() -> Outcome {
    let settings = SolverSettings::default();
    let time = TimeGrid::new(1.0, 4)?;
    let unit = build_unit_cell(2, 8, InclusionSpec::Ball { radius: 0.25 })?;
    let problem = EpsilonProblem::new(build_dns_mesh(&unit, 0.5, &[1.0, 1.0], 1)?, materials(0.8))?;
    let a = dns_run(problem.clone(), sources(), time, &settings, 1)?;
    let b = dns_run(problem, sources().scaled(2.0), time, &settings, 1)?;
    let mut worst: f64 = 0.0;
    for (sa, sb) in a.states.iter().zip(&b.states).skip(1) {
        let twice: Vec<f64> = joined(sa).iter().map(|v| 2.0 * v).collect();
        worst = worst.max(rel_diff(&joined(sb), &twice));
    }

    let cells = solve_cell_problems(&unit, &materials(0.8), &settings)?;
    let mesh = MacroMesh::new(2, &[1.0, 1.0], &[4, 4])?;
    let one = TwoScaleSolver::new(&mesh, cells.clone(), sources(), time, &settings)?.run(1)?.0;
    let two = TwoScaleSolver::new(&mesh, cells, sources().scaled(2.0), time, &settings)?.run(1)?.0;
    for (sa, sb) in one.states.iter().zip(&two.states).skip(1) {
        let twice: Vec<f64> = joined(sa).iter().map(|v| 2.0 * v).collect();
        worst = worst.max(rel_diff(&joined(sb), &twice));
    }
    Ok((worst <= 1e-9, format!("max relative deviation from 2x: {worst:.3e}")))
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let r = f();
    (r, t.elapsed())
}

fn main() {
    let mut lines: Vec<(&str, f64, Duration, Outcome)> = Vec::new();
    let run = |name, limit, f: fn() -> Outcome| {
        let (r, d) = timed(f);
        (name, limit, d, r)
    };
    lines.push(run("1 homogeneous reduction", 10.0, homogeneous));
    lines.push(run("2 laminate", 30.0, laminate));
    lines.push(run("3 voigt-reuss sandwich", 300.0, sandwich));
    lines.push(run("4 biot operator", 60.0, biot_operator));

    // criteria 5 and 6 share one sweep; each is charged its full runtime
    let (sweep, d) = timed(study);
    let (five, six) = match &sweep {
        Ok(r) => (energy(r), convergence(r)),
        Err(e) => (
            Err(porohom::Error::Unsupported(e.to_string())),
            Err(porohom::Error::Unsupported(e.to_string())),
        ),
    };
    lines.push(("5 energy estimate", 600.0, d, five));
    lines.push(("6 two-scale convergence", 900.0, d, six));

    lines.push(run("7 micro pressure", 10.0, micro_pressure));
    lines.push(run("8 form equivalence", 60.0, form_equivalence));
    lines.push(run("9 3d smoke", 300.0, smoke_3d));
    lines.push(run("10 linearity", 60.0, linearity));

    let mut failed = 0;
    for (name, limit, elapsed, outcome) in &lines {
        let secs = elapsed.as_secs_f64();
        let (pass, detail) = match outcome {
            Ok((p, d)) => (*p && secs < *limit, d.clone()),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "[{}] {name:<24} {secs:>7.2}s (limit {limit:.0}s)  {detail}",
            if pass { "pass" } else { "FAIL" }
        );
    }
    println!("acceptance: {} of {} criteria passed", lines.len() - failed, lines.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
