//! Python bindings: unit cells, materials, cell problems, direct and
//! two-scale runs, and the CLI commands.

use std::path::PathBuf;

use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use porohom::cell::{effective_biot, effective_elasticity, solve_cell_problems, CellSolutions};
use porohom::cli::commands::{exit_code, run as run_command, Command};
use porohom::cli::config::parse_config;
use porohom::fem::{MaterialSet, SolverSettings, SourceFields, SymElasticityTensor};
use porohom::geometry::{build_dns_mesh, build_unit_cell, phase_fractions, InclusionSpec, MacroMesh, PeriodicGrid};
use porohom::operators::EpsilonProblem;
use porohom::simulate::{dns_run, TimeGrid, TwoScaleSolver};
use porohom::verify;

fn err(e: porohom::Error) -> PyErr {
    if e.is_solver_failure() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

type Rows = Vec<Vec<f64>>;

fn rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn to_python<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn command(name: &str) -> PyResult<Command> {
    Ok(match name {
        "cell" => Command::Cell,
        "dns" => Command::Dns,
        "macro" => Command::Macro,
        "compare" => Command::Compare,
        "verify" => Command::Verify,
        _ => return Err(PyValueError::new_err(format!("unknown command {name:?}"))),
    })
}

/// Fibre and gel constants.
#[pyclass(name = "Materials", module = "porohom", frozen)]
struct Materials {
    inner: MaterialSet,
}

#[pymethods]
impl Materials {
    /// Isotropic phases given as `(youngs, poisson)` pairs.
    #[staticmethod]
    #[pyo3(signature = (dim, fibre, gel, alpha, biot_modulus, permeability=1.0))]
    fn isotropic(
        dim: usize,
        fibre: (f64, f64),
        gel: (f64, f64),
        alpha: f64,
        biot_modulus: f64,
        permeability: f64,
    ) -> PyResult<Self> {
        let inner = MaterialSet::isotropic(dim, fibre, gel, alpha, biot_modulus, permeability).map_err(err)?;
        Ok(Self { inner })
    }

    /// General phases given as Voigt matrices (engineering shear strains).
    #[staticmethod]
    #[pyo3(signature = (fibre, gel, alpha, biot_modulus, permeability))]
    fn from_voigt(
        fibre: Vec<Vec<f64>>,
        gel: Vec<Vec<f64>>,
        alpha: f64,
        biot_modulus: f64,
        permeability: Vec<Vec<f64>>,
    ) -> PyResult<Self> {
        let dim = permeability.len();
        let k = DMatrix::from_fn(dim, dim, |i, j| permeability[i].get(j).copied().unwrap_or(f64::NAN));
        let inner = MaterialSet::new(
            SymElasticityTensor::from_rows(dim, &fibre).map_err(err)?,
            SymElasticityTensor::from_rows(dim, &gel).map_err(err)?,
            alpha,
            biot_modulus,
            k,
        )
        .map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn biot_modulus(&self) -> f64 {
        self.inner.biot_modulus
    }

    #[getter]
    fn fibre(&self) -> Vec<Vec<f64>> {
        rows(self.inner.fibre.voigt())
    }

    #[getter]
    fn gel(&self) -> Vec<Vec<f64>> {
        rows(self.inner.gel.voigt())
    }

    /// Arithmetic and harmonic averages for the given `(fibre, gel)` fractions.
    fn voigt_reuss(&self, fractions: (f64, f64)) -> PyResult<(Rows, Rows)> {
        let (v, r) = verify::voigt_reuss(&self.inner, fractions).map_err(err)?;
        Ok((rows(v.voigt()), rows(r.voigt())))
    }

    /// Diagonal Voigt entries of the exact laminate tensor.
    fn laminate_exact(&self, gel_fraction: f64, normal: usize) -> PyResult<Vec<f64>> {
        verify::laminate_exact(&self.inner, gel_fraction, normal).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Materials(dim={}, alpha={}, biot_modulus={})",
            self.inner.dim(),
            self.inner.alpha,
            self.inner.biot_modulus
        )
    }
}

/// Voxelized periodic unit cell.
#[pyclass(name = "UnitCell", module = "porohom", frozen)]
struct UnitCell {
    inner: PeriodicGrid,
}

#[pymethods]
impl UnitCell {
    #[staticmethod]
    fn ball(dim: usize, resolution: usize, radius: f64) -> PyResult<Self> {
        let inner = build_unit_cell(dim, resolution, InclusionSpec::Ball { radius }).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (dim, resolution, fraction, normal=0))]
    fn laminate(dim: usize, resolution: usize, fraction: f64, normal: usize) -> PyResult<Self> {
        let inner = build_unit_cell(dim, resolution, InclusionSpec::Laminate { fraction, normal }).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn resolution(&self) -> usize {
        self.inner.resolution()
    }

    /// Voxel `(fibre, gel)` volume fractions.
    #[getter]
    fn fractions(&self) -> (f64, f64) {
        phase_fractions(self.inner.phases())
    }

    /// Per-voxel gel indicator in grid order.
    #[getter]
    fn gel_mask(&self) -> Vec<bool> {
        self.inner.gel_mask()
    }

    fn __repr__(&self) -> String {
        let (_, g) = phase_fractions(self.inner.phases());
        format!("UnitCell(dim={}, resolution={}, gel_fraction={g:.4})", self.inner.dim(), self.inner.resolution())
    }
}

/// Solved cell problems and the effective coefficients derived from them.
#[pyclass(name = "CellSolution", module = "porohom", frozen)]
struct CellSolution {
    inner: CellSolutions,
}

#[pymethods]
impl CellSolution {
    /// Effective elasticity tensor as a Voigt matrix.
    #[getter]
    fn effective_elasticity(&self) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(effective_elasticity(&self.inner).map_err(err)?.voigt()))
    }

    /// Effective Biot-Willis tensor averaged over the whole cell.
    #[getter]
    fn biot_over_cell(&self) -> Vec<Vec<f64>> {
        rows(&effective_biot(&self.inner).average_over_cell)
    }

    /// Effective Biot-Willis tensor averaged over the gel.
    #[getter]
    fn biot_over_gel(&self) -> Vec<Vec<f64>> {
        rows(&effective_biot(&self.inner).average_over_gel)
    }

    #[getter]
    fn max_abs_tau(&self) -> f64 {
        self.inner.max_abs_tau()
    }

    /// Nodal corrector for Voigt index `i`.
    fn corrector(&self, i: usize) -> PyResult<Vec<f64>> {
        self.inner
            .tau_all()
            .get(i)
            .cloned()
            .ok_or_else(|| PyValueError::new_err(format!("no corrector {i}")))
    }

    /// Oracle checks as a dict: `homogeneous`, `laminate` or `sandwich`.
    #[pyo3(signature = (kind, tolerance=1e-6))]
    fn check(&self, py: Python<'_>, kind: &str, tolerance: f64) -> PyResult<Py<PyAny>> {
        let report = match kind {
            "homogeneous" => verify::homogeneous_oracle(&self.inner, tolerance, tolerance),
            "laminate" => verify::laminate_oracle(&self.inner, tolerance),
            "sandwich" => verify::sandwich_oracle(&self.inner, tolerance),
            _ => return Err(PyValueError::new_err(format!("unknown check {kind:?}"))),
        }
        .map_err(err)?;
        to_python(py, &report)
    }
}

/// Solves the cell problems of `cell` with `materials`.
#[pyfunction]
fn solve_cell(cell: &UnitCell, materials: &Materials) -> PyResult<CellSolution> {
    let inner = solve_cell_problems(&cell.inner, &materials.inner, &SolverSettings::default()).map_err(err)?;
    Ok(CellSolution { inner })
}

fn sources(dim: usize, f: Option<Vec<String>>, g: Option<Vec<String>>, h: Option<String>) -> PyResult<SourceFields> {
    let zero = vec!["0".to_string(); dim];
    let (f, g) = (f.unwrap_or_else(|| zero.clone()), g.unwrap_or(zero));
    let h = h.unwrap_or_else(|| "0".into());
    let f: Vec<&str> = f.iter().map(String::as_str).collect();
    let g: Vec<&str> = g.iter().map(String::as_str).collect();
    let s = SourceFields::parse(&f, &g, &h).map_err(err)?;
    s.validate(dim).map_err(err)?;
    Ok(s)
}

/// Direct simulation on the unit square or cube tiled with `cell` at period
/// `epsilon`. Returns the saved states and per-step energy ledger as a dict.
#[pyfunction]
#[pyo3(signature = (cell, materials, epsilon, t_end, n_steps, f=None, g=None, h=None, save_every=0))]
#[allow(clippy::too_many_arguments)]
fn dns(
    py: Python<'_>,
    cell: &UnitCell,
    materials: &Materials,
    epsilon: f64,
    t_end: f64,
    n_steps: usize,
    f: Option<Vec<String>>,
    g: Option<Vec<String>>,
    h: Option<String>,
    save_every: usize,
) -> PyResult<Py<PyAny>> {
    let dim = cell.inner.dim();
    let src = sources(dim, f, g, h)?;
    let mesh = build_dns_mesh(&cell.inner, epsilon, &vec![1.0; dim], 1).map_err(err)?;
    let problem = EpsilonProblem::new(mesh, materials.inner.clone()).map_err(err)?;
    let time = TimeGrid::new(t_end, n_steps).map_err(err)?;
    let traj = dns_run(problem, src, time, &SolverSettings::default(), save_every).map_err(err)?;
    to_python(py, &traj)
}

/// Two-scale homogenized simulation on a macro grid of the unit square or cube.
#[pyfunction]
#[pyo3(signature = (cell, materials, macro_resolution, t_end, n_steps, f=None, g=None, h=None, save_every=0))]
#[allow(clippy::too_many_arguments)]
fn two_scale(
    py: Python<'_>,
    cell: &UnitCell,
    materials: &Materials,
    macro_resolution: usize,
    t_end: f64,
    n_steps: usize,
    f: Option<Vec<String>>,
    g: Option<Vec<String>>,
    h: Option<String>,
    save_every: usize,
) -> PyResult<Py<PyAny>> {
    let dim = cell.inner.dim();
    let src = sources(dim, f, g, h)?;
    let settings = SolverSettings::default();
    let cells = solve_cell_problems(&cell.inner, &materials.inner, &settings).map_err(err)?;
    let mesh = MacroMesh::new(dim, &vec![1.0; dim], &vec![macro_resolution; dim]).map_err(err)?;
    let time = TimeGrid::new(t_end, n_steps).map_err(err)?;
    let solver = TwoScaleSolver::new(&mesh, cells, src, time, &settings).map_err(err)?;
    let (traj, _) = solver.run(save_every).map_err(err)?;
    to_python(py, &traj)
}

/// Runs a CLI command on a JSON config file, writing into `out` (default
/// `out`). Returns `(exit_code, report)`,
/// where `report` is `None` if the command failed before producing one.
#[pyfunction]
#[pyo3(signature = (name, config, out=None))]
fn run(py: Python<'_>, name: &str, config: PathBuf, out: Option<PathBuf>) -> PyResult<(u8, Option<Py<PyAny>>)> {
    let cmd = command(name)?;
    let cfg = parse_config(&config).map_err(err)?;
    let out = out.unwrap_or_else(|| PathBuf::from("out"));
    let outcome = run_command(cmd, &cfg, &out);
    let code = exit_code(&outcome);
    match outcome {
        Ok(report) => Ok((code, Some(to_python(py, &report)?))),
        Err(_) => Ok((code, None)),
    }
}

#[pymodule]
#[pyo3(name = "porohom")]
fn porohom_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Materials>()?;
    m.add_class::<UnitCell>()?;
    m.add_class::<CellSolution>()?;
    m.add_function(wrap_pyfunction!(solve_cell, m)?)?;
    m.add_function(wrap_pyfunction!(dns, m)?)?;
    m.add_function(wrap_pyfunction!(two_scale, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
