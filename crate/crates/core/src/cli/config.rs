//! JSON configuration of a run.
//!
//! ```json
//! {
//!   "dim": 2,
//!   "geometry": {
//!     "inclusion": { "kind": "ball", "radius": 0.25 },
//!     "cell_resolution": 16,
//!     "extent": [1.0, 1.0],
//!     "macro_resolution": [16, 16],
//!     "oversample": 1
//!   },
//!   "materials": {
//!     "fibre": { "isotropic": { "youngs": 10.0, "poisson": 0.3 } },
//!     "gel": { "isotropic": { "youngs": 1.0, "poisson": 0.2 } },
//!     "alpha": 0.8,
//!     "biot_modulus": 0.5,
//!     "permeability": 1.0
//!   },
//!   "sources": { "f": ["sin(3.14159*x0)", "0"], "g": ["0", "t"], "h": "1" },
//!   "time": { "t_end": 1.0, "n_steps": 10 },
//!   "epsilons": [0.5, 0.25, 0.125],
//!   "solver": { "tol_rel": 1e-10 },
//!   "output": { "save_every": 1, "fields": true }
//! }
//! ```
//!
//! Everything except `dim`, `geometry.inclusion` and `materials` has a default.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::expr::Expr;
use crate::fem::tensor::symmetric_min_eigenvalue;
use crate::fem::{MaterialSet, SolverSettings, SourceFields, SymElasticityTensor};
use crate::geometry::InclusionSpec;
use crate::simulate::TimeGrid;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dim: usize,
    pub geometry: GeometryConfig,
    pub materials: MaterialConfig,
    #[serde(default)]
    pub sources: Option<SourceConfig>,
    #[serde(default = "default_time")]
    pub time: TimeGrid,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub inclusion: InclusionSpec,
    #[serde(default = "default_cell_resolution")]
    pub cell_resolution: usize,
    /// Edge lengths of Ω; the unit box when omitted.
    #[serde(default)]
    pub extent: Option<Vec<f64>>,
    /// Macro cells per axis; 16 per axis when omitted.
    #[serde(default)]
    pub macro_resolution: Option<Vec<usize>>,
    #[serde(default = "default_oversample")]
    pub oversample: usize,
}

/// Elasticity tensor given by isotropic constants, Lamé constants, a scalar
/// multiple of the identity or the full reduced matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TensorConfig {
    Isotropic { youngs: f64, poisson: f64 },
    Lame { lambda: f64, mu: f64 },
    Scalar(f64),
    Voigt(Vec<Vec<f64>>),
}

impl TensorConfig {
    pub fn build(&self, dim: usize) -> Result<SymElasticityTensor> {
        match self {
            TensorConfig::Isotropic { youngs, poisson } => SymElasticityTensor::isotropic(dim, *youngs, *poisson),
            TensorConfig::Lame { lambda, mu } => SymElasticityTensor::isotropic_lame(dim, *lambda, *mu),
            TensorConfig::Scalar(k) => SymElasticityTensor::scalar_diagonal(dim, *k),
            TensorConfig::Voigt(rows) => SymElasticityTensor::from_rows(dim, rows),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PermeabilityConfig {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl PermeabilityConfig {
    pub fn build(&self, dim: usize) -> Result<DMatrix<f64>> {
        match self {
            PermeabilityConfig::Scalar(k) => Ok(DMatrix::identity(dim, dim) * *k),
            PermeabilityConfig::Matrix(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::Dimension(format!("permeability must be {dim}x{dim}")));
                }
                Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub fibre: TensorConfig,
    pub gel: TensorConfig,
    pub alpha: f64,
    pub biot_modulus: f64,
    pub permeability: PermeabilityConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    #[serde(default)]
    pub f: Option<Vec<Expr>>,
    #[serde(default)]
    pub g: Option<Vec<Expr>>,
    #[serde(default)]
    pub h: Option<Expr>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Write every n-th state (0: initial and final only).
    pub save_every: usize,
    /// Write field files; reports and tables are always written.
    pub fields: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            save_every: 0,
            fields: true,
        }
    }
}

fn default_time() -> TimeGrid {
    TimeGrid {
        t_end: 1.0,
        n_steps: 10,
    }
}

fn default_epsilons() -> Vec<f64> {
    vec![0.5]
}

fn default_cell_resolution() -> usize {
    16
}

fn default_oversample() -> usize {
    1
}

/// Reads and validates a configuration file. Parse errors carry line and
/// column; validation errors are collected and reported together.
pub fn parse_config(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
    parse_config_str(&text).map_err(|e| match e {
        Error::Config(msgs) if msgs.len() == 1 && msgs[0].starts_with("line ") => {
            Error::Config(vec![format!("{}: {}", path.display(), msgs[0])])
        }
        other => other,
    })
}

pub fn parse_config_str(text: &str) -> Result<SimConfig> {
    let config: SimConfig = serde_json::from_str(text).map_err(|e| {
        Error::Config(vec![format!("line {}, column {}: {e}", e.line(), e.column())])
    })?;
    let errors = config.validate();
    if errors.is_empty() {
        Ok(config)
    } else {
        Err(Error::Config(errors))
    }
}

impl SimConfig {
    /// Every problem with the configuration, each naming its field.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let dim = self.dim;
        if dim != 2 && dim != 3 {
            errs.push(format!("dim must be 2 or 3, got {dim}"));
            return errs;
        }
        if let Err(e) = self.geometry.inclusion.validate(dim) {
            errs.push(format!("geometry.inclusion: {e}"));
        }
        if self.geometry.cell_resolution < 4 {
            errs.push(format!(
                "geometry.cell_resolution must be at least 4, got {}",
                self.geometry.cell_resolution
            ));
        }
        if self.geometry.oversample == 0 {
            errs.push("geometry.oversample must be at least 1".into());
        }
        let extent = self.extent();
        if extent.len() != dim {
            errs.push(format!("geometry.extent needs {dim} entries, got {}", extent.len()));
        } else if extent.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            errs.push("geometry.extent entries must be positive".into());
        }
        let mres = self.macro_resolution();
        if mres.len() != dim {
            errs.push(format!("geometry.macro_resolution needs {dim} entries, got {}", mres.len()));
        } else if mres.contains(&0) {
            errs.push("geometry.macro_resolution entries must be at least 1".into());
        }

        let m = &self.materials;
        for (name, t) in [("fibre", &m.fibre), ("gel", &m.gel)] {
            if let Err(e) = t.build(dim) {
                errs.push(format!("materials.{name}: {e}"));
            }
        }
        if !(m.alpha >= 0.0) || !m.alpha.is_finite() {
            errs.push(format!("materials.alpha must be non-negative, got {}", m.alpha));
        }
        if !(m.biot_modulus > 0.0) || !m.biot_modulus.is_finite() {
            errs.push(format!("materials.biot_modulus must be positive, got {}", m.biot_modulus));
        }
        match m.permeability.build(dim) {
            Err(e) => errs.push(format!("materials.permeability: {e}")),
            Ok(k) => {
                let asym = (&k - k.transpose()).abs().max();
                if asym > 1e-12 * k.abs().max() || !(symmetric_min_eigenvalue(&k) > 0.0) {
                    errs.push("materials.permeability must be symmetric positive definite".into());
                }
            }
        }

        if let Some(s) = &self.sources {
            for (name, v) in [("f", &s.f), ("g", &s.g)] {
                if let Some(v) = v {
                    if v.len() != dim {
                        errs.push(format!("sources.{name} needs {dim} components, got {}", v.len()));
                    }
                }
            }
        }
        if !(self.time.t_end > 0.0) || !self.time.t_end.is_finite() {
            errs.push(format!("time.t_end must be positive, got {}", self.time.t_end));
        }
        if self.epsilons.is_empty() {
            errs.push("epsilons must not be empty".into());
        }
        if extent.len() == dim {
            for (i, &eps) in self.epsilons.iter().enumerate() {
                if !(eps > 0.0) {
                    errs.push(format!("epsilons[{i}] must be positive, got {eps}"));
                    continue;
                }
                for (axis, &e) in extent.iter().enumerate() {
                    let ratio = e / eps;
                    if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
                        errs.push(format!(
                            "epsilons[{i}] = {eps} does not tile the extent along axis {axis} (ratio {ratio})"
                        ));
                    }
                }
            }
        }
        errs.extend(self.solver.validate());
        errs
    }

    pub fn extent(&self) -> Vec<f64> {
        self.geometry.extent.clone().unwrap_or_else(|| vec![1.0; self.dim])
    }

    pub fn macro_resolution(&self) -> Vec<usize> {
        self.geometry
            .macro_resolution
            .clone()
            .unwrap_or_else(|| vec![16; self.dim])
    }

    pub fn material_set(&self) -> Result<MaterialSet> {
        let m = &self.materials;
        MaterialSet::new(
            m.fibre.build(self.dim)?,
            m.gel.build(self.dim)?,
            m.alpha,
            m.biot_modulus,
            m.permeability.build(self.dim)?,
        )
    }

    /// Sources with absent entries set to zero.
    pub fn source_fields(&self) -> Result<SourceFields> {
        let zero = SourceFields::zero(self.dim);
        let Some(s) = &self.sources else {
            return Ok(zero);
        };
        SourceFields::new(
            self.dim,
            s.f.clone().unwrap_or(zero.f),
            s.g.clone().unwrap_or(zero.g),
            s.h.clone().unwrap_or(zero.h),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "dim": 2,
        "geometry": { "inclusion": { "kind": "ball", "radius": 0.25 } },
        "materials": {
            "fibre": { "isotropic": { "youngs": 10.0, "poisson": 0.3 } },
            "gel": { "isotropic": { "youngs": 1.0, "poisson": 0.2 } },
            "alpha": 0.8, "biot_modulus": 0.5, "permeability": 1.0
        }
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config_str(MINIMAL).unwrap();
        assert_eq!(c.solver.tol_rel, 1e-10);
        assert_eq!(c.time.n_steps, 10);
        assert!((c.time.dt() - 0.1).abs() < 1e-15);
        assert_eq!(c.extent(), vec![1.0, 1.0]);
        assert_eq!(c.geometry.cell_resolution, 16);
        assert!(c.source_fields().unwrap().is_zero());
    }

    #[test]
    fn negative_alpha_is_named() {
        let text = MINIMAL.replace("\"alpha\": 0.8", "\"alpha\": -1");
        let Err(Error::Config(msgs)) = parse_config_str(&text) else {
            panic!("expected a config error")
        };
        assert!(msgs.iter().any(|m| m.contains("materials.alpha")), "{msgs:?}");
    }

    #[test]
    fn indefinite_permeability_is_rejected() {
        let text = MINIMAL.replace("\"permeability\": 1.0", "\"permeability\": [[1, 2], [2, 1]]");
        let Err(Error::Config(msgs)) = parse_config_str(&text) else {
            panic!("expected a config error")
        };
        assert!(msgs.iter().any(|m| m.contains("materials.permeability")));
    }

    #[test]
    fn errors_are_aggregated() {
        let text = MINIMAL
            .replace("\"alpha\": 0.8", "\"alpha\": -1")
            .replace("\"biot_modulus\": 0.5", "\"biot_modulus\": 0");
        let Err(Error::Config(msgs)) = parse_config_str(&text) else {
            panic!("expected a config error")
        };
        assert_eq!(msgs.len(), 2);
    }

    #[test]
    fn non_tiling_epsilon_is_rejected() {
        let text = MINIMAL.replacen('{', "{ \"epsilons\": [0.3],", 1);
        let Err(Error::Config(msgs)) = parse_config_str(&text) else {
            panic!("expected a config error")
        };
        assert!(msgs[0].contains("epsilons[0]"));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let Err(Error::Config(msgs)) = parse_config_str("{\n  \"dim\": 2,\n  oops\n}") else {
            panic!("expected a config error")
        };
        assert!(msgs[0].starts_with("line 3"), "{msgs:?}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = MINIMAL.replacen('{', "{ \"colour\": 1,", 1);
        assert!(parse_config_str(&text).is_err());
    }
}
