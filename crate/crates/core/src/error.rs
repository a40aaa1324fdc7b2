use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("macro extent is not an integer number of periods along axis {axis} (extent/epsilon = {ratio})")]
    Tiling { axis: usize, ratio: f64 },

    #[error("invalid material: {0}")]
    Material(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("cell problem {index:?}: {source}")]
    CellProblem {
        index: (usize, usize),
        #[source]
        source: Box<Error>,
    },

    #[error("time step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("fixed-point iteration did not converge after {iterations} sweeps (displacement increment {du:.3e}, pressure increment {dp:.3e})")]
    FixedPoint { iterations: usize, du: f64, dp: f64 },

    #[error("expression error: {0}")]
    Expression(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error originates from a linear or fixed-point solve.
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::NotConverged { .. } | Error::Singular(_) | Error::FixedPoint { .. } => true,
            Error::CellProblem { source, .. } | Error::Step { source, .. } => {
                source.is_solver_failure()
            }
            _ => false,
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Error {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }
}
