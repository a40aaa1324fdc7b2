//! Volume force densities in fibre and gel and the gel pressure source.

use serde::{Deserialize, Serialize};

use crate::expr::Expr;
use crate::geometry::Phase;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceFields {
    /// Force density in the fibre phase, one expression per component.
    pub f: Vec<Expr>,
    /// Force density in the gel phase.
    pub g: Vec<Expr>,
    /// Fluid source in the gel.
    pub h: Expr,
}

impl SourceFields {
    pub fn new(dim: usize, f: Vec<Expr>, g: Vec<Expr>, h: Expr) -> Result<Self> {
        let s = Self { f, g, h };
        s.validate(dim)?;
        Ok(s)
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            f: vec![Expr::zero(); dim],
            g: vec![Expr::zero(); dim],
            h: Expr::zero(),
        }
    }

    /// Parses component strings, e.g. `SourceFields::parse(&["1", "0"], &["0", "t"], "x*y")`.
    pub fn parse(f: &[&str], g: &[&str], h: &str) -> Result<Self> {
        let f = f.iter().map(|s| Expr::parse(s)).collect::<Result<Vec<_>>>()?;
        let g = g.iter().map(|s| Expr::parse(s)).collect::<Result<Vec<_>>>()?;
        Self::new(f.len(), f, g, Expr::parse(h)?)
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.f.len() != dim || self.g.len() != dim {
            return Err(Error::Dimension(format!(
                "force densities need {dim} components, got f: {}, g: {}",
                self.f.len(),
                self.g.len()
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.f.len()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            f: self.f.iter().map(|e| e.scaled(s)).collect(),
            g: self.g.iter().map(|e| e.scaled(s)).collect(),
            h: self.h.scaled(s),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.f.iter().chain(&self.g).all(Expr::is_zero) && self.h.is_zero()
    }

    pub fn forces_time_independent(&self) -> bool {
        self.f.iter().chain(&self.g).all(Expr::is_time_independent)
    }

    /// Force density of `phase` at `(t, x)`, or its time derivative.
    pub fn force(&self, phase: Phase, t: f64, x: &[f64], time_derivative: bool) -> [f64; 3] {
        let exprs = match phase {
            Phase::Fibre => &self.f,
            Phase::Gel => &self.g,
        };
        let mut out = [0.0; 3];
        for (o, e) in out.iter_mut().zip(exprs) {
            *o = if time_derivative { e.eval_dt(t, x) } else { e.eval(t, x) };
        }
        out
    }

    pub fn pressure_source(&self, t: f64, x: &[f64], time_derivative: bool) -> f64 {
        if time_derivative {
            self.h.eval_dt(t, x)
        } else {
            self.h.eval(t, x)
        }
    }

    /// Averaged force `fibre_fraction * f + gel_fraction * g` for y-independent data.
    pub fn averaged_force(
        &self,
        fractions: (f64, f64),
        t: f64,
        x: &[f64],
        time_derivative: bool,
    ) -> [f64; 3] {
        let f = self.force(Phase::Fibre, t, x, time_derivative);
        let g = self.force(Phase::Gel, t, x, time_derivative);
        let mut out = [0.0; 3];
        for i in 0..3 {
            out[i] = fractions.0 * f[i] + fractions.1 * g[i];
        }
        out
    }
}
