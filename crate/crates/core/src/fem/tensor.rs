//! Elasticity tensors in reduced (Voigt) form and the material set.
//!
//! Strains are stored as engineering Voigt vectors, `[e11, e22, 2 e12]` in 2D
//! and `[e11, e22, e33, 2 e23, 2 e13, 2 e12]` in 3D; stresses as
//! `[s11, s22, s12]` / `[s11, s22, s33, s23, s13, s12]`. With this convention
//! the reduced matrix entry `M[I][J]` equals the tensor component `A_ijkl`
//! for `I ~ (ij)`, `J ~ (kl)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub fn voigt_size(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Index pairs of the Voigt components.
pub fn voigt_pairs(dim: usize) -> &'static [(usize, usize)] {
    const P2: [(usize, usize); 3] = [(0, 0), (1, 1), (0, 1)];
    const P3: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];
    if dim == 2 {
        &P2
    } else {
        &P3
    }
}

pub fn voigt_index(dim: usize, i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    voigt_pairs(dim)
        .iter()
        .position(|&(p, q)| p == a && q == b)
        .expect("index pair within dimension")
}

/// Voigt representation of the identity tensor (1 on normal components).
pub fn voigt_identity(dim: usize) -> Vec<f64> {
    voigt_pairs(dim)
        .iter()
        .map(|&(i, j)| if i == j { 1.0 } else { 0.0 })
        .collect()
}

/// Rank-4 tensor with minor and major symmetries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymElasticityTensor {
    dim: usize,
    voigt: DMatrix<f64>,
}

impl SymElasticityTensor {
    /// Checked constructor: major symmetry and positive definiteness.
    pub fn from_voigt(dim: usize, m: DMatrix<f64>) -> Result<Self> {
        let t = Self::from_voigt_unchecked(dim, m)?;
        let asym = t.asymmetry();
        let scale = t.max_abs().max(f64::MIN_POSITIVE);
        if asym > 1e-12 * scale {
            return Err(Error::Material(format!(
                "elasticity matrix is not symmetric (max |M - M^T| = {asym:.3e})"
            )));
        }
        let lmin = t.min_eigenvalue();
        if !(lmin > 0.0) {
            return Err(Error::Material(format!(
                "elasticity matrix is not positive definite (smallest eigenvalue {lmin:.3e})"
            )));
        }
        Ok(t)
    }

    /// Shape-checked only. Used for computed tensors whose properties are
    /// verified separately.
    pub fn from_voigt_unchecked(dim: usize, m: DMatrix<f64>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Dimension(format!("dim must be 2 or 3, got {dim}")));
        }
        let n = voigt_size(dim);
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::Dimension(format!(
                "reduced elasticity matrix must be {n}x{n}, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self { dim, voigt: m })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("reduced elasticity matrix must be square".into()));
        }
        let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Self::from_voigt(dim, m)
    }

    /// Isotropic tensor from Lamé parameters (plane strain in 2D).
    pub fn isotropic_lame(dim: usize, lambda: f64, mu: f64) -> Result<Self> {
        let n = voigt_size(dim);
        let mut m = DMatrix::zeros(n, n);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = lambda;
            }
            m[(i, i)] += 2.0 * mu;
        }
        for k in dim..n {
            m[(k, k)] = mu;
        }
        Self::from_voigt(dim, m)
    }

    /// Isotropic tensor from Young's modulus and Poisson ratio.
    pub fn isotropic(dim: usize, youngs: f64, poisson: f64) -> Result<Self> {
        if !(youngs > 0.0) || !(poisson > -1.0 && poisson < 0.5) {
            return Err(Error::Material(format!(
                "invalid isotropic parameters E = {youngs}, nu = {poisson}"
            )));
        }
        let lambda = youngs * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
        let mu = youngs / (2.0 * (1.0 + poisson));
        Self::isotropic_lame(dim, lambda, mu)
    }

    /// `k` times the identity of the reduced representation.
    pub fn scalar_diagonal(dim: usize, k: f64) -> Result<Self> {
        let n = voigt_size(dim);
        Self::from_voigt(dim, DMatrix::identity(n, n) * k)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn voigt(&self) -> &DMatrix<f64> {
        &self.voigt
    }

    pub fn component(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.voigt[(voigt_index(self.dim, i, j), voigt_index(self.dim, k, l))]
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            voigt: &self.voigt * s,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.voigt.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn asymmetry(&self) -> f64 {
        (&self.voigt - self.voigt.transpose())
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        symmetric_min_eigenvalue(&self.voigt)
    }

    /// Whether the reduced matrix is diagonal (within a relative tolerance).
    pub fn is_diagonal(&self, rel_tol: f64) -> bool {
        let scale = self.max_abs();
        let n = self.voigt.nrows();
        (0..n).all(|i| (0..n).all(|j| i == j || self.voigt[(i, j)].abs() <= rel_tol * scale))
    }

    pub fn compliance(&self) -> Result<DMatrix<f64>> {
        self.voigt
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("elasticity matrix is not invertible".into()))
    }

    /// Stress (Voigt) produced by an engineering strain vector.
    pub fn stress(&self, strain: &[f64]) -> Vec<f64> {
        let n = self.voigt.nrows();
        (0..n)
            .map(|i| (0..n).map(|j| self.voigt[(i, j)] * strain[j]).sum())
            .collect()
    }
}

pub fn symmetric_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

pub fn symmetric_max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
}

/// Constitutive constants of the fibre/gel composite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialSet {
    /// Fibre elasticity tensor.
    pub fibre: SymElasticityTensor,
    /// Drained gel elasticity tensor.
    pub gel: SymElasticityTensor,
    /// Biot-Willis coefficient.
    pub alpha: f64,
    /// Biot modulus.
    pub biot_modulus: f64,
    /// Permeability (before the ε² scaling), `dim x dim`.
    pub permeability: DMatrix<f64>,
}

impl MaterialSet {
    /// Validates all constants. `alpha = 0` is accepted as the decoupled limit.
    pub fn new(
        fibre: SymElasticityTensor,
        gel: SymElasticityTensor,
        alpha: f64,
        biot_modulus: f64,
        permeability: DMatrix<f64>,
    ) -> Result<Self> {
        let dim = fibre.dim();
        if gel.dim() != dim {
            return Err(Error::Dimension("fibre and gel tensors differ in dimension".into()));
        }
        for (name, t) in [("fibre", &fibre), ("gel", &gel)] {
            if t.asymmetry() > 1e-12 * t.max_abs() || !(t.min_eigenvalue() > 0.0) {
                return Err(Error::Material(format!(
                    "{name} tensor must be symmetric positive definite"
                )));
            }
        }
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::Material(format!("alpha must be non-negative, got {alpha}")));
        }
        if !(biot_modulus > 0.0) || !biot_modulus.is_finite() {
            return Err(Error::Material(format!(
                "Biot modulus must be positive, got {biot_modulus}"
            )));
        }
        check_spd(&permeability, dim, "permeability")?;
        Ok(Self {
            fibre,
            gel,
            alpha,
            biot_modulus,
            permeability,
        })
    }

    /// Isotropic phases with unit permeability; handy for tests and examples.
    pub fn isotropic(
        dim: usize,
        fibre: (f64, f64),
        gel: (f64, f64),
        alpha: f64,
        biot_modulus: f64,
        permeability: f64,
    ) -> Result<Self> {
        Self::new(
            SymElasticityTensor::isotropic(dim, fibre.0, fibre.1)?,
            SymElasticityTensor::isotropic(dim, gel.0, gel.1)?,
            alpha,
            biot_modulus,
            DMatrix::identity(dim, dim) * permeability,
        )
    }

    pub fn dim(&self) -> usize {
        self.fibre.dim()
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        Self {
            alpha,
            ..self.clone()
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        self.fibre == self.gel
    }

    /// Smallest eigenvalue of the permeability.
    pub fn permeability_min_eigenvalue(&self) -> f64 {
        symmetric_min_eigenvalue(&self.permeability)
    }

    /// Upper bound for the ratio (pressure-to-pressure coupling energy) /
    /// (α-weighted mass), `max over phases of m^T A^{-1} m`, where `m` is the
    /// Voigt identity. For any displacement, `e:A:e >= (tr e)^2 / (m^T A^{-1} m)`.
    pub fn inverse_bulk_bound(&self) -> Result<f64> {
        let m = voigt_identity(self.dim());
        let mut best: f64 = 0.0;
        for t in [&self.fibre, &self.gel] {
            let s = t.compliance()?;
            let n = m.len();
            let v: f64 = (0..n)
                .map(|i| (0..n).map(|j| m[i] * s[(i, j)] * m[j]).sum::<f64>())
                .sum();
            best = best.max(v);
        }
        Ok(best)
    }
}

pub(crate) fn check_spd(m: &DMatrix<f64>, dim: usize, name: &str) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::Dimension(format!(
            "{name} must be {dim}x{dim}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let asym = (m - m.transpose()).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if asym > 1e-12 * scale {
        return Err(Error::Material(format!("{name} is not symmetric")));
    }
    let lmin = symmetric_min_eigenvalue(m);
    if !(lmin > 0.0) {
        return Err(Error::Material(format!(
            "{name} is not positive definite (smallest eigenvalue {lmin:.3e})"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isotropic_components() {
        let t = SymElasticityTensor::isotropic_lame(3, 2.0, 1.0).unwrap();
        assert_eq!(t.component(0, 0, 0, 0), 4.0);
        assert_eq!(t.component(0, 0, 1, 1), 2.0);
        assert_eq!(t.component(1, 2, 1, 2), 1.0);
        assert_eq!(t.component(2, 1, 1, 2), 1.0);
        assert_eq!(voigt_index(3, 2, 0), 4);
    }

    #[test]
    fn rejects_indefinite_and_asymmetric() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 2.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(SymElasticityTensor::from_voigt(2, m).is_err());
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.1, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(SymElasticityTensor::from_voigt(2, m).is_err());
        assert!(SymElasticityTensor::isotropic(2, 1.0, 0.5).is_err());
    }

    #[test]
    fn material_validation() {
        let c = SymElasticityTensor::isotropic(2, 10.0, 0.3).unwrap();
        let d = SymElasticityTensor::isotropic(2, 1.0, 0.2).unwrap();
        let k = DMatrix::identity(2, 2);
        assert!(MaterialSet::new(c.clone(), d.clone(), 1.0, 1.0, k.clone()).is_ok());
        assert!(MaterialSet::new(c.clone(), d.clone(), 0.0, 1.0, k.clone()).is_ok());
        assert!(MaterialSet::new(c.clone(), d.clone(), -1.0, 1.0, k.clone()).is_err());
        assert!(MaterialSet::new(c.clone(), d.clone(), 1.0, 0.0, k.clone()).is_err());
        let bad_k = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(MaterialSet::new(c, d, 1.0, 1.0, bad_k).is_err());
    }

    #[test]
    fn trace_inequality_bound() {
        // e:A:e >= (tr e)^2 / (m^T A^{-1} m) for random strains
        let mats = MaterialSet::isotropic(2, (10.0, 0.3), (1.0, 0.2), 1.0, 1.0, 1.0).unwrap();
        let b = mats.inverse_bulk_bound().unwrap();
        for s in [[1.0, 0.0, 0.0], [0.3, -0.7, 0.2], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]] {
            for t in [&mats.fibre, &mats.gel] {
                let st = t.stress(&s);
                let energy: f64 = st.iter().zip(&s).map(|(a, b)| a * b).sum();
                let tr = s[0] + s[1];
                assert!(energy * b >= tr * tr - 1e-12);
            }
        }
    }
}
