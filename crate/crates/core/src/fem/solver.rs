//! Linear solvers: Jacobi-preconditioned conjugate gradients with a dense
//! Cholesky fallback for small systems, zero-mean periodic solves, and
//! preconditioned MINRES for the symmetric indefinite coupled step.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::sparse::{axpy, dot, norm, LinearOperator, SparseMatrix};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Relative residual target of every linear solve.
    pub tol_rel: f64,
    /// Iteration cap of the Krylov solvers.
    pub max_iter: usize,
    /// Systems up to this size are solved by dense factorization.
    pub dense_limit: usize,
    /// Relative increment target of the two-scale fixed-point iteration.
    pub tol_fp: f64,
    /// Iteration cap of the two-scale fixed-point iteration.
    pub max_fp: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol_rel: 1e-10,
            max_iter: 20_000,
            dense_limit: 200,
            tol_fp: 1e-8,
            max_fp: 50,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.tol_rel > 0.0 && self.tol_rel < 1.0) {
            errs.push(format!("solver.tol_rel must lie in (0, 1), got {}", self.tol_rel));
        }
        if self.max_iter == 0 {
            errs.push("solver.max_iter must be positive".into());
        }
        if !(self.tol_fp > 0.0 && self.tol_fp < 1.0) {
            errs.push(format!("solver.tol_fp must lie in (0, 1), got {}", self.tol_fp));
        }
        if self.max_fp == 0 {
            errs.push("solver.max_fp must be positive".into());
        }
        errs
    }
}

/// Conjugate gradients with a diagonal preconditioner. Stops when
/// `‖b - A x‖ ≤ tol_rel ‖b‖`.
pub fn pcg(
    op: &dyn LinearOperator,
    inv_diag: &[f64],
    b: &[f64],
    x0: Option<&[f64]>,
    tol_rel: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    pcg_with(|x| Ok(op.apply_vec(x)), inv_diag, b, x0, tol_rel, max_iter)
}

/// [`pcg`] for an operator whose application may fail (e.g. contains inner solves).
pub fn pcg_with<F>(
    mut apply: F,
    inv_diag: &[f64],
    b: &[f64],
    x0: Option<&[f64]>,
    tol_rel: f64,
    max_iter: usize,
) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r = b.to_vec();
    if x0.is_some() {
        axpy(-1.0, &apply(&x)?, &mut r);
    }
    let target = tol_rel * bnorm;
    let mut rnorm = norm(&r);
    if rnorm <= target {
        return Ok(x);
    }
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        let ap = apply(&p)?;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Singular(format!(
                "conjugate gradients met non-positive curvature {pap:.3e}"
            )));
        }
        let a = rz / pap;
        axpy(a, &p, &mut x);
        axpy(-a, &ap, &mut r);
        rnorm = norm(&r);
        if rnorm <= target {
            return Ok(x);
        }
        for ((zi, ri), di) in z.iter_mut().zip(&r).zip(inv_diag) {
            *zi = ri * di;
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual: rnorm / bnorm,
    })
}

/// Solves `A x = b` for symmetric positive definite `A`: dense Cholesky below
/// 200 unknowns, Jacobi-preconditioned CG above.
pub fn solve_spd(a: &SparseMatrix, b: &[f64], tol_rel: f64, max_iter: usize) -> Result<Vec<f64>> {
    let settings = SolverSettings {
        tol_rel,
        max_iter,
        ..SolverSettings::default()
    };
    SpdSolver::new(a.clone(), &settings)?.solve(b)
}

pub(crate) fn inverse_diagonal(d: &[f64]) -> Result<Vec<f64>> {
    d.iter()
        .map(|&v| {
            if v > 0.0 {
                Ok(1.0 / v)
            } else {
                Err(Error::Singular(format!("non-positive diagonal entry {v:.3e}")))
            }
        })
        .collect()
}

/// `A + γ Σ_g 1_g 1_gᵀ`: fixes the constant null space of a periodic operator.
#[derive(Clone, Debug)]
struct Regularized {
    matrix: SparseMatrix,
    groups: Vec<Vec<usize>>,
    gamma: f64,
}

impl LinearOperator for Regularized {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matrix.matvec_into(x, y);
        for g in &self.groups {
            let s: f64 = g.iter().map(|&i| x[i]).sum::<f64>() * self.gamma;
            for &i in g {
                y[i] += s;
            }
        }
    }
}

/// A reusable SPD solve: factorized densely when small, CG otherwise.
///
/// With zero-mean groups the matrix may be singular with the group indicators
/// spanning its null space; the right-hand side is then projected onto the
/// range and the zero-mean solution is returned.
#[derive(Clone, Debug)]
pub struct SpdSolver {
    op: Regularized,
    inv_diag: Vec<f64>,
    dense: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    tol_rel: f64,
    max_iter: usize,
}

impl SpdSolver {
    pub fn new(matrix: SparseMatrix, settings: &SolverSettings) -> Result<Self> {
        Self::with_mean_zero(matrix, Vec::new(), settings)
    }

    pub fn with_mean_zero(
        matrix: SparseMatrix,
        groups: Vec<Vec<usize>>,
        settings: &SolverSettings,
    ) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Dimension("SPD solve needs a square matrix".into()));
        }
        let n = matrix.nrows();
        let diag = matrix.diagonal();
        let mean_diag = if n == 0 { 1.0 } else { diag.iter().sum::<f64>() / n as f64 };
        let group_len = groups.first().map_or(1, Vec::len).max(1);
        let gamma = mean_diag / group_len as f64;
        let mut reg_diag = diag;
        for g in &groups {
            for &i in g {
                reg_diag[i] += gamma;
            }
        }
        let op = Regularized {
            matrix,
            groups,
            gamma,
        };
        let inv_diag = inverse_diagonal(&reg_diag)?;
        let dense = if n <= settings.dense_limit {
            let mut m = op.matrix.to_dense();
            for g in &op.groups {
                for &i in g {
                    for &j in g {
                        m[(i, j)] += gamma;
                    }
                }
            }
            Some(nalgebra::Cholesky::new(m).ok_or_else(|| {
                Error::Singular("dense Cholesky failed: matrix not positive definite".into())
            })?)
        } else {
            None
        };
        Ok(Self {
            op,
            inv_diag,
            dense,
            tol_rel: settings.tol_rel,
            max_iter: settings.max_iter,
        })
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.op.matrix
    }

    pub fn is_dense(&self) -> bool {
        self.dense.is_some()
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.solve_from(b, None)
    }

    pub fn solve_from(&self, b: &[f64], x0: Option<&[f64]>) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "right-hand side has {} entries, system has {}",
                b.len(),
                self.dim()
            )));
        }
        let mut rhs = b.to_vec();
        project_mean_zero(&self.op.groups, &mut rhs);
        let mut x = match &self.dense {
            Some(ch) => ch.solve(&DVector::from_vec(rhs)).data.into(),
            None => pcg(&self.op, &self.inv_diag, &rhs, x0, self.tol_rel, self.max_iter)?,
        };
        project_mean_zero(&self.op.groups, &mut x);
        Ok(x)
    }
}

impl LinearOperator for SpdSolver {
    fn dim(&self) -> usize {
        self.op.dim()
    }

    /// Applies the inverse.
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let s = self.solve(x).expect("inner SPD solve failed");
        y.copy_from_slice(&s);
    }
}

/// Removes the mean of every group in place.
pub fn project_mean_zero(groups: &[Vec<usize>], x: &mut [f64]) {
    for g in groups {
        if g.is_empty() {
            continue;
        }
        let mean = g.iter().map(|&i| x[i]).sum::<f64>() / g.len() as f64;
        for &i in g {
            x[i] -= mean;
        }
    }
}

/// Preconditioned MINRES for symmetric (possibly indefinite) operators with an
/// SPD diagonal preconditioner. Stops on the true relative residual.
pub fn minres(
    op: &dyn LinearOperator,
    inv_diag: &[f64],
    b: &[f64],
    x0: Option<&[f64]>,
    tol_rel: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = op.dim();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut used = 0;
    let mut last_res = f64::INFINITY;
    // restart a few times in case the recurrence residual drifts from the true one
    for _ in 0..8 {
        let mut r = b.to_vec();
        axpy(-1.0, &op.apply_vec(&x), &mut r);
        last_res = norm(&r) / bnorm;
        if last_res <= tol_rel {
            return Ok(x);
        }
        if used >= max_iter {
            break;
        }
        let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(a, d)| a * d).collect();
        let mut gamma = dot(&r, &z).sqrt();
        let mut v = r;
        v.iter_mut().for_each(|e| *e /= gamma);
        z.iter_mut().for_each(|e| *e /= gamma);
        let mut v_old = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut w_old = vec![0.0; n];
        let (mut c, mut c_old, mut s, mut s_old) = (1.0, 1.0, 0.0, 0.0);
        let eta0 = gamma;
        let mut eta = gamma;
        // target for the preconditioned residual; the true residual is rechecked on exit
        let inner_tol = 0.1 * tol_rel / last_res * eta0;
        let mut az = vec![0.0; n];
        while used < max_iter {
            used += 1;
            op.apply(&z, &mut az);
            let delta = dot(&az, &z);
            let mut v_new = az.clone();
            axpy(-delta, &v, &mut v_new);
            axpy(-gamma, &v_old, &mut v_new);
            let mut z_new: Vec<f64> = v_new.iter().zip(inv_diag).map(|(a, d)| a * d).collect();
            let gamma_new = dot(&v_new, &z_new).max(0.0).sqrt();
            if gamma_new > 0.0 {
                v_new.iter_mut().for_each(|e| *e /= gamma_new);
                z_new.iter_mut().for_each(|e| *e /= gamma_new);
            }
            let a0 = c * delta - c_old * s * gamma;
            let a1 = (a0 * a0 + gamma_new * gamma_new).sqrt();
            let a2 = s * delta + c_old * c * gamma;
            let a3 = s_old * gamma;
            if a1 == 0.0 {
                return Err(Error::Singular("MINRES breakdown".into()));
            }
            let c_new = a0 / a1;
            let s_new = gamma_new / a1;
            let mut w_new = z.clone();
            axpy(-a3, &w_old, &mut w_new);
            axpy(-a2, &w, &mut w_new);
            w_new.iter_mut().for_each(|e| *e /= a1);
            axpy(c_new * eta, &w_new, &mut x);
            eta *= -s_new;
            v_old = std::mem::replace(&mut v, v_new);
            z = z_new;
            w_old = std::mem::replace(&mut w, w_new);
            c_old = c;
            c = c_new;
            s_old = s;
            s = s_new;
            gamma = gamma_new;
            if eta.abs() <= inner_tol || gamma_new == 0.0 {
                break;
            }
        }
    }
    Err(Error::NotConverged {
        iterations: used,
        residual: last_res,
    })
}

/// The implicit step block system
/// `K u - B p = r_u`, `Bᵀ u + S p = r_p`, handled in its symmetric form
/// `[[K, -B], [-Bᵀ, -S]] (u, p) = (r_u, -r_p)`.
struct BlockOperator<'a> {
    k: &'a SparseMatrix,
    b: &'a SparseMatrix,
    s: &'a SparseMatrix,
}

impl LinearOperator for BlockOperator<'_> {
    fn dim(&self) -> usize {
        self.k.nrows() + self.s.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let nu = self.k.nrows();
        let (xu, xp) = x.split_at(nu);
        let ku = self.k.matvec(xu);
        let bp = self.b.matvec(xp);
        let btu = self.b.matvec_transpose(xu);
        let sp = self.s.matvec(xp);
        for i in 0..nu {
            y[i] = ku[i] - bp[i];
        }
        for j in 0..xp.len() {
            y[nu + j] = -btu[j] - sp[j];
        }
    }
}

/// Coupled displacement/pressure step matrix with its solver data, built once
/// per time-step size and reused for every step.
pub struct CoupledSystem {
    k: SparseMatrix,
    b: SparseMatrix,
    s: SparseMatrix,
    mode: CoupledMode,
    tol_rel: f64,
    max_iter: usize,
}

enum CoupledMode {
    /// No coupling entries: independent SPD solves.
    Sequenced { k: SpdSolver, s: Option<SpdSolver> },
    Dense(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
    Minres { inv_diag: Vec<f64> },
}

impl CoupledSystem {
    pub fn new(
        k: SparseMatrix,
        b: SparseMatrix,
        s: SparseMatrix,
        settings: &SolverSettings,
    ) -> Result<Self> {
        let nu = k.nrows();
        let np = s.nrows();
        if b.nrows() != nu || b.ncols() != np {
            return Err(Error::Dimension(format!(
                "coupling is {}x{}, expected {nu}x{np}",
                b.nrows(),
                b.ncols()
            )));
        }
        let decoupled = b.values().iter().all(|&v| v == 0.0);
        let mode = if decoupled {
            CoupledMode::Sequenced {
                k: SpdSolver::new(k.clone(), settings)?,
                s: if np > 0 {
                    Some(SpdSolver::new(s.clone(), settings)?)
                } else {
                    None
                },
            }
        } else if nu + np <= settings.dense_limit {
            let mut m = DMatrix::zeros(nu + np, nu + np);
            m.view_mut((0, 0), (nu, nu)).copy_from(&k.to_dense());
            let bd = b.to_dense();
            m.view_mut((0, nu), (nu, np)).copy_from(&(-&bd));
            m.view_mut((nu, 0), (np, nu)).copy_from(&bd.transpose());
            m.view_mut((nu, nu), (np, np)).copy_from(&s.to_dense());
            CoupledMode::Dense(m.lu())
        } else {
            // block Jacobi: diag(K) and the diagonal of S + Bᵀ diag(K)⁻¹ B
            let kd = inverse_diagonal(&k.diagonal())?;
            let mut schur = s.diagonal();
            for r in 0..nu {
                for (c, v) in b.row(r) {
                    schur[c] += v * v * kd[r];
                }
            }
            let mut inv_diag = kd;
            inv_diag.extend(inverse_diagonal(&schur)?);
            CoupledMode::Minres { inv_diag }
        };
        Ok(Self {
            k,
            b,
            s,
            mode,
            tol_rel: settings.tol_rel,
            max_iter: settings.max_iter,
        })
    }

    pub fn n_u(&self) -> usize {
        self.k.nrows()
    }

    pub fn n_p(&self) -> usize {
        self.s.nrows()
    }

    pub fn solve(
        &self,
        rhs_u: &[f64],
        rhs_p: &[f64],
        guess: Option<(&[f64], &[f64])>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let nu = self.n_u();
        match &self.mode {
            CoupledMode::Sequenced { k, s } => {
                let u = k.solve_from(rhs_u, guess.map(|g| g.0))?;
                let p = match s {
                    Some(s) => s.solve_from(rhs_p, guess.map(|g| g.1))?,
                    None => Vec::new(),
                };
                Ok((u, p))
            }
            CoupledMode::Dense(lu) => {
                let rhs = DVector::from_iterator(nu + rhs_p.len(), rhs_u.iter().chain(rhs_p).copied());
                let x = lu
                    .solve(&rhs)
                    .ok_or_else(|| Error::Singular("coupled step matrix is singular".into()))?;
                Ok((x.rows(0, nu).iter().copied().collect(), x.rows(nu, rhs_p.len()).iter().copied().collect()))
            }
            CoupledMode::Minres { inv_diag } => {
                let op = BlockOperator {
                    k: &self.k,
                    b: &self.b,
                    s: &self.s,
                };
                let rhs: Vec<f64> = rhs_u.iter().copied().chain(rhs_p.iter().map(|v| -v)).collect();
                let x0: Option<Vec<f64>> = guess.map(|(u, p)| u.iter().chain(p).copied().collect());
                let x = minres(&op, inv_diag, &rhs, x0.as_deref(), self.tol_rel, self.max_iter)?;
                Ok((x[..nu].to_vec(), x[nu..].to_vec()))
            }
        }
    }
}

/// One-shot solve of the coupled step block system.
pub fn solve_saddle_or_sequenced(
    k: &SparseMatrix,
    b: &SparseMatrix,
    s: &SparseMatrix,
    rhs_u: &[f64],
    rhs_p: &[f64],
    settings: &SolverSettings,
) -> Result<(Vec<f64>, Vec<f64>)> {
    CoupledSystem::new(k.clone(), b.clone(), s.clone(), settings)?.solve(rhs_u, rhs_p, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_hand_elimination() {
        let a = SparseMatrix::from_triplets(
            2,
            2,
            vec![(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)],
        );
        let x = solve_spd(&a, &[1.0, 2.0], 1e-12, 100).unwrap();
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-14);
        assert!((x[1] - 7.0 / 11.0).abs() < 1e-14);
        let x = pcg(&a, &[0.25, 1.0 / 3.0], &[1.0, 2.0], None, 1e-14, 10).unwrap();
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-13);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = SparseMatrix::identity(3);
        assert_eq!(solve_spd(&a, &[0.0; 3], 1e-10, 10).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn minres_solves_indefinite_system() {
        // [[2, 1], [1, -3]]
        let a = SparseMatrix::from_triplets(
            2,
            2,
            vec![(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, -3.0)],
        );
        let x = minres(&a, &[0.5, 1.0 / 3.0], &[3.0, -2.0], None, 1e-12, 50).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-10 && (x[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn mean_zero_solve_of_periodic_laplacian() {
        // 1D periodic ring of 6 nodes
        let n = 6;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            t.push((i, (i + 1) % n, -1.0));
            t.push(((i + 1) % n, i, -1.0));
        }
        let a = SparseMatrix::from_triplets(n, n, t);
        let b = vec![1.0, -1.0, 2.0, 0.0, -2.0, 0.0];
        let group = vec![(0..n).collect::<Vec<_>>()];
        for limit in [0, 100] {
            let s = SpdSolver::with_mean_zero(
                a.clone(),
                group.clone(),
                &SolverSettings {
                    dense_limit: limit,
                    tol_rel: 1e-13,
                    ..SolverSettings::default()
                },
            )
            .unwrap();
            let x = s.solve(&b).unwrap();
            assert!(x.iter().sum::<f64>().abs() < 1e-12);
            let r = a.matvec(&x);
            for i in 0..n {
                assert!((r[i] - b[i]).abs() < 1e-10);
            }
        }
    }
}
