//! Multilinear (Q1) element on a uniform axis-aligned cell with tensor-product
//! 2-point Gauss quadrature.
//!
//! Local node `a` sits at the cell corner whose offset along `axis` is bit
//! `axis` of `a`. Element displacement dofs are node-major: `a * dim + comp`.

use nalgebra::DMatrix;

use super::tensor::{voigt_pairs, voigt_size, SymElasticityTensor};
use crate::geometry::StructuredGrid;

const GAUSS: [f64; 2] = [
    0.5 - 0.288_675_134_594_812_9, // 0.5 - 0.5/sqrt(3)
    0.5 + 0.288_675_134_594_812_9,
];

#[derive(Clone, Debug)]
pub struct ElementBasis {
    dim: usize,
    n_nodes: usize,
    spacing: [f64; 3],
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
    values: Vec<f64>,
    grads: Vec<[f64; 3]>,
}

pub fn shape_values(dim: usize, xi: &[f64; 3]) -> [f64; 8] {
    let mut out = [0.0; 8];
    for (a, v) in out.iter_mut().enumerate().take(1 << dim) {
        let mut prod = 1.0;
        for axis in 0..dim {
            prod *= if (a >> axis) & 1 == 1 { xi[axis] } else { 1.0 - xi[axis] };
        }
        *v = prod;
    }
    out
}

/// Physical gradients of the shape functions at local point `xi`.
pub fn shape_gradients(dim: usize, spacing: &[f64], xi: &[f64; 3]) -> [[f64; 3]; 8] {
    let mut out = [[0.0; 3]; 8];
    for (a, g) in out.iter_mut().enumerate().take(1 << dim) {
        for d in 0..dim {
            let mut prod = 1.0;
            for axis in 0..dim {
                let bit = (a >> axis) & 1 == 1;
                prod *= if axis == d {
                    if bit {
                        1.0
                    } else {
                        -1.0
                    }
                } else if bit {
                    xi[axis]
                } else {
                    1.0 - xi[axis]
                };
            }
            g[d] = prod / spacing[d];
        }
    }
    out
}

impl ElementBasis {
    pub fn new(grid: &StructuredGrid) -> Self {
        let dim = grid.dim();
        let n_nodes = 1 << dim;
        let mut spacing = [1.0; 3];
        spacing[..dim].copy_from_slice(grid.spacing());
        let det: f64 = grid.cell_volume();
        let n_qp = 1 << dim;
        let mut points = Vec::with_capacity(n_qp);
        for q in 0..n_qp {
            let mut xi = [0.0; 3];
            for (axis, x) in xi.iter_mut().enumerate().take(dim) {
                *x = GAUSS[(q >> axis) & 1];
            }
            points.push(xi);
        }
        let weights = vec![det / n_qp as f64; n_qp];
        let mut values = Vec::with_capacity(n_qp * n_nodes);
        let mut grads = Vec::with_capacity(n_qp * n_nodes);
        for xi in &points {
            let v = shape_values(dim, xi);
            let g = shape_gradients(dim, &spacing[..dim], xi);
            values.extend_from_slice(&v[..n_nodes]);
            grads.extend_from_slice(&g[..n_nodes]);
        }
        Self {
            dim,
            n_nodes,
            spacing,
            points,
            weights,
            values,
            grads,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_qp(&self) -> usize {
        self.points.len()
    }

    pub fn weight(&self, q: usize) -> f64 {
        self.weights[q]
    }

    pub fn value(&self, q: usize, a: usize) -> f64 {
        self.values[q * self.n_nodes + a]
    }

    pub fn grad(&self, q: usize, a: usize) -> &[f64; 3] {
        &self.grads[q * self.n_nodes + a]
    }

    /// Physical position of quadrature point `q` in a cell with given origin.
    pub fn qp_position(&self, origin: &[f64; 3], q: usize) -> [f64; 3] {
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = origin[axis] + self.points[q][axis] * self.spacing[axis];
        }
        x
    }

    /// Strain-displacement matrix at quadrature point `q` (Voigt rows, element dofs as columns).
    pub fn strain_matrix(&self, q: usize) -> DMatrix<f64> {
        let d = self.dim;
        let nv = voigt_size(d);
        let mut b = DMatrix::zeros(nv, d * self.n_nodes);
        for (row, &(i, j)) in voigt_pairs(d).iter().enumerate() {
            for a in 0..self.n_nodes {
                let g = self.grad(q, a);
                if i == j {
                    b[(row, a * d + i)] = g[i];
                } else {
                    b[(row, a * d + i)] = g[j];
                    b[(row, a * d + j)] = g[i];
                }
            }
        }
        b
    }

    pub fn stiffness(&self, tensor: &SymElasticityTensor) -> DMatrix<f64> {
        let n = self.dim * self.n_nodes;
        let mut k = DMatrix::zeros(n, n);
        for q in 0..self.n_qp() {
            let b = self.strain_matrix(q);
            let db = tensor.voigt() * &b;
            k += b.transpose() * db * self.weights[q];
        }
        k
    }

    /// `∫ alpha * N_b * div(N_a e_comp)`: rows are displacement dofs, columns pressure nodes.
    pub fn coupling(&self, alpha: f64) -> DMatrix<f64> {
        let d = self.dim;
        let mut c = DMatrix::zeros(d * self.n_nodes, self.n_nodes);
        for q in 0..self.n_qp() {
            let w = alpha * self.weights[q];
            for a in 0..self.n_nodes {
                let g = self.grad(q, a);
                for comp in 0..d {
                    for b in 0..self.n_nodes {
                        c[(a * d + comp, b)] += w * g[comp] * self.value(q, b);
                    }
                }
            }
        }
        c
    }

    pub fn mass(&self, coef: f64) -> DMatrix<f64> {
        let n = self.n_nodes;
        let mut m = DMatrix::zeros(n, n);
        for q in 0..self.n_qp() {
            for a in 0..n {
                for b in 0..n {
                    m[(a, b)] += coef * self.weights[q] * self.value(q, a) * self.value(q, b);
                }
            }
        }
        m
    }

    pub fn diffusion(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n_nodes;
        let d = self.dim;
        let mut m = DMatrix::zeros(n, n);
        for q in 0..self.n_qp() {
            for a in 0..n {
                let ga = self.grad(q, a);
                for b in 0..n {
                    let gb = self.grad(q, b);
                    let mut s = 0.0;
                    for i in 0..d {
                        for j in 0..d {
                            s += k[(i, j)] * gb[j] * ga[i];
                        }
                    }
                    m[(a, b)] += self.weights[q] * s;
                }
            }
        }
        m
    }

    /// Vector Laplacian `∫ grad u : grad v` (the H¹₀ seminorm matrix).
    pub fn vector_laplacian(&self) -> DMatrix<f64> {
        let d = self.dim;
        let scalar = self.diffusion(&DMatrix::identity(d, d));
        let n = self.n_nodes;
        let mut m = DMatrix::zeros(d * n, d * n);
        for a in 0..n {
            for b in 0..n {
                for comp in 0..d {
                    m[(a * d + comp, b * d + comp)] = scalar[(a, b)];
                }
            }
        }
        m
    }

    /// Load of a prescribed uniform strain: `-∫ B^T D strain`.
    pub fn strain_load(&self, tensor: &SymElasticityTensor, strain: &[f64]) -> Vec<f64> {
        let n = self.dim * self.n_nodes;
        let stress = tensor.stress(strain);
        let mut f = vec![0.0; n];
        for q in 0..self.n_qp() {
            let b = self.strain_matrix(q);
            for (col, fv) in f.iter_mut().enumerate() {
                let s: f64 = (0..stress.len()).map(|r| b[(r, col)] * stress[r]).sum();
                *fv -= self.weights[q] * s;
            }
        }
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_of_unity_and_gradients() {
        let grid = StructuredGrid::new(3, &[2, 2, 2], &[1.0, 2.0, 4.0]).unwrap();
        let e = ElementBasis::new(&grid);
        for q in 0..e.n_qp() {
            let s: f64 = (0..e.n_nodes()).map(|a| e.value(q, a)).sum();
            assert!((s - 1.0).abs() < 1e-14);
            for axis in 0..3 {
                let g: f64 = (0..e.n_nodes()).map(|a| e.grad(q, a)[axis]).sum();
                assert!(g.abs() < 1e-14);
            }
        }
        let vol: f64 = (0..e.n_qp()).map(|q| e.weight(q)).sum();
        assert!((vol - 1.0).abs() < 1e-14);
    }

    #[test]
    fn bilinear_laplacian_matches_analytic_element_matrix() {
        // unit square Q1 stiffness: diag 2/3, edge neighbours -1/6, opposite -1/3
        let grid = StructuredGrid::new(2, &[1, 1], &[1.0, 1.0]).unwrap();
        let e = ElementBasis::new(&grid);
        let k = e.diffusion(&DMatrix::identity(2, 2));
        for a in 0..4 {
            for b in 0..4 {
                let expected = match ((a ^ b) as u32).count_ones() {
                    0 => 2.0 / 3.0,
                    1 => -1.0 / 6.0,
                    _ => -1.0 / 3.0,
                };
                assert!((k[(a, b)] - expected).abs() < 1e-14, "({a},{b})");
            }
        }
        let m = e.mass(1.0);
        // consistent Q1 mass on unit square: (1/36) * [4 2 1 2 ...]
        for a in 0..4 {
            for b in 0..4 {
                let expected = match ((a ^ b) as u32).count_ones() {
                    0 => 4.0 / 36.0,
                    1 => 2.0 / 36.0,
                    _ => 1.0 / 36.0,
                };
                assert!((m[(a, b)] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn linear_field_has_exact_constant_strain_energy() {
        let grid = StructuredGrid::new(2, &[1, 1], &[0.5, 0.25]).unwrap();
        let e = ElementBasis::new(&grid);
        let t = SymElasticityTensor::isotropic(2, 3.0, 0.25).unwrap();
        let k = e.stiffness(&t);
        // u = G x with G = [[0.1, 0.3], [-0.2, 0.4]]
        let g = [[0.1, 0.3], [-0.2, 0.4]];
        let mut u = [0.0; 8];
        for a in 0..4 {
            let x = [(a & 1) as f64 * 0.5, ((a >> 1) & 1) as f64 * 0.25];
            for i in 0..2 {
                u[a * 2 + i] = g[i][0] * x[0] + g[i][1] * x[1];
            }
        }
        let uk: f64 = (0..8).map(|i| (0..8).map(|j| u[i] * k[(i, j)] * u[j]).sum::<f64>()).sum();
        let strain = [g[0][0], g[1][1], g[0][1] + g[1][0]];
        let s = t.stress(&strain);
        let exact: f64 = s.iter().zip(&strain).map(|(a, b)| a * b).sum::<f64>() * 0.125;
        assert!((uk - exact).abs() < 1e-12 * exact.abs().max(1.0));
    }
}
