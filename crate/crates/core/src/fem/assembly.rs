//! Global assembly of the bilinear and linear forms on uniform grids.
//!
//! Every cell of a grid shares one reference element, so element matrices are
//! computed once per distinct coefficient and scattered through the dof maps.
//! Cells are processed in parallel but triplets are concatenated in cell order,
//! which keeps the assembled matrices bitwise reproducible.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::dofmap::DofMap;
use super::element::ElementBasis;
use super::source::SourceFields;
use super::sparse::SparseMatrix;
use super::tensor::{MaterialSet, SymElasticityTensor};
use crate::geometry::{Phase, StructuredGrid};
use crate::{Error, Result};

/// Per-cell elasticity tensors stored as a small palette plus an index per cell.
#[derive(Clone, Debug)]
pub struct TensorField {
    palette: Vec<SymElasticityTensor>,
    index: Vec<usize>,
}

impl TensorField {
    pub fn uniform(tensor: SymElasticityTensor, n_cells: usize) -> Self {
        Self {
            palette: vec![tensor],
            index: vec![0; n_cells],
        }
    }

    /// Fibre tensor on fibre cells, gel tensor on gel cells.
    pub fn from_phases(phases: &[Phase], materials: &MaterialSet) -> Self {
        Self {
            palette: vec![materials.fibre.clone(), materials.gel.clone()],
            index: phases
                .iter()
                .map(|p| match p {
                    Phase::Fibre => 0,
                    Phase::Gel => 1,
                })
                .collect(),
        }
    }

    pub fn new(palette: Vec<SymElasticityTensor>, index: Vec<usize>) -> Result<Self> {
        if index.iter().any(|&i| i >= palette.len()) {
            return Err(Error::Dimension("tensor field index outside its palette".into()));
        }
        Ok(Self { palette, index })
    }

    pub fn n_cells(&self) -> usize {
        self.index.len()
    }

    pub fn palette(&self) -> &[SymElasticityTensor] {
        &self.palette
    }

    pub fn palette_index(&self, cell: usize) -> usize {
        self.index[cell]
    }

    pub fn tensor(&self, cell: usize) -> &SymElasticityTensor {
        &self.palette[self.index[cell]]
    }
}

fn check_dofmap(grid: &StructuredGrid, dofs: &DofMap, what: &str) -> Result<()> {
    if dofs.n_nodes() != grid.n_nodes() {
        return Err(Error::Dimension(format!(
            "{what} dof map covers {} nodes, mesh has {}",
            dofs.n_nodes(),
            grid.n_nodes()
        )));
    }
    Ok(())
}

fn scatter<'a, F>(grid: &StructuredGrid, rows: &DofMap, cols: &DofMap, local: F) -> SparseMatrix
where
    F: Fn(usize) -> Option<&'a DMatrix<f64>> + Sync,
{
    let chunks: Vec<Vec<(usize, usize, f64)>> = (0..grid.n_cells())
        .into_par_iter()
        .map(|cell| {
            let Some(m) = local(cell) else {
                return Vec::new();
            };
            let rd = rows.cell_dofs(grid, cell);
            let cd = cols.cell_dofs(grid, cell);
            let mut out = Vec::with_capacity(rd.len() * cd.len());
            for (i, r) in rd.iter().enumerate() {
                let Some(r) = *r else { continue };
                for (j, c) in cd.iter().enumerate() {
                    let Some(c) = *c else { continue };
                    let v = m[(i, j)];
                    if v != 0.0 {
                        out.push((r, c, v));
                    }
                }
            }
            out
        })
        .collect();
    SparseMatrix::from_triplets(rows.n_dofs(), cols.n_dofs(), chunks.concat())
}

/// `∫ A e(u) : e(v)` over the whole grid.
pub fn assemble_elasticity(
    grid: &StructuredGrid,
    field: &TensorField,
    dofs: &DofMap,
) -> Result<SparseMatrix> {
    check_dofmap(grid, dofs, "displacement")?;
    if field.n_cells() != grid.n_cells() || dofs.ncomp() != grid.dim() {
        return Err(Error::Dimension(format!(
            "tensor field has {} cells for a mesh of {}",
            field.n_cells(),
            grid.n_cells()
        )));
    }
    let e = ElementBasis::new(grid);
    let local: Vec<DMatrix<f64>> = field.palette().iter().map(|t| e.stiffness(t)).collect();
    Ok(scatter(grid, dofs, dofs, |c| Some(&local[field.palette_index(c)])))
}

/// Coupling matrix `B` with `vᵀ B p = ∫_gel alpha p div v`.
pub fn assemble_coupling(
    grid: &StructuredGrid,
    alpha: f64,
    gel_mask: &[bool],
    dofs_u: &DofMap,
    dofs_p: &DofMap,
) -> Result<SparseMatrix> {
    check_dofmap(grid, dofs_u, "displacement")?;
    check_dofmap(grid, dofs_p, "pressure")?;
    if gel_mask.len() != grid.n_cells() {
        return Err(Error::Dimension("gel mask does not match the mesh".into()));
    }
    let e = ElementBasis::new(grid);
    let local = e.coupling(alpha);
    Ok(scatter(grid, dofs_u, dofs_p, |c| gel_mask[c].then_some(&local)))
}

/// Pressure mass `∫_gel c p q` and diffusion `∫_gel K ∇p · ∇q`.
pub fn assemble_mass_and_diffusion(
    grid: &StructuredGrid,
    c: f64,
    k_scaled: &DMatrix<f64>,
    gel_mask: &[bool],
    dofs_p: &DofMap,
) -> Result<(SparseMatrix, SparseMatrix)> {
    check_dofmap(grid, dofs_p, "pressure")?;
    if gel_mask.len() != grid.n_cells() {
        return Err(Error::Dimension("gel mask does not match the mesh".into()));
    }
    if k_scaled.nrows() != grid.dim() || k_scaled.ncols() != grid.dim() {
        return Err(Error::Dimension("permeability does not match the mesh dimension".into()));
    }
    let e = ElementBasis::new(grid);
    let m = e.mass(c);
    let a = e.diffusion(k_scaled);
    Ok((
        scatter(grid, dofs_p, dofs_p, |cell| gel_mask[cell].then_some(&m)),
        scatter(grid, dofs_p, dofs_p, |cell| gel_mask[cell].then_some(&a)),
    ))
}

/// `∫ ∇u : ∇v`, the matrix of the H¹ seminorm for vector fields.
pub fn assemble_vector_laplacian(grid: &StructuredGrid, dofs: &DofMap) -> Result<SparseMatrix> {
    check_dofmap(grid, dofs, "displacement")?;
    let e = ElementBasis::new(grid);
    let local = e.vector_laplacian();
    Ok(scatter(grid, dofs, dofs, |_| Some(&local)))
}

/// `∫ u · v` for vector fields.
pub fn assemble_vector_mass(grid: &StructuredGrid, dofs: &DofMap) -> Result<SparseMatrix> {
    check_dofmap(grid, dofs, "displacement")?;
    let e = ElementBasis::new(grid);
    let scalar = e.mass(1.0);
    let d = dofs.ncomp();
    let n = e.n_nodes();
    let mut local = DMatrix::zeros(d * n, d * n);
    for a in 0..n {
        for b in 0..n {
            for comp in 0..d {
                local[(a * d + comp, b * d + comp)] = scalar[(a, b)];
            }
        }
    }
    Ok(scatter(grid, dofs, dofs, |_| Some(&local)))
}

/// Loads of the unit macroscopic strains: entry `I` is `-∫ Bᵀ A e_I` for the
/// Voigt unit vector `e_I`.
pub fn assemble_strain_loads(
    grid: &StructuredGrid,
    field: &TensorField,
    dofs: &DofMap,
) -> Result<Vec<Vec<f64>>> {
    check_dofmap(grid, dofs, "displacement")?;
    let e = ElementBasis::new(grid);
    let nv = super::tensor::voigt_size(grid.dim());
    let mut loads = Vec::with_capacity(nv);
    for i in 0..nv {
        let mut strain = vec![0.0; nv];
        strain[i] = 1.0;
        let local: Vec<Vec<f64>> = field.palette().iter().map(|t| e.strain_load(t, &strain)).collect();
        let mut f = vec![0.0; dofs.n_dofs()];
        for cell in 0..grid.n_cells() {
            let le = &local[field.palette_index(cell)];
            for (k, d) in dofs.cell_dofs(grid, cell).iter().enumerate() {
                if let Some(d) = d {
                    f[*d] += le[k];
                }
            }
        }
        loads.push(f);
    }
    Ok(loads)
}

fn cell_origin(grid: &StructuredGrid, cell: usize) -> [f64; 3] {
    let c = grid.cell_coords(cell);
    let h = grid.spacing();
    let mut o = [0.0; 3];
    for axis in 0..grid.dim() {
        o[axis] = c[axis] as f64 * h[axis];
    }
    o
}

/// `∫ b(cell, x) · v` with the density evaluated at the quadrature points.
pub fn assemble_vector_load<F>(grid: &StructuredGrid, dofs: &DofMap, density: F) -> Vec<f64>
where
    F: Fn(usize, &[f64; 3]) -> Option<[f64; 3]> + Sync,
{
    let e = ElementBasis::new(grid);
    let d = dofs.ncomp();
    let locals: Vec<Option<Vec<f64>>> = (0..grid.n_cells())
        .into_par_iter()
        .map(|cell| {
            let origin = cell_origin(grid, cell);
            let mut le = vec![0.0; d * e.n_nodes()];
            let mut any = false;
            for q in 0..e.n_qp() {
                let x = e.qp_position(&origin, q);
                let Some(b) = density(cell, &x) else { continue };
                any = true;
                for a in 0..e.n_nodes() {
                    let w = e.weight(q) * e.value(q, a);
                    for comp in 0..d {
                        le[a * d + comp] += w * b[comp];
                    }
                }
            }
            any.then_some(le)
        })
        .collect();
    let mut f = vec![0.0; dofs.n_dofs()];
    for (cell, le) in locals.iter().enumerate() {
        let Some(le) = le else { continue };
        for (k, dof) in dofs.cell_dofs(grid, cell).iter().enumerate() {
            if let Some(dof) = dof {
                f[*dof] += le[k];
            }
        }
    }
    f
}

/// `∫ s(cell, x) q` for a scalar density.
pub fn assemble_scalar_load<F>(grid: &StructuredGrid, dofs: &DofMap, density: F) -> Vec<f64>
where
    F: Fn(usize, &[f64; 3]) -> Option<f64> + Sync,
{
    let e = ElementBasis::new(grid);
    let locals: Vec<Option<Vec<f64>>> = (0..grid.n_cells())
        .into_par_iter()
        .map(|cell| {
            let origin = cell_origin(grid, cell);
            let mut le = vec![0.0; e.n_nodes()];
            let mut any = false;
            for q in 0..e.n_qp() {
                let x = e.qp_position(&origin, q);
                let Some(s) = density(cell, &x) else { continue };
                any = true;
                for (a, l) in le.iter_mut().enumerate() {
                    *l += e.weight(q) * e.value(q, a) * s;
                }
            }
            any.then_some(le)
        })
        .collect();
    let mut f = vec![0.0; dofs.n_dofs()];
    for (cell, le) in locals.iter().enumerate() {
        let Some(le) = le else { continue };
        for (k, dof) in dofs.cell_dofs(grid, cell).iter().enumerate() {
            if let Some(dof) = dof {
                f[*dof] += le[k];
            }
        }
    }
    f
}

/// Load of the phase-wise force densities `f` (fibre) and `g` (gel) at time `t`.
pub fn body_force_load(
    grid: &StructuredGrid,
    phases: &[Phase],
    dofs: &DofMap,
    sources: &SourceFields,
    t: f64,
    time_derivative: bool,
) -> Vec<f64> {
    assemble_vector_load(grid, dofs, |cell, x| {
        Some(sources.force(phases[cell], t, &x[..grid.dim()], time_derivative))
    })
}

/// Load of the gel pressure source `h` at time `t`.
pub fn pressure_source_load(
    grid: &StructuredGrid,
    gel_mask: &[bool],
    dofs_p: &DofMap,
    sources: &SourceFields,
    t: f64,
    time_derivative: bool,
) -> Vec<f64> {
    assemble_scalar_load(grid, dofs_p, |cell, x| {
        gel_mask[cell].then(|| sources.pressure_source(t, &x[..grid.dim()], time_derivative))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::dofmap::{build_dofmap, ConstraintSpec};

    #[test]
    fn uniform_stretch_of_unit_gel_element() {
        let grid = StructuredGrid::unit(2, 1).unwrap();
        let mask = vec![true];
        // no constraints at all: every node touches the single gel cell
        let du_free = build_dofmap(&grid, 2, ConstraintSpec::UnconstrainedGelPressure, Some(&mask));
        let dp = build_dofmap(&grid, 1, ConstraintSpec::UnconstrainedGelPressure, Some(&mask));
        let b = assemble_coupling(&grid, 0.7, &mask, &du_free, &dp).unwrap();
        let s = 0.3;
        let mut v = vec![0.0; 8];
        for a in 0..4 {
            v[2 * a] = s * (a & 1) as f64;
        }
        let bp = b.matvec(&[1.0; 4]);
        let val: f64 = bp.iter().zip(&v).map(|(x, y)| x * y).sum();
        assert!((val - 0.7 * s).abs() < 1e-14);
    }
}
