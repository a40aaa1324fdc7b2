//! Node-to-dof numbering with Dirichlet, periodic and gel-support constraints.

use serde::{Deserialize, Serialize};

use crate::geometry::StructuredGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintSpec {
    /// Homogeneous Dirichlet data on every boundary node.
    DirichletBoundary,
    /// Opposite faces identified; one zero-mean group per component.
    PeriodicMeanZero,
    /// Scalar field living on nodes touched by at least one gel cell.
    UnconstrainedGelPressure,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeConstraint {
    Free,
    DirichletZero,
    PeriodicSlave(usize),
    /// Every component of the node belongs to the zero-mean group of its component.
    MeanZeroGroup(usize),
    /// Outside the support of the field (pressure away from gel).
    Inactive,
}

#[derive(Clone, Debug)]
pub struct DofMap {
    ncomp: usize,
    kinds: Vec<NodeConstraint>,
    base: Vec<Option<usize>>,
    n_dofs: usize,
    mean_zero: bool,
}

/// Node-major numbering: a node that owns dofs gets `ncomp` consecutive indices.
pub fn build_dofmap(
    grid: &StructuredGrid,
    ncomp: usize,
    spec: ConstraintSpec,
    gel_mask: Option<&[bool]>,
) -> DofMap {
    let n = grid.n_nodes();
    let mut kinds = vec![NodeConstraint::Free; n];
    match spec {
        ConstraintSpec::DirichletBoundary => {
            for (i, k) in kinds.iter_mut().enumerate() {
                if grid.is_boundary_node(i) {
                    *k = NodeConstraint::DirichletZero;
                }
            }
        }
        ConstraintSpec::PeriodicMeanZero => {
            for (i, k) in kinds.iter_mut().enumerate() {
                let mut c = grid.node_coords(i);
                let mut wrapped = false;
                for (axis, ci) in c.iter_mut().enumerate().take(grid.dim()) {
                    if *ci == grid.cells_along(axis) {
                        *ci = 0;
                        wrapped = true;
                    }
                }
                *k = if wrapped {
                    NodeConstraint::PeriodicSlave(grid.node_index(c))
                } else {
                    NodeConstraint::MeanZeroGroup(0)
                };
            }
        }
        ConstraintSpec::UnconstrainedGelPressure => {
            let mask = gel_mask.expect("gel pressure map needs a gel mask");
            kinds.iter_mut().for_each(|k| *k = NodeConstraint::Inactive);
            for (cell, &gel) in mask.iter().enumerate() {
                if gel {
                    for &node in &grid.cell_nodes(cell)[..grid.nodes_per_cell()] {
                        kinds[node] = NodeConstraint::Free;
                    }
                }
            }
        }
    }
    let mut base = vec![None; n];
    let mut next = 0;
    for i in 0..n {
        if matches!(kinds[i], NodeConstraint::Free | NodeConstraint::MeanZeroGroup(_)) {
            base[i] = Some(next);
            next += ncomp;
        }
    }
    for i in 0..n {
        if let NodeConstraint::PeriodicSlave(m) = kinds[i] {
            base[i] = base[m];
        }
    }
    DofMap {
        ncomp,
        kinds,
        base,
        n_dofs: next,
        mean_zero: spec == ConstraintSpec::PeriodicMeanZero,
    }
}

impl DofMap {
    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn n_nodes(&self) -> usize {
        self.kinds.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn kind(&self, node: usize) -> NodeConstraint {
        self.kinds[node]
    }

    pub fn dof(&self, node: usize, comp: usize) -> Option<usize> {
        self.base[node].map(|b| b + comp)
    }

    pub fn is_active(&self, node: usize) -> bool {
        self.base[node].is_some()
    }

    pub fn has_mean_zero(&self) -> bool {
        self.mean_zero
    }

    /// Dof lists of the zero-mean groups (one per component), empty without periodicity.
    pub fn mean_zero_groups(&self) -> Vec<Vec<usize>> {
        if !self.mean_zero {
            return Vec::new();
        }
        (0..self.ncomp)
            .map(|c| (0..self.n_dofs / self.ncomp).map(|k| k * self.ncomp + c).collect())
            .collect()
    }

    /// Nodal values (`node * ncomp + comp`) from a dof vector; constrained nodes get 0.
    pub fn expand(&self, dofs: &[f64]) -> Vec<f64> {
        assert_eq!(dofs.len(), self.n_dofs);
        let mut out = vec![0.0; self.n_nodes() * self.ncomp];
        for node in 0..self.n_nodes() {
            if let Some(b) = self.base[node] {
                out[node * self.ncomp..(node + 1) * self.ncomp]
                    .copy_from_slice(&dofs[b..b + self.ncomp]);
            }
        }
        out
    }

    /// Samples a nodal function into a dof vector (each dof takes its owner's value).
    pub fn restrict(&self, nodal: &[f64]) -> Vec<f64> {
        assert_eq!(nodal.len(), self.n_nodes() * self.ncomp);
        let mut out = vec![0.0; self.n_dofs];
        for node in 0..self.n_nodes() {
            if matches!(self.kinds[node], NodeConstraint::Free | NodeConstraint::MeanZeroGroup(_)) {
                let b = self.base[node].unwrap();
                out[b..b + self.ncomp]
                    .copy_from_slice(&nodal[node * self.ncomp..(node + 1) * self.ncomp]);
            }
        }
        out
    }

    /// Global dofs of a cell, in element order (`a * ncomp + comp`).
    pub fn cell_dofs(&self, grid: &StructuredGrid, cell: usize) -> Vec<Option<usize>> {
        let nodes = grid.cell_nodes(cell);
        let mut out = Vec::with_capacity(grid.nodes_per_cell() * self.ncomp);
        for &node in &nodes[..grid.nodes_per_cell()] {
            for comp in 0..self.ncomp {
                out.push(self.dof(node, comp));
            }
        }
        out
    }

    /// Nodes owning dofs (masters and free nodes) in dof order.
    pub fn owner_nodes(&self) -> Vec<usize> {
        let mut owners = vec![0; self.n_dofs / self.ncomp.max(1)];
        for node in 0..self.n_nodes() {
            if matches!(self.kinds[node], NodeConstraint::Free | NodeConstraint::MeanZeroGroup(_)) {
                owners[self.base[node].unwrap() / self.ncomp] = node;
            }
        }
        owners
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirichlet_on_four_by_four_keeps_nine_interior_nodes() {
        let grid = StructuredGrid::unit(2, 4).unwrap();
        let d = build_dofmap(&grid, 1, ConstraintSpec::DirichletBoundary, None);
        assert_eq!(d.n_dofs(), 9);
    }

    #[test]
    fn periodic_identification_matches_explicit_enumeration() {
        let grid = StructuredGrid::unit(2, 4).unwrap();
        let d = build_dofmap(&grid, 2, ConstraintSpec::PeriodicMeanZero, None);
        // unique nodes: residues (i mod 4, j mod 4) of the 5x5 lattice
        let mut unique = std::collections::BTreeSet::new();
        for i in 0..5 {
            for j in 0..5 {
                unique.insert((i % 4, j % 4));
            }
        }
        assert_eq!(d.n_dofs(), 2 * unique.len());
        assert_eq!(d.n_dofs(), 32);
        let corner = grid.node_index([4, 4, 0]);
        assert_eq!(d.dof(corner, 1), d.dof(0, 1));
        assert_eq!(d.mean_zero_groups().len(), 2);
    }

    #[test]
    fn gel_pressure_on_all_fibre_mesh_is_empty() {
        let grid = StructuredGrid::unit(2, 4).unwrap();
        let mask = vec![false; grid.n_cells()];
        let d = build_dofmap(&grid, 1, ConstraintSpec::UnconstrainedGelPressure, Some(&mask));
        assert_eq!(d.n_dofs(), 0);
    }

    #[test]
    fn expand_restrict_round_trip() {
        let grid = StructuredGrid::unit(2, 3).unwrap();
        let d = build_dofmap(&grid, 2, ConstraintSpec::PeriodicMeanZero, None);
        let x: Vec<f64> = (0..d.n_dofs()).map(|i| i as f64).collect();
        assert_eq!(d.restrict(&d.expand(&x)), x);
    }
}
