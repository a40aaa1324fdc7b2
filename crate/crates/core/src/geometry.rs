//! Voxelized periodic unit cells and ε-periodic composite meshes.
//!
//! Every mesh here is a uniform axis-aligned grid of square (cubic) cells with
//! lexicographic numbering, x fastest. A phase label is attached to each cell
//! by sampling the inclusion geometry at the cell centroid.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Fibre,
    Gel,
}

/// Shape of the gel inclusion inside the unit cell `(0,1)^dim`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InclusionSpec {
    /// Ball of the given radius centred in the cell.
    Ball { radius: f64 },
    /// Gel layer of thickness `fraction`, centred in the cell, with normal
    /// along `normal`. The layer touches the cell faces, so this geometry is
    /// only meaningful for the effective-tensor oracles.
    Laminate { fraction: f64, normal: usize },
}

impl InclusionSpec {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match *self {
            InclusionSpec::Ball { radius } => {
                if !(radius > 0.0) {
                    return Err(Error::Geometry(format!(
                        "ball radius must be positive, got {radius}"
                    )));
                }
                if radius >= 0.5 {
                    return Err(Error::Geometry(format!(
                        "ball radius {radius} >= 0.5 lets the inclusion touch the cell boundary"
                    )));
                }
            }
            InclusionSpec::Laminate { fraction, normal } => {
                if !(fraction > 0.0 && fraction < 1.0) {
                    return Err(Error::Geometry(format!(
                        "laminate fraction must lie in (0, 1), got {fraction}"
                    )));
                }
                if normal >= dim {
                    return Err(Error::Geometry(format!(
                        "laminate normal axis {normal} out of range for dim {dim}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn contains(&self, point: &[f64]) -> bool {
        match *self {
            InclusionSpec::Ball { radius } => {
                point.iter().map(|&y| (y - 0.5) * (y - 0.5)).sum::<f64>() < radius * radius
            }
            InclusionSpec::Laminate { fraction, normal } => {
                (point[normal] - 0.5).abs() < 0.5 * fraction
            }
        }
    }

    /// Analytic gel volume fraction of the continuous geometry.
    pub fn analytic_gel_fraction(&self, dim: usize) -> f64 {
        match *self {
            InclusionSpec::Ball { radius } => {
                if dim == 2 {
                    std::f64::consts::PI * radius * radius
                } else {
                    4.0 / 3.0 * std::f64::consts::PI * radius.powi(3)
                }
            }
            InclusionSpec::Laminate { fraction, .. } => fraction,
        }
    }
}

/// Uniform tensor-product grid on `[0, extent_0] x ... x [0, extent_{dim-1}]`.
///
/// Unused axes (axis >= dim) carry one cell and one node so that index
/// arithmetic is the same in 2D and 3D.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructuredGrid {
    dim: usize,
    cells: [usize; 3],
    spacing: [f64; 3],
}

impl StructuredGrid {
    pub fn new(dim: usize, cells: &[usize], extent: &[f64]) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Dimension(format!("dim must be 2 or 3, got {dim}")));
        }
        if cells.len() != dim || extent.len() != dim {
            return Err(Error::Dimension(format!(
                "expected {dim} cell counts and extents, got {} and {}",
                cells.len(),
                extent.len()
            )));
        }
        let mut c = [1usize; 3];
        let mut h = [1.0f64; 3];
        for axis in 0..dim {
            if cells[axis] == 0 {
                return Err(Error::Geometry(format!("axis {axis} has zero cells")));
            }
            if !(extent[axis] > 0.0) || !extent[axis].is_finite() {
                return Err(Error::Geometry(format!(
                    "axis {axis} has non-positive extent {}",
                    extent[axis]
                )));
            }
            c[axis] = cells[axis];
            h[axis] = extent[axis] / cells[axis] as f64;
        }
        Ok(Self {
            dim,
            cells: c,
            spacing: h,
        })
    }

    pub fn unit(dim: usize, resolution: usize) -> Result<Self> {
        Self::new(dim, &vec![resolution; dim], &vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells_along(&self, axis: usize) -> usize {
        self.cells[axis]
    }

    pub fn nodes_along(&self, axis: usize) -> usize {
        if axis < self.dim {
            self.cells[axis] + 1
        } else {
            1
        }
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing[..self.dim]
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.spacing[axis] * self.cells[axis] as f64
    }

    pub fn n_cells(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn n_nodes(&self) -> usize {
        (0..3).map(|a| self.nodes_along(a)).product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing[..self.dim].iter().product()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|a| self.extent(a)).product()
    }

    pub fn nodes_per_cell(&self) -> usize {
        1 << self.dim
    }

    pub fn cell_index(&self, c: [usize; 3]) -> usize {
        c[0] + self.cells[0] * (c[1] + self.cells[1] * c[2])
    }

    pub fn cell_coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.cells[0];
        let rest = idx / self.cells[0];
        [i, rest % self.cells[1], rest / self.cells[1]]
    }

    pub fn node_index(&self, n: [usize; 3]) -> usize {
        let nx = self.nodes_along(0);
        let ny = self.nodes_along(1);
        n[0] + nx * (n[1] + ny * n[2])
    }

    pub fn node_coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.nodes_along(0);
        let ny = self.nodes_along(1);
        let i = idx % nx;
        let rest = idx / nx;
        [i, rest % ny, rest / ny]
    }

    pub fn node_position(&self, idx: usize) -> [f64; 3] {
        let c = self.node_coords(idx);
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = c[axis] as f64 * self.spacing[axis];
        }
        x
    }

    pub fn cell_centroid(&self, idx: usize) -> [f64; 3] {
        let c = self.cell_coords(idx);
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = (c[axis] as f64 + 0.5) * self.spacing[axis];
        }
        x
    }

    /// Global node indices of a cell, local node `a` sitting at offset bit `axis` of `a`.
    pub fn cell_nodes(&self, cell: usize) -> [usize; 8] {
        let c = self.cell_coords(cell);
        let mut out = [0usize; 8];
        for (a, slot) in out.iter_mut().enumerate().take(self.nodes_per_cell()) {
            let mut n = c;
            for (axis, coord) in n.iter_mut().enumerate().take(self.dim) {
                *coord += (a >> axis) & 1;
            }
            *slot = self.node_index(n);
        }
        out
    }

    pub fn is_boundary_node(&self, idx: usize) -> bool {
        let n = self.node_coords(idx);
        (0..self.dim).any(|a| n[a] == 0 || n[a] == self.cells[a])
    }

    /// Cell containing `x` and the local coordinates in `[0,1]^dim`.
    /// Points on the far boundary are assigned to the last cell.
    pub fn locate(&self, x: &[f64]) -> (usize, [f64; 3]) {
        let mut c = [0usize; 3];
        let mut xi = [0.0; 3];
        for axis in 0..self.dim {
            let s = x[axis] / self.spacing[axis];
            let i = (s.floor().max(0.0) as usize).min(self.cells[axis] - 1);
            c[axis] = i;
            xi[axis] = (s - i as f64).clamp(0.0, 1.0);
        }
        (self.cell_index(c), xi)
    }

    /// Face neighbours of a cell, optionally wrapping around periodically.
    pub fn cell_neighbours(&self, cell: usize, periodic: bool) -> Vec<usize> {
        let c = self.cell_coords(cell);
        let mut out = Vec::with_capacity(2 * self.dim);
        for axis in 0..self.dim {
            let n = self.cells[axis];
            for delta in [-1i64, 1] {
                let v = c[axis] as i64 + delta;
                let v = if v < 0 || v >= n as i64 {
                    if !periodic || n < 2 {
                        continue;
                    }
                    (v + n as i64) as usize % n
                } else {
                    v as usize
                };
                let mut nb = c;
                nb[axis] = v;
                out.push(self.cell_index(nb));
            }
        }
        out
    }
}

/// Label connected components of cells with the given phase (face connectivity).
/// Returns the per-cell label (`usize::MAX` for other phases) and the count.
pub fn phase_components(
    grid: &StructuredGrid,
    phase: &[Phase],
    target: Phase,
    periodic: bool,
) -> (Vec<usize>, usize) {
    let mut label = vec![usize::MAX; phase.len()];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..phase.len() {
        if phase[start] != target || label[start] != usize::MAX {
            continue;
        }
        label[start] = count;
        stack.push(start);
        while let Some(cell) = stack.pop() {
            for nb in grid.cell_neighbours(cell, periodic) {
                if phase[nb] == target && label[nb] == usize::MAX {
                    label[nb] = count;
                    stack.push(nb);
                }
            }
        }
        count += 1;
    }
    (label, count)
}

/// Voxelized periodicity cell `Y = (0,1)^dim` with fibre/gel labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicGrid {
    grid: StructuredGrid,
    phase: Vec<Phase>,
    inclusion: Option<InclusionSpec>,
}

/// Build the voxelized unit cell: cells whose centroid lies inside the
/// inclusion are gel, all others fibre.
pub fn build_unit_cell(dim: usize, resolution: usize, spec: InclusionSpec) -> Result<PeriodicGrid> {
    if resolution < 4 {
        return Err(Error::Geometry(format!(
            "unit-cell resolution must be at least 4, got {resolution}"
        )));
    }
    spec.validate(dim)?;
    let grid = StructuredGrid::unit(dim, resolution)?;
    let phase = (0..grid.n_cells())
        .map(|c| {
            if spec.contains(&grid.cell_centroid(c)[..dim]) {
                Phase::Gel
            } else {
                Phase::Fibre
            }
        })
        .collect::<Vec<_>>();
    let cell = PeriodicGrid {
        grid,
        phase,
        inclusion: Some(spec),
    };
    if !cell.phase.contains(&Phase::Gel) {
        return Err(Error::Geometry(format!(
            "inclusion {spec:?} does not cover any cell centroid at resolution {resolution}"
        )));
    }
    if matches!(spec, InclusionSpec::Ball { .. }) && !cell.gel_strictly_interior() {
        return Err(Error::Geometry(format!(
            "ball inclusion {spec:?} reaches the boundary cell layer at resolution {resolution}"
        )));
    }
    Ok(cell)
}

impl PeriodicGrid {
    /// Single-phase cell, used for homogeneous reference runs.
    pub fn homogeneous(dim: usize, resolution: usize, phase: Phase) -> Result<Self> {
        let grid = StructuredGrid::unit(dim, resolution)?;
        let n = grid.n_cells();
        Ok(Self {
            grid,
            phase: vec![phase; n],
            inclusion: None,
        })
    }

    /// Cell from explicit labels (lexicographic, x fastest).
    pub fn from_phases(dim: usize, resolution: usize, phase: Vec<Phase>) -> Result<Self> {
        let grid = StructuredGrid::unit(dim, resolution)?;
        if phase.len() != grid.n_cells() {
            return Err(Error::Dimension(format!(
                "expected {} phase labels, got {}",
                grid.n_cells(),
                phase.len()
            )));
        }
        Ok(Self {
            grid,
            phase,
            inclusion: None,
        })
    }

    pub fn grid(&self) -> &StructuredGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn resolution(&self) -> usize {
        self.grid.cells_along(0)
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phase
    }

    pub fn inclusion(&self) -> Option<InclusionSpec> {
        self.inclusion
    }

    pub fn is_laminate(&self) -> bool {
        matches!(self.inclusion, Some(InclusionSpec::Laminate { .. }))
    }

    pub fn gel_mask(&self) -> Vec<bool> {
        self.phase.iter().map(|&p| p == Phase::Gel).collect()
    }

    /// Phase at a point of the unit cell (coordinates taken modulo 1).
    pub fn phase_at_cell(&self, c: [usize; 3]) -> Phase {
        self.phase[self.grid.cell_index(c)]
    }

    /// True when no gel cell lies in the outermost cell layer.
    pub fn gel_strictly_interior(&self) -> bool {
        (0..self.grid.n_cells()).all(|c| {
            if self.phase[c] == Phase::Fibre {
                return true;
            }
            let cc = self.grid.cell_coords(c);
            (0..self.dim()).all(|a| cc[a] > 0 && cc[a] + 1 < self.resolution())
        })
    }

    /// Fibre phase is a single face-connected component (with periodic wrap).
    pub fn fibre_connected(&self) -> bool {
        phase_components(&self.grid, &self.phase, Phase::Fibre, true).1 <= 1
    }

    pub fn gel_components(&self) -> usize {
        phase_components(&self.grid, &self.phase, Phase::Gel, false).1
    }
}

/// Fibre and gel volume fractions; they sum to one exactly.
pub fn phase_fractions(phase: &[Phase]) -> (f64, f64) {
    if phase.is_empty() {
        return (1.0, 0.0);
    }
    let gel = phase.iter().filter(|&&p| p == Phase::Gel).count();
    let gel_fraction = gel as f64 / phase.len() as f64;
    (1.0 - gel_fraction, gel_fraction)
}

/// ε-periodic composite on an axis-aligned box, obtained by tiling a unit cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositeMesh {
    grid: StructuredGrid,
    epsilon: f64,
    cells_per_period: usize,
    tiles: [usize; 3],
    phase: Vec<Phase>,
}

/// Tile `unit_cell` with period `epsilon` over `[0, macro_extent]`. Each unit
/// cell voxel is split into `oversample^dim` DNS cells.
pub fn build_dns_mesh(
    unit_cell: &PeriodicGrid,
    epsilon: f64,
    macro_extent: &[f64],
    oversample: usize,
) -> Result<CompositeMesh> {
    let dim = unit_cell.dim();
    if macro_extent.len() != dim {
        return Err(Error::Dimension(format!(
            "macro extent has {} entries for dim {dim}",
            macro_extent.len()
        )));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Geometry(format!("epsilon must be positive, got {epsilon}")));
    }
    if oversample == 0 {
        return Err(Error::Geometry("oversample must be at least 1".into()));
    }
    let mut tiles = [1usize; 3];
    for (axis, &ext) in macro_extent.iter().enumerate() {
        let ratio = ext / epsilon;
        let rounded = ratio.round();
        if rounded < 1.0 || (ratio - rounded).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::Tiling { axis, ratio });
        }
        tiles[axis] = rounded as usize;
    }
    let cells_per_period = unit_cell.resolution() * oversample;
    let cells: Vec<usize> = (0..dim).map(|a| tiles[a] * cells_per_period).collect();
    let grid = StructuredGrid::new(dim, &cells, macro_extent)?;
    let phase = (0..grid.n_cells())
        .map(|c| {
            let cc = grid.cell_coords(c);
            let mut local = [0usize; 3];
            for a in 0..dim {
                local[a] = (cc[a] % cells_per_period) / oversample;
            }
            unit_cell.phase_at_cell(local)
        })
        .collect();
    Ok(CompositeMesh {
        grid,
        epsilon,
        cells_per_period,
        tiles,
        phase,
    })
}

impl CompositeMesh {
    pub fn grid(&self) -> &StructuredGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn cells_per_period(&self) -> usize {
        self.cells_per_period
    }

    pub fn tiles(&self) -> &[usize] {
        &self.tiles[..self.dim()]
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phase
    }

    pub fn gel_mask(&self) -> Vec<bool> {
        self.phase.iter().map(|&p| p == Phase::Gel).collect()
    }

    pub fn gel_components(&self) -> usize {
        phase_components(&self.grid, &self.phase, Phase::Gel, false).1
    }

    /// Index of the ε-cell (tile) a DNS cell belongs to.
    pub fn tile_of_cell(&self, cell: usize) -> usize {
        let c = self.grid.cell_coords(cell);
        let mut t = [0usize; 3];
        for a in 0..self.dim() {
            t[a] = c[a] / self.cells_per_period;
        }
        t[0] + self.tiles[0] * (t[1] + self.tiles[1] * t[2])
    }

    pub fn n_tiles(&self) -> usize {
        self.tiles.iter().product()
    }
}

/// Uniform macroscopic grid on Ω without phase labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroMesh {
    grid: StructuredGrid,
}

impl MacroMesh {
    pub fn new(dim: usize, extent: &[f64], resolution: &[usize]) -> Result<Self> {
        if resolution.iter().any(|&r| r < 1) {
            return Err(Error::Geometry("macro resolution must be at least 1 per axis".into()));
        }
        Ok(Self {
            grid: StructuredGrid::new(dim, resolution, extent)?,
        })
    }

    pub fn grid(&self) -> &StructuredGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_gel_fraction_close_to_disk_area() {
        let cell = build_unit_cell(2, 8, InclusionSpec::Ball { radius: 0.25 }).unwrap();
        let (_, gel) = phase_fractions(cell.phases());
        assert!((0.14..=0.26).contains(&gel), "gel fraction {gel}");
        assert!(cell.gel_strictly_interior());
        assert!(cell.fibre_connected());
        assert_eq!(cell.gel_components(), 1);
    }

    #[test]
    fn degenerate_and_touching_balls_are_rejected() {
        assert!(build_unit_cell(2, 8, InclusionSpec::Ball { radius: 0.0 }).is_err());
        assert!(build_unit_cell(2, 8, InclusionSpec::Ball { radius: 0.5 }).is_err());
        assert!(build_unit_cell(2, 8, InclusionSpec::Ball { radius: 0.6 }).is_err());
        assert!(build_unit_cell(2, 3, InclusionSpec::Ball { radius: 0.25 }).is_err());
        // voxelization puts gel into the boundary layer
        assert!(build_unit_cell(2, 8, InclusionSpec::Ball { radius: 0.45 }).is_err());
    }

    #[test]
    fn laminate_columns_are_exact() {
        let cell = build_unit_cell(
            2,
            8,
            InclusionSpec::Laminate {
                fraction: 0.5,
                normal: 0,
            },
        )
        .unwrap();
        let g = cell.grid();
        for i in 0..8 {
            let gel = cell.phase_at_cell([i, 0, 0]) == Phase::Gel;
            assert_eq!(gel, (2..6).contains(&i), "column {i}");
            for j in 0..8 {
                assert_eq!(cell.phases()[g.cell_index([i, j, 0])], cell.phase_at_cell([i, 0, 0]));
            }
        }
        assert_eq!(phase_fractions(cell.phases()), (0.5, 0.5));
    }

    #[test]
    fn fractions_of_homogeneous_and_fine_ball() {
        let all = PeriodicGrid::homogeneous(2, 8, Phase::Fibre).unwrap();
        assert_eq!(phase_fractions(all.phases()), (1.0, 0.0));
        let fine = build_unit_cell(2, 64, InclusionSpec::Ball { radius: 0.25 }).unwrap();
        let (f, g) = phase_fractions(fine.phases());
        assert_eq!(f + g, 1.0);
        assert!((g - std::f64::consts::PI / 16.0).abs() <= 0.01);
    }

    #[test]
    fn ball_fraction_converges_under_refinement() {
        let spec = InclusionSpec::Ball { radius: 0.3 };
        let exact = spec.analytic_gel_fraction(2);
        let errs: Vec<f64> = [16, 64, 256]
            .iter()
            .map(|&n| {
                let c = build_unit_cell(2, n, spec).unwrap();
                (phase_fractions(c.phases()).1 - exact).abs()
            })
            .collect();
        assert!(errs[2] < errs[0]);
        // O(1/resolution) envelope
        for (e, n) in errs.iter().zip([16.0, 64.0, 256.0]) {
            assert!(*e <= 2.0 / n, "error {e} at {n}");
        }
        let c3 = build_unit_cell(3, 32, InclusionSpec::Ball { radius: 0.3 }).unwrap();
        let g3 = phase_fractions(c3.phases()).1;
        assert!((g3 - spec.analytic_gel_fraction(3)).abs() < 2.0 / 32.0);
        assert!(c3.fibre_connected());
    }

    #[test]
    fn dns_tiling() {
        let cell = build_unit_cell(2, 8, InclusionSpec::Ball { radius: 0.25 }).unwrap();
        let mesh = build_dns_mesh(&cell, 0.5, &[1.0, 1.0], 1).unwrap();
        assert_eq!(mesh.grid().cells_along(0), 16);
        assert_eq!(mesh.grid().cells_along(1), 16);
        assert_eq!(mesh.tiles(), &[2, 2]);

        let mesh3 = build_dns_mesh(&cell, 1.0 / 3.0, &[1.0, 1.0], 1).unwrap();
        assert_eq!(mesh3.gel_components(), 9);

        match build_dns_mesh(&cell, 0.3, &[1.0, 1.0], 1) {
            Err(Error::Tiling { axis, .. }) => assert_eq!(axis, 0),
            other => panic!("expected tiling error, got {other:?}"),
        }
    }

    #[test]
    fn dns_phase_is_periodic_with_oversampling() {
        let cell = build_unit_cell(2, 8, InclusionSpec::Ball { radius: 0.3 }).unwrap();
        let mesh = build_dns_mesh(&cell, 0.25, &[1.0, 0.5], 2).unwrap();
        let g = mesh.grid();
        let p = mesh.cells_per_period();
        assert_eq!(p, 16);
        for c in 0..g.n_cells() {
            let cc = g.cell_coords(c);
            if cc[0] + p < g.cells_along(0) {
                let shifted = g.cell_index([cc[0] + p, cc[1], 0]);
                assert_eq!(mesh.phases()[c], mesh.phases()[shifted]);
            }
            let local = [(cc[0] % p) / 2, (cc[1] % p) / 2, 0];
            assert_eq!(mesh.phases()[c], cell.phase_at_cell(local));
        }
        assert_eq!(mesh.gel_components(), mesh.n_tiles());
    }

    #[test]
    fn locate_and_node_indexing_round_trip() {
        let g = StructuredGrid::new(3, &[3, 4, 5], &[1.0, 2.0, 2.5]).unwrap();
        for n in 0..g.n_nodes() {
            assert_eq!(g.node_index(g.node_coords(n)), n);
        }
        let (cell, xi) = g.locate(&[0.5, 1.25, 2.5]);
        assert_eq!(g.cell_coords(cell), [1, 2, 4]);
        assert!((xi[0] - 0.5).abs() < 1e-12 && (xi[1] - 0.5).abs() < 1e-12);
        assert!((xi[2] - 1.0).abs() < 1e-12);
    }
}
