use nalgebra::DMatrix;

use porohom::cell::{effective_elasticity, solve_cell_problems};
use porohom::fem::{MaterialSet, SolverSettings, SymElasticityTensor};
use porohom::geometry::{build_unit_cell, phase_fractions, InclusionSpec};
use porohom::verify::laminate_exact;

fn scalar_pair() -> MaterialSet {
    MaterialSet::new(
        SymElasticityTensor::scalar_diagonal(2, 1.0).unwrap(),
        SymElasticityTensor::scalar_diagonal(2, 3.0).unwrap(),
        1.0,
        1.0,
        DMatrix::identity(2, 2),
    )
    .unwrap()
}

/// `(error against the requested fraction, error against the voxel fraction)`.
fn errors(res: usize, fraction: f64) -> (f64, f64) {
    let m = scalar_pair();
    let unit = build_unit_cell(2, res, InclusionSpec::Laminate { fraction, normal: 0 }).unwrap();
    let cells = solve_cell_problems(&unit, &m, &SolverSettings::default()).unwrap();
    let a = effective_elasticity(&cells).unwrap();
    let (_, voxel) = phase_fractions(unit.phases());
    let err = |exact: Vec<f64>| (0..3).map(|i| (a.voigt()[(i, i)] - exact[i]).abs() / exact[i]).fold(0.0, f64::max);
    (err(laminate_exact(&m, fraction, 0).unwrap()), err(laminate_exact(&m, voxel, 0).unwrap()))
}

#[test]
fn discrete_laminate_is_exact_for_its_voxel_fraction() {
    for fraction in [0.3, 0.37, 0.5] {
        for res in [8, 10, 16, 20, 32, 40, 64] {
            let (_, voxel) = errors(res, fraction);
            assert!(voxel < 1e-10, "fraction {fraction}, resolution {res}: {voxel:e}");
        }
    }
}

#[test]
fn error_against_requested_fraction_comes_from_voxelization_only() {
    // resolutions where the layer boundary falls on grid lines
    for (fraction, res) in [(0.3, 10), (0.3, 20), (0.3, 40), (0.5, 16), (0.5, 64)] {
        assert!(errors(res, fraction).0 < 1e-10);
    }
    // centroid sampling is not monotone under refinement
    let coarse = errors(16, 0.37).0;
    let fine = errors(20, 0.37).0;
    assert!(fine > coarse);
    for res in [8, 16, 32, 64] {
        let unit = build_unit_cell(2, res, InclusionSpec::Laminate { fraction: 0.37, normal: 0 }).unwrap();
        assert!((phase_fractions(unit.phases()).1 - 0.37).abs() <= 1.0 / res as f64);
    }
}
