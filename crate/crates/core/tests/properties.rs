use nalgebra::DMatrix;
use proptest::prelude::*;

use porohom::cell::{effective_elasticity, solve_cell_problems};
use porohom::fem::sparse::dot;
use porohom::fem::tensor::symmetric_min_eigenvalue;
use porohom::fem::{MaterialSet, SolverSettings, SourceFields, SymElasticityTensor};
use porohom::geometry::{build_dns_mesh, build_unit_cell, InclusionSpec, PeriodicGrid};
use porohom::operators::EpsilonProblem;
use porohom::simulate::{dns_run, TimeGrid};
use porohom::verify::{sandwich_margins, voigt_reuss};

fn unit(res: usize, radius: f64) -> PeriodicGrid {
    build_unit_cell(2, res, InclusionSpec::Ball { radius }).unwrap()
}

fn problem(m: MaterialSet) -> EpsilonProblem {
    EpsilonProblem::new(build_dns_mesh(&unit(4, 0.3), 0.5, &[1.0, 1.0], 1).unwrap(), m).unwrap()
}

fn vector(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, n)
}

fn spd(dim: usize) -> impl Strategy<Value = SymElasticityTensor> {
    let n = if dim == 2 { 3 } else { 6 };
    (prop::collection::vec(-1.0..1.0f64, n * n), 0.05..1.0f64, 0.5..10.0f64).prop_map(move |(q, shift, scale)| {
        let q = DMatrix::from_vec(n, n, q);
        let m = (&q * q.transpose() + DMatrix::identity(n, n) * shift) * scale;
        SymElasticityTensor::from_voigt(dim, m).unwrap()
    })
}

fn isotropic() -> impl Strategy<Value = (f64, f64)> {
    (0.5..20.0f64, 0.0..0.45f64)
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let s: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    d / s.max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reuss_is_below_voigt(a in spd(2), b in spd(2), g in 0.0..1.0f64) {
        let m = MaterialSet::new(a, b, 0.5, 1.0, DMatrix::identity(2, 2)).unwrap();
        let (voigt, reuss) = voigt_reuss(&m, (1.0 - g, g)).unwrap();
        let gap = symmetric_min_eigenvalue(&(voigt.voigt() - reuss.voigt()));
        prop_assert!(gap >= -1e-10 * voigt.max_abs());
    }

    #[test]
    fn coupling_operators_are_dual(alpha in 0.1..2.0f64, u in vector(256), q in vector(256)) {
        let p = problem(MaterialSet::isotropic(2, (10.0, 0.3), (1.0, 0.2), alpha, 1.0, 1.0).unwrap());
        let ops = p.coupling_operators();
        let (u, q) = (&u[..p.n_u()], &q[..p.n_p()]);
        let lhs = dot(&ops.gradient(q), u);
        let rhs = -dot(q, &ops.divergence(u));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn biot_operator_is_symmetric_positive_and_monotone_in_c(
        c in 0.1..5.0f64,
        alpha in 0.0..1.5f64,
        p in vector(64),
        q in vector(64),
    ) {
        let small = problem(MaterialSet::isotropic(2, (10.0, 0.3), (1.0, 0.2), alpha, c, 1.0).unwrap());
        let large = problem(MaterialSet::isotropic(2, (10.0, 0.3), (1.0, 0.2), alpha, 2.0 * c, 1.0).unwrap());
        let settings = SolverSettings::default();
        let (b1, b2) = (small.biot_operator(&settings).unwrap(), large.biot_operator(&settings).unwrap());
        let n = b1.dim();
        let (p, q) = (&p[..n], &q[..n]);
        let (bp, bq) = (b1.apply(p).unwrap(), b1.apply(q).unwrap());
        let scale = (dot(&bp, p) * dot(&bq, q)).sqrt();
        prop_assert!((dot(&bp, q) - dot(&bq, p)).abs() <= 1e-9 * scale);
        prop_assert!(dot(&bp, p) >= small.c_mass().quad_form(p) * (1.0 - 1e-10));
        prop_assert!(dot(&b2.apply(p).unwrap(), p) >= dot(&bp, p));
    }

    #[test]
    fn sandwich_holds_for_random_isotropic_phases(f in isotropic(), g in isotropic(), r in 0.15..0.45f64) {
        let cell = unit(8, r);
        let m = MaterialSet::isotropic(2, f, g, 0.5, 1.0, 1.0).unwrap();
        let cells = solve_cell_problems(&cell, &m, &SolverSettings::default()).unwrap();
        let a = effective_elasticity(&cells).unwrap();
        let (voigt, reuss) = voigt_reuss(&m, porohom::geometry::phase_fractions(cell.phases())).unwrap();
        let (lower, upper) = sandwich_margins(&a, &voigt, &reuss);
        prop_assert!(lower >= -1e-6 && upper >= -1e-6, "{lower} {upper}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn scaling_materials_scales_a_h_and_keeps_tau(f in isotropic(), g in isotropic(), s in 0.1..10.0f64) {
        let cell = unit(8, 0.3);
        let settings = SolverSettings::default();
        let base = MaterialSet::isotropic(2, f, g, 0.5, 1.0, 1.0).unwrap();
        let scaled = MaterialSet::isotropic(2, (f.0 * s, f.1), (g.0 * s, g.1), 0.5, 1.0, 1.0).unwrap();
        let c1 = solve_cell_problems(&cell, &base, &settings).unwrap();
        let c2 = solve_cell_problems(&cell, &scaled, &settings).unwrap();
        let (a1, a2) = (effective_elasticity(&c1).unwrap(), effective_elasticity(&c2).unwrap());
        let err = (a2.voigt() - a1.voigt() * s).abs().max() / a2.max_abs();
        prop_assert!(err <= 1e-8);
        for (t1, t2) in c1.tau_all().iter().zip(c2.tau_all()) {
            prop_assert!(rel_diff(t2, t1) <= 1e-7 || t1.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn dns_is_linear(k in 0.1..4.0f64, a in -1.0..1.0f64, b in -1.0..1.0f64) {
        let p = problem(MaterialSet::isotropic(2, (10.0, 0.3), (1.0, 0.2), 0.8, 0.5, 1.0).unwrap());
        let fa = format!("{a}*x1 + t");
        let fb = format!("{b}*t");
        let src = SourceFields::parse(&[&fa, &fb], &["0", &fa], &format!("1 + {b}*x0")).unwrap();
        let time = TimeGrid::new(1.0, 3).unwrap();
        let settings = SolverSettings::default();
        let one = dns_run(p.clone(), src.clone(), time, &settings, 0).unwrap();
        let many = dns_run(p, src.scaled(k), time, &settings, 0).unwrap();
        let (s1, sk) = (one.last().unwrap(), many.last().unwrap());
        let expect: Vec<f64> = s1.u.iter().chain(&s1.p).map(|v| k * v).collect();
        let got: Vec<f64> = sk.u.iter().chain(&sk.p).copied().collect();
        prop_assert!(rel_diff(&got, &expect) <= 1e-9);
    }
}

#[test]
fn assembly_is_deterministic() {
    let m = MaterialSet::isotropic(2, (10.0, 0.3), (1.0, 0.2), 0.8, 0.5, 1.0).unwrap();
    let (a, b) = (problem(m.clone()), problem(m));
    for (x, y) in [
        (a.stiffness(), b.stiffness()),
        (a.coupling(), b.coupling()),
        (a.c_mass(), b.c_mass()),
        (a.diffusion(), b.diffusion()),
    ] {
        assert_eq!(x.row_ptr(), y.row_ptr());
        assert_eq!(x.col_idx(), y.col_idx());
        assert_eq!(x.values(), y.values());
    }
}
