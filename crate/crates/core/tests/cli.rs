use std::path::Path;
use std::process::Command;

use porohom::cli::output::{parse_tensor_csv, read_json, RunReport};
use porohom::fem::SymElasticityTensor;

const HOMOGENEOUS: &str = r#"{
    "dim": 2,
    "geometry": { "inclusion": { "kind": "ball", "radius": 0.25 }, "cell_resolution": 16 },
    "materials": {
        "fibre": { "isotropic": { "youngs": 4.0, "poisson": 0.3 } },
        "gel": { "isotropic": { "youngs": 4.0, "poisson": 0.3 } },
        "alpha": 0.5, "biot_modulus": 1.0, "permeability": 1.0
    }
}"#;

const LAMINATE: &str = r#"{
    "dim": 2,
    "geometry": { "inclusion": { "kind": "laminate", "fraction": 0.5, "normal": 0 }, "cell_resolution": 32 },
    "materials": {
        "fibre": { "scalar": 1.0 }, "gel": { "scalar": 3.0 },
        "alpha": 1.0, "biot_modulus": 1.0, "permeability": 1.0
    }
}"#;

const BALL: &str = r#"{
    "dim": 2,
    "geometry": { "inclusion": { "kind": "ball", "radius": 0.25 }, "cell_resolution": 8, "macro_resolution": [4, 4] },
    "materials": {
        "fibre": { "isotropic": { "youngs": 10.0, "poisson": 0.3 } },
        "gel": { "isotropic": { "youngs": 1.0, "poisson": 0.2 } },
        "alpha": 0.8, "biot_modulus": 0.5, "permeability": 1.0
    },
    "sources": { "f": ["1", "t"], "g": ["0", "1"], "h": "1" },
    "time": { "t_end": 1.0, "n_steps": 3 },
    "epsilons": [0.5],
    "output": { "save_every": 1 }
}"#;

fn porohom(command: &str, config: &str, dir: &Path) -> (i32, String) {
    let path = dir.join("config.json");
    std::fs::write(&path, config).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_porohom"))
        .args([command, "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .args(["--threads", "2"])
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout).to_string() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap(), text)
}

#[test]
fn cell_on_homogeneous_material_reproduces_the_phase_tensor() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = porohom("cell", HOMOGENEOUS, dir.path());
    assert_eq!(code, 0, "{text}");
    let c = SymElasticityTensor::isotropic(2, 4.0, 0.3).unwrap();
    let rows = parse_tensor_csv(&std::fs::read_to_string(dir.path().join("out/effective_elasticity.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 16);
    for ([i, j, k, l], v) in rows {
        assert!((v - c.component(i - 1, j - 1, k - 1, l - 1)).abs() <= 1e-8 * c.max_abs());
    }
    let report: RunReport = read_json(&dir.path().join("out/cell.json")).unwrap();
    assert!(report.pass);
    assert_eq!(report.units, "model units");
}

#[test]
fn verify_with_laminate_passes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = porohom("verify", LAMINATE, dir.path());
    assert_eq!(code, 0, "{text}");
    let report: RunReport = read_json(&dir.path().join("out/verify.json")).unwrap();
    assert!(report.checks.iter().any(|c| c.name == "laminate" && c.passed()));
}

#[test]
fn compare_with_non_tiling_epsilon_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = porohom("compare", &BALL.replace("[0.5]", "[0.3]"), dir.path());
    assert_eq!(code, 1);
    assert!(text.contains("epsilons[0]"), "{text}");
}

#[test]
fn invalid_material_exits_with_config_status() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = porohom("cell", &BALL.replace("\"alpha\": 0.8", "\"alpha\": -1"), dir.path());
    assert_eq!(code, 1);
    assert!(text.contains("materials.alpha"));
}

#[test]
fn solver_failure_exits_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = BALL.replace("\"epsilons\": [0.5],", "\"epsilons\": [0.5], \"solver\": { \"max_iter\": 1, \"dense_limit\": 0 },");
    let (code, text) = porohom("dns", &config, dir.path());
    assert_eq!(code, 2, "{text}");
}

#[test]
fn dns_and_macro_write_fields_and_ledgers() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = porohom("dns", BALL, dir.path());
    assert_eq!(code, 0, "{text}");
    let (code, text) = porohom("macro", BALL, dir.path());
    assert_eq!(code, 0, "{text}");
    let out = dir.path().join("out");
    for f in ["dns_0_0000.vtk", "dns_0_0003.vtk", "dns_0_energy.csv", "macro_0003.vtk", "macro_steps.csv"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let vtk = std::fs::read_to_string(out.join("dns_0_0000.vtk")).unwrap();
    assert!(vtk.starts_with("# vtk DataFile Version 3.0\n"));
    assert!(vtk.contains("VECTORS displacement double"));
    assert!(vtk.contains("SCALARS pressure double 1"));
}

#[test]
fn identical_configs_give_identical_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(porohom("cell", BALL, a.path()).0, 0);
    assert_eq!(porohom("cell", BALL, b.path()).0, 0);
    for f in ["effective_elasticity.csv", "cell.json", "biot_over_gel.csv"] {
        let x = std::fs::read(a.path().join("out").join(f)).unwrap();
        let y = std::fs::read(b.path().join("out").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
}
