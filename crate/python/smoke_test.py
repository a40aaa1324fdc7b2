"""Smoke test for the porohom Python extension.

Build and install first, e.g.

    pip install maturin
    maturin build --release -m crates/py/Cargo.toml
    pip install target/wheels/porohom-*.whl
"""

import json
import math
import sys
import tempfile
from pathlib import Path

import porohom


def close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    # homogeneous cell reproduces the phase tensor
    m = porohom.Materials.isotropic(2, (4.0, 0.3), (4.0, 0.3), alpha=0.5, biot_modulus=1.0)
    sol = porohom.solve_cell(porohom.UnitCell.ball(2, 16, 0.25), m)
    a = sol.effective_elasticity
    for i in range(3):
        for j in range(3):
            assert close(a[i][j], m.fibre[i][j], 1e-8), (i, j, a[i][j])
    assert sol.max_abs_tau < 1e-9

    # laminate matches the exact harmonic/arithmetic means
    lam = porohom.Materials.from_voigt(
        [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
        [[3, 0, 0], [0, 3, 0], [0, 0, 3]],
        alpha=1.0,
        biot_modulus=1.0,
        permeability=[[1, 0], [0, 1]],
    )
    cell = porohom.UnitCell.laminate(2, 32, 0.5, normal=0)
    sol = porohom.solve_cell(cell, lam)
    exact = lam.laminate_exact(0.5, 0)
    assert close(sol.effective_elasticity[0][0], exact[0], 1e-3)
    assert close(sol.effective_elasticity[1][1], exact[1], 1e-3)
    assert sol.check("laminate", 0.01)["checks"][0]["pass"]

    # direct and two-scale runs on a ball cell
    m = porohom.Materials.isotropic(2, (10.0, 0.3), (1.0, 0.2), alpha=0.8, biot_modulus=0.5)
    ball = porohom.UnitCell.ball(2, 8, 0.25)
    f = ["sin(3.14159*x0)*(1+t)", "0.5*t"]
    traj = porohom.dns(ball, m, 0.5, 1.0, 4, f=f, g=f, h="1 + x0*t", save_every=1)
    assert len(traj["states"]) == 5
    assert all(e["balance_lhs"] <= e["balance_rhs"] * (1 + 1e-8) + 1e-14 for e in traj["energy"])
    macro = porohom.two_scale(ball, m, 4, 1.0, 4, f=f, g=f, h="1 + x0*t")
    assert all(math.isfinite(v) for v in macro["states"][-1]["u"])

    # CLI command through a config file
    config = {
        "dim": 2,
        "geometry": {"inclusion": {"kind": "ball", "radius": 0.25}, "cell_resolution": 8},
        "materials": {
            "fibre": {"isotropic": {"youngs": 10.0, "poisson": 0.3}},
            "gel": {"isotropic": {"youngs": 1.0, "poisson": 0.2}},
            "alpha": 0.8,
            "biot_modulus": 0.5,
            "permeability": 1.0,
        },
    }
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "config.json"
        path.write_text(json.dumps(config))
        code, report = porohom.run("verify", str(path), str(Path(tmp) / "out"))
        assert code == 0 and report["pass"], report
        assert (Path(tmp) / "out" / "verify.json").exists()

    try:
        porohom.Materials.isotropic(2, (1.0, 0.3), (1.0, 0.3), alpha=-1.0, biot_modulus=1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative alpha accepted")

    print("porohom smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
