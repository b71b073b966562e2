import subprocess
import sys
import textwrap

import numpy as np
import pytest

from pekar.cli import main
from pekar.storage import read_csv, read_json, read_state

SOLVE = """\
command: solve
params: {N: 2, alpha: 1.0, nu: 0.5}
grid: {n: 16, box: 12.0}
fields: {kind: linear_a, B: [0, 0, 0.5]}
solver: {max_iters: 40}
"""


def write_cfg(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


def test_solve_writes_artifacts(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SOLVE)
    assert main(["--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    res = read_json(tmp_path / "a" / "result.json")
    assert res["config"]["params"]["N"] == 2
    assert res["result"]["label"] == "Hartree upper bound"
    header, rows = read_csv(tmp_path / "a" / "trace.csv")
    assert header == ["iteration", "energy", "residual"]
    assert float(rows[-1][1]) == res["result"]["energy"]["total"]
    st = read_state(tmp_path / "a" / "state.bin")
    assert st.N == 2 and np.allclose(st.norms(), 1.0)
    assert 0 <= res["result"]["outside_mass"] <= 1
    assert "E = " in capsys.readouterr().out


def test_solve_is_deterministic(tmp_path):
    cfg = write_cfg(tmp_path, SOLVE)
    names = ("result.json", "trace.csv", "state.bin")
    runs = []
    for _ in range(2):
        assert main(["--config", str(cfg), "--out", str(tmp_path / "a"), "--seed", "3"]) == 0
        runs.append([(tmp_path / "a" / f).read_bytes() for f in names])
    assert runs[0] == runs[1]


def test_from_file_restart(tmp_path):
    cfg = write_cfg(tmp_path, SOLVE)
    assert main(["--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    e0 = read_json(tmp_path / "a" / "result.json")["result"]["energy"]["total"]
    cfg2 = write_cfg(tmp_path, SOLVE.replace("{max_iters: 40}", "{max_iters: 5, init: from_file, init_path: a/state.bin}"),
                     "restart.yaml")
    assert main(["--config", str(cfg2), "--out", str(tmp_path / "b")]) == 0
    assert read_json(tmp_path / "b" / "result.json")["result"]["energy"]["total"] <= e0


@pytest.mark.parametrize("text, where, msg", [
    ("command: solve\nparams:\n  N: 0\n", ":3:6: params.N", ">= 1"),
    ("command: solve\ngrid:\n  n: 15\n", ":3:6: grid.n", "even"),
    ("command: solve\nsolver:\n  bogus: 1\n", ":3:10: solver.bogus", "unknown key"),
    ("command: fly\n", ":1:10: command", "command must be"),
    ("command: solve\nfields: {kind: linear_a, B: [0, x, 1]}\n", ":2:33: fields.B.1", "expected a number"),
    ("command: solve\nparams: [1\n", ":3:1", ""),
])
def test_config_errors_are_line_anchored(tmp_path, capsys, text, where, msg):
    cfg = write_cfg(tmp_path, text)
    assert main(["--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert f"{cfg}{where}" in err and msg in err


def test_missing_config_file(tmp_path, capsys):
    assert main(["--config", str(tmp_path / "nope.yaml")]) == 1
    assert "cannot read" in capsys.readouterr().err


def test_verify_scaling_and_bounds(tmp_path):
    cfg = write_cfg(tmp_path, """\
        command: verify-scaling
        params: {N: 2, alpha: 1.0, nu: 0.3}
        grid: {n: 16, box: 10.0}
        scaling: {alphas: [2.0, 3.0], n_random: 2, solve: false}
        """)
    assert main(["--config", str(cfg), "--out", str(tmp_path / "s")]) == 0
    recs = read_json(tmp_path / "s" / "scaling.json")["result"]["records"]
    assert len(recs) == 2 * 2 * 2 and all(r["passed"] for r in recs)

    cfg = write_cfg(tmp_path, """\
        command: bounds-table
        bounds: {alphas: [1.0, 1000.0], Ns: [1, 2]}
        """, "b.yaml")
    assert main(["--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    header, rows = read_csv(tmp_path / "b" / "bounds.csv")
    assert len(rows) == 4
    # alpha = 1 leaves no room for the cutoff and is reported, not computed
    assert any(r[-1] for r in rows if float(r[0]) == 1.0)
    shape = read_json(tmp_path / "b" / "bounds.json")["result"]["shape"]
    assert set(shape) == {"1", "2"}


def test_geometry_and_mc_checks(tmp_path):
    cfg = write_cfg(tmp_path, """\
        command: geometry-check
        geometry: {n_layouts: 50, N_max: 8}
        """)
    assert main(["--config", str(cfg), "--out", str(tmp_path / "g")]) == 0
    assert read_json(tmp_path / "g" / "geometry.json")["result"]["passed"]
    cfg = write_cfg(tmp_path, """\
        command: mc-check
        mc: {n_samples: 20000, instances: 2, distances: [1.0, 2.0]}
        threads: 2
        """, "m.yaml")
    rc = main(["--config", str(cfg), "--out", str(tmp_path / "m")])
    res = read_json(tmp_path / "m" / "mc.json")["result"]
    assert len(res["identities"]) == 4 and len(res["bound_checks"]) == 2
    assert rc == (0 if res["passed"] else 2)


def test_scan_and_binding_small(tmp_path):
    cfg = write_cfg(tmp_path, """\
        command: scan-alpha
        grid: {n: 16, box: 12.0}
        solver: {max_iters: 30}
        scan: {alphas: [1.0, 2.0]}
        """)
    assert main(["--config", str(cfg), "--out", str(tmp_path / "s")]) == 0
    header, rows = read_csv(tmp_path / "s" / "scan.csv")
    assert header[0] == "alpha" and len(rows) == 2
    cfg = write_cfg(tmp_path, """\
        command: binding
        params: {N: 2, alpha: 1.0}
        grid: {n: 16, box: 12.0}
        solver: {max_iters: 20}
        binding: {nus: [0.0, 50.0], inits: [gaussian_cloud]}
        """, "b.yaml")
    assert main(["--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    header, rows = read_csv(tmp_path / "b" / "binding.csv")
    assert header == ["nu", "C1", "C2", "margin", "binds", "reliable"] and len(rows) == 2


def test_numeric_failure_exit_code(tmp_path):
    from pekar.fields import FieldSpec
    from pekar.grid import Grid3D
    from pekar.storage import write_field
    g = Grid3D.cubic(8, 4.0)
    V = np.zeros(g.shape)
    V[0, 0, 0] = np.inf
    write_field(tmp_path / "v.bin", FieldSpec.from_samples(g, V=V))
    cfg = write_cfg(tmp_path, """\
        command: solve
        grid: {n: 8, box: 4.0}
        fields: {kind: sampled, path: v.bin}
        solver: {max_iters: 3}
        """)
    assert main(["--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert read_json(tmp_path / "o" / "error.json")["result"]["error"] == "NumericalError"


def test_module_entry_point(tmp_path):
    cfg = write_cfg(tmp_path, "command: geometry-check\ngeometry: {n_layouts: 5}\n")
    out = subprocess.run([sys.executable, "-m", "pekar", "--config", str(cfg), "--out", str(tmp_path / "o")],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "PASS" in out.stdout


def test_outside_mass_diagnostic():
    from scipy.stats import chi
    from pekar.cli import outside_mass
    from pekar.functional import HartreeState
    from pekar.grid import Grid3D
    from pekar.solver import gaussian_orbital
    g = Grid3D.cubic(32, 16.0)
    # |phi|^2 is a Gaussian with sigma = w / sqrt(2), centred off the origin and across the seam
    st = HartreeState(g, gaussian_orbital(g, [3.0, -7.0, 5.0], 2.0)[None])
    assert outside_mass(st) == pytest.approx(chi.sf(4.0 / np.sqrt(2.0), 3), rel=0.05)
    assert outside_mass(HartreeState(g, gaussian_orbital(g, [0.0, 0.0, 0.0], 0.5)[None])) < 1e-20


def test_exponent_floats_in_config(tmp_path):
    cfg = write_cfg(tmp_path, "command: bounds-table\nbounds: {alphas: [1e3, 1.0e4], Ns: [2]}\n")
    assert main(["--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    assert read_json(tmp_path / "b" / "bounds.json")["config"]["bounds"]["alphas"] == [1000.0, 10000.0]
