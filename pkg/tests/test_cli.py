import csv
import json

import numpy as np
import pytest

from adiax.cli import execute, main
from adiax.config import compile_expression, config_hash, load_config


def _write(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def _rows(path):
    with path.open() as fh:
        return list(csv.reader(fh))


def _summary(root):
    return json.loads((root / "summary.json").read_text())


def test_bound_states_harmonic(tmp_path):
    cfg = _write(tmp_path, "bs.json", {"h": 0.1, "bound_states": {"potential": "x**2/2", "n": [0, 1, 2, 3],
                                                                   "x_range": [-3, 3]}})
    code, root = execute("bound-states", cfg, tmp_path / "out")
    assert code == 0
    rows = _rows(root / "bound_states.csv")
    assert rows[0] == ["n", "E", "beta", "E_j"]
    E = np.array([float(r[1]) for r in rows[1:]])
    assert np.allclose(E, [0.05, 0.15, 0.25, 0.35], atol=1e-12)
    s = _summary(root)
    assert s["error"] == "ok" and s["command"] == "bound-states" and len(s["config_hash"]) == 12
    assert "wall_time" in s and "regime" in s


def test_bound_states_with_transport_and_direct(tmp_path):
    cfg = _write(tmp_path, "bs.json", {"h": 0.1, "bound_states": {"potential": "x**2/2", "n": [0, 2],
                                                                   "x_range": [-3, 3], "L1": "0.2",
                                                                   "method": "both"}})
    code, root = execute("bound-states", cfg, tmp_path / "out")
    assert code == 0
    header, *rows = _rows(root / "bound_states.csv")
    assert header == ["n", "E", "beta", "E_j", "E_direct"]
    for r in rows:
        n, E, beta, Ej, Ed = int(r[0]), *map(float, r[1:])
        assert beta == pytest.approx(-0.2, abs=1e-12)
        assert Ej == pytest.approx(E - 0.02, abs=1e-12)
        assert Ed == pytest.approx(0.1 * (n + 0.5), abs=1e-4)


def test_regimes_table(tmp_path):
    cfg = _write(tmp_path, "r.json", {"regimes": {"mu": 0.01, "h": [0.01, 0.1, 1, 0.003, 1e-4]}})
    code, root = execute("regimes", cfg, tmp_path / "out")
    assert code == 0
    tags = [r[3] for r in _rows(root / "regimes.csv")[1:]]
    assert tags == ["ShortWave", "MediumWave", "LongWave", "UltraShortWave", "rejected"]


def test_propagate_past_caustic_exits_3(tmp_path):
    cfg = _write(tmp_path, "c.json", {
        "h": 0.1,
        "propagate": {"potential": "x**2/2", "S0": "-x**2/2", "amplitude": "exp(-x**2)",
                      "fan": {"start": -2, "stop": 2, "n": 81}, "times": [0, 0.5, 1.0]},
    })
    code, root = execute("propagate", cfg, tmp_path / "out")
    assert code == 3
    assert _summary(root)["error"] == "CausticEncountered"
    assert not list(root.glob("*.csv"))


def test_propagate_before_caustic(tmp_path):
    cfg = _write(tmp_path, "c.json", {
        "h": 0.1, "x_grid": {"start": -2, "stop": 2, "n": 41},
        "propagate": {"potential": "x**2/2", "S0": "-x**2/2", "amplitude": "exp(-x**2)",
                      "fan": {"start": -2, "stop": 2, "n": 81}, "times": [0, 0.5]},
    })
    code, root = execute("propagate", cfg, tmp_path / "out")
    assert code == 0
    rows = _rows(root / "wkb.csv")
    assert rows[0] == ["t", "x", "abs2"] and len(rows) == 1 + 2 * 41


def test_unknown_key_rejected(tmp_path):
    cfg = _write(tmp_path, "bad.json", {"h": 0.1, "bogus": 1})
    code, root = execute("regimes", cfg, tmp_path / "out")
    assert code == 2
    assert _summary(root)["error"] == "ValidationError"


@pytest.mark.parametrize("data", [{"h": -1.0}, {"mu": 1.5}, {"x_grid": {"start": 1, "stop": 0, "n": 10}},
                                  {"v_ext": "x + z"}, {"bound_states": {"n": [-1], "x_range": [0, 1]}}])
def test_range_validation(tmp_path, data):
    cfg = _write(tmp_path, "bad.json", data)
    assert execute("bound-states", cfg, tmp_path / "out")[0] == 2


def test_missing_section_is_invalid(tmp_path):
    cfg = _write(tmp_path, "c.json", {"h": 0.1})
    code, root = execute("scatter", cfg, tmp_path / "out")
    assert code == 2


def test_free_bloch_bands_stick(tmp_path):
    cfg = _write(tmp_path, "f.json", {"problem": "bloch", "bloch": {"amplitude": "0"}, "bands": {"K": 2}})
    code, root = execute("bands", cfg, tmp_path / "out")
    assert code == 3
    assert _summary(root)["error"] == "StickingBands"
    assert not (root / "bands.csv").exists()


def test_waveguide_bands_and_reduce(tmp_path):
    data = {"mu": 0.1, "h": 0.1, "x_grid": {"start": -2, "stop": 2, "n": 21},
            "confinement": {"kind": "rigid", "y1": "0", "y2": "1"}, "y_points": 101, "bands": {"K": 2},
            "curvature": "0.5/cosh(x)"}
    cfg = _write(tmp_path, "w.json", data)
    code, root = execute("bands", cfg, tmp_path / "out")
    assert code == 0
    header, *rows = _rows(root / "bands.csv")
    assert header == ["x", "eps_1", "eps_2"]
    assert float(rows[0][1]) == pytest.approx(np.pi**2 / 2, rel=1e-3)
    code, root = execute("reduce", cfg, tmp_path / "out")
    assert code == 0
    assert _summary(root)["regime"] == "ShortWave"
    header, *rows = _rows(root / "reduce.csv")
    assert header == ["x", "H_eff_p0", "L1_p0_re", "L1_p0_im", "G"]
    assert float(rows[10][4]) == pytest.approx(-0.5**2 / 8)


def test_deterministic_outputs(tmp_path):
    cfg = _write(tmp_path, "s.json", {"scatter": {"potential": "exp(-x**2)", "energies": [0.5, 1.5],
                                                  "x_range": [-6, 6]}})
    _, r1 = execute("scatter", cfg, tmp_path / "a")
    _, r2 = execute("scatter", cfg, tmp_path / "b")
    assert (r1 / "scatter.csv").read_bytes() == (r2 / "scatter.csv").read_bytes()
    assert r1.name == r2.name
    header, reflected, transmitted = _rows(r1 / "scatter.csv")
    assert reflected[1] == "Reflected" and transmitted[1] == "Transmitted"
    assert float(reflected[4]) == pytest.approx(-np.sqrt(np.log(2)), abs=1e-12)
    assert reflected[4] == "%.17g" % float(reflected[4])


def test_validate_single_criterion(tmp_path):
    cfg = _write(tmp_path, "v.json", {"validate": {"criteria": [9]}})
    code, root = execute("validate", cfg, tmp_path / "out")
    assert code == 0
    s = _summary(root)
    assert [c["number"] for c in s["criteria"]] == [9] and s["criteria"][0]["passed"]


def test_main_entry_point(tmp_path, capsys):
    cfg = _write(tmp_path, "r.json", {"regimes": {"mu": 0.01, "h": [0.1]}})
    assert main(["regimes", "--config", str(cfg), "--outdir", str(tmp_path / "o")]) == 0
    with pytest.raises(SystemExit):
        main(["nonsense", "--config", str(cfg)])


def test_config_hash_ignores_key_order_and_outdir():
    a = load_config('{"h": 0.1, "mu": 0.01, "outdir": "x"}')
    b = load_config('{"mu": 0.01, "h": 0.1}')
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(load_config('{"mu": 0.01, "h": 0.2}'))


def test_compile_expression():
    f = compile_expression("x**2 + 1")
    assert np.allclose(f(np.array([0.0, 2.0])), [1.0, 5.0])
    assert compile_expression("3")(np.zeros(4)).shape == (4,)
    g = compile_expression("p*x", ("p", "x"))
    assert g(2.0, 3.0) == 6.0
    with pytest.raises(ValueError):
        compile_expression("x + q")


def test_validate_failure_exits_2(tmp_path):
    # the gap-halving check of criterion 5 fails by construction (see README)
    cfg = _write(tmp_path, "v.json", {"validate": {"criteria": [5]}})
    code, root = execute("validate", cfg, tmp_path / "out")
    assert code == 2
    s = _summary(root)
    assert s["error"] == "ValidationFailed" and s["failed"] == [5]
    assert (root / "validate.csv").exists()
