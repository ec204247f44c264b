import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from torus_vortex import cli
from torus_vortex.errors import ConfigError
from torus_vortex.fields import load_field
from torus_vortex.green import save_table

PAIR = [{"x": 0.25, "y": 0.5, "d": 1}, {"x": 0.75, "y": 0.5, "d": -1}]


@pytest.fixture(scope="session")
def cache(table, tmp_path_factory):
    path = tmp_path_factory.mktemp("green") / "table.tgf"
    save_table(table, path)
    return str(path)


def write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def ode_cfg(**kw):
    return {"command": "ode", "lambda": 1.0, "dt": 1e-3, "t_max": 0.02, "vortices": PAIR} | kw


def run(args, capsys):
    code = cli.main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


# ---------------------------------------------------------------- validation


@pytest.mark.parametrize(
    "cfg, path",
    [
        (ode_cfg(dt=-1), "$.dt"),
        (ode_cfg(vortices=[]), "$.vortices"),
        (ode_cfg(vortices=[PAIR[0], {"x": 0.1, "y": 0.2, "d": 2}]), "$.vortices[1].d"),
        (ode_cfg(colour="red"), "$"),
        (ode_cfg(green={"n_table": 64}), "$.green.n_table"),
        (ode_cfg(q0=[0.0]), "$.q0"),
    ],
)
def test_schema_errors_name_the_key(cfg, path):
    with pytest.raises(ConfigError) as exc:
        cli.validate_config(cfg, "ode")
    assert exc.value.path == path


def test_missing_required_key():
    cfg = ode_cfg()
    del cfg["t_max"]
    with pytest.raises(ConfigError, match="t_max"):
        cli.validate_config(cfg, "ode")


def test_grid_and_eps_list_checks():
    base = {"command": "compare", "lambda": 0.0, "dt": 1e-6, "t_max": 0.01, "vortices": PAIR,
            "grid_n": 96, "epsilon_list": [1 / 16, 1 / 32]}
    with pytest.raises(ConfigError, match="power of two"):
        cli.validate_config(base, "compare")
    with pytest.raises(ConfigError, match="decreasing"):
        cli.validate_config(base | {"grid_n": 64, "epsilon_list": [1 / 32, 1 / 16]}, "compare")


def test_q0_outside_coset_rejected():
    with pytest.raises(ConfigError) as exc:
        cli.configuration_from(ode_cfg(q0=[0.1, 0.2]))
    assert exc.value.path == "$.q0"


def test_unbalanced_degrees_rejected():
    with pytest.raises(ConfigError, match="sum to zero"):
        cli.configuration_from(ode_cfg(vortices=[PAIR[0], PAIR[0] | {"x": 0.6}]))


def test_config_error_exit_code(tmp_path, capsys, cache):
    code, _, err = run(["ode", write_cfg(tmp_path, ode_cfg(dt=0)), "--green-cache", cache], capsys)
    assert code == cli.EXIT_CONFIG and "$.dt" in err
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, _, err = run(["ode", str(bad)], capsys)
    assert code == cli.EXIT_CONFIG and "invalid JSON" in err


# ---------------------------------------------------------------- commands


def test_ode_outputs(tmp_path, capsys, cache):
    out = tmp_path / "run"
    code, stdout, _ = run(["ode", write_cfg(tmp_path, ode_cfg()), "--out", str(out), "--green-cache", cache], capsys)
    assert code == 0 and "ReachedTmax" in stdout
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert lines[0].startswith("t,")
    assert len(lines) > 2
    ET.fromstring((out / "trajectory.svg").read_text())
    man = json.loads((out / "manifest.json").read_text())
    assert man["stop_reason"] == "ReachedTmax" and man["collision_pairs"] == []
    assert man["xi_drift"] < 1e-8 and man["config"]["lambda"] == 1.0
    assert {"git_describe", "wall_time_s", "version"} <= man.keys()


def test_ode_byte_identical_reruns(tmp_path, capsys, cache):
    cfg = write_cfg(tmp_path, ode_cfg(t_max=0.05))
    blobs = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        assert run(["ode", cfg, "--out", str(out), "--green-cache", cache], capsys)[0] == 0
        blobs.append((out / "trajectory.csv").read_bytes())
    assert blobs[0] == blobs[1]


def test_sym_collision_and_full_check(tmp_path, capsys, cache):
    cfg = {"command": "sym", "mode": "4v", "alpha0": -0.15, "beta0": 0.1, "lambda": 1.0,
           "dt": 1e-4, "t_max": 1.0}
    out = tmp_path / "sym"
    code, stdout, _ = run(["sym", write_cfg(tmp_path, cfg), "--out", str(out), "--check-full",
                           "--green-cache", cache], capsys)
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["reduced"]["stop_reason"] == "Collision"
    assert sorted(map(sorted, man["reduced"]["collision_pairs"])) == [[1, 4], [2, 3]]
    assert len(man["reduced"]["approach_bearing_deg"]) == 2
    assert man["max_deviation"] < 1e-7
    for name in ("reduced.csv", "full.csv", "sym.svg"):
        assert (out / name).exists()


def test_pde_outputs(tmp_path, capsys, cache):
    cfg = {"command": "pde", "lambda": 1.0, "epsilon": 1 / 8, "grid_n": 64, "dt": 1e-5,
           "t_max": 2e-4, "track_stride": 10, "vortices": PAIR}
    out = tmp_path / "pde"
    code, _, _ = run(["pde", write_cfg(tmp_path, cfg), "--out", str(out), "--green-cache", cache], capsys)
    assert code == 0
    u, eps = load_field(out / "final.tvf")
    assert u.n == 64 and eps == 1 / 8
    energy = np.loadtxt(out / "energy.csv", delimiter=",", skiprows=1)
    assert energy.shape == (3, 2) and np.all(np.diff(energy[:, 1]) <= 0)
    track = (out / "tracking.csv").read_text().splitlines()
    assert track[0] == "t,j,x,y,degree" and len(track) == 1 + 2 * 3
    ET.fromstring((out / "pde.svg").read_text())
    man = json.loads((out / "manifest.json").read_text())
    assert man["k_eps"] == pytest.approx(1 / np.log(8)) and man["tracked"]


def test_pde_unresolved_core(tmp_path, capsys, cache):
    cfg = {"command": "pde", "lambda": 1.0, "epsilon": 0.01, "grid_n": 64, "dt": 1e-5,
           "t_max": 1e-4, "vortices": PAIR}
    code, _, err = run(["pde", write_cfg(tmp_path, cfg), "--out", str(tmp_path), "--green-cache", cache], capsys)
    assert code == cli.EXIT_CONFIG and "$.epsilon" in err


def test_green_command(capsys, cache, tmp_path):
    code, stdout, _ = run(["green", "--green-cache", cache], capsys)
    assert code == 0 and stdout.startswith("loaded")
    assert "F(0.5, 0.5)    0.34657359" in stdout
    code, _, err = run(["green"], capsys)
    assert code == cli.EXIT_CONFIG


def test_selftest_quick(tmp_path, capsys):
    code, stdout, _ = run(["selftest", "--quick", "--green-cache", str(tmp_path / "g.tgf")], capsys)
    assert code == 0, stdout
    assert "FAIL" not in stdout


def test_selftest_corrupt_cache(tmp_path, capsys):
    bad = tmp_path / "bad.tgf"
    bad.write_bytes(b"TGF1 this is not a table")
    code, stdout, _ = run(["selftest", "--quick", "--green-cache", str(bad)], capsys)
    assert code == cli.EXIT_CHECK
    assert "green cache unreadable" in stdout


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.strip() == "0.1.0"


def test_selftest_tampered_cache_names_the_check(coarse_table, tmp_path, capsys):
    from dataclasses import replace

    noise = np.random.default_rng(0).normal(scale=1e-3, size=coarse_table.F_samples.shape)
    bad = tmp_path / "tampered.tgf"
    save_table(replace(coarse_table, F_samples=coarse_table.F_samples + noise), bad)
    code, stdout, _ = run(["selftest", "--quick", "--green-cache", str(bad)], capsys)
    assert code == cli.EXIT_CHECK
    failed = stdout.strip().splitlines()[-1]
    assert failed.startswith("failed:") and "green F(-x,y)=F(x,y)" in failed
