import json
import math
import subprocess
import sys

import pytest
from hypothesis import given, strategies as st

from nfpe.cli import EXIT_CONFIG, EXIT_OK, main, run
from nfpe.config import PROBES, RunConfig, load_config, parse_config
from nfpe.errors import ConfigError

MINIMAL = {
    "schema": 1,
    "coefficients": {"diffusion": "boltzmann"},
    "grid": {"d": 3, "N": 80, "R": 25.0},
    "time": {"T": 0.3, "h": 0.05, "stride": 2},
    "probes": ["hypotheses", "stationary", "evolve", "contraction", "omega"],
    "contraction": {"pairs": 3},
    "omega": {"restart_horizon": 0.1},
    "seed": 3,
}


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(MINIMAL))
    return p


def _summary(out):
    s = json.loads((out / "summary.json").read_text())
    s.pop("metadata")
    return s


def test_minimal_run_and_artifacts(cfg_file, tmp_path):
    out = tmp_path / "run"
    assert main(["run", str(cfg_file), "--out", str(out)]) == EXIT_OK
    s = _summary(out)
    inv = {(i["probe"], i["name"]): i for i in s["invariants"]}
    assert inv[("stationary", "mass_residual")]["passed"]
    assert inv[("contraction", "l1_contraction")]["passed"]
    assert s["hard_passed"] and s["exit_status"] == 0
    for name in ("config.json", "stationary.csv", "trajectory_diagnostics.csv", "omega.json",
                 "contraction.csv", "hypotheses.json"):
        assert (out / name).exists(), name


def test_determinism(cfg_file, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["run", str(cfg_file), "--out", str(a)])
    main(["run", str(cfg_file), "--out", str(b)])
    assert _summary(a) == _summary(b)
    for f in sorted(a.glob("*.csv")):
        assert f.read_bytes() == (b / f.name).read_bytes(), f.name


def test_seed_override(cfg_file, tmp_path):
    main(["run", str(cfg_file), "--out", str(tmp_path / "s"), "--seed", "9"])
    assert _summary(tmp_path / "s")["seed"] == 9


def test_probe_selection_adds_dependencies(cfg_file, tmp_path):
    out = tmp_path / "p"
    main(["run", str(cfg_file), "--out", str(out), "--probe", "omega"])
    assert _summary(out)["probes_run"] == ["stationary", "evolve", "omega"]


def test_dimension_two_rejected(tmp_path, capsys):
    bad = dict(MINIMAL, grid={"d": 2})
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(bad))
    assert main(["run", str(p)]) == EXIT_CONFIG
    assert "grid.d" in capsys.readouterr().err


@pytest.mark.parametrize("mutation, field", [
    ({"bogus": 1}, "bogus"),
    ({"grid": {"N": 1}}, "grid.N"),
    ({"grid": {"zz": 1}}, "grid.zz"),
    ({"tolerances": {"solver_tol": -1.0}}, "tolerances.solver_tol"),
    ({"time": {"h": "fast"}}, "time.h"),
    ({"probes": ["nothing"]}, "probes[0]"),
    ({"schema": 99}, "schema"),
])
def test_config_errors_name_field(mutation, field):
    with pytest.raises(ConfigError) as info:
        parse_config(dict(MINIMAL, **mutation))
    assert info.value.field == field


def test_schema_required():
    data = dict(MINIMAL)
    data.pop("schema")
    with pytest.raises(ConfigError):
        parse_config(data)


@given(key=st.text(min_size=1, max_size=8).filter(lambda k: k not in RunConfig.__dataclass_fields__))
def test_unknown_top_level_keys_rejected(key):
    with pytest.raises(ConfigError):
        parse_config(dict(MINIMAL, **{key: 0}))


def test_round_trip_through_dict():
    cfg = parse_config(MINIMAL)
    again = parse_config({k: v for k, v in cfg.to_dict().items()})
    assert again == cfg


def test_shipped_configs_parse():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1] / "configs"
    files = sorted(root.glob("*.json"))
    assert files
    for f in files:
        cfg = load_config(f)
        assert set(cfg.probes) <= set(PROBES)


def test_module_entry_point(cfg_file, tmp_path):
    out = tmp_path / "m"
    proc = subprocess.run([sys.executable, "-m", "nfpe", "run", str(cfg_file), "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
