import json
import os

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contactsys import cli
from contactsys.config import ExperimentConfig, canonical, parse_config, serialize_config
from contactsys.errors import ConfigError
from contactsys.experiments import CATALOG, default_config, list_catalog, run

SYSTOLE = """kind: systole
model: hopf(n=1)
rho: "1"
params: {expected: 6.283185307179586}
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


def test_parse_defaults():
    cfg = parse_config("kind: funk\n", CATALOG)
    assert cfg.kind == "funk" and cfg.seed == 0 and cfg.model is None
    assert cfg.tol("integrator") == 1e-10


@pytest.mark.parametrize("text,line", [
    ("kind: systole\nseed: 1.5\n", 2),
    ("kind: systole\ns_grid: [0.1, 0.2]\n", 2),
    ("kind: systole\ncolour: red\n", 2),
    ("kind: nope\n", 1),
    ("kind: systole\ntolerances: {integrator: -1}\n", 2),
    ("kind: systole\nparams: [1, 2\n", 3),
])
def test_config_errors_are_positioned(text, line):
    with pytest.raises(ConfigError) as exc:
        parse_config(text, CATALOG)
    assert exc.value.line == line


def test_round_trip_is_canonical():
    text = "seed: 3\nkind: systole\nmodel: hopf(n=1)\ns_grid: [0, 0.1]\n"
    cfg = parse_config(text, CATALOG)
    assert parse_config(serialize_config(cfg), CATALOG) == cfg
    assert canonical(canonical(text, CATALOG), CATALOG) == canonical(text, CATALOG)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(sorted(CATALOG)), st.integers(0, 2 ** 31),
       st.lists(st.floats(-0.5, 0.5, allow_nan=False), max_size=5),
       st.dictionaries(st.sampled_from(["k", "eps", "poles"]), st.integers(1, 9), max_size=3))
def test_serialize_parse_round_trip(kind, seed, grid, params):
    cfg = ExperimentConfig(kind=kind, seed=seed, s_grid=sorted(set(grid + [0.0])), params=params)
    assert parse_config(serialize_config(cfg), CATALOG) == cfg


def test_catalog_listing_is_alphabetical():
    text = list_catalog()
    kinds = [ln.split()[0] for ln in text.splitlines() if not ln.startswith(" ")]
    assert kinds == sorted(kinds) and "strict-max" in kinds and "zoll-family" in kinds
    assert len(kinds) == 10


def test_every_default_config_parses():
    for kind in CATALOG:
        assert default_config(kind).kind == kind


def test_run_systole_report():
    rep = run(parse_config(SYSTOLE, CATALOG))
    assert rep.passed
    assert all(v.tolerance > 0 for v in rep.verdicts)


def test_cli_run_writes_outputs(tmp_path, capsys):
    cfgp = write(tmp_path, "hopf.yaml", SYSTOLE)
    out = tmp_path / "out"
    assert cli.main(["run", cfgp, "--out", str(out)]) == 0
    data = json.loads((out / "hopf.json").read_text())
    assert data["kind"] == "systole" and data["passed"] is True
    header = (out / "hopf.csv").read_text().splitlines()[0]
    assert header == "quantity,value,error_budget,degenerate"
    assert sorted(p.name for p in out.glob("hopf_*.csv")) == ["hopf_landscape.csv", "hopf_orbit.csv"]
    assert b"\r\n" not in (out / "hopf.csv").read_bytes()


def test_cli_failed_verdict_exit_one(tmp_path):
    cfgp = write(tmp_path, "bad.yaml", SYSTOLE.replace("6.283185307179586", "6.0"))
    assert cli.main(["run", cfgp, "--out", str(tmp_path)]) == 1


def test_cli_config_error_exit_two(tmp_path, capsys):
    cfgp = write(tmp_path, "broken.yaml", "kind: systole\nseed: [1]\n")
    assert cli.main(["run", cfgp, "--out", str(tmp_path)]) == 2
    assert "line 2" in capsys.readouterr().err
    assert cli.main(["run", str(tmp_path / "missing.yaml")]) == 2
    bad_field = write(tmp_path, "field.yaml", "kind: systole\nrho: 1 + nonsense\n")
    assert cli.main(["run", bad_field, "--out", str(tmp_path)]) == 2


def test_cli_usage_error_exit_two():
    assert cli.main(["frobnicate"]) == 2


def test_cli_env_var_sets_output(tmp_path, monkeypatch):
    cfgp = write(tmp_path, "env.yaml", SYSTOLE)
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "envout"))
    assert cli.main(["run", cfgp]) == 0
    assert (tmp_path / "envout" / "env.json").exists()


def test_cli_seed_override_and_reproducibility(tmp_path):
    cfgp = write(tmp_path, "rep.yaml", SYSTOLE)
    for d in ("a", "b"):
        assert cli.main(["run", cfgp, "--seed", "5", "--out", str(tmp_path / d)]) == 0

    def strip(p):
        data = json.loads(p.read_text())
        data.pop("wall_time", None)
        return data
    a, b = strip(tmp_path / "a" / "rep.json"), strip(tmp_path / "b" / "rep.json")
    assert a == b and a["inputs"]["seed"] == 5
    assert (tmp_path / "a" / "rep.csv").read_bytes() == (tmp_path / "b" / "rep.csv").read_bytes()


def test_cli_list(capsys):
    assert cli.main(["list"]) == 0
    assert "pu-round" in capsys.readouterr().out


def test_shipped_configs_parse():
    root = os.path.join(os.path.dirname(__file__), os.pardir, "configs")
    names = sorted(f for f in os.listdir(root) if f.endswith(".yaml"))
    assert names
    for name in names:
        with open(os.path.join(root, name), encoding="utf-8") as fh:
            parse_config(fh.read(), CATALOG)
