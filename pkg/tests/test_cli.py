import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from volterra_lift import cli, config, io
from volterra_lift.errors import ConfigParse

SMALL = ["--paths", "64", "--steps", "8"]


def run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = cli.main([*argv, "--out", str(out)])
    return code, out


def test_svee_roundtrip(tmp_path, rng):
    X = rng.standard_normal((5, 7, 2))
    io.write_svee(tmp_path / "x.svee", X)
    np.testing.assert_array_equal(io.read_svee(tmp_path / "x.svee"), X)
    (tmp_path / "bad").write_bytes(b"NOPE" + bytes(8))
    with pytest.raises(ValueError):
        io.read_svee(tmp_path / "bad")


def test_config_parse_and_dump_roundtrip():
    cfg = config.parse_text("[model]\npreset = fbm2\nkernel.H = 0.3  # rough\n"
                            "[task]\ncommand = sve simulate\ncheckpoints = 0.5,1\n")
    assert cfg.get("model.kernel.H") == 0.3 and cfg.get("task.checkpoints") == (0.5, 1.0)
    again = config.parse_text(cfg.dump())
    assert again.values == cfg.values
    assert cfg.command == ("sve", "simulate")


@pytest.mark.parametrize("text, msg", [
    ("[model]\nbogus = 1\n", "unknown key model.bogus"),
    ("[nope]\n", "unknown section"),
    ("preset = x\n", "outside a section"),
    ("[grid]\nsteps = many\n", "cannot parse"),
    ("[model]\njunk\n", "expected key = value"),
])
def test_config_errors(text, msg):
    with pytest.raises(ConfigParse, match=msg):
        config.parse_text(text)


def test_missing_command():
    with pytest.raises(ConfigParse, match="missing required key task.command"):
        config.ExperimentConfig().command


@given(st.integers(1, 10 ** 6), st.floats(0.01, 0.49), st.booleans())
def test_config_dump_roundtrip_property(steps, H, force):
    cfg = config.ExperimentConfig()
    cfg.set("grid.steps", str(steps))
    cfg.set("model.kernel.H", repr(H))
    cfg.set("task.force", str(force))
    assert config.parse_text(cfg.dump()).values == cfg.values


def test_sve_simulate_and_manifest_rerun(tmp_path):
    code, out = run(tmp_path, "sve", "simulate", "--model", "fbm2", "--H", "0.3", *SMALL)
    assert code == 0
    rec = json.loads((out / "result.json").read_text())
    assert rec["operation"] == "sve simulate" and "var X_T" in rec["per_term"]
    assert io.read_svee(out / "paths.svee").shape == (64, 9, 1)
    manifest = out / "manifest.txt"
    code = cli.main(["run", str(manifest), "--threads", "3", "--out", str(tmp_path / "re")])
    assert code == 0
    assert (tmp_path / "re" / "result.json").read_text() == (out / "result.json").read_text()


@pytest.mark.parametrize("argv", [
    ["lift", "flow-check", "--model", "smooth", "--H", "0.35", "--t", "0.5"],
    ["lift", "forward-check", "--model", "linear", "--H", "0.35", "--target", "lift-mean",
     "--set", "model.x0.value=1"],
    ["oulift", "compare", "--model", "fbm2", "--H", "0.3", "--nodes", "20"],
    ["tangent", "first", "--model", "smooth", "--H", "0.35"],
    ["tangent", "second", "--model", "smooth", "--H", "0.35"],
    ["kolmo", "value", "--model", "smooth", "--H", "0.35", "--payoff", "pointwise:tanh"],
    ["kolmo", "pde", "--model", "gaussian", "--H", "0.35", "--t", "0.5"],
    ["kolmo", "fpe-mild", "--model", "gaussian", "--H", "0.35", "--payoff", "quadratic"],
    ["verify", "kernel", "--model", "fbm2", "--H", "0.3"],
    ["verify", "weight", "--model", "fbm2", "--H", "0.3"],
    ["verify", "gronwall", "--model", "fbm2", "--H", "0.3"],
])
def test_subcommands_run(tmp_path, argv):
    code, out = run(tmp_path, *argv, *SMALL)
    assert code == 0
    assert (out / "result.json").exists() and (out / "manifest.txt").exists()


def test_exit_codes(tmp_path, capsys):
    code, _ = run(tmp_path, "sve", "simulate", "--model", "fbm2", *SMALL)
    assert code == 2 and "missing required key model.kernel.H" in capsys.readouterr().err
    code, _ = run(tmp_path, "sve", "simulate", "--set", "model.bogus=1")
    assert code == 2
    code, _ = run(tmp_path, "kolmo", "pde", "--model", "smooth", "--H", "0.2", "--t", "0.5",
                  *SMALL)
    assert code == 1 and "HurstBelowThreshold" in capsys.readouterr().err
    code, _ = run(tmp_path, "kolmo", "pde", "--model", "gaussian", "--H", "0.2", "--t", "0.5",
                  *SMALL)
    assert code == 0


def test_dry_run_writes_nothing(tmp_path, capsys):
    code, out = run(tmp_path, "sve", "simulate", "--model", "brownian", "--dry-run")
    assert code == 0 and not out.exists()
    assert "# plan: sve simulate" in capsys.readouterr().out
