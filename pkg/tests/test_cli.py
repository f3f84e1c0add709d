import json
import subprocess
import sys
from dataclasses import replace
from pathlib import Path

import pytest

from release_ladder.cli import main
from release_ladder.config import default_scenario, dump_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture(scope="module")
def small_config(tmp_path_factory):
    cfg = default_scenario()
    cfg = replace(cfg, sim=replace(cfg.sim, horizon=2.0, n_paths=16),
                  telemetry=replace(cfg.telemetry, replications=2),
                  finance=replace(cfg.finance, n_paths=40, horizon=2.0))
    path = tmp_path_factory.mktemp("cfg") / "small.ini"
    dump_config(cfg, path)
    return path


def _snapshot(d: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_solve_ladder_writes_outputs(tmp_path):
    assert main(["solve-ladder", "--out", str(tmp_path)]) == 0
    body = json.loads((tmp_path / "ladder.json").read_text())
    assert body["beta1"] < body["z1_star"] < body["z2_star"] < body["beta2"]
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert set(manifest["outputs"]) >= {"ladder.json", "value_function.csv", "config_used.ini"}
    assert (tmp_path / "value_function.csv").read_text().startswith("z,V,dV\n")


def test_benchmark_flag_solves_symmetric_case(tmp_path):
    assert main(["solve-ladder", "--benchmark", "--out", str(tmp_path)]) == 0
    body = json.loads((tmp_path / "ladder.json").read_text())
    assert body["beta2"] == pytest.approx(-body["beta1"], abs=1e-8) and body["benchmark"] is True


def test_invalid_config_exits_2(tmp_path, capsys):
    cfg = default_scenario()
    bad = replace(cfg, params=replace(cfg.params, k1=0.2, k2=0.1))
    dump_config(bad, tmp_path / "bad.ini")
    assert main(["solve-ladder", "--config", str(tmp_path / "bad.ini"), "--out", str(tmp_path / "o")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "invalid-config" and "k1 < k2 required" in err["violations"]


def test_unparsable_config_exits_2(tmp_path):
    (tmp_path / "x.ini").write_text("[params]\nsigma = not-a-number\n")
    assert main(["solve-ladder", "--config", str(tmp_path / "x.ini"), "--out", str(tmp_path / "o")]) == 2


def test_missing_config_exits_4(tmp_path, capsys):
    assert main(["solve-ladder", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path / "o")]) == 4
    assert json.loads(capsys.readouterr().err)["error"] == "io"


def test_unwritable_output_exits_4(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["solve-ladder", "--out", str(blocker / "sub")]) == 4


@pytest.mark.parametrize("command, config", [
    ("solve-ladder", None), ("simulate", None), ("adoption", CONFIGS / "adoption.ini"),
    ("finance-wedge", CONFIGS / "with_default.ini"), ("telemetry", None),
])
def test_rerun_is_byte_identical_across_workers(tmp_path, small_config, command, config):
    cfg = str(config) if config is not None else str(small_config)
    extra = ["--paths", "40"] if command == "finance-wedge" else []
    assert main([command, "--config", cfg, "--out", str(tmp_path / "a"), "--workers", "1", *extra]) == 0
    assert main([command, "--config", cfg, "--out", str(tmp_path / "b"), "--workers", "4", *extra]) == 0
    a, b = _snapshot(tmp_path / "a"), _snapshot(tmp_path / "b")
    assert a.keys() == b.keys() and a == b


def test_seed_override_changes_simulation(tmp_path, small_config):
    main(["simulate", "--config", str(small_config), "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["simulate", "--config", str(small_config), "--out", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a" / "batch.json").read_bytes() != (tmp_path / "b" / "batch.json").read_bytes()
    assert json.loads((tmp_path / "a" / "manifest.json").read_text())["seed"] == 1


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "release_ladder.cli", "adoption", "--config",
                          str(CONFIGS / "adoption.ini"), "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert json.loads((tmp_path / "adoption.json").read_text())["alpha"] == pytest.approx(0.75)
