import json
import subprocess
import sys

import pytest
import yaml

from circlelab import cli
from circlelab.cli import ExperimentConfig, main


def read_body(path):
    """Report text without its timestamp line."""
    lines = path.read_text().splitlines()
    drop = 1 if path.suffix == ".json" else 0
    assert "generated" in lines[drop]
    return lines[:drop] + lines[drop + 1:]


def test_schedule_report(tmp_path, capsys):
    assert main(["schedule", "--beta", "0.2", "--delta", "0.5", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "schedule.json").read_text())
    assert doc["sigmas"] == [1, 1.2] and doc["steps"] == 1
    assert len(doc["config_hash"]) == 16
    assert list(doc)[0] == "generated"


def test_theorem_preset_hypothesis(tmp_path, capsys):
    code = main(["denjoy", "--theorem", "--beta", "0.6", "--delta", "0.5", "--out", str(tmp_path)])
    assert code == 2
    assert "0<β<δ<1" in capsys.readouterr().err
    assert not list(tmp_path.iterdir())


def test_theorem_smoothness_checked_before_work(tmp_path, capsys):
    code = main(["conjugacy", "--theorem", "--family", "weierstrass_family", "--beta", "0.35",
                 "--delta", "0.6", "--r", "1", "--out", str(tmp_path)])
    assert code == 2
    assert "2+delta < r" in capsys.readouterr().err
    assert not list(tmp_path.iterdir())


@pytest.mark.parametrize("argv", [
    ["rotnum", "--precision", "32"],
    ["rotnum", "--family", "sine_family", "--a", "1.5", "--omega", "0.3"],
    ["rotnum", "--levels", "5,2"],
    ["rotnum", "--format", "xml"],
])
def test_usage_errors(tmp_path, argv):
    try:
        code = main(argv + ["--out", str(tmp_path)])
    except SystemExit as exc:  # argparse rejects choices itself
        code = exc.code
    assert code == 2


def test_float_map_values_rejected(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"experiment": "rotnum", "map": {"family": "sine_family", "a": 0.5,
                                                                      "omega": "0.3"}}))
    assert main(["run", str(cfg), "--out", str(tmp_path)]) == 2


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("experiment: rotnum\nbogus: 1\n")
    assert main(["run", str(cfg)]) == 2


def small_budget(tmp_path, **extra):
    cfg = tmp_path / "budget.yaml"
    cfg.write_text(yaml.safe_dump({"experiment": "rotnum", "budget": 20_000, **extra}))
    return str(cfg)


def test_resource_exit(tmp_path):
    code = main(["rotnum", "--config", small_budget(tmp_path), "--family", "sine_family", "--a", "0.5",
                 "--omega", "0.61", "--depth", "40", "--out", str(tmp_path)])
    assert code == 4


def test_verification_exit(tmp_path, monkeypatch):
    monkeypatch.setitem(cli.RUNNERS, "schedule", lambda cfg, ctx: ({"failures": [3]}, None, [], None))
    assert main(["schedule", "--beta", "0.2", "--delta", "0.5", "--out", str(tmp_path)]) == 3


def test_hash_ignores_output_dir():
    a = ExperimentConfig("rotnum", out="x")
    b = ExperimentConfig("rotnum", out="y")
    assert a.hash == b.hash != ExperimentConfig("rotnum", seed=1).hash


def test_rigid_identities_exact(tmp_path):
    args = ["identities", "--family", "rigid_rotation", "--rho", "golden", "--levels", "2,8", "--samples", "20"]
    assert main(args + ["--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "identities.json").read_text())
    assert doc["failures"] == []
    head, *rows = [l for l in (tmp_path / "identities.csv").read_text().splitlines() if not l.startswith("#")]
    cols = head.split(",")
    for r in rows:
        vals = dict(zip(cols, r.split(",")))
        assert all(float(vals[c]) == 0 for c in cols if c.startswith("observ"))


def test_double_run_bitwise(tmp_path):
    args = ["crossratio", "--family", "sine_family", "--a", "0.5", "--omega", "0.3", "--samples", "2"]
    for d in ("a", "b"):
        assert main(args + ["--out", str(tmp_path / d)]) == 0
    for name in ("crossratio.json", "crossratio.csv"):
        assert read_body(tmp_path / "a" / name) == read_body(tmp_path / "b" / name)
    for name in ("crossratio_plot.dat", "crossratio_plot.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_mode_locked_map_is_a_resource_error(tmp_path):
    # omega = 0.3 at a = 0.5 lies in a tongue: the Farey descent never terminates
    assert main(["rotnum", "--config", small_budget(tmp_path), "--family", "sine_family", "--a", "0.5",
                 "--omega", "0.3", "--depth", "12", "--out", str(tmp_path)]) == 4


def test_config_file_matches_flags(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"experiment": "rotnum", "depth": 12,
                                   "map": {"family": "rigid_rotation", "omega": "0.3819660112501051"}}))
    assert main(["run", str(cfg), "--out", str(tmp_path / "cfg")]) == 0
    assert main(["rotnum", "--family", "rigid_rotation", "--omega", "0.3819660112501051", "--depth", "12",
                 "--out", str(tmp_path / "flags")]) == 0
    assert read_body(tmp_path / "cfg" / "rotnum.json") == read_body(tmp_path / "flags" / "rotnum.json")


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "circlelab", "schedule", "--beta", "0.5", "--delta", "0.9",
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert out.returncode == 0
    assert json.loads(out.stdout)["steps"] == 8
