import csv
import json
import math
from pathlib import Path

import pytest

from cocycle_lab.cli import main

ROOT = Path(__file__).resolve().parents[1]

CONSTANT = """
[family]
kind = constant
matrix = 2, 0, 0, 0.5
J = 0, 1
[run]
seed = 1
n = 200
reps = 2
N = 10
[le-scan]
nodes = 5
"""

BERN = """
[family]
kind = schrodinger
support = 0, 1
J = 0.3, 0.9
[run]
seed = 3
n = 300
N = 60
reps = 2
[le-scan]
nodes = 4
[rotation-scan]
nodes = 6
[jump-scan]
words = 2
le_nodes = 3
le_n = 300
le_reps = 4
rho_n = 300
rho_reps = 2
validate_samples = 500
validate_grid = 11
[uh-scan]
nodes = 4
words = 10
johnson = true
[contraction]
a = 0.5
K_grid = 1, 4, 16
pairs = 200
sync_a_prime = 0.5001
sync_pairs = 100
[validate]
samples = 500
grid = 11
[localize]
L = 300
window = 0.3, 0.7
le_nodes = 3
le_n = 500
le_reps = 4
"""


def write(tmp_path, text, name="c.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_csv(path):
    lines = Path(path).read_text().splitlines()
    meta = [l for l in lines if l.startswith("#")]
    rows = list(csv.DictReader([l for l in lines if not l.startswith("#")]))
    return meta, rows


def test_le_scan_constant(tmp_path):
    out = tmp_path / "out"
    assert main(["le-scan", "--config", write(tmp_path, CONSTANT), "--out", str(out)]) == 0
    meta, rows = read_csv(out / "le_curve.csv")
    assert any(m.startswith("# config_sha256: ") for m in meta) and "# seed: 1" in meta
    assert len(rows) == 5
    assert all(float(r["lambda_hat"]) == pytest.approx(math.log(2), abs=1e-12) for r in rows)
    assert json.loads((out / "le-scan.meta.json").read_text())["wall_clock_seconds"] >= 0


def test_missing_key_exits_2(tmp_path, capsys):
    code = main(["le-scan", "--config", write(tmp_path, CONSTANT.replace("n = 200\n", "")), "--out", str(tmp_path)])
    assert code == 2
    assert "[run] n" in capsys.readouterr().err
    assert main(["le-scan", "--config", str(tmp_path / "nope.ini")]) == 2


def test_constant_family_jump_scan_is_ineligible(tmp_path, capsys):
    code = main(["jump-scan", "--config", write(tmp_path, CONSTANT), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "not eligible" in capsys.readouterr().err


def test_rotation_jump_scan_schema(tmp_path):
    text = """
[family]
kind = rotation
A = 1, 0, 0, 1
B = 1, 0, 0, 1
J = 0.1, 0.2
[run]
seed = 0
n = 50
N = 20
[jump-scan]
words = 1
le_n = 50
le_reps = 2
rho_n = 50
rho_reps = 1
validate_samples = 100
validate_grid = 10
"""
    out = tmp_path / "o"
    assert main(["jump-scan", "--config", write(tmp_path, text), "--out", str(out)]) == 0
    report = json.loads((out / "jump_scan.json").read_text())
    assert set(report) >= {"meta", "config", "summary", "per_word", "records", "validation"}
    assert report["summary"]["counts"]["Jump"] == 0
    assert report["config"]["family"]["kind"] == "rotation"


@pytest.mark.parametrize("command", ["le-scan", "rotation-scan", "jump-scan", "localize", "uh-scan",
                                     "contraction", "validate"])
def test_commands_are_deterministic(tmp_path, command):
    cfg = write(tmp_path, BERN)
    dirs = []
    for k, threads in enumerate(("1", "1", "4")):
        out = tmp_path / f"run{k}"
        assert main([command, "--config", cfg, "--out", str(out), "--threads", threads]) == 0
        dirs.append(out)
    primary = sorted(p.name for p in dirs[0].iterdir() if not p.name.endswith(".meta.json"))
    assert primary
    for name in primary:
        blobs = [(d / name).read_bytes() for d in dirs]
        assert blobs[0] == blobs[1] == blobs[2], name


def test_jump_scan_dump_table(tmp_path):
    out = tmp_path / "o"
    assert main(["jump-scan", "--config", write(tmp_path, BERN), "--out", str(out), "--dump-table"]) == 0
    meta, rows = read_csv(out / "trajectory_table_w1.csv")
    assert len(rows) == 301 * 61 and list(rows[0]) == ["m", "i", "x_tilde"]


def test_localize_free_and_empty(tmp_path):
    free = BERN.replace("support = 0, 1", "support = 0\nallow_degenerate = true").replace(
        "window = 0.3, 0.7", "window = -1, 1")
    out = tmp_path / "free"
    assert main(["localize", "--config", write(tmp_path, free), "--out", str(out)]) == 0
    summary = json.loads((out / "localize_summary.json").read_text())
    assert summary["eigenpairs"] > 0 and summary["localized"] is False
    empty = BERN.replace("window = 0.3, 0.7", "window = 10, 11")
    out = tmp_path / "empty"
    assert main(["localize", "--config", write(tmp_path, empty, "e.ini"), "--out", str(out)]) == 0
    assert json.loads((out / "localize_summary.json").read_text())["eigenpairs"] == 0


def test_seed_override(tmp_path, monkeypatch):
    monkeypatch.setenv("COCYCLE_LAB_SEED", "77")
    out = tmp_path / "o"
    assert main(["validate", "--config", write(tmp_path, BERN), "--out", str(out)]) == 0
    assert json.loads((out / "validation.json").read_text())["meta"]["seed"] == 77


@pytest.mark.parametrize("name", sorted(p.name for p in (ROOT / "configs").glob("*.ini")))
def test_shipped_configs_parse(name):
    from cocycle_lab.config import RunConfig, build_family
    cfg = RunConfig.load(ROOT / "configs" / name, env={})
    assert cfg.seed >= 0
    build_family(cfg)
