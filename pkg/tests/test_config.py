import numpy as np
import pytest

from cocycle_lab.config import RunConfig, build_distribution, build_family
from cocycle_lab.errors import ConfigError
from cocycle_lab.families import Uniform

TEXT = """
[family]
kind = schrodinger
support = 0, 1   ; two values
weights = 0.5, 0.5
J = 0.3, 0.9

[run]
seed = 42
n = 100
"""


def test_round_trip_and_digest():
    cfg = RunConfig.from_text(TEXT)
    again = RunConfig.from_text(cfg.to_text())
    assert again == cfg and again.digest == cfg.digest
    assert cfg.raw("family", "support") == "0, 1"
    changed = RunConfig.from_text(TEXT.replace("seed = 42", "seed = 43"))
    assert changed.digest != cfg.digest


def test_keys_keep_case():
    cfg = RunConfig.from_text("[run]\nN = 5\nn = 7\n")
    assert (cfg.getint("run", "N"), cfg.getint("run", "n")) == (5, 7)


def test_typed_access_errors():
    cfg = RunConfig.from_text(TEXT)
    with pytest.raises(ConfigError, match=r"\[run\] reps"):
        cfg.getint("run", "reps")
    assert cfg.getint("run", "reps", 3) == 3
    with pytest.raises(ConfigError, match="not an integer"):
        RunConfig.from_text("[run]\nseed = x\n").seed
    with pytest.raises(ConfigError):
        RunConfig.from_text("[run]\nflag = maybe\n").getbool("run", "flag")
    with pytest.raises(ConfigError):
        RunConfig.from_text("[family]\nJ = 1, 0\n").interval("family", "J")
    with pytest.raises(ConfigError):
        RunConfig.from_text("not a config")
    assert cfg.interval("family", "J") == (0.3, 0.9)


def test_load_and_seed_override(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text(TEXT)
    assert RunConfig.load(path, env={}).seed == 42
    assert RunConfig.load(path, env={"COCYCLE_LAB_SEED": "9"}).seed == 9
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "missing.ini")


def test_build_family_kinds():
    fam = build_family(RunConfig.from_text(TEXT))
    assert fam.kind == "schrodinger" and fam.J == (0.3, 0.9)
    rot = RunConfig.from_text("[family]\nkind = rotation\nA = 2, 0, 0, 0.5\nB = 1, 0, 0, 1\np = 0.3\nJ = 0, 1\n")
    assert build_family(rot).kind == "rotation"
    const = RunConfig.from_text("[family]\nkind = constant\nmatrix = 2, 0, 0, 0.5\nJ = 0, 1\n")
    np.testing.assert_allclose(build_family(const).generator(0.5, [0.0]), np.diag([2.0, 0.5]))
    uni = RunConfig.from_text("[family]\nkind = schrodinger\ndistribution = uniform\nlo = -1\nhi = 1\nJ = 0, 1\n")
    assert build_distribution(uni) == Uniform(-1.0, 1.0)


@pytest.mark.parametrize("body", [
    "kind = schrodinger\nsupport = 0\nJ = 0, 1",
    "kind = constant\nmatrix = 1, 1, 1, 1\nJ = 0, 1",
    "kind = constant\nmatrix = 1, 0, 0\nJ = 0, 1",
    "kind = rotation\nA = 1, 0, 0, 1\nB = 1, 0, 0, 1\np = 1.5\nJ = 0, 1",
    "kind = mystery\nJ = 0, 1",
    "kind = schrodinger\ndistribution = gamma\nJ = 0, 1",
])
def test_build_family_rejects(body):
    with pytest.raises(ConfigError):
        build_family(RunConfig.from_text("[family]\n" + body + "\n"))


def test_degenerate_allowed_on_request():
    cfg = RunConfig.from_text("[family]\nkind = schrodinger\nsupport = 0\nallow_degenerate = true\nJ = 0, 1\n")
    assert build_family(cfg).alphabet.dist.degenerate
