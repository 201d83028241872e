import numpy as np
import pytest

from cocycle_lab import mat2core as mc
from cocycle_lab.families import (bernoulli, make_constant_family, make_rotation_family,
                                  make_schrodinger_family)


def random_sl2(rng, size=None, spread=2.0):
    """Random determinant-one matrices R_beta diag(s, 1/s) R_alpha."""
    shape = () if size is None else (size,)
    s = np.exp(rng.uniform(-spread, spread, shape))
    a = rng.uniform(0, 2 * np.pi, shape)
    b = rng.uniform(0, 2 * np.pi, shape)
    D = np.zeros(shape + (2, 2))
    D[..., 0, 0] = s
    D[..., 1, 1] = 1 / s
    return mc.matmul(mc.rotation_array(b), mc.matmul(D, mc.rotation_array(a)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def bern01():
    return make_schrodinger_family(bernoulli(0.0, 1.0), (0.3, 0.9))


@pytest.fixture(scope="session")
def bern01_wide():
    return make_schrodinger_family(bernoulli(0.0, 1.0), (-1.5, 1.5))


@pytest.fixture(scope="session")
def diag2():
    return make_constant_family(np.diag([2.0, 0.5]), (0.0, 1.0))


@pytest.fixture(scope="session")
def pure_rotation():
    return make_rotation_family(np.eye(2), np.eye(2), 0.5, (0.1, 0.2))


ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def report_criterion():
    """Record (and print) the one-line verdict of an acceptance criterion."""
    def record(k: int, ok: bool, detail: str, seconds: float):
        line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail} [{seconds:.1f} s]"
        ACCEPTANCE_LINES[k] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
