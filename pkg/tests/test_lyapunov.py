import math

import numpy as np
import pytest

from cocycle_lab import mat2core as mc
from cocycle_lab.errors import InsufficientEvents
from cocycle_lab.families import make_constant_family, sample_word
from cocycle_lab.lyapunov import (derive_seed, dyadic_log_norms, estimate_le, interpolate_curve, ld_rate,
                                  le_curve, replicate_log_norms, sample_words, uniform_upper_check)
from cocycle_lab._kernels import prefix_log_norms

# long-run reference for Bernoulli{0,1} at E = 0.5: 4 x 10^7 sites with an
# independent recurrence loop, 0.029966 +- 0.00002 per site
LAMBDA_E05_PER_BLOCK = 0.05993


def test_constant_family_exact(diag2):
    est = estimate_le(diag2, 0.3, 1000, 3, 0)
    assert est.lambda_hat == pytest.approx(math.log(2), abs=1e-12)
    assert est.stderr == 0.0
    ident = make_constant_family(np.eye(2))
    assert estimate_le(ident, 0.0, 500, 2, 0).lambda_hat == pytest.approx(0.0, abs=1e-12)


def test_bernoulli_exponent_against_reference(bern01):
    est = estimate_le(bern01, 0.5, 10_000, 50, 7)
    assert est.lambda_hat / est.stderr > 5
    assert abs(est.lambda_hat - LAMBDA_E05_PER_BLOCK) < 4 * est.stderr + 2e-3


def test_le_curve_shapes(diag2, bern01):
    curve = le_curve(diag2, np.linspace(0, 1, 5), 200, 2, 0)
    assert all(e.lambda_hat == pytest.approx(math.log(2), abs=1e-12) for e in curve)
    one = le_curve(bern01, [0.5], 500, 4, 11)[0]
    assert one == estimate_le(bern01, 0.5, 500, 4, derive_seed(11, 0))
    assert [e.a for e in le_curve(bern01, [0.8, 0.4, 0.6], 100, 2, 0)] == [0.8, 0.4, 0.6]


def test_le_curve_thread_independent(bern01):
    grid = np.linspace(0.3, 0.9, 6)
    assert le_curve(bern01, grid, 300, 4, 3, threads=1) == le_curve(bern01, grid, 300, 4, 3, threads=4)


def test_le_curve_continuity(bern01_wide):
    curve = le_curve(bern01_wide, np.linspace(-1.5, 1.5, 101), 2000, 20, 5)
    lam = np.array([e.lambda_hat for e in curve])
    err = np.array([e.stderr for e in curve])
    # a node against the midpoint of its neighbours removes the genuine slope
    resid = lam[1:-1] - 0.5 * (lam[:-2] + lam[2:])
    pooled = np.sqrt(err[1:-1] ** 2 + 0.25 * (err[:-2] ** 2 + err[2:] ** 2))
    assert np.max(np.abs(resid) / pooled) < 5


def test_interpolate_curve(diag2):
    curve = le_curve(diag2, [0.0, 1.0], 10, 1, 0)
    assert interpolate_curve(curve, 0.25) == pytest.approx(math.log(2))
    assert interpolate_curve(curve[:1], 0.7) == pytest.approx(math.log(2))


def test_inverse_transpose_norms_agree(bern01):
    words = sample_words(bern01, 4, 300, 3)
    mats = bern01.step_matrices(0.6, words)
    inv_t = np.empty_like(mats)
    inv_t[..., 0, 0] = mats[..., 1, 1]
    inv_t[..., 0, 1] = -mats[..., 1, 0]
    inv_t[..., 1, 0] = -mats[..., 0, 1]
    inv_t[..., 1, 1] = mats[..., 0, 0]
    np.testing.assert_allclose(mc.log_norm(inv_t), mc.log_norm(mats), rtol=1e-12)


def test_log_scale_matches_naive_product(bern01):
    word = sample_word(bern01, 8, 500).letters
    mats = bern01.step_matrices(0.45, word)[0]
    naive, out = np.eye(2), []
    for M in mats:
        naive = M @ naive
        out.append(math.log(np.linalg.norm(naive, 2)))
    logs = prefix_log_norms(mats[None])[0]
    assert np.max(np.abs(logs - np.array(out)) / np.arange(1, 501)) < 1e-9


def test_estimator_nonnegative(bern01):
    assert np.all(replicate_log_norms(bern01, 0.7, 50, 200, 1) >= 0)


def test_ld_rate_lower_bound_branches(diag2, bern01):
    with pytest.raises(InsufficientEvents) as info:
        ld_rate(diag2, 0.0, 0.1, (50, 100, 200), 1000, 0)
    rep = info.value.report
    assert rep.lower_bound and rep.zeta_hat == pytest.approx(math.log(1000) / 200)
    with pytest.raises(InsufficientEvents):
        ld_rate(bern01, 0.5, 10 * 12.25, (20, 40, 80), 1000, 0)
    with pytest.raises(ValueError):
        ld_rate(bern01, 0.5, 0.1, (20, 40), 1000, 0)


def test_dyadic_blocks(bern01):
    mats = bern01.step_matrices(0.5, sample_word(bern01, 2, 16).letters)
    levels = dict(dyadic_log_norms(mats))
    assert sorted(levels) == [0, 1, 2, 3, 4]
    np.testing.assert_allclose(levels[4][0, 0], mc.log_norm(mats[0]), rtol=1e-12)
    np.testing.assert_allclose(levels[2][0, 1], mc.log_norm(mats[0, 4:8]), rtol=1e-12)


def test_uniform_upper_check_examples(diag2, bern01):
    word = sample_word(diag2, 0, 256)
    grid = np.linspace(0, 1, 3)
    rep = uniform_upper_check(diag2, grid, word, 0.01, le_curve(diag2, grid, 10, 1, 0))
    assert rep.violations == 0
    word = sample_word(bern01, 0, 256)
    grid = np.linspace(0.3, 0.9, 5)
    curve = le_curve(bern01, grid, 256, 10, 0)
    rep = uniform_upper_check(bern01, grid, word, 0.0, curve)
    assert rep.violations > 0 and rep.pairs > 5 * 256
    with pytest.raises(ValueError):
        uniform_upper_check(bern01, grid, word, 0.1, curve[:2])
