import math

import numpy as np
import pytest

from cocycle_lab import mat2core as mc
from cocycle_lab.errors import DegenerateDistribution, MonotonicityViolation
from cocycle_lab.families import (Discrete, Uniform, bernoulli, make_constant_family,
                                  make_rotation_family, make_schrodinger_family, sample_word,
                                  site_matrix, uniforms, validate_assumptions)
from cocycle_lab.lyapunov import estimate_le


def test_rotation_family_generators():
    A = mc.Mat2.normalized(2.0, 1.0, 0.0, 1.0).array
    fam = make_rotation_family(A, np.eye(2), 0.3, (0.0, 1.0))
    np.testing.assert_allclose(fam.generator(0.0, [0.0]), A, atol=1e-15)
    iden = make_rotation_family(np.eye(2), np.eye(2), 0.5, (0.0, 1.0))
    for alpha in (0.1, 0.7, 2.0):
        np.testing.assert_allclose(iden.generator(alpha, [1.0]), mc.rotation_array(alpha), atol=1e-15)


def test_rotation_family_parameter_speed(rng):
    A = mc.Mat2.normalized(3.0, 1.0, 1.0, 1.0).array
    fam = make_rotation_family(A, np.eye(2), 0.5, (0.0, 2.0))
    a = rng.uniform(0.1, 1.9, 1000)
    w = rng.integers(0, 2, (1000, 1)).astype(float)
    x = rng.uniform(0, 1, 1000)
    h = 1e-6
    slope = (fam.lift(a + h, w, x) - fam.lift(a - h, w, x)) / (2 * h)
    np.testing.assert_allclose(slope, 1 / math.pi, rtol=1e-6)


def test_schrodinger_examples():
    fam = make_schrodinger_family(bernoulli(0.0, 1.0), (-1.5, 1.5))
    np.testing.assert_allclose(fam.generator(0.0, [0.0, 0.0]), -np.eye(2), atol=1e-15)
    E = np.linspace(-3, 3, 50)
    V = np.linspace(-1, 2, 50)
    assert np.all(mc.det(site_matrix(E, V)) == 1.0)
    assert fam.block_size == 2
    with pytest.raises(DegenerateDistribution):
        make_schrodinger_family(Discrete((0.0,), (1.0,)), (0.0, 1.0))


def test_schrodinger_site_matrix_matches_textbook_norms(rng):
    E, V = rng.uniform(-3, 3, 100), rng.uniform(-2, 2, 100)
    textbook = np.zeros((100, 2, 2))
    textbook[:, 0, 0] = E - V
    textbook[:, 0, 1] = -1.0
    textbook[:, 1, 0] = 1.0
    np.testing.assert_allclose(mc.operator_norm(site_matrix(E, V)), mc.operator_norm(textbook), rtol=1e-14)


def test_schrodinger_block_det_drift(bern01_wide, rng):
    E = rng.uniform(-1.5, 1.5, 1000)
    w = rng.integers(0, 2, (1000, 2)).astype(float)
    assert np.abs(mc.det(bern01_wide.generator(E, w)) - 1.0).max() <= 1e-14


def test_constant_family_products():
    fam = make_constant_family(np.diag([2.0, 0.5]))
    mats = fam.step_matrices(0.5, np.zeros((30, 1)))[0]
    P, logs = mc.scaled_product(mats)
    np.testing.assert_allclose(P * np.exp(logs), np.diag([2.0 ** 30, 2.0 ** -30]), rtol=1e-12, atol=1e-20)
    ident = make_constant_family(np.eye(2))
    assert mc.log_norm(ident.step_matrices(0.0, np.zeros((100, 1)))[0]) == pytest.approx(0.0, abs=1e-13)


def test_constant_family_exponent_matches_eigenvalue():
    A = mc.Mat2.normalized(2.0, 1.0, 1.0, 1.5).array
    top = max(abs(np.linalg.eigvals(A)))
    est = estimate_le(make_constant_family(A), 0.0, 10_000, 1, 0)
    assert est.lambda_hat == pytest.approx(math.log(top), abs=1e-3)


def test_sample_word_contracts(bern01):
    a = sample_word(bern01, 5, 100)
    b = sample_word(bern01, 5, 100)
    assert np.array_equal(a.letters, b.letters)
    longer = sample_word(bern01, 5, 250)
    assert np.array_equal(longer.letters[:100], a.letters)
    other = sample_word(bern01, 5, 100, stream=(1,))
    assert not np.array_equal(other.letters, a.letters)


def test_sample_word_frequency():
    fam = make_rotation_family(np.eye(2), np.eye(2), 0.5, (0.0, 1.0))
    word = sample_word(fam, 99, 10 ** 6)
    assert abs(word.letters.mean() - 0.5) <= 1.5e-3


def test_distributions():
    d = Discrete((0.0, 1.0, 5.0), (1.0, 0.0, 1.0))
    assert d.bounds == (0.0, 5.0) and not d.degenerate
    draws = d.from_uniform(uniforms(0, 1000))
    assert set(np.unique(draws)) == {0.0, 5.0}
    u = Uniform(-1.0, 1.0)
    assert np.all(np.abs(u.from_uniform(uniforms(1, 100))) <= 1)
    with pytest.raises(ValueError):
        Uniform(1.0, 1.0)
    with pytest.raises(ValueError):
        Discrete((0.0,), (-1.0,))


def test_validate_pure_rotation(pure_rotation):
    rep = validate_assumptions(pure_rotation, samples=2000, grid=20)
    assert rep.delta_hat == pytest.approx(1 / math.pi, abs=1e-6)
    assert rep.M_hat == pytest.approx(1.0, abs=1e-12)
    assert rep.eligible


def test_validate_constant_is_ineligible(diag2):
    with pytest.raises(MonotonicityViolation) as info:
        validate_assumptions(diag2, samples=500, grid=20)
    assert info.value.report.delta_hat == 0.0


def test_validate_schrodinger(bern01_wide):
    rep = validate_assumptions(bern01_wide, samples=10_000, grid=101)
    assert rep.delta_hat > 0
    assert rep.M_hat <= (1 + 2.5) ** 2
    assert all(rep.a1_flags.values())


def test_monotone_lift(bern01_wide, rng):
    a = rng.uniform(-1.5, 1.5, 10_000)
    a2 = np.minimum(a + rng.uniform(1e-4, 0.5, 10_000), 1.5)
    w = rng.integers(0, 2, (10_000, 2)).astype(float)
    x = rng.uniform(-2, 2, 10_000)
    assert np.all(bern01_wide.lift(a2, w, x) > bern01_wide.lift(a, w, x))
