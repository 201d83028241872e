"""Lyapunov exponents, large-deviation rates and the finite-n uniform upper bound."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import mat2core as mc
from ._kernels import prefix_log_norms, vector_log_growth
from .errors import InsufficientEvents
from .families import CocycleFamily, WordStream, sample_word

CHUNK = 256


@dataclass(frozen=True)
class LEEstimate:
    lambda_hat: float
    stderr: float
    n: int
    reps: int
    a: float = float("nan")
    seed: int = 0


@dataclass(frozen=True)
class LDRate:
    epsilon: float
    zeta_hat: float
    n_list: tuple
    p_hat: tuple
    r_squared: float
    lambda_hat: float
    reps: int
    lower_bound: bool = False


@dataclass
class UpperBoundReport:
    epsilon_prime: float
    n: int
    pairs: int
    violations: int
    fraction: float
    worst_excess: float
    worst_pair: tuple
    stderr_slack: float
    per_node: list = field(default_factory=list)


def derive_seed(seed: int, *keys: int) -> int:
    """Independent 63-bit child seed for (seed, keys)."""
    seq = np.random.SeedSequence(entropy=int(seed) % 2**64, spawn_key=tuple(int(k) for k in keys))
    return int(seq.generate_state(1, np.uint64)[0] >> np.uint64(1))


def sample_words(family: CocycleFamily, seed: int, n: int, stop: int, start: int = 0, stream=()) -> np.ndarray:
    """Replicate words start..stop-1 stacked as (reps, n, dims); replicate r uses stream + (r,)."""
    return np.stack([sample_word(family, seed, n, stream=tuple(stream) + (r,)).letters
                     for r in range(start, stop)])


def replicate_log_norms(family: CocycleFamily, a: float, n: int, reps: int, seed: int) -> np.ndarray:
    """log ||T_{n,a}|| for each replicate word."""
    out = []
    for start in range(0, reps, CHUNK):
        words = sample_words(family, seed, n, min(reps, start + CHUNK), start)
        out.append(mc.log_norm(family.step_matrices(a, words)))
    return np.concatenate(out)


def estimate_le(family: CocycleFamily, a: float, n: int, reps: int, seed: int) -> LEEstimate:
    """Mean of (1/n) log ||T_{n,a}|| over independent words, in nats per block."""
    if n < 1 or reps < 1:
        raise ValueError("n and reps must be positive")
    rates = replicate_log_norms(family, a, n, reps, seed) / n
    stderr = float(np.std(rates, ddof=1) / np.sqrt(reps)) if reps > 1 else 0.0
    return LEEstimate(float(np.mean(rates)), stderr, int(n), int(reps), float(a), int(seed))


def le_curve(family: CocycleFamily, grid, n: int, reps: int, seed: int, threads: int = 1) -> list[LEEstimate]:
    """estimate_le at each node with seed derive_seed(seed, node index)."""
    grid = [float(a) for a in np.atleast_1d(grid)]
    if not grid:
        raise ValueError("grid must be nonempty")

    def node(i):
        return estimate_le(family, grid[i], n, reps, derive_seed(seed, i))

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(node, range(len(grid))))
    return [node(i) for i in range(len(grid))]


def curve_arrays(curve) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(a, lambda_hat, stderr) arrays from a sequence of LEEstimate."""
    return (np.array([e.a for e in curve]), np.array([e.lambda_hat for e in curve]),
            np.array([e.stderr for e in curve]))


def interpolate_curve(curve, a) -> np.ndarray:
    grid, lam, _ = curve_arrays(curve)
    if len(grid) == 1:
        return np.full(np.shape(a), lam[0])
    return np.interp(a, grid, lam)


def _linfit(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 0.0
    return float(slope), r2


def ld_rate(family: CocycleFamily, a: float, epsilon: float, n_list, reps: int, seed: int) -> LDRate:
    """Empirical large-deviation rate of (1/n) log |T_n e1| about the long-run mean."""
    n_list = tuple(int(n) for n in n_list)
    if epsilon <= 0 or len(n_list) < 3 or list(n_list) != sorted(set(n_list)):
        raise ValueError("need epsilon > 0 and at least three increasing sizes")
    nmax = n_list[-1]
    idx = np.array(n_list) - 1
    growth = []
    for start in range(0, reps, CHUNK):
        stop = min(reps, start + CHUNK)
        words = sample_words(family, seed, nmax, stop, start)
        mats = family.step_matrices(a, words)
        ones = np.ones(stop - start)
        growth.append(vector_log_growth(mats, ones, 0.0 * ones)[:, idx])
    rates = np.concatenate(growth) / np.array(n_list)
    lam = float(np.mean(rates[:, -1]))
    p_hat = np.mean(np.abs(rates - lam) > epsilon, axis=0)
    floor = 1.0 / reps
    if np.all(p_hat == 0):
        report = LDRate(epsilon, float(np.log(reps) / nmax), n_list, tuple(p_hat.tolist()),
                        0.0, lam, reps, lower_bound=True)
        raise InsufficientEvents("no replicate left the epsilon band", report)
    zeta, r2 = _linfit(n_list, -np.log(np.maximum(p_hat, floor)))
    return LDRate(epsilon, zeta, n_list, tuple(p_hat.tolist()), r2, lam, reps)


def dyadic_log_norms(mats: np.ndarray):
    """Log norms of aligned dyadic blocks [j 2^k, (j+1) 2^k) for k >= 0.

    Yields (k, log_norms of shape (B, n // 2^k)).
    """
    P = mats / np.sqrt(mc.frobenius_sq(mats))[..., None, None]
    logs = 0.5 * np.log(mc.frobenius_sq(mats))
    k = 0
    yield k, logs + np.log(mc.operator_norm(P))
    while P.shape[1] >= 2:
        half = P.shape[1] // 2
        prod = mc.matmul(P[:, 1:2 * half:2], P[:, 0:2 * half:2])
        scale = np.sqrt(mc.frobenius_sq(prod))
        P = prod / scale[..., None, None]
        logs = logs[:, 1:2 * half:2] + logs[:, 0:2 * half:2] + np.log(scale)
        k += 1
        yield k, logs + np.log(mc.operator_norm(P))


def uniform_upper_check(family: CocycleFamily, grid, word: WordStream, epsilon_prime: float,
                        le_curve_nodes, tol: float = 1e-9) -> UpperBoundReport:
    """Check log ||T_[m,m'],a|| <= lambda(a) (m' - m) + n eps' on anchored pairs.

    Pairs checked at each node: all prefixes (0, m') and all aligned dyadic
    blocks (j 2^k, (j+1) 2^k).  ``le_curve_nodes`` is a sequence of
    LEEstimate aligned with ``grid``.
    """
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    lam = np.array([e.lambda_hat for e in le_curve_nodes])
    err = np.array([e.stderr for e in le_curve_nodes])
    if lam.shape != grid.shape:
        raise ValueError("le_curve must align with grid")
    n = word.length
    band = n * epsilon_prime
    mats = family.step_matrices(grid, word.letters)
    prefix = prefix_log_norms(mats)
    m_prime = np.arange(1, n + 1)
    excess = prefix - lam[:, None] * m_prime[None, :] - band
    pairs = excess.size
    viol = int(np.sum(excess > tol * max(n, 1)))
    node_viol = np.sum(excess > tol * max(n, 1), axis=1)
    flat = int(np.argmax(excess))
    node, col = divmod(flat, n)
    worst = float(excess[node, col])
    worst_pair = (float(grid[node]), 0, int(col + 1))
    for k, logs in dyadic_log_norms(mats):
        length = 2 ** k
        ex = logs - lam[:, None] * length - band
        pairs += ex.size
        bad = ex > tol * max(n, 1)
        viol += int(np.sum(bad))
        node_viol += np.sum(bad, axis=1)
        j = int(np.argmax(ex))
        bn, bj = divmod(j, ex.shape[1])
        if ex[bn, bj] > worst:
            worst = float(ex[bn, bj])
            worst_pair = (float(grid[bn]), bj * length, (bj + 1) * length)
    per_node = [{"a": float(a), "violations": int(v)} for a, v in zip(grid, node_viol)]
    return UpperBoundReport(epsilon_prime, n, pairs, viol, viol / pairs, worst, worst_pair,
                            float(np.max(err) * n), per_node)
