"""Empirical regularity constants of a family: distortion and Lipschitz bounds,
averaged two-point contraction and coupled-orbit synchronization."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import mat2core as mc
from ._kernels import lift_orbits
from .families import CocycleFamily, Discrete, uniforms
from .lyapunov import derive_seed, sample_words

SAFETY = 1.1


@dataclass(frozen=True)
class DistortionConstants:
    kappa: float
    C: float
    L: float
    L_p: float
    M_hat: float
    delta_hat: float
    dx: float
    da: float

    def inflated(self, factor: float = SAFETY) -> "DistortionConstants":
        return DistortionConstants(self.kappa * factor, self.C * factor, self.L * factor, self.L_p * factor,
                                   self.M_hat * factor, self.delta_hat / factor, self.dx, self.da)


@dataclass(frozen=True)
class ContractionParams:
    s: float
    K: int
    ratio_hat: float
    stderr: float
    valid: bool


def _letter_set(family: CocycleFamily, count: int, seed: int) -> np.ndarray:
    """Every letter of a finite alphabet, else ``count`` sampled letters."""
    dist, dims = family.alphabet.dist, family.alphabet.dims
    if isinstance(dist, Discrete):
        pts = [s for s, w in zip(dist.support, dist.weights) if w > 0]
        return np.array(list(itertools.product(pts, repeat=dims)), dtype=float)
    u = uniforms(seed, count * dims, stream=(0xD0,))
    return family.alphabet.from_uniform(u).reshape(count, dims)


def distortion_constants(family: CocycleFamily, grid_density: int = 100, seed: int = 0) -> DistortionConstants:
    """Suprema over a dense (x, a, letter) grid, derivatives by central differences.

    kappa = sup |d/dx log f'|, C = sup |d/da log f'|, L = sup f',
    L_p = sup |d/da f~|; ``dx`` and ``da`` record the sampling resolution.
    The x-suprema of kappa and L have closed forms per matrix,
    pi (s1^2 - s2^2) / |det| and s1^2 / |det|, so only a and the letter are
    sampled for those two.
    """
    if grid_density < 100:
        raise ValueError("grid_density must be at least 100")
    lo, hi = family.J
    dx = 1.0 / grid_density
    da = family.width / (grid_density - 1)
    ha = 1e-5 * family.width
    xs = (np.arange(grid_density) + 0.5) * dx
    As = np.clip(np.linspace(lo, hi, grid_density), lo + ha, hi - ha)
    letters = _letter_set(family, grid_density, seed)
    A, W, X = np.meshgrid(As, np.arange(len(letters)), xs, indexing="ij")
    A, W, X = A.ravel(), letters[W.ravel()], X.ravel()
    mats = family.generator(A, W)
    f2 = mc.frobenius_sq(mats)
    dd = np.abs(mc.det(mats))
    a, b, c, d = mats[..., 0, 0], mats[..., 0, 1], mats[..., 1, 0], mats[..., 1, 1]
    # s1^2 - s2^2 from the entries of A^T A, free of cancellation near isometries
    spread = np.hypot(a * a + c * c - b * b - d * d, 2.0 * (a * b + c * d))
    kappa = np.pi * spread / dd
    top = 0.5 * (f2 + spread) / dd
    plus, minus = family.generator(A + ha, W), family.generator(A - ha, W)
    C = np.abs(np.log(mc.proj_derivative(plus, X)) - np.log(mc.proj_derivative(minus, X))) / (2 * ha)
    slope = (family.lift(A + ha, W, X) - family.lift(A - ha, W, X)) / (2 * ha)
    return DistortionConstants(
        kappa=float(np.max(kappa)), C=float(np.max(C)), L=float(np.max(top)),
        L_p=float(np.max(np.abs(slope))), M_hat=float(np.max(mc.operator_norm(mats))),
        delta_hat=float(np.min(slope)), dx=dx, da=da)


def check_distortion_bound(family: CocycleFamily, word, cell, x_interval, samples: int = 1000,
                           constants: DistortionConstants | None = None, seed: int = 0) -> float:
    """Worst slack of the bounded-distortion inequality along random sub-blocks.

    For random a3 in ``cell``, y3 in ``x_interval`` and block [m', m''] of the
    word, compares |log f'_{[m',m''],a3}(y3) - log f'_{[m',m''],a1}(y1)| with
    kappa sum_k |Y_k| + C |a3 - a1| (m'' - m'), where (a1, y1) are the left
    ends and Y_k joins the two orbits at step k.  Constants are inflated by
    the safety factor.  Returns max(lhs - rhs), which should be <= 0.
    """
    letters = np.asarray(getattr(word, "letters", word))
    n = letters.shape[0]
    if n > 1000:
        raise ValueError("word length must be at most 1000 for the distortion check")
    consts = (constants or distortion_constants(family)).inflated()
    u = uniforms(seed, 4 * samples, stream=(0xD1,)).reshape(samples, 4)
    a1, y1 = float(cell[0]), float(x_interval[0])
    a3 = cell[0] + (cell[1] - cell[0]) * u[:, 0]
    y3 = x_interval[0] + (x_interval[1] - x_interval[0]) * u[:, 1]
    start = np.minimum((u[:, 2] * n).astype(int), n - 1)
    length = 1 + np.minimum((u[:, 3] * (n - start)).astype(int), n - start - 1)
    stop = start + length
    p1, p3 = np.full(samples, y1), y3.copy()
    d1, d3, spread = np.zeros(samples), np.zeros(samples), np.zeros(samples)
    for k in range(int(start.min()), int(stop.max())):
        live = (start <= k) & (k < stop)
        w = np.broadcast_to(letters[k], (samples,) + letters.shape[1:])
        spread += np.where(live, np.abs(p3 - p1), 0.0)
        d1 += np.where(live, np.log(mc.proj_derivative(family.generator(a1, w), p1)), 0.0)
        d3 += np.where(live, np.log(mc.proj_derivative(family.generator(a3, w), p3)), 0.0)
        p1 = np.where(live, family.lift(a1, w, p1), p1)
        p3 = np.where(live, family.lift(a3, w, p3), p3)
    lhs = np.abs(d3 - d1)
    rhs = consts.kappa * spread + consts.C * np.abs(a3 - a1) * length
    return float(np.max(lhs - rhs))


def probe_pairs(count: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """Evenly spread starting points, partners alternately a quarter and a half turn away."""
    x = (np.arange(count) + 0.5) / count
    return x, np.mod(x + np.where(np.arange(count) % 2, 0.5, 0.25), 1.0)


def _pair_ratios(family, a, K, pairs, seed, x, y):
    """dist(f_K x, f_K y) and dist(x, y) for every (word, probe); shapes (pairs, P)."""
    P = x.size
    out = np.empty((pairs, P))
    chunk = max(1, 65536 // P)
    for start in range(0, pairs, chunk):
        stop = min(pairs, start + chunk)
        words = sample_words(family, seed, K, stop, start, stream=(0xC0,))
        mats, offs = family.step_factors(a, words)
        B = stop - start
        mats = np.repeat(mats, P, axis=0)
        offs = np.repeat(offs, P, axis=0)
        steps = np.full(B * P, K, dtype=np.int64)
        fx = lift_orbits(mats, offs, np.tile(x, B), steps, False)[0]
        fy = lift_orbits(mats, offs, np.tile(y, B), steps, False)[0]
        out[start:stop] = mc.circle_dist(fx, fy).reshape(B, P)
    return out, mc.circle_dist(x, y)


def estimate_contraction(family: CocycleFamily, a: float, s_grid, K_grid, pairs: int = 1000,
                         seed: int = 0, probes: int = 32) -> ContractionParams:
    """Smallest K, then largest s, whose probe-max mean ratio of dist^s is at most 1/2.

    phi(x, y) = dist(x, y)^s; the ratio for a probe is the Monte-Carlo mean
    of phi(f_K x, f_K y) / phi(x, y) over independent words of length K.
    Returns an invalid result carrying the best ratio seen if nothing qualifies.
    """
    if pairs < 2:
        raise ValueError("need at least two word samples")
    x, y = probe_pairs(probes)
    best = ContractionParams(float("nan"), 0, math.inf, 0.0, False)
    for K in sorted(int(k) for k in K_grid):
        after, before = _pair_ratios(family, a, K, pairs, derive_seed(seed, K), x, y)
        for s in sorted((float(s) for s in s_grid), reverse=True):
            ratio = (after / before) ** s
            means = ratio.mean(axis=0)
            j = int(np.argmax(means))
            err = float(ratio[:, j].std(ddof=1) / math.sqrt(pairs))
            if means[j] <= 0.5:
                return ContractionParams(s, K, float(means[j]), err, True)
            if means[j] < best.ratio_hat:
                best = ContractionParams(s, K, float(means[j]), err, False)
    return best


def sync_distance(family: CocycleFamily, a: float, a_prime: float, n: int, pairs: int = 100,
                  seed: int = 0, x=None, y=None) -> dict:
    """10/50/90% quantiles of dist(f_{m,a} x, f_{m,a'} y) at m = n/4, n/2, n.

    Both orbits use the same word; starting points are random unless given.
    """
    u = uniforms(seed, 2 * pairs, stream=(0xC1,)).reshape(pairs, 2)
    xs = u[:, 0] if x is None else np.full(pairs, float(x))
    ys = u[:, 1] if y is None else np.full(pairs, float(y))
    words = sample_words(family, seed, n, pairs, stream=(0xC2,))
    out = {}
    marks = sorted({max(1, n // 4), max(1, n // 2), n})
    ta = family.lifted_orbits(np.full(pairs, a), words, xs, record=True)
    tb = family.lifted_orbits(np.full(pairs, a_prime), words, ys, record=True)
    for m in marks:
        d = mc.circle_dist(ta[m], tb[m])
        out[m] = tuple(float(q) for q in np.quantile(d, [0.1, 0.5, 0.9]))
    return out
