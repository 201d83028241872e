"""Rotation numbers, the density-of-states measure, a uniform-hyperbolicity test
and the flat-rotation-number versus hyperbolicity cross-check."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mat2core as mc
from ._kernels import split_directions
from .families import CocycleFamily
from .lyapunov import CHUNK, sample_words


@dataclass
class RotationCurve:
    grid: np.ndarray
    rho_hat: np.ndarray
    stderr: np.ndarray
    n: int
    reps: int


@dataclass
class DOSMeasure:
    grid: np.ndarray
    increments: np.ndarray
    stderr: np.ndarray
    rho: RotationCurve

    @property
    def total(self) -> float:
        return float(np.sum(self.increments))


@dataclass
class UHReport:
    is_uh: bool
    min_rate: float
    max_image_diameter: float
    separated: bool


@dataclass
class JohnsonReport:
    cells: list = field(default_factory=list)
    disagreements: list = field(default_factory=list)
    counted: int = 0
    fraction: float = 0.0


def _mean_err(samples, axis=0):
    reps = samples.shape[axis]
    mean = np.mean(samples, axis=axis)
    if reps < 2:
        return mean, np.zeros_like(mean)
    return mean, np.std(samples, axis=axis, ddof=1) / np.sqrt(reps)


def rotation_number(family: CocycleFamily, a: float, n: int, x0: float = 0.0, seed: int = 0,
                    reps: int = 1) -> tuple[float, float]:
    """Mean lifted displacement per block, (f_n(x0) - x0)/n, over replicate words."""
    vals = []
    for start in range(0, reps, CHUNK):
        words = sample_words(family, seed, n, min(reps, start + CHUNK), start)
        vals.append((family.lifted_orbits(a, words, x0) - x0) / n)
    mean, err = _mean_err(np.concatenate(vals))
    return float(mean), float(err)


def _coupled_finals(family, grid, n, x0, seed, reps):
    """Final lifted values (reps, nodes): replicate r shares one word across nodes."""
    grid = np.asarray(grid, dtype=float)
    out = np.empty((reps, grid.size))
    for r in range(reps):
        word = sample_words(family, seed, n, r + 1, r)[0]
        out[r] = family.lifted_orbits(grid, word, x0)
    return out


def rotation_curve(family: CocycleFamily, grid, n: int, seed: int = 0, reps: int = 1,
                   x0: float = 0.0) -> RotationCurve:
    grid = np.asarray(grid, dtype=float)
    finals = (_coupled_finals(family, grid, n, x0, seed, reps) - x0) / n
    mean, err = _mean_err(finals)
    return RotationCurve(grid, mean, err, int(n), int(reps))


def dos_measure(family: CocycleFamily, grid, n: int, seed: int = 0, reps: int = 1,
                x0: float = 0.0) -> DOSMeasure:
    """Cell masses rho(b_i) - rho(b_{i-1}) from coupled words, averaged over replicates."""
    grid = np.asarray(grid, dtype=float)
    if grid.size < 2:
        raise ValueError("need at least two grid nodes")
    finals = (_coupled_finals(family, grid, n, x0, seed, reps) - x0) / n
    inc, inc_err = _mean_err(np.diff(finals, axis=1))
    mean, err = _mean_err(finals)
    return DOSMeasure(grid, inc, inc_err, RotationCurve(grid, mean, err, int(n), int(reps)))


def _cyclic_label_changes(points, labels) -> int:
    order = np.argsort(points, kind="stable")
    lab = np.asarray(labels)[order]
    return int(np.sum(lab != np.roll(lab, 1)))


def uh_test(family: CocycleFamily, a: float, n: int, words: int, eta_floor: float = 1.0001,
            seed: int = 0, burn: int | None = None) -> UHReport:
    """Uniform hyperbolicity proxy from sampled length-n words.

    Requires (i) every sampled product grows faster than eta_floor per block,
    (ii) each product squeezes the circle outside a 1/8-neighbourhood of its
    repeller into an arc shorter than 1/4, and (iii) one invariant cone: the
    unstable directions met along every word (forward iterates) and the
    stable directions (backward iterates) are separated by a single pair of
    complementary arcs.  Checking (iii) at every time, not only for the full
    products, is what exposes rare locally elliptic stretches of the word.
    """
    if burn is None:
        burn = min(100, n // 4)
    P_parts, log_parts, u_parts, s_parts = [], [], [], []
    for start in range(0, words, CHUNK):
        ws = sample_words(family, seed, n, min(words, start + CHUNK), start)
        mats = family.step_matrices(a, ws)
        P, logs = mc.scaled_product(mats)
        P_parts.append(P)
        log_parts.append(logs)
        u, s = split_directions(mats)
        u_parts.append(u[:, burn:n - burn].ravel())
        s_parts.append(s[:, burn:n - burn].ravel())
    P = np.concatenate(P_parts)
    rates = (np.concatenate(log_parts) + np.log(mc.operator_norm(P))) / n
    min_rate = float(np.min(rates))
    if not min_rate > np.log(eta_floor):
        return UHReport(False, min_rate, 1.0, False)
    # an input at angle phi from the most expanded input lands at angle psi
    # from x+ with tan psi = tan phi / ||T||^2; evaluated in log scale
    log_sq = 2.0 * rates * n
    diam = float(np.max(2.0 / np.pi * np.arctan(np.exp(np.log(1.0 / np.tan(np.pi / 8)) - log_sq))))
    xu = np.concatenate(u_parts)
    xs = np.concatenate(s_parts)
    labels = np.concatenate([np.zeros(xu.size, np.int8), np.ones(xs.size, np.int8)])
    separated = _cyclic_label_changes(np.concatenate([xu, xs]), labels) <= 2
    return UHReport(bool(diam < 0.25 and separated), min_rate, diam, bool(separated))


def johnson_scan(family: CocycleFamily, grid, n: int, seed: int = 0, reps: int = 4, words: int = 32,
                 eta_floor: float = 1.0001, exclude=()) -> JohnsonReport:
    """Compare rho-flat cells with cells whose midpoint passes :func:`uh_test`.

    Cells containing any point of ``exclude`` (e.g. known spectral edges) are
    reported but left out of the disagreement fraction.
    """
    grid = np.asarray(grid, dtype=float)
    dos = dos_measure(family, grid, n, seed, reps)
    report = JohnsonReport()
    for i in range(grid.size - 1):
        lo, hi = grid[i], grid[i + 1]
        tol = max(3.0 * dos.stderr[i], 1.0 / n)
        flat = bool(abs(dos.increments[i]) < tol)
        uh = uh_test(family, 0.5 * (lo + hi), n, words, eta_floor, seed).is_uh
        skip = any(lo <= p <= hi for p in exclude)
        cell = {"cell": i, "lo": float(lo), "hi": float(hi), "increment": float(dos.increments[i]),
                "tol_flat": float(tol), "flat": flat, "uh": uh, "excluded": skip}
        report.cells.append(cell)
        if not skip:
            report.counted += 1
            if flat != uh:
                report.disagreements.append(i)
    report.fraction = len(report.disagreements) / report.counted if report.counted else 0.0
    return report
