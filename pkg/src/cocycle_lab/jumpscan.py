"""Finite-product parameter scan: trajectory tables, interval classes, jump
records with their cancellation parameters, and jump-distribution statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import mat2core as mc
from ._kernels import lift_back, lift_orbits, prefix_log_norms
from .errors import CocycleLabError, MonotonicityViolation, NoCrossing
from .families import CocycleFamily, WordStream

SMALL, OPINION, JUMP, BAD = "Small", "OpinionChanger", "Jump", "Bad"
KINDS = (SMALL, OPINION, JUMP, BAD)
ANGLE_TOL = 1e-6
GROSS_TOL = 1e-3


@dataclass
class TrajectoryTable:
    grid: np.ndarray
    n: int
    values: np.ndarray  # (n + 1, N + 1)
    word_seed: int = 0

    @property
    def lengths(self) -> np.ndarray:
        """Interval lengths |X_{m,i}|, shape (n + 1, N); row 0 is all zero."""
        return np.diff(self.values, axis=1)

    def rows(self) -> list:
        """(m, i, x_tilde) triples for a CSV dump."""
        m, i = np.indices(self.values.shape)
        return list(zip(m.ravel().tolist(), i.ravel().tolist(), self.values.ravel().tolist()))


@dataclass(frozen=True)
class IntervalClass:
    kind: str
    m0: int | None = None


@dataclass
class JumpRecord:
    i_k: int
    m_k: int
    a_k: float
    psi_dev: float
    angle_residual: float
    lambda_hat: float


@dataclass
class StatReport:
    M: int
    expected: float
    relative_gap: float
    discrepancy: float
    worst_probe: tuple = ()


# ------------------------------------------------------------------ table


def _check_monotone(values, grid, offset=0):
    steps = np.diff(values, axis=1)
    if steps.size and steps.min() < -1e-9:
        m, i = np.unravel_index(int(np.argmin(steps)), steps.shape)
        raise MonotonicityViolation(
            f"lift decreases between nodes {grid[i]!r} and {grid[i + 1]!r} at step {m + offset}"
            f" by {-steps[m, i]:.3e}")


def iter_rows(family: CocycleFamily, word: WordStream, grid, x0: float = 0.0, chunk: int = 256):
    """Yield (first_m, rows) blocks of the trajectory table without storing it all."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    x = np.full(grid.size, float(x0))
    letters = np.asarray(word.letters)
    n = letters.shape[0]
    yield 0, x[None, :].copy()
    for start in range(0, n, chunk):
        mats, offs = family.step_factors(grid, letters[start:start + chunk])
        steps = np.full(grid.size, mats.shape[1], dtype=np.int64)
        block = lift_orbits(mats, offs, x, steps, True)[1:]
        _check_monotone(block, grid, start + 1)
        x = block[-1].copy()
        yield start + 1, block


def trajectory_table(family: CocycleFamily, word: WordStream, grid, x0: float = 0.0) -> TrajectoryTable:
    """Lifted orbits of x0 along one shared word, one column per grid node."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    values = np.concatenate([rows for _, rows in iter_rows(family, word, grid, x0)])
    return TrajectoryTable(grid, word.length, values, word.seed)


# --------------------------------------------------------- classification


class _Classifier:
    """Row-by-row state machine; classification depends only on the rows fed in."""

    def __init__(self, cells: int, n: int, eps: float):
        if not 0.0 < eps < 0.5:
            raise ValueError("epsilon_prime must lie in (0, 1/2)")
        self.eps = eps
        self.window = eps * n
        self.m0 = np.full(cells, -1, dtype=np.int64)
        self.small_tail = np.ones(cells, dtype=bool)
        self.jump_tail = np.ones(cells, dtype=bool)

    def feed(self, first_m: int, lengths: np.ndarray):
        eps = self.eps
        for k, row in enumerate(np.abs(lengths)):
            m = first_m + k
            if m == 0:
                continue
            new = (self.m0 < 0) & (row > eps)
            self.m0[new] = m
            tail = (self.m0 >= 0) & (m > self.m0 + self.window)
            self.small_tail &= ~tail | (row < eps)
            self.jump_tail &= ~tail | ((row > 1.0) & (row < 1.0 + eps))

    def result(self) -> list[IntervalClass]:
        out = []
        for m0, small, jump in zip(self.m0.tolist(), self.small_tail.tolist(), self.jump_tail.tolist()):
            if m0 < 0:
                out.append(IntervalClass(SMALL))
            elif small:
                out.append(IntervalClass(OPINION, m0))
            elif jump:
                out.append(IntervalClass(JUMP, m0))
            else:
                out.append(IntervalClass(BAD, m0))
        return out


def classify_intervals(table, epsilon_prime: float) -> list[IntervalClass]:
    """Small / OpinionChanger / Jump / Bad for every grid cell.

    ``table`` is a :class:`TrajectoryTable` or a raw (n + 1, N) array of
    interval lengths whose row m holds |X_{m,i}|.
    """
    lengths = table.lengths if isinstance(table, TrajectoryTable) else np.asarray(table, dtype=float)
    if lengths.ndim == 1:
        lengths = lengths[:, None]
    clf = _Classifier(lengths.shape[1], lengths.shape[0] - 1, epsilon_prime)
    clf.feed(0, lengths)
    return clf.result()


def classify_streaming(family: CocycleFamily, word: WordStream, grid, epsilon_prime: float,
                       x0: float = 0.0, chunk: int = 256):
    """Classification plus final row, keeping one block of rows in memory."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    clf = _Classifier(grid.size - 1, word.length, epsilon_prime)
    last = None
    for first_m, rows in iter_rows(family, word, grid, x0, chunk):
        clf.feed(first_m, np.diff(rows, axis=1))
        last = rows[-1]
    return clf.result(), last


def jump_index(m0: int, epsilon_prime: float, n: int) -> int:
    return int(m0 + math.ceil(epsilon_prime * n - 1e-12))


# ------------------------------------------------------- cancellation


def _directions(family, letters, a, split, stop):
    """Exact x+(T_[0,split]) and x-(T_[split,stop]) at each parameter in ``a``."""
    A, _ = mc.scaled_product(family.step_matrices(a, letters[:split]))
    B, _ = mc.scaled_product(family.step_matrices(a, letters[split:stop]))
    return mc.expanding_image(A), mc.contracting_input(B)


class _LiftedGap:
    """Lifted difference x+(T_[0,m]) - x-(T_[m,m']) as a continuous function of a.

    Lifted orbits give continuous anchors: the forward orbit of 0 lands next
    to x+ and the backward orbit of 0 through the second block lands next to
    x-.  The exact directions are then lifted to the nearest copy of each anchor.
    """

    def __init__(self, family, letters, split, stop):
        self.family = family
        self.letters = letters
        self.split = split
        self.stop = stop

    def __call__(self, a):
        a = np.atleast_1d(np.asarray(a, dtype=float))
        B = a.size
        mats, offs = self.family.step_factors(a, self.letters[:self.split])
        fwd = lift_orbits(mats, offs, np.zeros(B), np.full(B, self.split, dtype=np.int64), False)[0]
        mats, offs = self.family.step_factors(a, self.letters[self.split:self.stop])
        back = lift_back(mats, offs, np.zeros(B))
        xp, xm = _directions(self.family, self.letters, a, self.split, self.stop)
        up = fwd + (np.mod(xp - fwd + 0.5, 1.0) - 0.5)
        down = back + (np.mod(xm - back + 0.5, 1.0) - 0.5)
        return up - down, mc.circle_dist(xp, xm)


def _bisect(gap, lo, hi, glo, ghi, target, steps=60):
    """Shrink [lo, hi] around the target crossing of the lifted gap."""
    best_a, best_res = lo, np.inf
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        g, res = gap(mid)
        g, res = float(g[0]), float(res[0])
        if res < best_res:
            best_a, best_res = mid, res
        if (g - target) * (glo - target) > 0:
            lo, glo = mid, g
        else:
            hi, ghi = mid, g
        if res < 1e-3 * ANGLE_TOL:
            break
    return best_a, best_res


def find_cancellation_param(family: CocycleFamily, word, cell, m_bar: int, n: int | None = None,
                            dense: int = 256) -> tuple[float, float]:
    """Parameter in ``cell`` where x+(T_[0,m_bar]) meets x-(T_[m_bar, min(2 m_bar, n)]).

    Returns (a_k, angle residual in circle units).  Bisection runs on the
    lifted gap between the endpoints.  If the endpoint gaps do not straddle
    an integer, or the bisection ends on a lift discontinuity instead of a
    true crossing, a dense scan tries every straddled subinterval in turn.
    """
    letters = np.asarray(getattr(word, "letters", word))
    n = letters.shape[0] if n is None else int(n)
    stop = min(2 * m_bar, n)
    if not 0 < m_bar < stop:
        raise NoCrossing(f"jump index {m_bar} leaves no second block within n = {n}")
    lo, hi = float(cell[0]), float(cell[1])
    gap = _LiftedGap(family, letters, m_bar, stop)
    g, _ = gap(np.array([lo, hi]))
    target = math.floor(g[1])
    best = None
    if g[0] < target <= g[1]:
        best = _bisect(gap, lo, hi, g[0], g[1], target)
        if best[1] < ANGLE_TOL:
            return best
    nodes = np.linspace(lo, hi, dense + 1)
    g, _ = gap(nodes)
    for j in range(dense):
        k = math.floor(max(g[j], g[j + 1]))
        if min(g[j], g[j + 1]) < k <= max(g[j], g[j + 1]):
            found = _bisect(gap, nodes[j], nodes[j + 1], g[j], g[j + 1], k)
            if best is None or found[1] < best[1]:
                best = found
            if best[1] < ANGLE_TOL:
                break
    if best is None:
        raise NoCrossing(f"lifted gap stays within ({g.min():.6f}, {g.max():.6f}) on [{lo!r}, {hi!r}]")
    if best[1] > GROSS_TOL:
        # the gap only steps across the integer where an anchor orbit turns
        # away from the direction it tracks; the directions never meet
        raise NoCrossing(f"only a lift discontinuity near {best[0]!r}; closest approach {best[1]:.3e}")
    return best


def psi(m_prime: int, m: int) -> int:
    """Best-cancellation profile: rise to m', fall back to 0 at 2m', then rise again."""
    if m < m_prime:
        return m
    if m < 2 * m_prime:
        return 2 * m_prime - m
    return m - 2 * m_prime


def psi_profile(m_prime: int, n: int) -> np.ndarray:
    m = np.arange(1, n + 1)
    return np.where(m < m_prime, m, np.where(m < 2 * m_prime, 2 * m_prime - m, m - 2 * m_prime))


def verify_psi_shape(family: CocycleFamily, word, a_k: float, m_k: int, lambda_hat: float) -> float:
    """max_m |log ||T_m|| - lambda psi_{m_k}(m)| / n along the word at a_k."""
    letters = np.asarray(getattr(word, "letters", word))
    n = letters.shape[0]
    logs = prefix_log_norms(family.step_matrices(a_k, letters))[0]
    return float(np.max(np.abs(logs - lambda_hat * psi_profile(m_k, n))) / n)


# ------------------------------------------------------------- statistics


def jump_statistics(records, rho_curve, n: int, jump_count: int | None = None,
                    lattice: int = 20) -> StatReport:
    """Jump count against n times the rotation-number increase, and the
    rectangle discrepancy between the empirical jump measure and s x DOS.

    ``rho_curve`` has ``grid`` and ``rho_hat`` arrays.  ``jump_count``
    overrides the count M (by default the number of records).
    """
    grid = np.asarray(rho_curve.grid, dtype=float)
    rho = np.asarray(rho_curve.rho_hat, dtype=float)
    M = len(records) if jump_count is None else int(jump_count)
    expected = float((rho[-1] - rho[0]) * n)
    if expected > 0:
        gap = abs(M - expected) / expected
    else:
        gap = 0.0 if M == 0 else math.inf
    times = np.array([r.m_k / n for r in records])
    params = np.array([r.a_k for r in records])
    s_probe = np.arange(1, lattice + 1) / lattice
    a_probe = grid[0] + (grid[-1] - grid[0]) * np.arange(1, lattice + 1) / lattice
    mass = np.interp(a_probe, grid, rho) - rho[0]
    worst, where = 0.0, ()
    for s in s_probe:
        for a, dos in zip(a_probe, mass):
            hits = int(np.sum((times <= s) & (params <= a))) if len(records) else 0
            d = abs(hits / n - s * dos)
            if d > worst:
                worst, where = float(d), (float(s), float(a))
    return StatReport(M, expected, float(gap), worst, where)


def cover_statistic(records_by_n: dict, N_of_n, d_grid, J) -> list[dict]:
    """Cover volume M_n (|J| / N(n))^d per n and its log-slope in n, per exponent d."""
    ns = sorted(records_by_n)
    if len(ns) < 3:
        raise ValueError("need at least three values of n")
    width = float(J[1] - J[0])
    sizes = [N_of_n(n) if callable(N_of_n) else N_of_n[n] for n in ns]
    out = []
    for d in d_grid:
        vals = [float(records_by_n[n]) * (width / N) ** d for n, N in zip(ns, sizes)]
        if all(v > 0 for v in vals):
            slope = float(np.polyfit(ns, np.log(vals), 1)[0])
        else:
            slope = float("nan")
        out.append({"d": float(d), "n": list(ns), "volume": vals, "log_slope": slope})
    return out


def turn_count_check(final_row, classes, epsilon_prime: float, n: int, factor: float = 3.0) -> dict:
    """Whole turns gained across the grid against the number of Jump cells."""
    turns = int(math.floor(final_row[-1] - final_row[0]))
    jumps = sum(c.kind == JUMP for c in classes)
    excess = turns - jumps
    return {"turns": turns, "jump_cells": jumps, "difference": excess,
            "allowed": factor * epsilon_prime * n, "ok": abs(excess) <= factor * epsilon_prime * n}


def suspicious_counts(classes, n: int, epsilon_prime: float, M_star: float) -> dict:
    """Cells first exceeding epsilon' by step m, against the bound (M*/epsilon') m."""
    first = np.array([c.m0 for c in classes if c.m0 is not None], dtype=np.int64)
    m = np.arange(1, n + 1)
    counts = np.searchsorted(np.sort(first), m, side="right")
    bound = M_star / epsilon_prime * m
    ratio = counts / bound
    worst = int(np.argmax(ratio))
    return {"M_star": float(M_star), "violations": int(np.sum(counts > bound)),
            "worst_m": int(m[worst]), "worst_ratio": float(ratio[worst])}


# ------------------------------------------------------------------- scan


@dataclass
class ScanReport:
    counts: dict
    classes: list
    records: list
    failures: list = field(default_factory=list)
    stats: StatReport | None = None
    turns: dict = field(default_factory=dict)
    table: TrajectoryTable | None = None
    suspicious: dict = field(default_factory=dict)


def scan_word(family: CocycleFamily, word: WordStream, grid, epsilon_prime: float, lambda_of,
              rho_curve=None, x0: float = 0.0, keep_table: bool = False) -> ScanReport:
    """Classify every cell, locate cancellation parameters of Jump cells and check the psi-shape.

    ``lambda_of(a)`` returns the Lyapunov estimate used for the profile.
    """
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    n = word.length
    if keep_table:
        table = trajectory_table(family, word, grid, x0)
        classes = classify_intervals(table, epsilon_prime)
        final = table.values[-1]
    else:
        table = None
        classes, final = classify_streaming(family, word, grid, epsilon_prime, x0)
    records, failures = [], []
    for i, c in enumerate(classes):
        if c.kind != JUMP:
            continue
        m_k = jump_index(c.m0, epsilon_prime, n)
        try:
            a_k, res = find_cancellation_param(family, word, (grid[i], grid[i + 1]), m_k, n)
        except CocycleLabError as exc:
            failures.append({"cell": i, "m_k": m_k, "reason": f"{type(exc).__name__}: {exc}"})
            continue
        lam = float(lambda_of(a_k))
        dev = verify_psi_shape(family, word, a_k, m_k, lam)
        records.append(JumpRecord(i, m_k, float(a_k), dev, float(res), lam))
    counts = {k: sum(c.kind == k for c in classes) for k in KINDS}
    stats = None
    if rho_curve is not None:
        stats = jump_statistics(records, rho_curve, n, jump_count=counts[JUMP])
    turns = turn_count_check(final, classes, epsilon_prime, n)
    return ScanReport(counts, classes, records, failures, stats, turns, table)
