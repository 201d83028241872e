"""One-dimensional Anderson model: transfer solutions, box spectra, eigenfunction
decay and the piecewise-linear shape of log-norm sequences.

Decay rates here are per site.  Lyapunov estimates from the Schrodinger
family are per two-site block, so they are halved before comparison.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.linalg import eigh_tridiagonal, solve_banded

from . import _kernels
from .errors import ConvergenceFailure, DegenerateSupport
from .families import uniforms
from .lyapunov import interpolate_curve

BOX_STREAM = (0xB0,)


@dataclass
class TransferSolution:
    """u(0)..u(n+1) stored as mantissa * exp(log_scale)."""

    mantissa: np.ndarray
    log_scale: np.ndarray

    @property
    def values(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return self.mantissa * np.exp(self.log_scale)

    def log_abs(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self.mantissa)) + self.log_scale


def transfer_solution(potential, E: float, u0: float, u1: float, n_steps: int | None = None) -> TransferSolution:
    """Solve u(k+1) + u(k-1) + V(k) u(k) = E u(k) forward from (u(0), u(1))."""
    V = np.asarray(potential, dtype=float)
    if n_steps is None:
        n_steps = V.size
    if n_steps < 1 or n_steps > V.size:
        raise ValueError("n_steps must lie in [1, len(potential)]")
    mant, logs = _kernels.transfer_recurrence(np.ascontiguousarray(V[:n_steps]), float(E), float(u0), float(u1))
    return TransferSolution(mant, logs)


@dataclass
class BoxOperator:
    potential: np.ndarray
    seed: int | None = None

    @property
    def L(self) -> int:
        return int(self.potential.size)

    def apply(self, u: np.ndarray) -> np.ndarray:
        out = self.potential * u
        out[:-1] += u[1:]
        out[1:] += u[:-1]
        return out

    def dense(self) -> np.ndarray:
        return np.diag(self.potential) + np.diag(np.ones(self.L - 1), 1) + np.diag(np.ones(self.L - 1), -1)


def build_box(mu, L: int, seed: int) -> BoxOperator:
    """Dirichlet box with i.i.d. potential drawn from ``mu``."""
    if L < 2:
        raise ValueError("box size must be at least 2")
    V = np.asarray(mu.from_uniform(uniforms(seed, L, BOX_STREAM)), dtype=float).reshape(L)
    return BoxOperator(V, int(seed))


@dataclass
class EigenPair:
    E: float
    u: np.ndarray


def residual_bound(box: BoxOperator) -> float:
    return 1e-8 * (2.0 + float(np.max(np.abs(box.potential))))


def _refine(box, E, u, iterations=3):
    """Inverse iteration with a slightly shifted energy."""
    L = box.L
    shift = E + 1e-10 * (2.0 + np.max(np.abs(box.potential)))
    bands = np.zeros((3, L))
    bands[0, 1:] = 1.0
    bands[1] = box.potential - shift
    bands[2, :-1] = 1.0
    for _ in range(iterations):
        u = solve_banded((1, 1), bands, u)
        u /= np.linalg.norm(u)
    E = float(u @ box.apply(u))
    return E, u


def eigensolve(box: BoxOperator, window: tuple | None = None) -> list[EigenPair]:
    """Eigenpairs sorted by energy, all of them or those with E in ``window``.

    Each pair satisfies ||Hu - Eu|| <= 1e-8 (2 + max|V|); pairs that miss it
    after LAPACK get a few inverse-iteration sweeps before giving up.
    """
    if box.L > 100_000:
        raise ValueError("box size above 1e5 is not supported")
    off = np.ones(box.L - 1)
    if window is None:
        w, v = eigh_tridiagonal(box.potential, off)
    else:
        lo, hi = window
        if hi < lo:
            return []
        w, v = eigh_tridiagonal(box.potential, off, select="v", select_range=(lo, hi))
    bound = residual_bound(box)
    pairs = []
    for k in range(w.size):
        E, u = float(w[k]), v[:, k]
        if np.linalg.norm(box.apply(u) - E * u) > bound:
            E, u = _refine(box, E, u.copy())
            if np.linalg.norm(box.apply(u) - E * u) > bound:
                raise ConvergenceFailure(f"eigenpair {k} near E = {E!r} misses the residual bound")
        pairs.append(EigenPair(E, u))
    return pairs


def sturm_count(potential, E: float) -> int:
    """Number of box eigenvalues strictly below E (LDL^T sign count)."""
    return int(_kernels.sturm_count(np.ascontiguousarray(potential, dtype=float), float(E)))


def eigen_count(potential, E1: float, E2: float) -> int:
    return sturm_count(potential, E2) - sturm_count(potential, E1)


def decay_fit(u) -> tuple[float, float, int]:
    """Exponential decay rate of |u| away from its peak, both tails pooled.

    Returns (rate, r_squared, center) where rate is minus the least-squares
    slope of log|u(k)| against |k - center| over sites with |u| > 1e-12.
    """
    u = np.asarray(u, dtype=float)
    center = int(np.argmax(np.abs(u)))
    keep = np.abs(u) > 1e-12
    if np.count_nonzero(keep) < 10:
        raise DegenerateSupport(f"only {np.count_nonzero(keep)} sites above 1e-12")
    dist = np.abs(np.arange(u.size) - center)[keep].astype(float)
    logs = np.log(np.abs(u[keep]))
    if np.ptp(dist) == 0:
        raise DegenerateSupport("usable sites are all at the same distance from the peak")
    slope, icpt = np.polyfit(dist, logs, 1)
    resid = logs - (slope * dist + icpt)
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 0.0
    return float(-slope), r2, center


# ------------------------------------------------------------------ shapes


@dataclass
class ShapeFit:
    kind: str
    breakpoints: tuple
    slope: float
    max_dev: float


@njit(cache=True)
def _tent_spread(h, lam, b):
    """max - min over m of h(m) - lam |m - b|."""
    hi = -np.inf
    lo = np.inf
    for m in range(h.shape[0]):
        r = h[m] - lam * abs(m - b)
        if r > hi:
            hi = r
        if r < lo:
            lo = r
    return hi - lo


@njit(cache=True)
def _all_tents(h, lam):
    """Spread of h(m) - lam |m - b| for every b, in O(n) via running extrema."""
    n = h.shape[0]
    up = np.empty(n)
    down = np.empty(n)
    for m in range(n):
        up[m] = h[m] + lam * m
        down[m] = h[m] - lam * m
    pmax = up.copy()
    pmin = up.copy()
    for m in range(1, n):
        pmax[m] = max(pmax[m - 1], up[m])
        pmin[m] = min(pmin[m - 1], up[m])
    smax = down.copy()
    smin = down.copy()
    for m in range(n - 2, -1, -1):
        smax[m] = max(smax[m + 1], down[m])
        smin[m] = min(smin[m + 1], down[m])
    out = np.empty(n)
    for b in range(n):
        # m <= b: h + lam m - lam b ; m >= b: h - lam m + lam b
        hi = max(pmax[b] - lam * b, smax[b] + lam * b)
        lo = min(pmin[b] - lam * b, smin[b] + lam * b)
        out[b] = hi - lo
    return out


@njit(cache=True)
def _w_search(f, lam, lattice):
    """Best (b1 <= b2 <= b3) on the lattice for lam (|m-b1| - |m-b2| + |m-b3|)."""
    n = f.shape[0]
    best = np.inf
    bb = (0, 0, 0)
    h = np.empty(n)
    K = lattice.shape[0]
    for i in range(K):
        for j in range(i, K):
            b1, b2 = lattice[i], lattice[j]
            for m in range(n):
                h[m] = f[m] - lam * (abs(m - b1) - abs(m - b2))
            spread = _all_tents(h, lam)
            for k in range(j, K):
                s = spread[lattice[k]]
                if s < best:
                    best = s
                    bb = (b1, b2, lattice[k])
    return best, bb


def _w_spread(f, lam, b1, b2, b3):
    m = np.arange(f.size)
    r = f - lam * (np.abs(m - b1) - np.abs(m - b2) + np.abs(m - b3))
    return float(r.max() - r.min())


def _refine_w(f, lam, bps, radius):
    bps = list(bps)
    best = _w_spread(f, lam, *bps)
    n = f.size
    for _ in range(3):
        improved = False
        for slot in range(3):
            lo = bps[slot - 1] if slot > 0 else 0
            hi = bps[slot + 1] if slot < 2 else n - 1
            for cand in range(max(lo, bps[slot] - radius), min(hi, bps[slot] + radius) + 1):
                trial = bps.copy()
                trial[slot] = cand
                s = _w_spread(f, lam, *trial)
                if s < best - 1e-15:
                    best, bps, improved = s, trial, True
        if not improved:
            break
    return best, tuple(int(b) for b in bps)


def shape_classify(log_norms, lam: float, epsilon: float) -> ShapeFit:
    """Smallest of Line / V / W whose best uniform fit stays within epsilon * n.

    Shapes have slopes +-lam: Line rises, V falls then rises, W alternates
    falling and rising with an upward middle break.  The additive constant is
    chosen optimally, so the sup deviation is half the residual spread.
    """
    f = np.asarray(log_norms, dtype=float)
    n = f.size
    if n < 10 or not lam > 0:
        raise ValueError("need at least 10 values and a positive slope")
    m = np.arange(n)
    line = f - lam * m
    dev = 0.5 * float(line.max() - line.min()) / n
    if dev <= epsilon:
        return ShapeFit("Line", (), lam, dev)
    spreads = _all_tents(f, lam)
    b = int(np.argmin(spreads))
    dev = 0.5 * float(spreads[b]) / n
    if dev <= epsilon:
        return ShapeFit("V", (b,), lam, dev)
    step = math.ceil(n / 200)
    lattice = np.unique(np.append(np.arange(0, n, step), n - 1)).astype(np.int64)
    _, coarse = _w_search(f, float(lam), lattice)
    spread, bps = _refine_w(f, lam, coarse, step)
    return ShapeFit("W", bps, lam, 0.5 * spread / n)


# ------------------------------------------------------------ localization


@dataclass
class LocalizationReport:
    L: int
    seed: int
    window: tuple
    entries: list = field(default_factory=list)
    pass_fraction: float = 0.0
    median_rate: float = 0.0
    localized: bool = False


def localization_report(mu, L: int, energy_window, seed: int, le_curve, rel_tol: float = 0.25,
                        min_r2: float = 0.9) -> LocalizationReport:
    """Decay fits of interior eigenvectors against half the per-block Lyapunov estimate.

    An eigenvector passes when r^2 >= min_r2 and its rate is within rel_tol
    of lambda(E)/2.  ``localized`` says whether typical eigenvectors decay by
    more than five e-folds across half the box.
    """
    lo, hi = map(float, energy_window)
    report = LocalizationReport(int(L), int(seed), (lo, hi))
    if hi < lo:
        return report
    box = build_box(mu, L, seed)
    margin = L / 10
    rates, passed = [], 0
    for pair in eigensolve(box, (lo, hi)):
        try:
            rate, r2, center = decay_fit(pair.u)
        except DegenerateSupport:
            continue
        if center < margin or center > L - 1 - margin:
            continue
        expected = 0.5 * float(interpolate_curve(le_curve, pair.E))
        ok = bool(r2 >= min_r2 and abs(rate - expected) <= rel_tol * expected)
        passed += ok
        rates.append(rate)
        report.entries.append({"E": pair.E, "center": center, "rate": rate, "r_squared": r2,
                               "expected": expected, "pass": ok})
    if report.entries:
        report.pass_fraction = passed / len(report.entries)
        report.median_rate = float(np.median(rates))
        report.localized = bool(report.median_rate * L / 2 > 5.0)
    return report
