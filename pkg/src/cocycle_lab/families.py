"""Parameter-dependent cocycle families, reproducible word sampling and assumption checks.

A family maps (parameter a, letter w) to an SL(2,R) matrix.  Internally each
generator is stored as a short chain of *factors* whose normalized lifts
depend continuously on a; the family lift is the composition of the factor
lifts plus integer offsets.  This keeps trajectory tables continuous in the
parameter even when a single normalized lift would wrap.

Letters are arrays of shape (..., dims): dims = 1 for indexed alphabets and
dims = 2 for the (V1, V2) potential pairs of the Schrodinger family.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import mat2core as mc
from ._kernels import lift_orbits
from .errors import DegenerateDistribution, MonotonicityViolation

# ---------------------------------------------------------------- randomness


def philox(seed: int, stream=()) -> np.random.Generator:
    """Counter-based generator keyed by (seed, stream); draws are indexed by position."""
    seq = np.random.SeedSequence(entropy=int(seed) % 2**64, spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(key=seq.generate_state(2, np.uint64)))


def uniforms(seed: int, count: int, stream=()) -> np.ndarray:
    """The first ``count`` doubles of the (seed, stream) sequence; prefix stable."""
    return philox(seed, stream).random(count)


@dataclass(frozen=True)
class Discrete:
    support: tuple
    weights: tuple

    def __post_init__(self):
        if len(self.support) != len(self.weights) or not self.support:
            raise ValueError("support and weights must be nonempty and of equal length")
        if any(w < 0 for w in self.weights) or sum(self.weights) <= 0:
            raise ValueError("weights must be nonnegative with positive sum")

    @property
    def degenerate(self) -> bool:
        return sum(1 for w in self.weights if w > 0) < 2

    @property
    def bounds(self) -> tuple[float, float]:
        pts = [s for s, w in zip(self.support, self.weights) if w > 0]
        return min(pts), max(pts)

    def from_uniform(self, u) -> np.ndarray:
        cdf = np.cumsum(self.weights) / np.sum(self.weights)
        idx = np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)
        return np.asarray(self.support, dtype=float)[idx]

    def describe(self) -> dict:
        return {"kind": "discrete", "support": list(self.support), "weights": list(self.weights)}


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("uniform distribution needs lo < hi")

    degenerate = False

    @property
    def bounds(self) -> tuple[float, float]:
        return self.lo, self.hi

    def from_uniform(self, u) -> np.ndarray:
        return self.lo + (self.hi - self.lo) * np.asarray(u)

    def describe(self) -> dict:
        return {"kind": "uniform", "lo": self.lo, "hi": self.hi}


def bernoulli(v0: float, v1: float, p: float = 0.5) -> Discrete:
    """Two-point law: v0 with probability p, v1 otherwise."""
    return Discrete((float(v0), float(v1)), (p, 1.0 - p))


@dataclass(frozen=True)
class Alphabet:
    dist: object
    dims: int = 1

    def from_uniform(self, u) -> np.ndarray:
        return self.dist.from_uniform(np.asarray(u).reshape(-1, self.dims))


@dataclass(frozen=True)
class WordStream:
    seed: int
    length: int
    letters: np.ndarray
    stream: tuple = ()

    def __len__(self):
        return self.length

    def window(self, start: int, stop: int) -> np.ndarray:
        return self.letters[start:stop]


# ------------------------------------------------------------------- families

FactorFn = Callable[[np.ndarray, np.ndarray], tuple]


@dataclass(frozen=True, eq=False)
class CocycleFamily:
    """J = (b_minus, b_plus); factors(a, letters) -> (mats (..., F, 2, 2), offsets (..., F))."""

    J: tuple
    alphabet: Alphabet
    factors: FactorFn
    block_size: int = 1
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        lo, hi = self.J
        if not hi > lo:
            raise ValueError("parameter interval needs b_minus < b_plus")
        if self.block_size < 1:
            raise ValueError("block_size must be positive")

    @property
    def width(self) -> float:
        return self.J[1] - self.J[0]

    def _factors(self, a, letters):
        a = np.asarray(a, dtype=float)
        letters = np.asarray(letters, dtype=float)
        if letters.ndim == 0:
            letters = letters.reshape(1)
        return self.factors(a, letters)

    def generator(self, a, letters) -> np.ndarray:
        """Matrix F_a(w); broadcasts a against letters[..., :]."""
        mats, _ = self._factors(a, letters)
        out = mats[..., 0, :, :]
        for f in range(1, mats.shape[-3]):
            out = mc.matmul(mats[..., f, :, :], out)
        return out

    def lift(self, a, letters, x):
        """Family lift of the circle map of F_a(w), continuous in a."""
        mats, offs = self._factors(a, letters)
        x = np.asarray(x, dtype=float)
        for f in range(mats.shape[-3]):
            x = mc.lift_apply(mats[..., f, :, :], x) + offs[..., f]
        return x

    @staticmethod
    def _batch(a, letters):
        a = np.asarray(a, dtype=float).reshape(-1, 1)
        letters = np.asarray(letters, dtype=float)
        if letters.ndim == 2:
            letters = letters[None]
        B = max(a.shape[0], letters.shape[0])
        return a, letters, B, letters.shape[1]

    def step_factors(self, a, letters):
        """Factor stacks for every (batch entry, step): shapes (B, n, F, 2, 2) and (B, n, F).

        ``a`` is a scalar or (B,) array; ``letters`` is one shared word (n, dims)
        or a batch of words (B, n, dims).
        """
        a, letters, B, n = self._batch(a, letters)
        mats, offs = self.factors(a, letters)
        mats = np.ascontiguousarray(np.broadcast_to(mats, (B, n) + mats.shape[-3:]))
        offs = np.ascontiguousarray(np.broadcast_to(offs, (B, n) + offs.shape[-1:]), dtype=float)
        return mats, offs

    def step_matrices(self, a, letters) -> np.ndarray:
        """Generator matrices for every (batch entry, step): shape (B, n, 2, 2)."""
        a, letters, B, n = self._batch(a, letters)
        out = self.generator(a, letters)
        return np.ascontiguousarray(np.broadcast_to(out, (B, n, 2, 2)))

    def lifted_orbits(self, a, letters, x0, record=False, stops=None):
        """Lifted orbits of x0, one per batch entry (see :meth:`step_factors`).

        Returns final values (B,), or the full (n+1, B) table when ``record``.
        ``stops`` optionally limits the number of steps per entry.
        """
        mats, offs = self.step_factors(a, letters)
        B = mats.shape[0]
        x0 = np.broadcast_to(np.asarray(x0, dtype=float), (B,)).copy()
        if stops is None:
            stops = np.full(B, mats.shape[1], dtype=np.int64)
        out = lift_orbits(mats, offs, x0, np.asarray(stops, dtype=np.int64), record)
        return out if record else out[0]


def _const_factor(M, shape):
    mats = np.broadcast_to(M, shape + (1, 2, 2))
    return mats, np.zeros(shape + (1,))


def make_constant_family(A, J=(0.0, 1.0)) -> CocycleFamily:
    """One-letter, parameter-independent family."""
    M = mc.as_array(A)

    def factors(a, letters):
        shape = np.broadcast_shapes(np.shape(a), letters.shape[:-1])
        return _const_factor(M, shape)

    return CocycleFamily(tuple(map(float, J)), Alphabet(Discrete((0.0,), (1.0,))), factors, 1,
                         "constant", {"matrix": M.ravel().tolist()})


def make_rotation_family(A, B, p: float, J) -> CocycleFamily:
    """Generator R_alpha A (letter 0, probability p) or R_alpha B (letter 1)."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    MA, MB = mc.as_array(A), mc.as_array(B)

    def factors(alpha, letters):
        shape = np.broadcast_shapes(np.shape(alpha), letters.shape[:-1])
        pick = (letters[..., 0] != 0)[..., None, None]
        base = np.where(pick, MB, MA)
        rot = mc.rotation_array(alpha)
        mats = np.empty(shape + (2, 2, 2))
        mats[..., 0, :, :] = base
        mats[..., 1, :, :] = rot
        offs = np.zeros(shape + (2,))
        offs[..., 1] = np.floor(np.asarray(alpha) / np.pi)
        return mats, offs

    return CocycleFamily(tuple(map(float, J)), Alphabet(Discrete((0.0, 1.0), (p, 1.0 - p))), factors, 1,
                         "rotation", {"A": MA.ravel().tolist(), "B": MB.ravel().tolist(), "p": p})


def site_matrix(E, V) -> np.ndarray:
    """One-site transfer matrix in the orientation used by the family: [[E - V, 1], [-1, 0]].

    This is the standard [[E - V, -1], [1, 0]] conjugated by diag(1, -1), so
    norms are unchanged while the projective image turns counterclockwise as
    E increases.
    """
    E = np.asarray(E, dtype=float)
    V = np.asarray(V, dtype=float)
    shape = np.broadcast_shapes(E.shape, V.shape)
    out = np.empty(shape + (2, 2))
    out[..., 0, 0] = E - V
    out[..., 0, 1] = 1.0
    out[..., 1, 0] = -1.0
    out[..., 1, 1] = 0.0
    return out


def make_schrodinger_family(mu, J, allow_degenerate: bool = False) -> CocycleFamily:
    """Two-site blocks of the Schrodinger transfer cocycle, parameter = energy.

    Letter (V1, V2); generator(E, w) = S(E, V2) S(E, V1) with S = :func:`site_matrix`.
    Each site factor maps e1 to (E - V, -1), whose direction never crosses
    the horizontal, so the normalized site lifts are continuous in E.
    """
    if mu.degenerate and not allow_degenerate:
        raise DegenerateDistribution("potential distribution has a single support point")

    def factors(E, letters):
        shape = np.broadcast_shapes(np.shape(E), letters.shape[:-1])
        mats = np.empty(shape + (2, 2, 2))
        mats[..., 0, :, :] = site_matrix(E, letters[..., 0])
        mats[..., 1, :, :] = site_matrix(E, letters[..., 1])
        return mats, np.zeros(shape + (2,))

    return CocycleFamily(tuple(map(float, J)), Alphabet(mu, 2), factors, 2, "schrodinger",
                         {"mu": mu.describe()})


def sample_word(family: CocycleFamily, seed: int, n: int, stream=()) -> WordStream:
    """Letters w_1..w_n from the (seed, stream) counter sequence; prefix stable in n."""
    if n < 1:
        raise ValueError("word length must be positive")
    dims = family.alphabet.dims
    letters = family.alphabet.from_uniform(uniforms(seed, n * dims, stream))
    return WordStream(int(seed), int(n), letters.reshape(n, dims), tuple(stream))


# ---------------------------------------------------------------- validators


@dataclass
class AssumptionReport:
    M_hat: float
    delta_hat: float
    a1_flags: dict
    uh_score: float
    uh_midpoint: bool
    eligible: bool


def _invariant_lines(M, tol=1e-9):
    """Sorted eigen-directions of a hyperbolic matrix, else None."""
    tr = M[0, 0] + M[1, 1]
    if abs(tr) <= 2.0 + tol:
        return None
    w, v = np.linalg.eig(M)
    dirs = np.sort(np.mod(np.arctan2(v[1].real, v[0].real) / np.pi, 1.0))
    return dirs


def validate_assumptions(family: CocycleFamily, samples: int = 10_000, grid: int = 101,
                         seed: int = 0) -> AssumptionReport:
    """Sampled checks of boundedness, monotonicity, Furstenberg heuristics and a UH proxy."""
    from .rotation import uh_test

    if samples < 10 or grid < 10:
        raise ValueError("samples and grid must be at least 10")
    lo, hi = family.J
    h = family.width / 1e4
    nodes = np.linspace(lo, hi - h, grid)
    u = uniforms(seed, samples * 2, stream=(0xA4,)).reshape(samples, 2)
    a = nodes[np.minimum((u[:, 0] * grid).astype(int), grid - 1)]
    x = u[:, 1]
    letters = sample_word(family, seed, samples, stream=(0xA4, 1)).letters

    mats = family.generator(a, letters)
    dmats = (family.generator(a + h, letters) - family.generator(a - h, letters)) / (2 * h)
    M_hat = float(max(np.max(mc.operator_norm(mats)), np.max(mc.operator_norm(dmats))))
    slope = (family.lift(a + h, letters, x) - family.lift(a, letters, x)) / h
    delta_hat = float(np.min(slope))

    mid = 0.5 * (lo + hi)
    pair_letters = sample_word(family, seed, 200, stream=(0xA1,)).letters
    mid_mats = family.generator(np.full(200, mid), pair_letters)
    noncompact = bool(np.any(mc.operator_norm(mid_mats) > 1.01))
    line_sets = [_invariant_lines(M) for M in mid_mats]
    hyper = [s for s in line_sets if s is not None]
    distinct = any(np.max(np.abs(s - hyper[0])) > 1e-6 for s in hyper[1:]) if hyper else False
    elliptic = any(s is None and abs(M[0, 0] + M[1, 1]) < 2.0 - 1e-9 and abs(M[0, 0] + M[1, 1]) > 1e-9
                   for s, M in zip(line_sets, mid_mats))
    flags = {"noncompact": noncompact, "no_common_invariant_lines": bool(distinct or elliptic)}

    uh = uh_test(family, mid, n=200, words=10, eta_floor=1.0001, seed=seed)
    report = AssumptionReport(M_hat, delta_hat, flags, uh.min_rate, uh.is_uh, delta_hat > 0)
    if delta_hat <= 0:
        raise MonotonicityViolation(f"monotonicity margin {delta_hat:.3e} is not positive", report)
    return report
