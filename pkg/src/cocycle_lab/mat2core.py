"""SL(2,R) algebra and the induced action on the projective circle.

Circle points use the period-1 coordinate x = (line angle)/pi mod 1, so the
direction of x is the vector (cos(pi x), sin(pi x)).  Every function that
takes a matrix accepts either a :class:`Mat2` or an array of shape
``(..., 2, 2)``; array inputs broadcast and are the fast path used by the
scanning modules.  Array inputs may be rescaled products (det != 1): all
projective quantities are scale invariant and the formulas below carry the
determinant explicitly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DirectionMismatch, RotationMatrix

DET_TOL = 1e-12
ROTATION_TOL = 1e-9
ALIGN_TOL = 1e-8


@dataclass(frozen=True)
class Mat2:
    """Row-major 2x2 matrix of determinant one."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        det = self.a * self.d - self.b * self.c
        # rounding in ad - bc grows with the entries, so the check scales with them
        scale = max(1.0, self.a ** 2 + self.b ** 2 + self.c ** 2 + self.d ** 2)
        if abs(det - 1.0) > DET_TOL * scale:
            raise ValueError(f"determinant {det!r} differs from 1")

    @classmethod
    def from_array(cls, arr) -> "Mat2":
        arr = np.asarray(arr, dtype=float)
        return cls(float(arr[0, 0]), float(arr[0, 1]), float(arr[1, 0]), float(arr[1, 1]))

    @classmethod
    def normalized(cls, a, b, c, d) -> "Mat2":
        """Build from entries with positive determinant, dividing by sqrt(det)."""
        det = a * d - b * c
        if det <= 0:
            raise ValueError("determinant must be positive")
        s = np.sqrt(det)
        return cls(a / s, b / s, c / s, d / s)

    @property
    def array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    def inverse(self) -> "Mat2":
        return Mat2(self.d, -self.b, -self.c, self.a)

    def __matmul__(self, other: "Mat2") -> "Mat2":
        return compose(self, other)


@dataclass(frozen=True)
class SingularData:
    norm: float
    x_plus: float
    x_minus: float


def as_array(A) -> np.ndarray:
    if isinstance(A, Mat2):
        return A.array
    return np.asarray(A, dtype=float)


def identity() -> Mat2:
    return Mat2(1.0, 0.0, 0.0, 1.0)


def diag(s: float) -> Mat2:
    """diag(s, 1/s)."""
    return Mat2(s, 0.0, 0.0, 1.0 / s)


def rotation_array(theta):
    """Rotation matrices R_theta (theta in radians), broadcasting over theta."""
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    out = np.empty(theta.shape + (2, 2))
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    return out


def rotation(theta: float) -> Mat2:
    c, s = np.cos(theta), np.sin(theta)
    return Mat2(c, -s, s, c)


def det(A):
    M = as_array(A)
    return M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]


def matmul(A, B) -> np.ndarray:
    """Batched product A @ B written out entrywise (faster than np.matmul on 2x2)."""
    A = as_array(A)
    B = as_array(B)
    a, b, c, d = A[..., 0, 0], A[..., 0, 1], A[..., 1, 0], A[..., 1, 1]
    e, f, g, h = B[..., 0, 0], B[..., 0, 1], B[..., 1, 0], B[..., 1, 1]
    out = np.empty(np.broadcast_shapes(A.shape, B.shape))
    out[..., 0, 0] = a * e + b * g
    out[..., 0, 1] = a * f + b * h
    out[..., 1, 0] = c * e + d * g
    out[..., 1, 1] = c * f + d * h
    return out


def compose(A, B):
    """Product AB, renormalized by sqrt(det) when the determinant drifts."""
    P = matmul(A, B)
    dt = det(P)
    if np.ndim(dt) == 0:
        if abs(dt - 1.0) > DET_TOL:
            P = P / np.sqrt(dt)
    else:
        fix = np.abs(dt - 1.0) > DET_TOL
        if np.any(fix):
            P[fix] /= np.sqrt(dt[fix])[:, None, None]
    if isinstance(A, Mat2) and isinstance(B, Mat2):
        return Mat2.from_array(P)
    return P


def frobenius_sq(A):
    M = as_array(A)
    return np.sum(M * M, axis=(-2, -1))


def operator_norm(A):
    """Largest singular value.

    Uses (s1 + s2)^2 = F^2 + 2|det| and (s1 - s2)^2 = F^2 - 2|det|; for
    det = 1 this is the closed form of F^2 = s^2 + s^-2.
    """
    M = as_array(A)
    a, b, c, d = M[..., 0, 0], M[..., 0, 1], M[..., 1, 0], M[..., 1, 1]
    # F^2 - 2 det and F^2 + 2 det as sums of squares, exact near isometries
    minus = (a - d) ** 2 + (b + c) ** 2
    plus = (a + d) ** 2 + (b - c) ** 2
    flip = det(M) < 0
    lo = np.where(flip, plus, minus)
    hi = np.where(flip, minus, plus)
    out = 0.5 * (np.sqrt(hi) + np.sqrt(lo))
    return float(out) if np.ndim(out) == 0 else out


def _unit(x):
    t = np.pi * np.asarray(x, dtype=float)
    return np.cos(t), np.sin(t)


def _apply_vec(M, c, s):
    return M[..., 0, 0] * c + M[..., 0, 1] * s, M[..., 1, 0] * c + M[..., 1, 1] * s


def _wrap01(x):
    x = np.mod(x, 1.0)
    return np.where(x >= 1.0, 0.0, x)


def proj_apply(A, x):
    """Direction of A (cos pi x, sin pi x) as a circle coordinate in [0, 1)."""
    M = as_array(A)
    w0, w1 = _apply_vec(M, *_unit(x))
    out = _wrap01(np.arctan2(w1, w0) / np.pi)
    return float(out) if np.ndim(out) == 0 else out


def proj_derivative(A, x):
    """Derivative of the circle map at x: |det A| |v|^2 / |Av|^2."""
    M = as_array(A)
    w0, w1 = _apply_vec(M, *_unit(x))
    out = np.abs(det(M)) / (w0 * w0 + w1 * w1)
    return float(out) if np.ndim(out) == 0 else out


def lift_apply(A, x):
    """Degree-one lift of the circle map, normalized so the image of 0 is in [0, 1).

    The lifted displacement from 0 to frac(x) is the oriented angle between
    A e1 and A v_x, whose sine part det(A) sin(pi frac) is known in closed
    form, so the result is continuous and monotone in x.
    """
    M = as_array(A)
    x = np.asarray(x, dtype=float)
    k = np.floor(x)
    frac = x - k
    c, s = _unit(frac)
    w0, w1 = _apply_vec(M, c, s)
    u0, u1 = M[..., 0, 0], M[..., 1, 0]
    base = _wrap01(np.arctan2(u1, u0) / np.pi)
    turn = np.arctan2(det(M) * s, u0 * w0 + u1 * w1) / np.pi
    out = k + base + turn
    return float(out) if np.ndim(out) == 0 else out


def circle_dist(x, y):
    """Distance on the period-1 circle, in [0, 1/2]."""
    d = np.mod(np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)), 1.0)
    out = np.minimum(d, 1.0 - d)
    return float(out) if np.ndim(out) == 0 else out


def _major_axis(p, q, r):
    """Circle coordinate of the major eigenvector of [[p, q], [q, r]]."""
    return _wrap01(0.5 * np.arctan2(2.0 * q, p - r) / np.pi)


def expanding_image(A):
    """x+ : direction of the long axis of the image ellipse (scale invariant)."""
    M = as_array(A)
    a, b, c, d = M[..., 0, 0], M[..., 0, 1], M[..., 1, 0], M[..., 1, 1]
    out = _major_axis(a * a + b * b, a * c + b * d, c * c + d * d)
    return float(out) if np.ndim(out) == 0 else out


def expanding_input(A):
    """Most expanded input direction (preimage of x+)."""
    M = as_array(A)
    a, b, c, d = M[..., 0, 0], M[..., 0, 1], M[..., 1, 0], M[..., 1, 1]
    out = _major_axis(a * a + c * c, a * b + c * d, b * b + d * d)
    return float(out) if np.ndim(out) == 0 else out


def contracting_input(A):
    """x- : most contracted input direction, where the circle map has its largest derivative."""
    out = _wrap01(np.asarray(expanding_input(A)) + 0.5)
    return float(out) if np.ndim(out) == 0 else out


def _require_nonrotation(A) -> float:
    norm = operator_norm(A)
    if np.any(np.asarray(norm) <= 1.0 + ROTATION_TOL):
        raise RotationMatrix(f"operator norm {np.min(norm)!r} is within {ROTATION_TOL} of 1")
    return norm


def singular_directions(A) -> SingularData:
    norm = _require_nonrotation(A)
    return SingularData(norm, expanding_image(A), contracting_input(A))


def cancellation_norm(A, B) -> float:
    """||BA|| for a pair with x+(A) = x-(B)."""
    sa = singular_directions(A)
    sb = singular_directions(B)
    gap = circle_dist(sa.x_plus, sb.x_minus)
    if gap > ALIGN_TOL:
        raise DirectionMismatch(f"x+(A) and x-(B) differ by {gap:.3e}")
    return operator_norm(matmul(as_array(B), as_array(A)))


def direction_bounds_check(A, x) -> tuple[float, float]:
    """Angles in radians between f_A(x) and x+(A), and between x and x-(A)."""
    sd = singular_directions(A)
    first = np.pi * circle_dist(proj_apply(A, x), sd.x_plus)
    second = np.pi * circle_dist(x, sd.x_minus)
    return first, second


def direction_bound_limits(A, x) -> tuple[float, float]:
    """Upper limits for :func:`direction_bounds_check`.

    An expanded direction lands near x+ with angle at most
    (pi/2) (|v|/|Av|)/||A||, and a direction lies near x- with angle at most
    (pi/2) (|Av|/|v|)/||A||.
    """
    M = as_array(A)
    norm = operator_norm(M)
    w0, w1 = _apply_vec(M, *_unit(x))
    stretch = np.hypot(w0, w1)
    return 0.5 * np.pi / (stretch * norm), 0.5 * np.pi * stretch / norm


def scaled_product(mats):
    """Product of a stack of matrices in application order, kept in log scale.

    ``mats[..., k, :, :]`` is applied k-th, so the result is
    mats[..., n-1] @ ... @ mats[..., 0].  Returns ``(P, log_scale)`` with the
    true product equal to exp(log_scale) * P and ||P||_F = 1.  Reduction is a
    balanced tree, so n = 10^4 costs about 14 vectorized levels.
    """
    P = np.array(mats, dtype=float, copy=True)
    logs = np.zeros(P.shape[:-2])
    while P.shape[-3] > 1:
        n = P.shape[-3]
        if n % 2:
            P = np.concatenate([P, np.broadcast_to(np.eye(2), P.shape[:-3] + (1, 2, 2))], axis=-3)
            logs = np.concatenate([logs, np.zeros(logs.shape[:-1] + (1,))], axis=-1)
        prod = matmul(P[..., 1::2, :, :], P[..., 0::2, :, :])
        scale = np.sqrt(frobenius_sq(prod))
        P = prod / scale[..., None, None]
        logs = logs[..., 0::2] + logs[..., 1::2] + np.log(scale)
    P = P[..., 0, :, :]
    logs = logs[..., 0]
    scale = np.sqrt(frobenius_sq(P))
    return P / scale[..., None, None], logs + np.log(scale)


def log_norm(mats):
    """log ||T|| of the product of a stack (see :func:`scaled_product`)."""
    P, logs = scaled_product(mats)
    return logs + np.log(operator_norm(P))
