"""Compiled inner loops: lifted orbits and prefix log-norms over long words."""
import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _lift_one(m00, m01, m10, m11, x):
    k = math.floor(x)
    frac = x - k
    t = math.pi * frac
    c = math.cos(t)
    s = math.sin(t)
    w0 = m00 * c + m01 * s
    w1 = m10 * c + m11 * s
    base = math.atan2(m10, m00) / math.pi
    base = base - math.floor(base)
    if base >= 1.0:
        base = 0.0
    det = m00 * m11 - m01 * m10
    turn = math.atan2(det * s, m00 * w0 + m10 * w1) / math.pi
    return k + base + turn


@njit(cache=True, nogil=True)
def lift_orbits(mats, offs, x0, stops, record):
    """Iterate lifted maps.

    mats: (B, n, F, 2, 2) factor matrices, applied in factor order each step.
    offs: (B, n, F) integer lift offsets added after each factor.
    x0: (B,) start points; stops: (B,) number of steps to apply.
    Returns (n+1, B) table if record else the (B,) final values.
    """
    B, n, F = offs.shape
    if record:
        table = np.empty((n + 1, B))
    else:
        table = np.empty((1, B))
    final = np.empty(B)
    for b in range(B):
        x = x0[b]
        if record:
            table[0, b] = x
        for m in range(n):
            if m < stops[b]:
                for f in range(F):
                    x = _lift_one(mats[b, m, f, 0, 0], mats[b, m, f, 0, 1],
                                  mats[b, m, f, 1, 0], mats[b, m, f, 1, 1], x) + offs[b, m, f]
            if record:
                table[m + 1, b] = x
        final[b] = x
    if record:
        return table
    return final.reshape(1, B)


@njit(cache=True, nogil=True)
def _op_norm(a, b, c, d):
    minus = (a - d) ** 2 + (b + c) ** 2
    plus = (a + d) ** 2 + (b - c) ** 2
    if a * d - b * c < 0.0:
        minus, plus = plus, minus
    return 0.5 * (math.sqrt(plus) + math.sqrt(minus))


@njit(cache=True, nogil=True)
def prefix_log_norms(mats):
    """log ||T_m|| for m = 1..n of the running product of mats (B, n, 2, 2)."""
    B, n = mats.shape[0], mats.shape[1]
    out = np.empty((B, n))
    for b in range(B):
        p00, p01, p10, p11 = 1.0, 0.0, 0.0, 1.0
        logs = 0.0
        for m in range(n):
            a00, a01, a10, a11 = mats[b, m, 0, 0], mats[b, m, 0, 1], mats[b, m, 1, 0], mats[b, m, 1, 1]
            q00 = a00 * p00 + a01 * p10
            q01 = a00 * p01 + a01 * p11
            q10 = a10 * p00 + a11 * p10
            q11 = a10 * p01 + a11 * p11
            f2 = q00 * q00 + q01 * q01 + q10 * q10 + q11 * q11
            norm = _op_norm(q00, q01, q10, q11)
            out[b, m] = logs + math.log(norm)
            scale = math.sqrt(f2)
            logs += math.log(scale)
            p00, p01, p10, p11 = q00 / scale, q01 / scale, q10 / scale, q11 / scale
    return out


@njit(cache=True, nogil=True)
def vector_log_growth(mats, v0, v1):
    """log |T_m v| for m = 1..n, with the direction renormalized each step."""
    B, n = mats.shape[0], mats.shape[1]
    out = np.empty((B, n))
    for b in range(B):
        x, y = v0[b], v1[b]
        r = math.hypot(x, y)
        x /= r
        y /= r
        logs = math.log(r)
        for m in range(n):
            nx = mats[b, m, 0, 0] * x + mats[b, m, 0, 1] * y
            ny = mats[b, m, 1, 0] * x + mats[b, m, 1, 1] * y
            r = math.hypot(nx, ny)
            logs += math.log(r)
            x, y = nx / r, ny / r
            out[b, m] = logs
    return out


@njit(cache=True, nogil=True)
def split_directions(mats):
    """Forward and backward directions along each word.

    u[b, m]: direction of T_{[0,m+1]} e1, which approaches x+ of the windows
    ending at step m+1.  s[b, m]: direction of T_{[m,n]}^{-1} e1, which
    approaches x- of the windows starting at step m.  Both in [0, 1).
    """
    B, n = mats.shape[0], mats.shape[1]
    u = np.empty((B, n))
    s = np.empty((B, n))
    for b in range(B):
        x, y = 1.0, 0.0
        for m in range(n):
            nx = mats[b, m, 0, 0] * x + mats[b, m, 0, 1] * y
            ny = mats[b, m, 1, 0] * x + mats[b, m, 1, 1] * y
            r = math.hypot(nx, ny)
            x, y = nx / r, ny / r
            t = math.atan2(y, x) / math.pi
            t -= math.floor(t)
            u[b, m] = t if t < 1.0 else 0.0
        x, y = 1.0, 0.0
        for m in range(n - 1, -1, -1):
            a00, a01, a10, a11 = mats[b, m, 0, 0], mats[b, m, 0, 1], mats[b, m, 1, 0], mats[b, m, 1, 1]
            nx = a11 * x - a01 * y
            ny = -a10 * x + a00 * y
            r = math.hypot(nx, ny)
            x, y = nx / r, ny / r
            t = math.atan2(y, x) / math.pi
            t -= math.floor(t)
            s[b, m] = t if t < 1.0 else 0.0
    return u, s


@njit(cache=True, nogil=True)
def lift_back(mats, offs, x0):
    """Invert the lifted maps of :func:`lift_orbits`, last step first.

    Each factor inverse is the projective inverse shifted by the integer that
    makes the forward lift land back on the input.  Returns (B,) values.
    """
    B, n, F = offs.shape
    out = np.empty(B)
    for b in range(B):
        x = x0[b]
        for m in range(n - 1, -1, -1):
            for f in range(F - 1, -1, -1):
                x -= offs[b, m, f]
                m00, m01 = mats[b, m, f, 0, 0], mats[b, m, f, 0, 1]
                m10, m11 = mats[b, m, f, 1, 0], mats[b, m, f, 1, 1]
                y = _lift_one(m11, -m01, -m10, m00, x)
                y += round(x - _lift_one(m00, m01, m10, m11, y))
                x = y
        out[b] = x
    return out


@njit(cache=True, nogil=True)
def transfer_recurrence(V, E, u0, u1):
    """u(k+1) = (E - V(k)) u(k) - u(k-1) for k = 1..len(V).

    Returns mantissas and cumulative log scales with u(k) = mant[k] exp(logs[k]);
    both neighbours are rescaled together whenever |u| passes 1e100.
    """
    n = V.shape[0]
    mant = np.empty(n + 2)
    logs = np.zeros(n + 2)
    mant[0] = u0
    mant[1] = u1
    prev, cur = u0, u1
    scale = 0.0
    for k in range(1, n + 1):
        nxt = (E - V[k - 1]) * cur - prev
        prev, cur = cur, nxt
        big = abs(cur)
        if big > 1e100:
            prev /= big
            cur /= big
            scale += math.log(big)
        mant[k + 1] = cur
        logs[k + 1] = scale
    return mant, logs


@njit(cache=True, nogil=True)
def sturm_count(V, E):
    """Number of eigenvalues below E of the tridiagonal operator with diagonal V and unit off-diagonals."""
    count = 0
    d = 1.0
    for k in range(V.shape[0]):
        if k == 0:
            d = V[0] - E
        else:
            d = V[k] - E - 1.0 / d
        if d == 0.0:
            d = -1e-300
        if d < 0.0:
            count += 1
    return count
