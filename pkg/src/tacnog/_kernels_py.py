"""Pure-Python/numpy twin of ``_kernels.pyx``. Same signatures, same results
to rounding error; used when the extension is not built."""

import math

import numpy as np

NS = 12


def _rhs(s, px, py, c0):
    X, Y, th = s[0], s[1], s[2]
    st, ct = math.sin(th), math.cos(th)
    out = [0.0] * NS
    out[0] = -ct
    out[1] = -st
    out[2] = -(px * Y - py * X + c0)
    for k in range(3):
        out[3 + k] = st * s[9 + k]
        out[6 + k] = -ct * s[9 + k]
        out[9 + k] = py * s[3 + k] - px * s[6 + k]
    out[9] -= Y
    out[10] += X
    out[11] -= 1.0
    return out


def propagate(px, py, c0, T, n):
    """RK4 on the augmented (Z, dZ/dq) system; rows are [X, Y, Theta, Phi(9)]."""
    px, py, c0 = float(px), float(py), float(c0)
    h = T / n
    out = np.empty((n + 1, NS))
    s = [0.0] * NS
    s[2] = -1.5707963267948966
    out[0] = s
    for i in range(n):
        k1 = _rhs(s, px, py, c0)
        k2 = _rhs([s[j] + 0.5 * h * k1[j] for j in range(NS)], px, py, c0)
        k3 = _rhs([s[j] + 0.5 * h * k2[j] for j in range(NS)], px, py, c0)
        k4 = _rhs([s[j] + h * k3[j] for j in range(NS)], px, py, c0)
        s = [s[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) for j in range(NS)]
        out[i + 1] = s
        if not all(math.isfinite(v) for v in s):
            out[i + 2:] = np.nan
            break
    return out


def disconjugacy_violation(delta, start, tol):
    delta = np.asarray(delta, dtype=float)
    n = delta.shape[0]
    if n < 2 or start >= n:
        return -1
    mag = np.abs(delta)
    runmax = np.maximum.accumulate(np.concatenate([[0.0], mag[1:]]))
    k = np.arange(n)
    bad = (k >= start) & (k >= 1) & ((delta == 0.0) | (mag <= tol * runmax))
    flips = np.zeros(n, dtype=bool)
    flips[1:] = delta[1:] * delta[:-1] < 0.0
    bad |= flips & (k > start)
    hits = np.flatnonzero(bad)
    return int(hits[0]) if hits.size else -1


def _bilinear_root(a00, a10, a01, a11, b00, b10, b01, b11):
    A0, A1, A2, A3 = a00, a10 - a00, a01 - a00, a11 - a10 - a01 + a00
    B0, B1, B2, B3 = b00, b10 - b00, b01 - b00, b11 - b10 - b01 + b00
    c2 = A1 * B3 - B1 * A3
    c1 = A0 * B3 + A1 * B2 - B0 * A3 - B1 * A2
    c0 = A0 * B2 - B0 * A2
    scale = abs(c2) + abs(c1) + abs(c0)
    if scale == 0.0:
        return None
    if abs(c2) <= 1e-14 * scale:
        if abs(c1) <= 1e-14 * scale:
            return None
        roots = [-c0 / c1]
    else:
        disc = c1 * c1 - 4.0 * c2 * c0
        if disc < 0.0:
            return None
        sq = math.sqrt(disc)
        sq = -0.5 * (c1 + sq) if c1 >= 0.0 else -0.5 * (c1 - sq)
        roots = [sq / c2]
        if sq != 0.0:
            roots.append(c0 / sq)
    for u in roots:
        if u < -1e-12 or u > 1.0 + 1e-12:
            continue
        den = A2 + A3 * u
        if abs(den) > abs(B2 + B3 * u):
            v = -(A0 + A1 * u) / den
        else:
            den = B2 + B3 * u
            if den == 0.0:
                continue
            v = -(B0 + B1 * u) / den
        if -1e-12 <= v <= 1.0 + 1e-12:
            return u, v
    return None


def colinear_pair(X, Y, th, U, h, gap, tol_pos):
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    U = np.asarray(U, dtype=float)
    c = np.cos(th)
    s = np.sin(th)
    n = X.shape[0]
    T = (n - 1) * h
    for i in range(n - 1):
        j = np.arange(i + gap, n - 1)
        if j.size == 0:
            break
        dx = X[j] - X[i]
        dy = Y[j] - Y[i]
        if i > 0:
            close = (dx * dx + dy * dy <= tol_pos * tol_pos) \
                & (c[j] * c[i] + s[j] * s[i] > 0.0) \
                & (np.abs(s[j] * c[i] - c[j] * s[i]) <= h * (1.0 + abs(U[i])))
        else:
            close = np.zeros(j.size, dtype=bool)
        a00 = s[j] * c[i] - c[j] * s[i]
        a10 = s[j] * c[i + 1] - c[j] * s[i + 1]
        a01 = s[j + 1] * c[i] - c[j + 1] * s[i]
        a11 = s[j + 1] * c[i + 1] - c[j + 1] * s[i + 1]
        A = np.stack([a00, a10, a01, a11])
        b00 = dx * s[i] - dy * c[i]
        b10 = (X[j] - X[i + 1]) * s[i + 1] - (Y[j] - Y[i + 1]) * c[i + 1]
        b01 = (X[j + 1] - X[i]) * s[i] - (Y[j + 1] - Y[i]) * c[i]
        b11 = (X[j + 1] - X[i + 1]) * s[i + 1] - (Y[j + 1] - Y[i + 1]) * c[i + 1]
        B = np.stack([b00, b10, b01, b11])
        cand = (A.min(0) <= 0.0) & (A.max(0) >= 0.0) & (B.min(0) <= 0.0) & (B.max(0) >= 0.0)
        # the compiled scan visits j in order and checks closure before the cell
        for k in np.flatnonzero(close | cand):
            if close[k]:
                return (i * h, j[k] * h)
            r = _bilinear_root(*A[:, k], *B[:, k])
            if r is not None:
                t1 = (i + r[0]) * h
                t2 = (j[k] + r[1]) * h
                if t1 > 0.0 and t2 < T:
                    return (t1, t2)
    return None


def plant_hold(x, y, th, speed, u, h, n):
    out = np.empty((n + 1, 3))
    out[0] = (x, y, th)
    w = u / speed
    for i in range(n):
        t2 = th + 0.5 * h * w
        t4 = th + h * w
        x = x + h / 6.0 * speed * (math.cos(th) + 4.0 * math.cos(t2) + math.cos(t4))
        y = y + h / 6.0 * speed * (math.sin(th) + 4.0 * math.sin(t2) + math.sin(t4))
        th = t4
        out[i + 1] = (x, y, th)
    return out
