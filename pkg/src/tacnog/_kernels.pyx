# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: extremal propagation, filter scans, plant integration.

Every function here has a drop-in twin in ``_kernels_py``; the two must agree
to rounding error.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, fabs, sqrt, floor, ceil, isfinite, NAN

cnp.import_array()

cdef enum:
    NS = 12


cdef inline void _rhs(const double* s, double px, double py, double c0,
                      double* out) noexcept nogil:
    cdef double X = s[0], Y = s[1], th = s[2]
    cdef double st = sin(th), ct = cos(th)
    cdef int k
    out[0] = -ct
    out[1] = -st
    out[2] = -(px * Y - py * X + c0)
    # Phi' = A Phi + B, A = [[0,0,st],[0,0,-ct],[py,-px,0]]
    for k in range(3):
        out[3 + k] = st * s[9 + k]
        out[6 + k] = -ct * s[9 + k]
        out[9 + k] = py * s[3 + k] - px * s[6 + k]
    out[9] -= Y
    out[10] += X
    out[11] -= 1.0


def propagate(double px, double py, double c0, double T, Py_ssize_t n):
    """RK4 on the augmented (Z, dZ/dq) system; rows are [X, Y, Theta, Phi(9)]."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n + 1, NS))
    cdef double[:, ::1] o = out
    cdef double h = T / n
    cdef double s[NS]
    cdef double tmp[NS]
    cdef double k1[NS]
    cdef double k2[NS]
    cdef double k3[NS]
    cdef double k4[NS]
    cdef Py_ssize_t i, j, m
    cdef bint ok = True
    for j in range(NS):
        s[j] = 0.0
    s[2] = -1.5707963267948966
    with nogil:
        for j in range(NS):
            o[0, j] = s[j]
        for i in range(n):
            _rhs(s, px, py, c0, k1)
            for j in range(NS):
                tmp[j] = s[j] + 0.5 * h * k1[j]
            _rhs(tmp, px, py, c0, k2)
            for j in range(NS):
                tmp[j] = s[j] + 0.5 * h * k2[j]
            _rhs(tmp, px, py, c0, k3)
            for j in range(NS):
                tmp[j] = s[j] + h * k3[j]
            _rhs(tmp, px, py, c0, k4)
            for j in range(NS):
                s[j] = s[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
                if not isfinite(s[j]):
                    ok = False
                o[i + 1, j] = s[j]
            if not ok:
                for m in range(i + 2, n + 1):
                    for j in range(NS):
                        o[m, j] = NAN
                break
    return out


def disconjugacy_violation(const double[::1] delta, Py_ssize_t start, double tol):
    """First index >= start where delta changes sign or dips into the
    near-zero band relative to its running maximum; -1 if none."""
    cdef Py_ssize_t n = delta.shape[0], k, hit = -1
    cdef double runmax = 0.0, d
    with nogil:
        for k in range(1, n):
            d = fabs(delta[k])
            if d > runmax:
                runmax = d
            if k < start:
                continue
            if delta[k] == 0.0 or d <= tol * runmax:
                hit = k
                break
            if k > start and delta[k] * delta[k - 1] < 0.0:
                hit = k
                break
    return hit


cdef inline int _bilinear_root(double a00, double a10, double a01, double a11,
                               double b00, double b10, double b01, double b11,
                               double* ru, double* rv) noexcept nogil:
    # a(u,v) = A0 + A1 u + A2 v + A3 uv, same for b; find a common root in [0,1]^2
    cdef double A0 = a00, A1 = a10 - a00, A2 = a01 - a00, A3 = a11 - a10 - a01 + a00
    cdef double B0 = b00, B1 = b10 - b00, B2 = b01 - b00, B3 = b11 - b10 - b01 + b00
    cdef double c2 = A1 * B3 - B1 * A3
    cdef double c1 = A0 * B3 + A1 * B2 - B0 * A3 - B1 * A2
    cdef double c0 = A0 * B2 - B0 * A2
    cdef double roots[2]
    cdef int nr = 0, r
    cdef double disc, sq, u, v, den, scale
    scale = fabs(c2) + fabs(c1) + fabs(c0)
    if scale == 0.0:
        return 0
    if fabs(c2) <= 1e-14 * scale:
        if fabs(c1) <= 1e-14 * scale:
            return 0
        roots[0] = -c0 / c1
        nr = 1
    else:
        disc = c1 * c1 - 4.0 * c2 * c0
        if disc < 0.0:
            return 0
        sq = sqrt(disc)
        if c1 >= 0.0:
            sq = -0.5 * (c1 + sq)
        else:
            sq = -0.5 * (c1 - sq)
        roots[0] = sq / c2
        nr = 1
        if sq != 0.0:
            roots[1] = c0 / sq
            nr = 2
    for r in range(nr):
        u = roots[r]
        if u < -1e-12 or u > 1.0 + 1e-12:
            continue
        den = A2 + A3 * u
        if fabs(den) > fabs(B2 + B3 * u):
            v = -(A0 + A1 * u) / den
        else:
            den = B2 + B3 * u
            if den == 0.0:
                continue
            v = -(B0 + B1 * u) / den
        if v < -1e-12 or v > 1.0 + 1e-12:
            continue
        ru[0] = u
        rv[0] = v
        return 1
    return 0


cdef enum:
    BLOCK = 16


def colinear_pair(const double[::1] X, const double[::1] Y, const double[::1] th,
                  const double[::1] U, double h, Py_ssize_t gap, double tol_pos):
    """Scan all sample pairs (i, j), j - i >= gap, for a tangent line shared by
    both points. Returns (t1, t2) of the first hit or None.

    Cells are visited in the same order as the numpy twin; blocks of BLOCK
    cells along j are skipped when their heading range cannot put
    Theta_j - Theta_i on a multiple of pi and their bounding box is farther
    than tol_pos from the row point.  Theta must be unwrapped (continuous).
    """
    cdef Py_ssize_t n = X.shape[0], i, j, b, nb, j0, j1, k
    cdef double T = (n - 1) * h
    cdef cnp.ndarray[cnp.float64_t, ndim=1] c_arr = np.cos(np.asarray(th))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s_arr = np.sin(np.asarray(th))
    cdef double[::1] c = c_arr
    cdef double[::1] s = s_arr
    nb = (n + BLOCK - 1) // BLOCK
    cdef cnp.ndarray[cnp.float64_t, ndim=2] box_arr = np.empty((nb, 6))
    cdef double[:, ::1] box = box_arr
    cdef double a00, a10, a01, a11, b00, b10, b01, b11, amin, amax, bmin, bmax
    cdef double u, v, t1, t2, dx, dy, sa, tol_ang, lo, hi, ilo, ihi, ex, ey
    cdef double pi = 3.141592653589793
    cdef int found = 0
    with nogil:
        # block b covers cells j in [b*BLOCK, b*BLOCK + BLOCK), i.e. samples up to +BLOCK
        for b in range(nb):
            j0 = b * BLOCK
            j1 = j0 + BLOCK
            if j1 > n - 1:
                j1 = n - 1
            box[b, 0] = th[j0]
            box[b, 1] = th[j0]
            box[b, 2] = X[j0]
            box[b, 3] = X[j0]
            box[b, 4] = Y[j0]
            box[b, 5] = Y[j0]
            for k in range(j0, j1 + 1):
                if th[k] < box[b, 0]: box[b, 0] = th[k]
                if th[k] > box[b, 1]: box[b, 1] = th[k]
                if X[k] < box[b, 2]: box[b, 2] = X[k]
                if X[k] > box[b, 3]: box[b, 3] = X[k]
                if Y[k] < box[b, 4]: box[b, 4] = Y[k]
                if Y[k] > box[b, 5]: box[b, 5] = Y[k]
        for i in range(n - 1):
            ilo = th[i] if th[i] < th[i + 1] else th[i + 1]
            ihi = th[i] if th[i] > th[i + 1] else th[i + 1]
            j = i + gap
            while j < n - 1:
                b = j // BLOCK
                lo = (box[b, 0] - ihi) / pi - 1e-9
                hi = (box[b, 1] - ilo) / pi + 1e-9
                ex = 0.0
                if X[i] < box[b, 2]: ex = box[b, 2] - X[i]
                elif X[i] > box[b, 3]: ex = X[i] - box[b, 3]
                ey = 0.0
                if Y[i] < box[b, 4]: ey = box[b, 4] - Y[i]
                elif Y[i] > box[b, 5]: ey = Y[i] - box[b, 5]
                if (ex > tol_pos or ey > tol_pos) and floor(hi) < ceil(lo):
                    j = (b + 1) * BLOCK
                    continue
                # loop closure: the path returns to a point with the same heading
                dx = X[j] - X[i]
                dy = Y[j] - Y[i]
                if fabs(dx) <= tol_pos and fabs(dy) <= tol_pos:
                    sa = s[j] * c[i] - c[j] * s[i]
                    tol_ang = h * (1.0 + fabs(U[i]))
                    if (dx * dx + dy * dy <= tol_pos * tol_pos
                            and c[j] * c[i] + s[j] * s[i] > 0.0
                            and fabs(sa) <= tol_ang and i > 0):
                        t1 = i * h
                        t2 = j * h
                        found = 1
                        break
                j = j + 1
                a00 = s[j - 1] * c[i] - c[j - 1] * s[i]
                a10 = s[j - 1] * c[i + 1] - c[j - 1] * s[i + 1]
                a01 = s[j] * c[i] - c[j] * s[i]
                a11 = s[j] * c[i + 1] - c[j] * s[i + 1]
                amin = a00
                amax = a00
                if a10 < amin: amin = a10
                if a10 > amax: amax = a10
                if a01 < amin: amin = a01
                if a01 > amax: amax = a01
                if a11 < amin: amin = a11
                if a11 > amax: amax = a11
                if amin > 0.0 or amax < 0.0:
                    continue
                b00 = dx * s[i] - dy * c[i]
                b10 = (X[j - 1] - X[i + 1]) * s[i + 1] - (Y[j - 1] - Y[i + 1]) * c[i + 1]
                b01 = (X[j] - X[i]) * s[i] - (Y[j] - Y[i]) * c[i]
                b11 = (X[j] - X[i + 1]) * s[i + 1] - (Y[j] - Y[i + 1]) * c[i + 1]
                bmin = b00
                bmax = b00
                if b10 < bmin: bmin = b10
                if b10 > bmax: bmax = b10
                if b01 < bmin: bmin = b01
                if b01 > bmax: bmax = b01
                if b11 < bmin: bmin = b11
                if b11 > bmax: bmax = b11
                if bmin > 0.0 or bmax < 0.0:
                    continue
                if _bilinear_root(a00, a10, a01, a11, b00, b10, b01, b11, &u, &v):
                    t1 = (i + u) * h
                    t2 = (j - 1 + v) * h
                    if t1 > 0.0 and t2 < T:
                        found = 1
                        break
            if found:
                break
    if found:
        return (t1, t2)
    return None


def plant_hold(double x, double y, double th, double speed, double u,
               double h, Py_ssize_t n):
    """RK4 of xdot = V cos th, ydot = V sin th, thdot = u / V under a held u."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n + 1, 3))
    cdef double[:, ::1] o = out
    cdef double w = u / speed
    cdef double t1, t2, t3, t4
    cdef Py_ssize_t i
    with nogil:
        o[0, 0] = x
        o[0, 1] = y
        o[0, 2] = th
        for i in range(n):
            # theta is linear in time under a held command; RK4 stages share it
            t1 = th
            t2 = th + 0.5 * h * w
            t4 = th + h * w
            x = x + h / 6.0 * speed * (cos(t1) + 4.0 * cos(t2) + cos(t4))
            y = y + h / 6.0 * speed * (sin(t1) + 4.0 * sin(t2) + sin(t4))
            th = t4
            o[i + 1, 0] = x
            o[i + 1, 1] = y
            o[i + 1, 2] = th
    return out
