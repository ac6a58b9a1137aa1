# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: panel integrals, far-field sums, point location.

Mirrors ``_kernels_py``; see that module for the semantics.
"""

import numpy as np

from libc.math cimport sqrt, log, atan, atan2, exp, fabs, floor, cos, sin, hypot, M_PI
from scipy.special.cython_special cimport j0, y0, j1, y1, hankel2

from .specfun import gauss_legendre, small_constant, EULER_GAMMA, GAMMA_SMALL

cdef double complex J = 1j
cdef double TWO_OVER_PI = 2.0 / M_PI
cdef double SERIES_SWITCH = 1e-3
cdef double EULER_GAMMA_C = EULER_GAMMA
cdef double ASYM_SWITCH = 20.0     # |z| from which the large-argument series is used
cdef double DECAY_SKIP = 40.0      # panels with -Im(k) dist beyond this contribute < 1e-17


cdef inline void hankel2_large(double complex z, double complex* h0,
                               double complex* h1) noexcept nogil:
    """Large-argument series of H_0^(2)(z) and H_1^(2)(z), |z| >= 20, -pi < arg z <= 0."""
    cdef double r2 = z.real * z.real + z.imag * z.imag
    cdef double complex c = -J * (z.real - J * z.imag) / (8.0 * r2)   # -j / (8 z)
    cdef double complex t0 = 1.0
    cdef double complex t1 = 1.0
    cdef double complex s0 = 1.0
    cdef double complex s1 = 1.0
    cdef double f, q
    cdef int m
    for m in range(1, 40):
        f = (2.0 * m - 1.0) * (2.0 * m - 1.0)
        t0 = t0 * c * (-f / m)
        t1 = t1 * c * ((4.0 - f) / m)
        s0 = s0 + t0
        s1 = s1 + t1
        q = t0.real * t0.real + t0.imag * t0.imag + t1.real * t1.real + t1.imag * t1.imag
        if q < 1e-34:
            break
    cdef double r = sqrt(r2)
    cdef double th = atan2(z.imag, z.real)
    # sqrt(2 / (pi z)) exp(-j (z - pi/4)); H1 carries an extra factor exp(j pi/2) = j
    cdef double amp = sqrt(2.0 / (M_PI * r)) * exp(z.imag)
    cdef double ph = -0.5 * th - z.real + 0.25 * M_PI
    cdef double complex e = amp * (cos(ph) + J * sin(ph))
    h0[0] = e * s0
    h1[0] = J * e * s1


cdef inline double xlogy(double x, double y) noexcept nogil:
    if y > 0.0:
        return x * log(y)
    return 0.0


cdef inline void hankels(double complex k, bint realk, double rho,
                         double complex* h0, double complex* h1) noexcept nogil:
    cdef double x
    cdef double complex z
    if realk:
        x = k.real * rho
        h0[0] = j0(x) - J * y0(x)
        h1[0] = j1(x) - J * y1(x)
    else:
        z = k * rho
        if z.real * z.real + z.imag * z.imag >= ASYM_SWITCH * ASYM_SWITCH:
            hankel2_large(z, h0, h1)
        else:
            h0[0] = hankel2(0.0, z)
            h1[0] = hankel2(1.0, z)


cdef inline void remainders(double complex k, bint realk, double rho,
                            double complex csmall, double complex lnk2, double eg_lng,
                            double complex* r0, double complex* r1) noexcept nogil:
    cdef double complex z = k * rho
    cdef double complex h0, h1, q, lg
    cdef double az = sqrt(z.real * z.real + z.imag * z.imag)
    if az < SERIES_SWITCH:
        q = z * z / 4.0
        if rho > 0.0:
            lg = lnk2 + log(rho)
            r0[0] = -q - J * TWO_OVER_PI * (eg_lng + q * (1.0 - EULER_GAMMA_C) - q * lg)
            r1[0] = -J / M_PI * (z * lg + z * (EULER_GAMMA_C - 0.5))
        else:
            r0[0] = -J * TWO_OVER_PI * eg_lng
            r1[0] = 0.0
    else:
        hankels(k, realk, rho, &h0, &h1)
        r0[0] = h0 - (csmall - J * TWO_OVER_PI * log(rho))
        r1[0] = h1 - (z / 2.0 + 2.0 * J / (M_PI * z))


def panel_integrals(const double[:, ::1] points, const double[:, ::1] contour_xy, double complex k,
                    int n_inner=8, int nsub=1, double near_factor=1.0,
                    double small_arg=0.1):
    """See ``_kernels_py.panel_integrals``."""
    cdef Py_ssize_t npt = points.shape[0]
    cdef Py_ssize_t m = contour_xy.shape[0]
    xg_np, wg_np = gauss_legendre(n_inner, 0.0, 1.0)
    cdef double[::1] xg = np.ascontiguousarray(xg_np)
    cdef double[::1] wg = np.ascontiguousarray(wg_np)
    G_np = np.zeros((npt, m), dtype=np.complex128)
    D_np = np.zeros((npt, m), dtype=np.complex128)
    cdef double complex[:, ::1] G = G_np
    cdef double complex[:, ::1] D = D_np
    cdef double complex csmall = small_constant(k)
    cdef double complex lnk2 = np.log(k / 2.0)
    cdef double eg_lng = EULER_GAMMA - np.log(GAMMA_SMALL)
    cdef double complex k2 = k * k
    cdef bint realk = k.imag == 0.0
    cdef double kabs = sqrt(k.real * k.real + k.imag * k.imag)
    cdef Py_ssize_t p, bseg, bn, q, sub, half
    cdef double px, py, ax, ay, bx, by, tx, ty, nx, ny, l0, l1, l2, h, P0
    cdef double rho1, rho2, dist, s, w, rho, t, dat, lo, hi, mid, sl, sh
    cdef double I1, I2, I3, I4, I5, I6
    cdef double complex gf, gr, df, dr, gk, dk, h0, h1, r0, r1, ca, cb
    cdef double inv2pi = 1.0 / (2.0 * M_PI)
    with nogil:
        for p in range(npt):
            px = points[p, 0]
            py = points[p, 1]
            for bseg in range(m):
                bn = bseg + 1
                if bn == m:
                    bn = 0
                ax = contour_xy[bseg, 0]
                ay = contour_xy[bseg, 1]
                bx = contour_xy[bn, 0]
                by = contour_xy[bn, 1]
                tx = bx - ax
                ty = by - ay
                l0 = sqrt(tx * tx + ty * ty)
                tx = tx / l0
                ty = ty / l0
                nx = ty
                ny = -tx
                l1 = (ax - px) * tx + (ay - py) * ty
                h = (ax - px) * nx + (ay - py) * ny
                if fabs(h) <= 1e-13 * l0:
                    h = 0.0
                l2 = l1 + l0
                P0 = fabs(h)
                rho1 = sqrt((ax - px) * (ax - px) + (ay - py) * (ay - py))
                rho2 = sqrt((bx - px) * (bx - px) + (by - py) * (by - py))
                if l1 <= 0.0 and l2 >= 0.0:
                    dist = P0
                else:
                    dist = rho1 if rho1 < rho2 else rho2
                if -k.imag * dist > DECAY_SKIP and dist >= near_factor * l0:
                    continue
                gf = 0.0
                gr = 0.0
                df = 0.0
                dr = 0.0
                if dist < near_factor * l0 or kabs * dist < small_arg:
                    # closed-form small-argument part
                    if P0 > 0.0:
                        dat = atan(l2 / P0) - atan(l1 / P0)
                    else:
                        dat = 0.0
                    I1 = 0.5 * (l2 * l2 - l1 * l1)
                    I2 = 0.5 * (rho2 * xlogy(rho2, rho2) - rho1 * xlogy(rho1, rho1)
                                - 0.5 * (l2 * l2 - l1 * l1))
                    I3 = xlogy(l2, rho2) - xlogy(l1, rho1) - (l2 - l1) + P0 * dat
                    I4 = l2 - l1
                    ca = -0.25 * J * csmall
                    gr = (ca * (I1 - l1 * I4) - inv2pi * (I2 - l1 * I3)) / l0
                    gf = (ca * (l2 * I4 - I1) - inv2pi * (l2 * I3 - I2)) / l0
                    if P0 > 0.0:
                        I5 = log(rho2) - log(rho1)
                        I6 = dat / P0
                        cb = 0.125 * J * k2
                        dr = h * (cb * (I1 - l1 * I4) - inv2pi * (I5 - l1 * I6)) / l0
                        df = h * (cb * (l2 * I4 - I1) - inv2pi * (l2 * I6 - I5)) / l0
                    # remainder, split at the projection point
                    if l1 < 0.0 and l2 > 0.0:
                        mid = 0.0
                    else:
                        mid = 0.5 * (l1 + l2)
                    for half in range(2):
                        if half == 0:
                            sl = l1
                            sh = mid
                        else:
                            sl = mid
                            sh = l2
                        for sub in range(nsub):
                            lo = sl + (sh - sl) * sub / nsub
                            hi = sl + (sh - sl) * (sub + 1) / nsub
                            for q in range(n_inner):
                                s = lo + (hi - lo) * xg[q]
                                w = (hi - lo) * wg[q]
                                rho = sqrt(s * s + h * h)
                                remainders(k, realk, rho, csmall, lnk2, eg_lng, &r0, &r1)
                                gk = -0.25 * J * r0
                                if rho > 0.0:
                                    dk = 0.25 * J * k * h / rho * r1
                                else:
                                    dk = 0.0
                                t = (s - l1) / l0
                                gf = gf + w * (1.0 - t) * gk
                                gr = gr + w * t * gk
                                df = df + w * (1.0 - t) * dk
                                dr = dr + w * t * dk
                else:
                    for sub in range(nsub):
                        for q in range(n_inner):
                            t = (sub + xg[q]) / nsub
                            w = l0 * wg[q] / nsub
                            s = l1 + l0 * t
                            rho = sqrt(s * s + h * h)
                            hankels(k, realk, rho, &h0, &h1)
                            gk = -0.25 * J * h0
                            dk = 0.25 * J * k * h / rho * h1
                            gf = gf + w * (1.0 - t) * gk
                            gr = gr + w * t * gk
                            df = df + w * (1.0 - t) * dk
                            dr = dr + w * t * dk
                G[p, bseg] = G[p, bseg] + gf
                G[p, bn] = G[p, bn] + gr
                D[p, bseg] = D[p, bseg] + df
                D[p, bn] = D[p, bn] + dr
    return G_np, D_np


def farfield_sum(const double[::1] x, const double[::1] y, const double[::1] ux,
                 const double[::1] uy, const double complex[::1] alpha,
                 const double complex[::1] beta, const double[::1] angles,
                 double complex k):
    """See ``_kernels_py.farfield_sum``."""
    cdef Py_ssize_t na = angles.shape[0]
    cdef Py_ssize_t nq = x.shape[0]
    out_np = np.zeros(na, dtype=np.complex128)
    cdef double complex[::1] out = out_np
    cdef Py_ssize_t a, q
    cdef double c, s, ph_re
    cdef double complex acc, ph, jk = J * k
    cdef bint realk = k.imag == 0.0
    cdef double kr = k.real
    with nogil:
        for a in range(na):
            c = cos(angles[a])
            s = sin(angles[a])
            acc = 0.0
            for q in range(nq):
                if realk:
                    ph_re = kr * (c * x[q] + s * y[q])
                    ph = cos(ph_re) + J * sin(ph_re)
                else:
                    ph = _cexp(jk * (c * x[q] + s * y[q]))
                acc = acc + ph * (alpha[q] + beta[q] * (c * ux[q] + s * uy[q]))
            out[a] = acc
    return out_np


cdef extern from "math.h" nogil:
    double exp(double)


cdef inline double complex _cexp(double complex z) noexcept nogil:
    cdef double e = exp(z.real)
    return e * cos(z.imag) + J * e * sin(z.imag)


def locate_points(const double[:, ::1] points, const double[:, ::1] nodes,
                  const long[:, ::1] tris, const long[::1] cell_start,
                  const long[::1] cell_items, origin, double cell,
                  long nx, long ny):
    """See ``_kernels_py.locate_points``."""
    cdef Py_ssize_t npnt = points.shape[0]
    idx_np = np.full(npnt, -1, dtype=np.int64)
    bary_np = np.zeros((npnt, 3))
    cdef long[::1] idx = idx_np
    cdef double[:, ::1] bary = bary_np
    cdef double ox = origin[0]
    cdef double oy = origin[1]
    cdef Py_ssize_t p, c, it
    cdef long ix, iy, t
    cdef double px, py, x0, y0_, x1, y1_, x2, y2, det, b1, b2, b0
    cdef double tol = -1e-12
    with nogil:
        for p in range(npnt):
            px = points[p, 0]
            py = points[p, 1]
            ix = <long>floor((px - ox) / cell)
            iy = <long>floor((py - oy) / cell)
            if ix < 0 or ix >= nx or iy < 0 or iy >= ny:
                continue
            c = iy * nx + ix
            for it in range(cell_start[c], cell_start[c + 1]):
                t = cell_items[it]
                x0 = nodes[tris[t, 0], 0]
                y0_ = nodes[tris[t, 0], 1]
                x1 = nodes[tris[t, 1], 0]
                y1_ = nodes[tris[t, 1], 1]
                x2 = nodes[tris[t, 2], 0]
                y2 = nodes[tris[t, 2], 1]
                det = (x1 - x0) * (y2 - y0_) - (x2 - x0) * (y1_ - y0_)
                b1 = ((y2 - y0_) * (px - x0) - (x2 - x0) * (py - y0_)) / det
                b2 = (-(y1_ - y0_) * (px - x0) + (x1 - x0) * (py - y0_)) / det
                b0 = 1.0 - b1 - b2
                if b0 >= tol and b1 >= tol and b2 >= tol:
                    idx[p] = t
                    bary[p, 0] = b0
                    bary[p, 1] = b1
                    bary[p, 2] = b2
                    break
    return idx_np, bary_np
