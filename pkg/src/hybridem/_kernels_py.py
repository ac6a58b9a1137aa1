"""Pure-numpy implementations of the hot kernels.

Same signatures and semantics as the compiled ``_kernels`` extension; used
when the extension is unavailable or ``HYBRIDEM_PURE_PYTHON=1`` is set.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from .specfun import (
    gauss_legendre,
    hankel_remainders,
    identity_arrays,
    small_constant,
    small_dG_halves,
    small_G_halves,
)

_CHUNK_ELEMS = 400_000


def _full_kernels(k: complex, rho: np.ndarray, h: np.ndarray):
    """G and dG/dn' at distances ``rho`` with signed offsets ``h``."""
    z = k * rho
    if k.imag == 0.0:
        x = z.real
        h0 = special.j0(x) - 1j * special.y0(x)
        h1 = special.j1(x) - 1j * special.y1(x)
    else:
        h0 = special.hankel2(0, z)
        h1 = special.hankel2(1, z)
    return -0.25j * h0, 0.25j * k * h / rho * h1


def _near_pairs(k, l0, l1, l2, h, P0, rho1, rho2, xg, wg, nsub):
    """Analytic small-argument part plus split Gauss remainder."""
    I1, I2, I3, I4, I5, I6 = identity_arrays(l1, l2, P0, rho1, rho2)
    gf, gr = small_G_halves(l0, l1, l2, I1, I2, I3, I4, small_constant(k))
    df, dr = small_dG_halves(l0, l1, l2, h, I1, I4, I5, I6, k * k)
    mid = np.where((l1 < 0.0) & (l2 > 0.0), 0.0, 0.5 * (l1 + l2))
    frac = np.arange(nsub + 1) / nsub
    lo_hi = []
    for a, b in ((l1, mid), (mid, l2)):
        e = a[:, None] + (b - a)[:, None] * frac[None, :]
        lo_hi.append((e[:, :-1], e[:, 1:]))
    lo = np.concatenate([lo_hi[0][0], lo_hi[1][0]], axis=1)
    hi = np.concatenate([lo_hi[0][1], lo_hi[1][1]], axis=1)
    s = lo[:, :, None] + (hi - lo)[:, :, None] * xg[None, None, :]
    w = (hi - lo)[:, :, None] * wg[None, None, :]
    hh = h[:, None, None]
    rho = np.sqrt(s * s + hh * hh)
    r0, r1 = hankel_remainders(k, rho)
    gk = -0.25j * r0
    with np.errstate(divide="ignore", invalid="ignore"):
        dk = np.where(rho > 0, 0.25j * k * hh / np.where(rho > 0, rho, 1.0), 0.0) * r1
    t = (s - l1[:, None, None]) / l0[:, None, None]
    gf = gf + np.sum(w * (1 - t) * gk, axis=(1, 2))
    gr = gr + np.sum(w * t * gk, axis=(1, 2))
    df = df + np.sum(w * (1 - t) * dk, axis=(1, 2))
    dr = dr + np.sum(w * t * dk, axis=(1, 2))
    return gf, gr, df, dr


DECAY_SKIP = 40.0


def panel_integrals(points, contour_xy, k, n_inner=8, nsub=1, near_factor=1.0,
                    small_arg=0.1):
    """Rooftop-weighted boundary integrals of G and dG/dn' at given points.

    Parameters
    ----------
    points : ndarray, shape (P, 2)
    contour_xy : ndarray, shape (m, 2)
        Counter-clockwise closed polygon; segment ``b`` joins vertex ``b``
        and ``b + 1``.
    k : complex
    n_inner : int
        Gauss points per (sub)segment.
    nsub : int
        Uniform subdivisions per segment.
    near_factor, small_arg : float
        A segment is near a point if their distance is below
        ``near_factor * l0`` or ``small_arg / |k|``.

    Returns
    -------
    G, D : ndarray of complex, shape (P, m)
        ``G[p, n] = int G(r_p, r') f_n(r') dr'`` and the same with dG/dn'.
    """
    k = complex(k)
    pts = np.ascontiguousarray(points, dtype=float).reshape(-1, 2)
    a = np.ascontiguousarray(contour_xy, dtype=float)
    m = a.shape[0]
    b = np.roll(a, -1, axis=0)
    d = b - a
    l0 = np.hypot(d[:, 0], d[:, 1])
    tau = d / l0[:, None]
    nrm = np.column_stack([tau[:, 1], -tau[:, 0]])
    xg, wg = gauss_legendre(n_inner, 0.0, 1.0)
    frac = np.arange(nsub) / nsub
    xs = (frac[:, None] + xg[None, :] / nsub).ravel()
    ws = np.tile(wg / nsub, nsub)
    nq = xs.size
    kabs = abs(k)
    nxt = (np.arange(m) + 1) % m

    G = np.zeros((pts.shape[0], m), dtype=complex)
    D = np.zeros((pts.shape[0], m), dtype=complex)
    chunk = max(1, _CHUNK_ELEMS // (m * nq))
    for c0 in range(0, pts.shape[0], chunk):
        p = pts[c0:c0 + chunk]
        rel = a[None, :, :] - p[:, None, :]
        l1 = np.einsum("pmi,mi->pm", rel, tau)
        h = np.einsum("pmi,mi->pm", rel, nrm)
        h = np.where(np.abs(h) <= 1e-13 * l0[None, :], 0.0, h)
        l2 = l1 + l0[None, :]
        s = l1[:, :, None] + l0[None, :, None] * xs[None, None, :]
        w = l0[None, :, None] * ws[None, None, :]
        rho = np.sqrt(s * s + h[:, :, None] ** 2)
        rho1 = np.hypot(rel[..., 0], rel[..., 1])
        relb = b[None, :, :] - p[:, None, :]
        rho2 = np.hypot(relb[..., 0], relb[..., 1])
        P0 = np.abs(h)
        dist = np.where((l1 <= 0) & (l2 >= 0), P0, np.minimum(rho1, rho2))
        near = (dist < near_factor * l0[None, :]) | (kabs * dist < small_arg)
        # lossy kernels decayed below ~1e-17 of their near-field size are dropped
        off = near | (-k.imag * dist > DECAY_SKIP)
        with np.errstate(divide="ignore", invalid="ignore"):
            rho_safe = np.where(off[:, :, None], 1.0, rho)
            gk, dk = _full_kernels(k, rho_safe, h[:, :, None])
        gk = np.where(off[:, :, None], 0.0, gk)
        dk = np.where(off[:, :, None], 0.0, dk)
        t = xs[None, None, :]
        gf = np.sum(w * (1 - t) * gk, axis=2)
        gr = np.sum(w * t * gk, axis=2)
        df = np.sum(w * (1 - t) * dk, axis=2)
        dr = np.sum(w * t * dk, axis=2)
        ip, ib = np.nonzero(near)
        if ip.size:
            vals = _near_pairs(
                k, l0[ib], l1[ip, ib], l2[ip, ib], h[ip, ib], P0[ip, ib],
                rho1[ip, ib], rho2[ip, ib], xg, wg, nsub,
            )
            gf[ip, ib], gr[ip, ib], df[ip, ib], dr[ip, ib] = vals
        G[c0:c0 + chunk] += gf
        D[c0:c0 + chunk] += df
        G[c0:c0 + chunk][:, nxt] += gr
        D[c0:c0 + chunk][:, nxt] += dr
    return G, D


def farfield_sum(x, y, ux, uy, alpha, beta, angles, k):
    """``F[a] = sum_q exp(j k rhat_a . x_q) (alpha_q + beta_q rhat_a . u_q)``.

    Parameters
    ----------
    x, y : ndarray
        Quadrature point coordinates.
    ux, uy : ndarray
        Unit vectors paired with ``beta``.
    alpha, beta : ndarray of complex
        Weights.
    angles : ndarray
        Observation angles in radians.
    k : complex
    """
    angles = np.asarray(angles, dtype=float)
    out = np.zeros(angles.size, dtype=complex)
    n = max(1, _CHUNK_ELEMS // max(1, x.size))
    for s in range(0, angles.size, n):
        c = np.cos(angles[s:s + n])[:, None]
        si = np.sin(angles[s:s + n])[:, None]
        ph = np.exp(1j * k * (c * x[None, :] + si * y[None, :]))
        out[s:s + n] = ph @ alpha + (ph * (c * ux[None, :] + si * uy[None, :])) @ beta
    return out


def locate_points(points, nodes, tris, cell_start, cell_items, origin, cell, nx, ny):
    """Find the containing triangle and barycentric coordinates of points.

    Triangles are bucketed on a uniform grid (``cell_start``/``cell_items``
    in CSR layout). Points outside every triangle get index -1.
    """
    pts = np.ascontiguousarray(points, dtype=float).reshape(-1, 2)
    npnt = pts.shape[0]
    tri_idx = np.full(npnt, -1, dtype=np.int64)
    bary = np.zeros((npnt, 3))
    ix = np.floor((pts[:, 0] - origin[0]) / cell).astype(np.int64)
    iy = np.floor((pts[:, 1] - origin[1]) / cell).astype(np.int64)
    valid = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
    pid = np.nonzero(valid)[0]
    cid = iy[pid] * nx + ix[pid]
    cnt = cell_start[cid + 1] - cell_start[cid]
    rep = np.repeat(pid, cnt)
    offs = np.repeat(cell_start[cid], cnt) + (
        np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt))
    cand = cell_items[offs]
    v = nodes[tris[cand]]
    p = pts[rep]
    det = (v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1]) - (
        v[:, 2, 0] - v[:, 0, 0]) * (v[:, 1, 1] - v[:, 0, 1])
    l1 = ((v[:, 2, 1] - v[:, 0, 1]) * (p[:, 0] - v[:, 0, 0]) - (v[:, 2, 0] - v[:, 0, 0]) * (p[:, 1] - v[:, 0, 1])) / det
    l2 = (-(v[:, 1, 1] - v[:, 0, 1]) * (p[:, 0] - v[:, 0, 0]) + (v[:, 1, 0] - v[:, 0, 0]) * (p[:, 1] - v[:, 0, 1])) / det
    l0 = 1.0 - l1 - l2
    tol = -1e-12
    inside = (l0 >= tol) & (l1 >= tol) & (l2 >= tol)
    hit = np.nonzero(inside)[0]
    # first candidate per point, in bucket order
    _, first = np.unique(rep[hit], return_index=True)
    sel = hit[first]
    tri_idx[rep[sel]] = cand[sel]
    bary[rep[sel]] = np.column_stack([l0[sel], l1[sel], l2[sel]])
    return tri_idx, bary
