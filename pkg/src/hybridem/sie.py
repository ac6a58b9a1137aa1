"""Boundary operators on closed contours and the surface admittance operators.

On a counter-clockwise contour with nodes ``r_1 .. r_m`` the boundary field
``E`` and the tangential magnetic field ``H_t = (1/(j w mu)) dE/dn`` are
expanded in rooftop functions ``f_n`` centred on the nodes. Galerkin
testing of the on-boundary representation formula

    T E(r) = oint [ G dE/dn' - E dG/dn' ] dl',   T = 1/2

gives ``P H = (T L + U) E`` with

* ``L[m, n] = int f_m f_n`` (cyclic tridiagonal Gram matrix),
* ``P[m, n] = j w mu int int f_m G f_n``,
* ``U[m, n] = int int f_m dG/dn' f_n``.

The surface admittance ``Y = P^-1 (T L + U)`` maps boundary ``E`` to
``H_t``. Repeating the construction with the background medium gives
``Y_hat``; the difference ``Y_s = Y - Y_hat`` maps ``E`` to the single
equivalent electric surface current ``J = Y_s E`` that lets the enclosed
object be replaced by background medium.

Inner panel integrals come from :mod:`hybridem.kernels`: singular and
near-singular panels use the closed-form small-argument integrals plus a
Gauss-integrated smooth remainder; far panels use Gauss-Legendre rules.
"""

from __future__ import annotations

import hashlib
import logging
import time
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import kernels
from .mesh import Material
from .specfun import gauss_legendre

log = logging.getLogger(__name__)


class SingularOperatorError(np.linalg.LinAlgError):
    """P is numerically singular."""

    def __init__(self, message, cond=np.inf):
        self.cond = cond
        super().__init__(message)


class NearSingularWarning(UserWarning):
    """An evaluation point lies very close to the contour."""


@dataclass(frozen=True)
class QuadratureOptions:
    """Panel quadrature settings.

    Attributes
    ----------
    n_outer : int
        Gauss points per (sub)segment for the testing integral.
    n_inner : int
        Gauss points per (sub)segment for the source integral.
    near_factor : float
        A panel is near an evaluation point closer than this many panel
        lengths.
    kl_sub : float
        Segments with ``|k| l`` above this are split into equal parts.
    """

    n_outer: int = 8
    n_inner: int = 8
    near_factor: float = 1.0
    kl_sub: float = 3.0

    def nsub(self, k: complex, lmax: float) -> int:
        return max(1, int(np.ceil(abs(k) * lmax / self.kl_sub)))


DEFAULT_QUADRATURE = QuadratureOptions()


def _xy(contour_xy) -> np.ndarray:
    xy = np.ascontiguousarray(contour_xy, dtype=float)
    if xy.ndim != 2 or xy.shape[1] != 2 or xy.shape[0] < 3:
        raise ValueError("a contour needs at least 3 nodes given as an (m, 2) array")
    return xy


def segment_lengths(contour_xy) -> np.ndarray:
    xy = _xy(contour_xy)
    d = np.roll(xy, -1, axis=0) - xy
    return np.hypot(d[:, 0], d[:, 1])


def assemble_L(contour_xy) -> np.ndarray:
    """Gram matrix of the rooftop functions on a closed polygon.

    ``L[n, n] = (l_{n-1} + l_n)/3`` and ``L[n, n+1] = l_n/6`` cyclically,
    where segment ``n`` joins nodes ``n`` and ``n + 1``.
    """
    ln = segment_lengths(contour_xy)
    if np.any(ln <= 0):
        raise ValueError(f"segment {int(np.argmin(ln))} has zero length")
    m = ln.size
    L = np.zeros((m, m))
    idx = np.arange(m)
    nxt = (idx + 1) % m
    L[idx, idx] = (np.roll(ln, 1) + ln) / 3.0
    L[idx, nxt] += ln / 6.0
    L[nxt, idx] += ln / 6.0
    return L


def testing_points(contour_xy, n_outer: int, nsub: int = 1):
    """Outer quadrature points with rooftop test weights.

    Returns
    -------
    pts : ndarray, shape (Q, 2)
    wfall, wrise : ndarray, shape (Q,)
        Quadrature weight times the falling / rising half of the rooftop of
        the start / end node of the segment.
    seg : ndarray of int, shape (Q,)
        Segment index of each point.
    """
    xy = _xy(contour_xy)
    m = xy.shape[0]
    d = np.roll(xy, -1, axis=0) - xy
    ln = np.hypot(d[:, 0], d[:, 1])
    xg, wg = gauss_legendre(n_outer, 0.0, 1.0)
    frac = np.arange(nsub) / nsub
    t = (frac[:, None] + xg[None, :] / nsub).ravel()
    w = np.tile(wg / nsub, nsub)
    pts = (xy[:, None, :] + t[None, :, None] * d[:, None, :]).reshape(-1, 2)
    ww = (ln[:, None] * w[None, :]).ravel()
    tt = np.tile(t, m)
    seg = np.repeat(np.arange(m), t.size)
    return pts, ww * (1 - tt), ww * tt, seg


def assemble_PU(contour_xy, k: complex, jwmu: complex,
                quad: QuadratureOptions = DEFAULT_QUADRATURE):
    """Galerkin matrices ``P`` (with ``jwmu``) and ``U`` of one medium."""
    xy = _xy(contour_xy)
    m = xy.shape[0]
    nsub = quad.nsub(k, float(segment_lengths(xy).max()))
    pts, wf, wr, seg = testing_points(xy, quad.n_outer, nsub)
    Gi, Di = kernels.panel_integrals(
        pts, xy, k, n_inner=quad.n_inner, nsub=nsub, near_factor=quad.near_factor)
    nq = pts.shape[0] // m
    # rows: test node; segment a feeds node a (falling) and node a + 1 (rising)
    Pf = (wf[:, None] * Gi).reshape(m, nq, m).sum(axis=1)
    Pr = (wr[:, None] * Gi).reshape(m, nq, m).sum(axis=1)
    Uf = (wf[:, None] * Di).reshape(m, nq, m).sum(axis=1)
    Ur = (wr[:, None] * Di).reshape(m, nq, m).sum(axis=1)
    P = Pf + np.roll(Pr, 1, axis=0)
    U = Uf + np.roll(Ur, 1, axis=0)
    return complex(jwmu) * P, U


def assemble_P(contour_xy, material: Material, omega: float,
               quad: QuadratureOptions = DEFAULT_QUADRATURE) -> np.ndarray:
    """``P[m, n] = j w mu int int f_m G f_n`` for ``material``."""
    P, _ = assemble_PU(contour_xy, material.wavenumber(omega), material.jwmu(omega), quad)
    return P


def assemble_U(contour_xy, material: Material, omega: float,
               quad: QuadratureOptions = DEFAULT_QUADRATURE) -> np.ndarray:
    """``U[m, n] = int int f_m dG/dn' f_n`` for ``material``."""
    _, U = assemble_PU(contour_xy, material.wavenumber(omega), 1.0, quad)
    return U


def build_sao(L, P, U, T: float = 0.5, cond_warn: float = 1e12):
    """Surface admittance ``Y = P^-1 (T L + U)`` by LU solve.

    ``U`` is the Galerkin matrix of ``dG/dn'`` itself, so the representation
    formula ``T L E = P H - U E`` rearranges with a plus sign.

    Returns
    -------
    Y : ndarray
    cond : float
        1-norm condition estimate of ``P``.

    Raises
    ------
    SingularOperatorError
        If ``P`` is singular to working precision.
    """
    P = np.asarray(P, dtype=complex)
    anorm = np.linalg.norm(P, 1)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", linalg.LinAlgWarning)
            lu, piv = linalg.lu_factor(P, check_finite=True)
    except (linalg.LinAlgWarning, ValueError, np.linalg.LinAlgError) as exc:
        raise SingularOperatorError(f"P is singular: {exc}") from exc
    gecon = linalg.get_lapack_funcs("gecon", (lu,))
    rcond, info = gecon(lu, anorm, norm="1")
    cond = np.inf if rcond == 0 else 1.0 / rcond
    if not np.isfinite(cond) or cond > 1e15:
        raise SingularOperatorError(f"P is numerically singular (cond ~ {cond:.3g})", cond)
    if cond >= cond_warn:
        log.warning("P is ill-conditioned: cond ~ %.3g", cond)
    Y = linalg.lu_solve((lu, piv), T * np.asarray(L) + U)
    return Y, float(cond)


@dataclass
class BoundaryOperatorSet:
    """Operators of one SIE contour.

    ``Y`` maps boundary E to ``H_t`` for the enclosed medium, ``Y_hat`` for
    the background (replacement) medium, and ``Y_s = Y - Y_hat``.
    """

    contour_id: int | None
    node_ids: np.ndarray | None
    xy: np.ndarray
    L: np.ndarray
    P: np.ndarray
    U: np.ndarray
    P_hat: np.ndarray
    U_hat: np.ndarray
    Y: np.ndarray
    Y_hat: np.ndarray
    Y_s: np.ndarray
    inner: Material
    background: Material
    omega: float
    cond: tuple = (np.nan, np.nan)
    seconds: float = 0.0
    cached: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return int(self.L.shape[0])


_CACHE: "OrderedDict[str, tuple]" = OrderedDict()
_CACHE_SIZE = 8


def _cache_key(xy, inner, background, omega, quad, T):
    rel = xy - xy[0]
    scale = float(np.abs(rel).max()) or 1.0
    # translated copies differ by rounding only; quantize before hashing
    rel = np.ascontiguousarray(np.round(rel / scale, 11) + 0.0)
    h = hashlib.sha1(rel.tobytes())
    h.update(f"{scale:.10e}".encode())
    h.update(repr((inner, background, float(omega), quad, float(T))).encode())
    return h.hexdigest()


def clear_cache() -> None:
    _CACHE.clear()


def build_dsao(contour_xy, inner: Material, background: Material, omega: float,
               quad: QuadratureOptions = DEFAULT_QUADRATURE, T: float = 0.5,
               contour_id=None, node_ids=None, use_cache: bool = True) -> BoundaryOperatorSet:
    """Differential surface admittance ``Y_s = Y - Y_hat`` of one contour.

    Results are cached on the contour shape relative to its first node, so
    translated copies of a contour (identical conductors) are built once.
    """
    t0 = time.perf_counter()
    xy = _xy(contour_xy)
    key = _cache_key(xy, inner, background, omega, quad, T) if use_cache else None
    if key is not None and key in _CACHE:
        _CACHE.move_to_end(key)
        L, P, U, Ph, Uh, Y, Yh, cond = _CACHE[key]
        cached = True
    else:
        L = assemble_L(xy)
        P, U = assemble_PU(xy, inner.wavenumber(omega), inner.jwmu(omega), quad)
        Y, c1 = build_sao(L, P, U, T)
        if inner == background:
            Ph, Uh, Yh, c2 = P, U, Y, c1
        else:
            Ph, Uh = assemble_PU(xy, background.wavenumber(omega), background.jwmu(omega), quad)
            Yh, c2 = build_sao(L, Ph, Uh, T)
        cond = (c1, c2)
        cached = False
        if key is not None:
            _CACHE[key] = (L, P, U, Ph, Uh, Y, Yh, cond)
            while len(_CACHE) > _CACHE_SIZE:
                _CACHE.popitem(last=False)
    Ys = Y - Yh
    dt = time.perf_counter() - t0
    log.debug("DSAO on %d nodes in %.3f s (cached=%s)", xy.shape[0], dt, cached)
    return BoundaryOperatorSet(
        contour_id=contour_id,
        node_ids=None if node_ids is None else np.asarray(node_ids),
        xy=xy, L=L, P=P, U=U, P_hat=Ph, U_hat=Uh, Y=Y, Y_hat=Yh, Y_s=Ys,
        inner=inner, background=background, omega=float(omega), cond=cond,
        seconds=dt, cached=cached,
    )


@dataclass
class BoundaryField:
    """Rooftop coefficients of a boundary quantity (``E``, ``H_t`` or ``J``)."""

    coefficients: np.ndarray
    kind: str = "E"

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=complex)
        if self.kind not in ("E", "H_t", "J"):
            raise ValueError(f"unknown boundary field kind {self.kind!r}")


def recover_interior_fields(contour_xy, boundary_E, material: Material, omega: float,
                            points, Y=None, quad: QuadratureOptions = DEFAULT_QUADRATURE,
                            near_tol: float = 0.1):
    """Field inside a homogeneous contour from its boundary values.

    ``E(r) = oint [G (j w mu H_t) - E dG/dn'] dl'`` with ``H_t = Y E``
    (representation formula with ``T = 1``).

    Parameters
    ----------
    contour_xy : ndarray, shape (m, 2)
    boundary_E : BoundaryField or array_like
        Nodal boundary field.
    material : Material
        Enclosed medium.
    Y : ndarray, optional
        SAO of ``material``; built if omitted.
    points : ndarray, shape (P, 2)
        Points strictly inside the contour.
    near_tol : float
        Points closer than ``near_tol`` times the local segment length are
        flagged (result kept, accuracy reduced).

    Returns
    -------
    values : ndarray of complex
    flagged : ndarray of bool
    """
    xy = _xy(contour_xy)
    e = boundary_E.coefficients if isinstance(boundary_E, BoundaryField) else np.asarray(
        boundary_E, dtype=complex)
    if e.shape != (xy.shape[0],):
        raise ValueError("boundary field length differs from contour size")
    pts = np.ascontiguousarray(points, dtype=float).reshape(-1, 2)
    k = material.wavenumber(omega)
    jwmu = material.jwmu(omega)
    if Y is None:
        L = assemble_L(xy)
        P, U = assemble_PU(xy, k, jwmu, quad)
        Y, _ = build_sao(L, P, U)
    ht = Y @ e
    ln = segment_lengths(xy)
    nsub = quad.nsub(k, float(ln.max()))
    Gi, Di = kernels.panel_integrals(pts, xy, k, n_inner=quad.n_inner, nsub=nsub,
                                     near_factor=quad.near_factor)
    vals = jwmu * (Gi @ ht) - Di @ e
    # distance to the polygon for flagging
    a = xy[None, :, :]
    b = np.roll(xy, -1, axis=0)[None, :, :]
    p = pts[:, None, :]
    ab = b - a
    t = np.clip(np.sum((p - a) * ab, axis=2) / np.sum(ab * ab, axis=2), 0.0, 1.0)
    dist = np.linalg.norm(p - (a + t[..., None] * ab), axis=2)
    flagged = np.any(dist < near_tol * ln[None, :], axis=1)
    if np.any(flagged):
        warnings.warn(f"{int(flagged.sum())} points lie within {near_tol} segment lengths "
                      "of the contour", NearSingularWarning, stacklevel=2)
    return vals, flagged
