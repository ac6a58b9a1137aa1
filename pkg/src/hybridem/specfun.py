"""Special functions, quadrature rules and closed-form panel integrals.

Kernel conventions
------------------
Time dependence is ``exp(+j w t)``. The two-dimensional Green's function of
``(nabla^2 + k^2) G = -delta`` and its normal derivative with respect to the
source point are

.. math::

    G(\\rho) = -\\frac{j}{4} H_0^{(2)}(k\\rho), \\qquad
    \\frac{\\partial G}{\\partial n'} = k\\,\\frac{\\vec\\rho\\cdot\\hat n'}{\\rho}\\,
    G'(\\rho), \\quad G' = -\\frac{j}{4} H_1^{(2)}(k\\rho),

with :math:`\\vec\\rho = r - r'`.

Panel geometry
--------------
For an observation point ``r`` and a straight source segment
``[r1', r2']`` with unit tangent ``tau`` and outward normal
``n' = (tau_y, -tau_x)`` (counter-clockwise contours), the source point is
parametrised by the signed coordinate ``s = (r' - r) . tau`` which runs
from ``l1`` to ``l2 = l1 + l0``. The signed offset
``h = (r1' - r) . n'`` gives ``rho^2 = s^2 + h^2`` and
``rho_vec . n' = -h``; ``P0 = |h|``.

For small ``|k rho|`` the Hankel functions are replaced by the leading terms
of their ascending series, which makes the panel integrals elementary:

========  ==========================================
``I1``    ``int s ds``
``I2``    ``int s ln(rho) ds``
``I3``    ``int ln(rho) ds``
``I4``    ``int ds``
``I5``    ``int s / rho^2 ds``
``I6``    ``int 1 / rho^2 ds``
========  ==========================================

The functions :func:`integrate_G_halfrooftop` and
:func:`integrate_gradG_halfrooftop` integrate the small-argument kernels
against the rising ``(s - l1)/l0`` and falling ``(l2 - s)/l0`` halves of a
rooftop. :func:`panel_integrals` adds a Gauss-integrated remainder
``H - H_small`` so the result is accurate for any ``|k rho|``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import special

log = logging.getLogger(__name__)

EULER_GAMMA = float(np.euler_gamma)
#: Exponential of Euler's constant as used in the small-argument expansion.
GAMMA_SMALL = 1.781
SMALL_ARG_THRESHOLD = 0.1
_SERIES_SWITCH = 1e-3
_TWO_OVER_PI = 2.0 / np.pi


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


class SingularConfigurationError(ValueError):
    """Closed form requested at a configuration where it is singular."""


# ---------------------------------------------------------------------------
# Hankel functions
# ---------------------------------------------------------------------------

def hankel2(order: int, z):
    """Hankel function of the second kind, ``H_n^(2)(z) = J_n(z) - j Y_n(z)``.

    Parameters
    ----------
    order : {0, 1}
    z : float, complex or array_like
        Real arguments must be strictly positive. Complex arguments (lossy
        media) must be non-zero with ``Im(z) <= 0``.

    Returns
    -------
    complex or ndarray of complex

    Raises
    ------
    DomainError
        For ``z <= 0`` or an unsupported order.
    """
    if order not in (0, 1):
        raise DomainError(f"order must be 0 or 1, got {order}")
    z = np.asarray(z)
    scalar = z.ndim == 0
    if np.iscomplexobj(z):
        if np.any(z == 0):
            raise DomainError("hankel2 is singular at z = 0")
        out = special.hankel2(order, z)
    else:
        if np.any(~(z > 0)):
            raise DomainError("hankel2 requires z > 0 for real arguments")
        zf = z.astype(float)
        if order == 0:
            out = special.j0(zf) - 1j * special.y0(zf)
        else:
            out = special.j1(zf) - 1j * special.y1(zf)
    return complex(out) if scalar else out


def hankel2_small(order: int, k, rho):
    """Leading small-argument form of ``H_n^(2)(k rho)``.

    Order 0 gives ``[1 - j(2/pi) ln(gamma k / 2)] - j(2/pi) ln(rho)`` and
    order 1 gives ``k rho / 2 + 2j / (pi k rho)``, with ``gamma = 1.781``.

    Raises
    ------
    DomainError
        If ``rho <= 0``.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise DomainError("hankel2_small requires rho > 0")
    k = complex(k)
    if order == 0:
        out = small_constant(k) - 1j * _TWO_OVER_PI * np.log(rho)
    elif order == 1:
        z = k * rho
        out = z / 2 + 2j / (np.pi * z)
    else:
        raise DomainError(f"order must be 0 or 1, got {order}")
    return complex(out) if out.ndim == 0 else out


def small_constant(k) -> complex:
    """``1 - j (2/pi) ln(gamma k / 2)``, the rho-independent part of the
    order-0 small-argument form."""
    return 1.0 - 1j * _TWO_OVER_PI * np.log(GAMMA_SMALL * complex(k) / 2.0)


def hankel_remainders(k, rho):
    """Remainders ``H_n^(2)(k rho) - H_n_small(k rho)`` for n = 0, 1.

    Near ``k rho = 0`` both Hankel functions and their small-argument forms
    diverge, so the remainder is taken from the next terms of the ascending
    series for ``|k rho| < 1e-3``; it is finite (order 0) or zero (order 1)
    at ``rho = 0``.

    Parameters
    ----------
    k : complex
    rho : ndarray, rho >= 0

    Returns
    -------
    (R0, R1) : tuple of complex ndarrays
    """
    k = complex(k)
    rho = np.asarray(rho, dtype=float)
    z = k * rho
    az = np.abs(z)
    ser = az < _SERIES_SWITCH
    r0 = np.empty(rho.shape, dtype=complex)
    r1 = np.empty(rho.shape, dtype=complex)

    far = ~ser
    if np.any(far):
        zf = z[far]
        rf = rho[far]
        if k.imag == 0.0 and k.real > 0:
            x = zf.real
            h0 = special.j0(x) - 1j * special.y0(x)
            h1 = special.j1(x) - 1j * special.y1(x)
        else:
            h0 = special.hankel2(0, zf)
            h1 = special.hankel2(1, zf)
        r0[far] = h0 - (small_constant(k) - 1j * _TWO_OVER_PI * np.log(rf))
        r1[far] = h1 - (zf / 2 + 2j / (np.pi * zf))
    if np.any(ser):
        zs = z[ser]
        rs = rho[ser]
        with np.errstate(divide="ignore", invalid="ignore"):
            lg = np.log(k / 2.0) + np.where(rs > 0, np.log(np.where(rs > 0, rs, 1.0)), 0.0)
        q = zs * zs / 4.0
        # rho = 0 limits: q*lg -> 0 and z*lg -> 0
        qlg = np.where(rs > 0, q * lg, 0.0)
        zlg = np.where(rs > 0, zs * lg, 0.0)
        r0[ser] = -q - 1j * _TWO_OVER_PI * (
            (EULER_GAMMA - np.log(GAMMA_SMALL)) + q * (1.0 - EULER_GAMMA) - qlg
        )
        r1[ser] = -1j / np.pi * (zlg + zs * (EULER_GAMMA - 0.5))
    return r0, r1


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

def gauss_legendre(n_points: int, a: float = -1.0, b: float = 1.0):
    """Gauss-Legendre abscissas and weights on ``[a, b]``.

    Parameters
    ----------
    n_points : int
        Number of points, ``1 <= n_points <= 64``.
    a, b : float
        Interval end points.

    Returns
    -------
    x, w : ndarray
    """
    if not (1 <= int(n_points) <= 64) or int(n_points) != n_points:
        raise ValueError(f"n_points must be an integer in [1, 64], got {n_points}")
    x, w = np.polynomial.legendre.leggauss(int(n_points))
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


# ---------------------------------------------------------------------------
# Segment geometry and closed-form integrals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SegmentGeometry:
    """Observation point and straight source segment.

    Attributes
    ----------
    r_obs, r1p, r2p : tuple of float
        Observation point and source segment end points.
    tau : tuple of float
        Unit tangent from ``r1p`` to ``r2p``.
    l0, l1, l2 : float
        Segment length and signed projections of ``r1p - r_obs`` and
        ``r2p - r_obs`` on ``tau``.
    h : float
        Signed offset ``(r1p - r_obs) . n'`` with ``n' = (tau_y, -tau_x)``.
    """

    r_obs: tuple
    r1p: tuple
    r2p: tuple
    tau: tuple
    l0: float
    l1: float
    l2: float
    h: float

    @property
    def P0(self) -> float:
        return abs(self.h)

    @property
    def normal(self) -> tuple:
        return (self.tau[1], -self.tau[0])

    @property
    def rho1(self) -> float:
        return float(np.hypot(self.r1p[0] - self.r_obs[0], self.r1p[1] - self.r_obs[1]))

    @property
    def rho2(self) -> float:
        return float(np.hypot(self.r2p[0] - self.r_obs[0], self.r2p[1] - self.r_obs[1]))

    @property
    def rho_min(self) -> float:
        """Distance from the observation point to the closed segment."""
        if self.l1 <= 0.0 <= self.l2:
            return self.P0
        return min(self.rho1, self.rho2)

    @property
    def rho_max(self) -> float:
        return max(self.rho1, self.rho2)

    @classmethod
    def from_points(cls, r_obs, r1p, r2p) -> "SegmentGeometry":
        r = np.asarray(r_obs, dtype=float)
        a = np.asarray(r1p, dtype=float)
        b = np.asarray(r2p, dtype=float)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("non-finite coordinates")
        d = b - a
        l0 = float(np.hypot(d[0], d[1]))
        if l0 == 0.0:
            raise ValueError("zero-length source segment")
        t = d / l0
        n = np.array([t[1], -t[0]])
        l1 = float(np.dot(a - r, t))
        return cls(
            r_obs=(float(r[0]), float(r[1])),
            r1p=(float(a[0]), float(a[1])),
            r2p=(float(b[0]), float(b[1])),
            tau=(float(t[0]), float(t[1])),
            l0=l0,
            l1=l1,
            l2=l1 + l0,
            h=float(np.dot(a - r, n)),
        )


def _xlogx2(x):
    """``x^2 ln|x|`` with the zero limit."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(ax > 0, x * x * np.log(np.where(ax > 0, ax, 1.0)), 0.0)


def _xlogy(x, y):
    """``x ln(y)`` with ``0 ln 0 = 0``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(y > 0, x * np.log(np.where(y > 0, y, 1.0)), 0.0)


def identity_arrays(l1, l2, P0, rho1, rho2):
    """Vectorised I1..I6 from the scalar invariants of a panel geometry.

    ``I5`` and ``I6`` are returned as 0 where ``P0 == 0``; they only enter
    multiplied by the offset ``h`` in the normal-derivative integrals, where
    the products vanish. Use :func:`identities_I` for the checked scalar
    version.
    """
    l1 = np.asarray(l1, dtype=float)
    l2 = np.asarray(l2, dtype=float)
    P0 = np.asarray(P0, dtype=float)
    rho1 = np.asarray(rho1, dtype=float)
    rho2 = np.asarray(rho2, dtype=float)
    pos = P0 > 0
    Ps = np.where(pos, P0, 1.0)
    dat = np.where(pos, np.arctan(l2 / Ps) - np.arctan(l1 / Ps), 0.0)
    I1 = 0.5 * (l2 * l2 - l1 * l1)
    I2 = 0.5 * (_xlogx2(rho2) - _xlogx2(rho1) - 0.5 * (l2 * l2 - l1 * l1))
    I3 = _xlogy(l2, rho2) - _xlogy(l1, rho1) - (l2 - l1) + np.where(pos, P0 * dat, 0.0)
    I4 = l2 - l1
    with np.errstate(divide="ignore", invalid="ignore"):
        I5 = np.where(pos, np.log(np.where(pos, rho2, 1.0)) - np.log(np.where(pos, rho1, 1.0)), 0.0)
    I6 = np.where(pos, dat / Ps, 0.0)
    return I1, I2, I3, I4, I5, I6


def identities_I(geom: SegmentGeometry):
    """Closed forms of the six panel identities.

    Returns
    -------
    tuple of six floats ``(I1, ..., I6)``

    Raises
    ------
    SingularConfigurationError
        If ``P0 == 0`` and the observation point lies on the closed source
        segment, where ``I5`` and ``I6`` diverge. Callers on that branch use
        :func:`identity_arrays`, whose products with ``P0`` vanish.
    """
    if geom.P0 == 0.0 and geom.l1 <= 0.0 <= geom.l2:
        raise SingularConfigurationError(
            "I5/I6 diverge for an observation point on the source segment"
        )
    if geom.P0 == 0.0:
        # collinear but outside the segment: 1/s^2 and s/s^2 are regular
        I1, I2, I3, I4, _, _ = identity_arrays(geom.l1, geom.l2, 0.0, geom.rho1, geom.rho2)
        I5 = np.log(abs(geom.l2)) - np.log(abs(geom.l1))
        I6 = 1.0 / geom.l1 - 1.0 / geom.l2
        return tuple(float(v) for v in (I1, I2, I3, I4, I5, I6))
    vals = identity_arrays(geom.l1, geom.l2, geom.P0, geom.rho1, geom.rho2)
    return tuple(float(v) for v in vals)


def _check_small(geom: SegmentGeometry, k, check: bool):
    if check and abs(complex(k)) * geom.rho_min >= SMALL_ARG_THRESHOLD:
        raise ValueError(
            f"|k rho_min| = {abs(complex(k)) * geom.rho_min:.3g} is outside the "
            f"small-argument range (< {SMALL_ARG_THRESHOLD})"
        )


def small_G_halves(l0, l1, l2, I1, I2, I3, I4, csmall):
    """Integrals of the small-argument G against the (fall, rise) halves."""
    a = -0.25j * csmall
    b = -1.0 / (2.0 * np.pi)
    rise = (a * (I1 - l1 * I4) + b * (I2 - l1 * I3)) / l0
    fall = (a * (l2 * I4 - I1) + b * (l2 * I3 - I2)) / l0
    return fall, rise


def small_dG_halves(l0, l1, l2, h, I1, I4, I5, I6, k2):
    """Integrals of the small-argument dG/dn' against the (fall, rise) halves."""
    a = 0.125j * k2
    b = -1.0 / (2.0 * np.pi)
    rise = h * (a * (I1 - l1 * I4) + b * (I5 - l1 * I6)) / l0
    fall = h * (a * (l2 * I4 - I1) + b * (l2 * I6 - I5)) / l0
    return fall, rise


def integrate_G_halfrooftop(geom: SegmentGeometry, k, jwmu, rising: bool,
                            check: bool = True) -> complex:
    """``jwmu * int G_small(r, r') f_half(r') dr'`` in closed form.

    Parameters
    ----------
    geom : SegmentGeometry
    k : complex
        Wavenumber of the medium.
    jwmu : complex
        Prefactor ``j omega mu`` of the medium.
    rising : bool
        Rising half ``(s - l1)/l0`` if true, else falling half ``(l2 - s)/l0``.
    check : bool
        Enforce ``|k rho_min| < 0.1``. Disable to force the analytic path.
    """
    _check_small(geom, k, check)
    I1, I2, I3, I4, _, _ = identity_arrays(geom.l1, geom.l2, geom.P0, geom.rho1, geom.rho2)
    fall, rise = small_G_halves(geom.l0, geom.l1, geom.l2, I1, I2, I3, I4, small_constant(k))
    return complex(jwmu) * complex(rise if rising else fall)


def integrate_gradG_halfrooftop(geom: SegmentGeometry, k, rising: bool,
                                check: bool = True) -> complex:
    """``int dG_small/dn'(r, r') f_half(r') dr'`` in closed form.

    Returns exactly 0 when the observation point lies on the source line,
    up to the same round-off threshold used by :func:`panel_integrals`.
    """
    _check_small(geom, k, check)
    if abs(geom.h) <= 1e-13 * geom.l0:
        return 0.0j
    I1, _, _, I4, I5, I6 = identity_arrays(geom.l1, geom.l2, geom.P0, geom.rho1, geom.rho2)
    fall, rise = small_dG_halves(geom.l0, geom.l1, geom.l2, geom.h, I1, I4, I5, I6,
                                 complex(k) ** 2)
    return complex(rise if rising else fall)


def panel_integrals(geom: SegmentGeometry, k, n_gauss: int = 8, nsub: int = 1,
                    near: bool = True):
    """Accurate half-rooftop integrals of G and dG/dn' for any ``|k rho|``.

    With ``near`` the small-argument part is integrated in closed form and
    the smooth remainder by Gauss-Legendre quadrature, split at the
    projection point when it lies inside the segment. Otherwise plain
    Gauss-Legendre quadrature of the full kernels is used.

    Returns
    -------
    (g_fall, g_rise, d_fall, d_rise) : tuple of complex
        Without the ``j omega mu`` factor.
    """
    k = complex(k)
    l0, l1, l2, h = geom.l0, geom.l1, geom.l2, geom.h
    if abs(h) <= 1e-13 * l0:
        h = 0.0
    xg, wg = gauss_legendre(n_gauss, 0.0, 1.0)
    if near:
        I1, I2, I3, I4, I5, I6 = identity_arrays(l1, l2, abs(h), geom.rho1, geom.rho2)
        gf, gr = small_G_halves(l0, l1, l2, I1, I2, I3, I4, small_constant(k))
        df, dr = small_dG_halves(l0, l1, l2, h, I1, I4, I5, I6, k * k)
        brk = [l1, 0.0, l2] if l1 < 0.0 < l2 else [l1, l2]
    else:
        gf = gr = df = dr = 0.0j
        brk = [l1, l2]
    edges = []
    for a, b in zip(brk[:-1], brk[1:]):
        edges.extend(np.linspace(a, b, nsub + 1)[:-1].tolist())
    edges.append(l2)
    edges = np.asarray(edges)
    lo, hi = edges[:-1, None], edges[1:, None]
    s = (lo + (hi - lo) * xg[None, :]).ravel()
    w = ((hi - lo) * wg[None, :]).ravel()
    rho = np.hypot(s, h)
    if near:
        r0, r1 = hankel_remainders(k, rho)
        gker = -0.25j * r0
        dker = np.where(rho > 0, 0.25j * k * h / np.where(rho > 0, rho, 1.0), 0.0) * r1
    else:
        gker = -0.25j * hankel2(0, k * rho if k.imag else (k.real * rho))
        dker = 0.25j * k * h / rho * hankel2(1, k * rho if k.imag else (k.real * rho))
    t = (s - l1) / l0
    gf += np.sum(w * (1 - t) * gker)
    gr += np.sum(w * t * gker)
    df += np.sum(w * (1 - t) * dker)
    dr += np.sum(w * t * dker)
    return complex(gf), complex(gr), complex(df), complex(dr)
