"""Independent references: adaptive panel quadrature and Mie series.

Nothing here reuses the boundary-operator or finite-element code. The panel
oracle integrates the defining kernels directly with a globally adaptive
7/15-point Gauss-Kronrod bisection; singular points (the projection of the
observation point on the source line, and the segment end points) are
placed on interval boundaries so the logarithmic and ``1/rho^2`` peaks are
resolved by refinement toward an end point.

The Mie solution uses the ``exp(+j w t)`` convention: the incident plane
wave ``E0 exp(-j k0 d . r)`` expands as
``sum_n j^-n J_n(k0 rho) exp(j n (phi - phi_i))``.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import constants, special

from .mesh import Material

log = logging.getLogger(__name__)

GAMMA_SMALL = 1.781  # constant of the small-argument form being checked


class OracleError(RuntimeError):
    """Oracle failed to converge."""


# ---------------------------------------------------------------------------
# Gauss-Kronrod 7/15
# ---------------------------------------------------------------------------

_XK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_X15 = np.concatenate([-_XK[:-1], _XK[::-1]])
_W15 = np.concatenate([_WK[:-1], _WK[::-1]])
# Gauss nodes are the odd-indexed Kronrod nodes
_G_IDX = np.array([1, 3, 5, 7, 9, 11, 13])
_W7 = np.concatenate([_WG[:-1], _WG[::-1]])


def _gk15(f, a, b):
    c, r = 0.5 * (a + b), 0.5 * (b - a)
    x = c + r * _X15
    fx = f(x)
    k = r * np.dot(_W15, fx)
    g = r * np.dot(_W7, fx[_G_IDX])
    l1 = r * np.dot(_W15, np.abs(fx))
    return k, abs(k - g), l1


def adaptive_integral(f, breakpoints, rtol=1e-12, max_level=40, max_intervals=20000):
    """Globally adaptive Gauss-Kronrod integration of a vectorised ``f``.

    The error target is ``rtol`` times the integral of ``|f|``, which is a
    stable scale even when the signed integral nearly cancels.

    Raises
    ------
    OracleError
        When an interval would need more than ``max_level`` bisections.
    """
    heap = []
    total = 0.0
    err = 0.0
    scale = 0.0
    bp = sorted(set(float(b) for b in breakpoints))
    for a, b in zip(bp[:-1], bp[1:]):
        if b <= a:
            continue
        v, e, s = _gk15(f, a, b)
        total += v
        err += e
        scale += s
        heapq.heappush(heap, (-e, a, b, 0, v, e, s))
    count = len(heap)
    while heap and err > rtol * max(scale, 1e-300):
        _, a, b, lvl, v, e, s = heapq.heappop(heap)
        if lvl >= max_level:
            raise OracleError(f"no convergence after {max_level} bisection levels")
        mid = 0.5 * (a + b)
        v1, e1, s1 = _gk15(f, a, mid)
        v2, e2, s2 = _gk15(f, mid, b)
        total += v1 + v2 - v
        err += e1 + e2 - e
        scale += s1 + s2 - s
        heapq.heappush(heap, (-e1, a, mid, lvl + 1, v1, e1, s1))
        heapq.heappush(heap, (-e2, mid, b, lvl + 1, v2, e2, s2))
        count += 1
        if count > max_intervals:
            raise OracleError("interval budget exhausted")
    return total, scale


# ---------------------------------------------------------------------------
# Panel integrands
# ---------------------------------------------------------------------------

PANEL_INTEGRANDS = (
    "I1", "I2", "I3", "I4", "I5", "I6",
    "G_rise", "G_fall", "dG_rise", "dG_fall",
    "Gsmall_rise", "Gsmall_fall", "dGsmall_rise", "dGsmall_fall",
)


def _h0(z):
    return special.hankel2(0, z)


def _h1(z):
    return special.hankel2(1, z)


def panel_integrand(name: str, geom, k=1.0):
    """Return a vectorised integrand of the source coordinate ``s``.

    ``s`` is the signed distance along the source line measured from the
    foot of the perpendicular through the observation point; the segment
    runs from ``geom.l1`` to ``geom.l2``. The normal offset is taken from
    the raw geometry (``r1p - r_obs`` projected on the outward normal).
    """
    if name not in PANEL_INTEGRANDS:
        raise ValueError(f"unknown integrand {name!r}")
    k = complex(k)
    l0, l1, l2 = geom.l0, geom.l1, geom.l2
    tx, ty = geom.tau
    h = (geom.r1p[0] - geom.r_obs[0]) * ty - (geom.r1p[1] - geom.r_obs[1]) * tx

    def rho(s):
        return np.sqrt(s * s + h * h)

    def rise(s):
        return (s - l1) / l0

    def fall(s):
        return (l2 - s) / l0

    def g_exact(s):
        return -0.25j * _h0(k * rho(s))

    def dg_exact(s):
        r = rho(s)
        # k (rho_vec . n') / rho * (-j/4) H1, with rho_vec . n' = -h
        return k * (-h) / r * (-0.25j) * _h1(k * r)

    def g_small(s):
        return -0.25j * (1 - 2j / np.pi * np.log(GAMMA_SMALL * k * rho(s) / 2))

    def dg_small(s):
        r = rho(s)
        return k * (-h) / r * (-0.25j) * (k * r / 2 + 2j / (np.pi * k * r))

    table = {
        "I1": lambda s: s,
        "I2": lambda s: s * np.log(rho(s)),
        "I3": lambda s: np.log(rho(s)),
        "I4": lambda s: np.ones_like(s),
        "I5": lambda s: s / rho(s) ** 2,
        "I6": lambda s: 1.0 / rho(s) ** 2,
        "G_rise": lambda s: g_exact(s) * rise(s),
        "G_fall": lambda s: g_exact(s) * fall(s),
        "dG_rise": lambda s: dg_exact(s) * rise(s),
        "dG_fall": lambda s: dg_exact(s) * fall(s),
        "Gsmall_rise": lambda s: g_small(s) * rise(s),
        "Gsmall_fall": lambda s: g_small(s) * fall(s),
        "dGsmall_rise": lambda s: dg_small(s) * rise(s),
        "dGsmall_fall": lambda s: dg_small(s) * fall(s),
    }
    return table[name], h


def adaptive_panel_integral(name: str, geom, k=1.0, rtol=1e-12, return_scale=False):
    """Brute-force integral of a panel kernel over the source segment.

    Parameters
    ----------
    name : str
        One of :data:`PANEL_INTEGRANDS`.
    geom : SegmentGeometry
    k : complex
        Wavenumber for the Green's-function kernels.

    Returns
    -------
    complex, or (complex, float) with the L1 scale if ``return_scale``.
    """
    f, h = panel_integrand(name, geom, k)
    pts = [geom.l1, geom.l2]
    if geom.l1 < 0.0 < geom.l2:
        pts.append(0.0)
    if h != 0.0:
        for c in (-abs(h), abs(h)):
            if geom.l1 < c < geom.l2:
                pts.append(c)
    complex_valued = name.startswith(("G", "dG"))

    if complex_valued:
        re, sre = adaptive_integral(lambda s: f(s).real, pts, rtol)
        im, sim = adaptive_integral(lambda s: f(s).imag, pts, rtol)
        val, scale = complex(re, im), float(np.hypot(sre, sim))
    else:
        val, scale = adaptive_integral(f, pts, rtol)
        val = float(val)
    return (val, scale) if return_scale else val


# ---------------------------------------------------------------------------
# Mie series
# ---------------------------------------------------------------------------

EPS0 = constants.epsilon_0
MU0 = constants.mu_0
C0 = constants.c


def _k(material: Material, omega: float) -> complex:
    epsc = material.eps_r - 1j * material.sigma / (omega * EPS0)
    return complex(omega / C0 * np.sqrt(material.mu_r * epsc))


@dataclass
class MieSolution:
    """Plane-wave scattering by a homogeneous circular cylinder.

    Parameters
    ----------
    radius : float
    inner, background : Material
    frequency : float
        Hz.
    phi_inc : float
        Propagation direction of the incident wave, radians.
    amplitude : complex
    center : tuple of float
    max_modes : int
        Cap on the modal order.
    """

    radius: float
    inner: Material
    background: Material
    frequency: float
    phi_inc: float = 0.0
    amplitude: complex = 1.0
    center: tuple = (0.0, 0.0)
    max_modes: int = 400
    n_modes: int = field(init=False)
    a_n: np.ndarray = field(init=False, repr=False)
    c_n: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        w = 2 * np.pi * self.frequency
        self.k0 = _k(self.background, w)
        self.k1 = _k(self.inner, w)
        self.omega = w
        a = self.radius
        x0, x1 = self.k0 * a, self.k1 * a
        m0, m1 = self.background.mu_r, self.inner.mu_r
        coeffs_a, coeffs_c = [], []
        xm = max(abs(x0), abs(x1))
        n_min = int(xm + 12 * xm ** (1 / 3) + 12)
        for n in range(self.max_modes + 1):
            jn0, jp0 = special.jv(n, x0), special.jvp(n, x0)
            hn0, hp0 = special.hankel2(n, x0), special.h2vp(n, x0)
            jn1, jp1 = special.jv(n, x1), special.jvp(n, x1)
            num = self.k1 / m1 * jp1 * jn0 - self.k0 / m0 * jn1 * jp0
            den = self.k0 / m0 * jn1 * hp0 - self.k1 / m1 * jp1 * hn0
            an = 0j if self.inner == self.background else num / den
            cn = (jn0 + an * hn0) / jn1
            coeffs_a.append(an)
            coeffs_c.append(cn)
            amax = max(abs(c) for c in coeffs_a)
            # stop once the coefficients have decayed and the argument is passed
            if n >= n_min and abs(an) <= 1e-13 * max(amax, 1e-300):
                break
        else:
            raise OracleError(f"Mie series did not converge within {self.max_modes} modes")
        self.n_modes = len(coeffs_a) - 1
        self.a_n = np.array(coeffs_a)
        self.c_n = np.array(coeffs_c)

    def _orders(self):
        n = np.arange(-self.n_modes, self.n_modes + 1)
        idx = np.abs(n)
        return n, self.a_n[idx], self.c_n[idx]

    def fields(self, points) -> np.ndarray:
        """Total field at ``points`` (inside and outside)."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        dx = pts[:, 0] - self.center[0]
        dy = pts[:, 1] - self.center[1]
        rho = np.hypot(dx, dy)
        phi = np.arctan2(dy, dx)
        n, an, cn = self._orders()
        jpow = (1j) ** (-n)
        ph = np.exp(1j * np.outer(phi - self.phi_inc, n))
        out = np.empty(len(pts), dtype=complex)
        inside = rho < self.radius
        ref = np.exp(-1j * self.k0 * (np.cos(self.phi_inc) * self.center[0]
                                      + np.sin(self.phi_inc) * self.center[1]))
        if np.any(~inside):
            r = rho[~inside][:, None]
            # negative orders are handled by hankel2 directly
            terms = jpow * an * special.hankel2(n, self.k0 * r)
            out[~inside] = self.amplitude * ref * np.sum(terms * ph[~inside], axis=1)
            out[~inside] += self.incident(pts[~inside])
        if np.any(inside):
            r = rho[inside][:, None]
            terms = jpow * cn * special.jv(n, self.k1 * r)
            out[inside] = self.amplitude * ref * np.sum(terms * ph[inside], axis=1)
        return out

    def scattered(self, points) -> np.ndarray:
        """Scattered field outside the cylinder (total minus incident)."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return self.fields(pts) - self.incident(pts)

    def incident(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        d = np.array([np.cos(self.phi_inc), np.sin(self.phi_inc)])
        return self.amplitude * np.exp(-1j * self.k0 * (pts @ d))

    def scattering_width(self, angles_deg) -> np.ndarray:
        """Linear 2D scattering width ``(4/k0) |sum_n a_n e^{jn(phi-phi_i)}|^2``."""
        phi = np.deg2rad(np.asarray(angles_deg, dtype=float))
        n, an, _ = self._orders()
        s = np.exp(1j * np.outer(phi - self.phi_inc, n)) @ an
        return 4.0 / self.k0.real * np.abs(s) ** 2 * abs(self.amplitude) ** 2

    def boundary_data(self, phi):
        """Field and ``(1/(j w mu)) dE/drho`` on the interface from both sides.

        Returns
        -------
        E, Ht_inside, Ht_outside : ndarray of complex
            ``Ht_inside`` uses the interior medium; ``Ht_outside`` the
            background SAO applied to the same boundary field, i.e. the
            normal derivative the field would have if the interior were
            background medium.
        """
        phi = np.asarray(phi, dtype=float)
        n, an, cn = self._orders()
        a = self.radius
        jpow = (1j) ** (-n)
        ph = np.exp(1j * np.outer(phi - self.phi_inc, n))
        x1 = self.k1 * a
        x0 = self.k0 * a
        e_n = jpow * cn * special.jv(n, x1)
        E = ph @ e_n
        jwmu1 = 1j * self.omega * MU0 * self.inner.mu_r
        jwmu0 = 1j * self.omega * MU0 * self.background.mu_r
        Ht_in = ph @ (jpow * cn * self.k1 * special.jvp(n, x1)) / jwmu1
        Ht_bg = ph @ (e_n * self.k0 * special.jvp(n, x0) / special.jv(n, x0)) / jwmu0
        amp = self.amplitude * np.exp(-1j * self.k0 * (np.cos(self.phi_inc) * self.center[0]
                                                       + np.sin(self.phi_inc) * self.center[1]))
        return amp * E, amp * Ht_in, amp * Ht_bg


def mie_fields(sol: MieSolution, points) -> np.ndarray:
    """Total field of the cylinder problem at ``points``."""
    return sol.fields(points)


def mie_rcs(sol: MieSolution, angles_deg):
    """Scattering width curve in dB (``10 log10`` of metres)."""
    from .post import RcsCurve

    lin = sol.scattering_width(angles_deg)
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(lin)
    return RcsCurve(np.asarray(angles_deg, dtype=float), db, sol.frequency, linear=lin)


def cylinder_mode_admittance(k, radius, jwmu, n=0) -> complex:
    """Interior admittance ``k J_n'(ka) / (J_n(ka) jwmu)`` of azimuthal mode ``n``."""
    x = complex(k) * radius
    return complex(k * special.jvp(n, x) / special.jv(n, x) / jwmu)


# ---------------------------------------------------------------------------
# Bessel power series (check on the library Bessel functions)
# ---------------------------------------------------------------------------

def bessel_series(order: int, z: float, terms: int = 80):
    """``(J_n(z), Y_n(z))`` for n = 0, 1 by the ascending series.

    Accurate to about 1e-14 relative for ``0 < z <= 8``.
    """
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    eg = 0.57721566490153286060651209
    q = -(z * z) / 4.0
    half = z / 2.0
    J = 0.0
    term = half ** order / math.factorial(order)
    harm = [0.0]
    for m in range(1, terms + order + 2):
        harm.append(harm[-1] + 1.0 / m)
    S = 0.0
    t = term
    for m in range(terms):
        J += t
        if order == 0:
            S += t * harm[m]
        else:
            S += t * (harm[m] + harm[m + 1])
        t *= q / ((m + 1) * (m + 1 + order))
    if order == 0:
        Y = (2 / math.pi) * ((math.log(half) + eg) * J - S)
    else:
        Y = (2 / math.pi) * (math.log(half) + eg) * J - 1.0 / (math.pi * half) - S / math.pi
    return J, Y
