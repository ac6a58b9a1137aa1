import numpy as np
import pytest

from hybridem.mesh import Material
from hybridem.oracle import (
    MieSolution,
    OracleError,
    adaptive_integral,
    adaptive_panel_integral,
    mie_fields,
    mie_rcs,
)
from hybridem.specfun import SegmentGeometry

from conftest import F300


def _mie(eps=2.3, radius=1.0, **kw):
    return MieSolution(radius, Material(eps), Material(), F300, **kw)


class TestMie:
    def test_no_contrast_is_incident(self):
        sol = _mie(eps=1.0)
        pts = np.array([[0.3, 0.2], [2.0, -1.0], [-0.1, 0.9]])
        assert np.allclose(mie_fields(sol, pts), sol.incident(pts), atol=1e-10)

    def test_interface_continuity(self):
        sol = _mie()
        phi = np.linspace(0, 2 * np.pi, 17)
        d = np.column_stack([np.cos(phi), np.sin(phi)])
        inside = mie_fields(sol, (1 - 1e-9) * d)
        outside = mie_fields(sol, (1 + 1e-9) * d)
        assert np.allclose(inside, outside, rtol=1e-7, atol=1e-8)

    def test_normal_derivative_continuity(self):
        sol = _mie()
        phi = np.linspace(0, 2 * np.pi, 9)
        d = np.column_stack([np.cos(phi), np.sin(phi)])
        eps = 1e-5
        din = (mie_fields(sol, (1 - eps) * d) - mie_fields(sol, (1 - 3 * eps) * d)) / (2 * eps)
        dout = (mie_fields(sol, (1 + 3 * eps) * d) - mie_fields(sol, (1 + eps) * d)) / (2 * eps)
        assert np.allclose(din, dout, rtol=1e-3, atol=1e-3)

    def test_rayleigh_limit(self):
        pts = np.array([[3.0, 0.0], [0.0, 3.0]])
        s = [np.abs(_mie(radius=r).scattered(pts)).max() for r in (0.1, 0.01, 0.001)]
        assert s[0] > s[1] > s[2] and s[2] < 1e-4

    def test_modal_truncation(self):
        sol = _mie()
        a = np.abs(sol.a_n)
        assert a[-1] < 1e-12 * a.max()

    def test_rcs_symmetry_and_forward(self):
        ang = np.arange(360.0)
        c = mie_rcs(_mie(), ang)
        mirrored = c.linear[(-np.arange(360)) % 360]
        assert np.allclose(c.linear, mirrored, rtol=1e-12)
        assert np.argmax(c.linear) == 0

    def test_rcs_no_contrast(self):
        c = mie_rcs(_mie(eps=1.0), np.array([0.0, 90.0]))
        assert np.all(np.isneginf(c.values))

    def test_mode_cap(self):
        with pytest.raises(OracleError):
            _mie(radius=50.0, max_modes=20)

    def test_deterministic(self):
        pts = np.random.default_rng(0).uniform(-2, 2, size=(50, 2))
        a = mie_fields(_mie(), pts)
        b = mie_fields(_mie(), pts[::-1])[::-1]
        assert np.array_equal(a, b)


class TestAdaptive:
    def test_constant(self):
        g = SegmentGeometry.from_points((0.3, 0.4), (0.0, 0.0), (1.0, 0.0))
        assert adaptive_panel_integral("I4", g) == pytest.approx(g.l2 - g.l1, rel=1e-15)

    def test_log_singularity(self):
        g = SegmentGeometry.from_points((0.5, 0.0), (0.0, 0.0), (1.0, 0.0))
        v = adaptive_panel_integral("G_rise", g, k=2.0)
        assert np.isfinite(v)

    def test_known_integral(self):
        v, _ = adaptive_integral(np.log, [0.0, 1.0], rtol=1e-12)
        assert abs(v + 1.0) < 1e-11

    def test_nonconvergence(self):
        with pytest.raises(OracleError):
            adaptive_integral(lambda s: np.sign(s - 1 / 3) / np.abs(s - 1 / 3), [0.0, 1.0],
                              rtol=1e-14, max_level=6, max_intervals=50)

    def test_unknown_integrand(self):
        g = SegmentGeometry.from_points((0.3, 0.4), (0.0, 0.0), (1.0, 0.0))
        with pytest.raises(ValueError):
            adaptive_panel_integral("I9", g)
