import numpy as np
import pytest
from scipy.integrate import quad

from hybridem.mesh import Material
from hybridem.oracle import MieSolution, adaptive_panel_integral, cylinder_mode_admittance
from hybridem.sie import (
    BoundaryField,
    NearSingularWarning,
    SingularOperatorError,
    assemble_L,
    assemble_P,
    assemble_PU,
    assemble_U,
    build_dsao,
    build_sao,
    clear_cache,
    recover_interior_fields,
)
from hybridem.specfun import SegmentGeometry

from conftest import F300, W300, circle_xy

VAC = Material()
DIEL = Material(2.3)


class TestL:
    def test_uniform_entries(self):
        xy = np.array([[0, 0], [1, 0], [2, 0], [2, 1], [1, 1], [0, 1]], dtype=float)
        L = assemble_L(xy)
        assert np.allclose(np.diag(L), 2 / 3)
        assert np.isclose(L[0, 1], 1 / 6) and np.isclose(L[0, 5], 1 / 6)
        assert L[0, 2] == 0 and L[0, 3] == 0

    def test_spd_symmetric(self, rng):
        for _ in range(5):
            n = rng.integers(3, 30)
            xy = circle_xy(n) * rng.uniform(0.5, 2, size=(n, 1))
            L = assemble_L(xy)
            assert np.array_equal(L, L.T)
            assert np.linalg.eigvalsh(L).min() > 0

    def test_row_sums(self):
        xy = circle_xy(12, 2.0)
        L = assemble_L(xy)
        ln = np.hypot(*(np.roll(xy, -1, 0) - xy).T)
        assert np.allclose(L.sum(1), 0.5 * (np.roll(ln, 1) + ln))

    def test_degenerate(self):
        with pytest.raises(ValueError):
            assemble_L(np.array([[0, 0], [0, 0], [1, 1]], dtype=float))

    def test_too_few_nodes(self):
        with pytest.raises(ValueError):
            assemble_L(np.array([[0, 0], [1, 0]], dtype=float))


def _u_entry_oracle(xy, k, m, n):
    """Brute-force ``int int f_m dG/dn' f_n`` with adaptive quadrature in both variables."""
    N = len(xy)
    total = 0j
    for s, rising_m in (((m - 1) % N, True), (m, False)):
        a, b = xy[s], xy[(s + 1) % N]
        ls = np.hypot(*(b - a))

        def inner(x, part):
            r = a + x * (b - a)
            acc = 0j
            for t, name in (((n - 1) % N, "dG_rise"), (n, "dG_fall")):
                if t == s:
                    continue  # dG/dn' vanishes on the observation's own flat panel
                g = SegmentGeometry.from_points(r, xy[t], xy[(t + 1) % N])
                acc += adaptive_panel_integral(name, g, k, rtol=1e-9)
            fm = x if rising_m else 1 - x
            return (acc.real if part == 0 else acc.imag) * fm * ls

        re = quad(inner, 0.0, 1.0, args=(0,), epsabs=0, epsrel=1e-10, limit=200)[0]
        im = quad(inner, 0.0, 1.0, args=(1,), epsabs=0, epsrel=1e-10, limit=200)[0]
        total += re + 1j * im
    return total


class TestPU:
    def test_P_complex_symmetric(self):
        P = assemble_P(circle_xy(48, 0.5), DIEL, W300)
        assert np.linalg.norm(P - P.T) <= 1e-6 * np.linalg.norm(P)

    def test_U_rotational_symmetry(self):
        U = assemble_U(circle_xy(24), DIEL, W300)
        assert np.allclose(U, np.roll(np.roll(U, 1, 0), 1, 1), rtol=1e-9, atol=1e-12)

    @pytest.mark.parametrize("n", [1, 2, 5])
    def test_U_entry_vs_quadrature(self, n):
        xy = circle_xy(16, 0.5)
        k = DIEL.wavenumber(W300)
        U = assemble_U(xy, DIEL, W300)
        ref = _u_entry_oracle(xy, k, 0, n)
        assert abs(U[0, n] - ref) <= 1e-4 * abs(ref)

    def test_P_self_convergence(self):
        # action on cos(phi) sampled at phi = 0, normalised by the nodal weight
        vals = []
        for n in (64, 128, 256):
            xy = circle_xy(n, 0.5)
            P = assemble_P(xy, DIEL, W300)
            phi = 2 * np.pi * np.arange(n) / n
            w = assemble_L(xy).sum(1)
            vals.append((P @ np.cos(phi))[0] / w[0])
        rel = [abs(b - a) / abs(b) for a, b in zip(vals, vals[1:])]
        assert rel[-1] < 0.02 and rel[1] < rel[0]

    def test_lossy_finite(self):
        copper = Material(1.0, 1.0, 5.8e7)
        w = 2 * np.pi * 30e6
        s = build_dsao(circle_xy(64, 0.5e-3), copper, VAC, w, use_cache=False)
        assert np.all(np.isfinite(s.Y_s))
        assert max(s.cond) < 1e12


class TestSAO:
    def test_matches_explicit_inverse(self):
        xy = circle_xy(16, 0.5)
        L = assemble_L(xy)
        P, U = assemble_PU(xy, DIEL.wavenumber(W300), DIEL.jwmu(W300))
        Y, cond = build_sao(L, P, U)
        ref = np.linalg.inv(P) @ (0.5 * L + U)
        assert np.linalg.norm(Y - ref) <= 1e-10 * np.linalg.norm(ref)
        assert cond > 1

    def test_singular(self):
        n = 8
        with pytest.raises(SingularOperatorError):
            build_sao(np.eye(n), np.zeros((n, n)), np.zeros((n, n)))

    @pytest.mark.parametrize("mat", [VAC, DIEL])
    def test_mode_zero(self, mat):
        n = 64
        s = build_dsao(circle_xy(n, 0.5), mat, Material(3.0), W300, use_cache=False)
        v = np.ones(n)
        y = v @ s.Y @ v / n
        ref = cylinder_mode_admittance(mat.wavenumber(W300), 0.5, mat.jwmu(W300), 0)
        assert abs(y - ref) / abs(ref) < 0.01


class TestDSAO:
    def test_null(self):
        s = build_dsao(circle_xy(64), DIEL, DIEL, W300, use_cache=False)
        assert np.linalg.norm(s.Y_s) <= 1e-8 * np.linalg.norm(s.Y)

    def test_identity(self):
        s = build_dsao(circle_xy(20, 0.4), DIEL, VAC, W300, use_cache=False)
        assert np.array_equal(s.Y_s, s.Y - s.Y_hat)
        assert s.size == 20 and s.Y.shape == (20, 20)

    def test_linear_in_contrast(self):
        xy = circle_xy(32, 0.4)
        n1 = np.linalg.norm(build_dsao(xy, Material(1.0001), VAC, W300, use_cache=False).Y_s)
        n2 = np.linalg.norm(build_dsao(xy, Material(1.0002), VAC, W300, use_cache=False).Y_s)
        assert abs(n2 / n1 - 2.0) < 0.01

    def test_resolution_convergence(self):
        # 32 segments per dielectric wavelength and above
        norms = [np.linalg.norm(build_dsao(circle_xy(n, 0.5), DIEL, VAC, W300,
                                           use_cache=False).Y_s) for n in (160, 320)]
        assert abs(norms[1] - norms[0]) / norms[1] < 0.02

    def test_cache_translated_copy(self):
        clear_cache()
        xy = circle_xy(24, 0.2)
        a = build_dsao(xy, DIEL, VAC, W300)
        b = build_dsao(xy + np.array([1.0, -2.0]), DIEL, VAC, W300)
        assert not a.cached and b.cached
        assert np.array_equal(a.Y_s, b.Y_s)
        c = build_dsao(xy * 1.01, DIEL, VAC, W300)
        assert not c.cached


class TestRecovery:
    def test_zero_data(self):
        xy = circle_xy(32, 0.5)
        v, flagged = recover_interior_fields(xy, np.zeros(32), DIEL, W300, [[0.1, 0.0]])
        assert v[0] == 0 and not flagged[0]

    def test_plane_wave_identity(self):
        xy = circle_xy(96, 0.5)
        k = VAC.wavenumber(W300)
        e = np.exp(-1j * k * xy[:, 0])
        pts = np.array([[0.0, 0.0], [0.2, 0.1], [-0.3, -0.2]])
        v, _ = recover_interior_fields(xy, BoundaryField(e), VAC, W300, pts)
        ref = np.exp(-1j * k * pts[:, 0])
        assert np.max(np.abs(v - ref)) < 0.02

    def test_mie_center(self):
        sol = MieSolution(0.5, DIEL, VAC, F300)
        xy = circle_xy(96, 0.5)
        e = sol.fields(xy * (1 - 1e-12))
        v, _ = recover_interior_fields(xy, e, DIEL, W300, [[0.0, 0.0]])
        ref = sol.fields([[0.0, 0.0]])[0]
        assert abs(v[0] - ref) / abs(ref) < 0.02

    def test_near_point_flagged(self):
        xy = circle_xy(32, 0.5)
        with pytest.warns(NearSingularWarning):
            _, flagged = recover_interior_fields(xy, np.ones(32), DIEL, W300,
                                                 [[0.499, 0.0], [0.0, 0.0]])
        assert flagged.tolist() == [True, False]

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            recover_interior_fields(circle_xy(8), np.ones(7), DIEL, W300, [[0, 0]])

    def test_boundary_field_kind(self):
        with pytest.raises(ValueError):
            BoundaryField(np.ones(3), kind="B")
