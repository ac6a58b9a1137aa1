import numpy as np
import pytest
from scipy import sparse

from hybridem.mesh import Material, apply_equivalence, polygon_area
from hybridem.meshgen import Cylinder, generate_annulus_scene, generate_disk_mesh
from hybridem.pde import HybridSystem, PlaneWave, assemble_and_solve
from hybridem.post import (
    FieldGrid,
    PostError,
    RcsCurve,
    compute_rcs,
    cost_report,
    current_density,
    rcs_angles,
    relative_error_field,
    relative_error_rcs,
    run_costs,
    sample_near_field,
)

from conftest import W300

K0 = W300 / 299792458.0


def _curve(lin):
    lin = np.asarray(lin, float)
    return RcsCurve(rcs_angles(len(lin)), 10 * np.log10(lin), 3e8)


class TestRelativeErrorRcs:
    def test_identical(self):
        c = _curve([1.0, 2.0, 3.0])
        assert relative_error_rcs(c, c) == 0

    def test_double(self):
        assert np.isclose(relative_error_rcs(_curve([2.0, 4.0, 6.0]), _curve([1.0, 2.0, 3.0])), 1.0)

    def test_scale_invariant(self, rng):
        a, b = rng.uniform(0.1, 2, 36), rng.uniform(0.1, 2, 36)
        r1 = relative_error_rcs(_curve(a), _curve(b))
        r2 = relative_error_rcs(_curve(7 * a), _curve(7 * b))
        assert np.isclose(r1, r2, rtol=1e-12)

    def test_mismatched_grids(self):
        with pytest.raises(PostError):
            relative_error_rcs(_curve([1, 2, 3]), _curve([1, 2, 3, 4]))


class TestCurveAndGrid:
    def test_rcs_curve_checks(self):
        with pytest.raises(PostError):
            RcsCurve([0, 10, 5], [0, 0, 0], 1.0)
        with pytest.raises(PostError):
            RcsCurve([0, 360], [0, 0], 1.0)
        c = RcsCurve([0, 90], [0.0, 10.0], 1.0)
        assert np.allclose(c.linear, [1.0, 10.0])

    def test_grid_checks(self):
        with pytest.raises(PostError):
            FieldGrid.regular((0, 0), 0.0, 2, 2)
        with pytest.raises(PostError):
            FieldGrid((0, 0), 1.0, 2, 2, np.zeros(3), np.zeros(3, bool))
        g = FieldGrid.regular((1.0, -1.0), 0.5, 3, 2)
        p = g.points()
        assert p.shape == (6, 2)
        assert np.allclose(p[:3, 1], -1.0) and np.allclose(p[:3, 0], [1.0, 1.5, 2.0])

    def test_relative_error_field(self):
        vals = np.array([1.0, 2.0, -4.0, 0.5], complex)
        a = FieldGrid((0, 0), 1.0, 2, 2, vals, np.array([False, False, False, True]))
        z = relative_error_field(a, a)
        assert np.all(z.values == 0)
        b = FieldGrid((0, 0), 1.0, 2, 2, vals + 0.4, np.zeros(4, bool))
        e = relative_error_field(b, a)
        assert np.allclose(e.values[:3], 0.1) and e.mask[3]
        with pytest.raises(PostError):
            relative_error_field(a, FieldGrid((0, 0), 2.0, 2, 2, vals, np.zeros(4, bool)))
        with pytest.raises(PostError):
            relative_error_field(FieldGrid((0, 0), 1.0, 2, 2, vals, np.ones(4, bool)), a)


@pytest.fixture(scope="module")
def solved():
    mesh = generate_annulus_scene(Cylinder(0.3, Material(2.3)), 1.2, 0.04, far_h=0.04)
    eq = apply_equivalence(mesh, [0])
    return mesh, eq, assemble_and_solve(eq, None, PlaneWave(), W300)


class TestNearField:
    def test_node_values_exact(self, solved):
        _, eq, s = solved
        node = int(np.nonzero(np.hypot(*eq.nodes.T) > 0.5)[0][0])
        g = FieldGrid(tuple(eq.nodes[node]), 1.0, 1, 1, [0j], [False])
        out = sample_near_field(s, g)
        assert np.isclose(out.values[0], s.E[node], rtol=1e-12)

    def test_mask_fraction(self, solved):
        _, eq, s = solved
        g = FieldGrid.regular((-0.8, -0.8), 0.02, 81, 81)
        out = sample_near_field(s, g)
        frac = out.mask.mean()
        assert abs(frac - np.pi * 0.3 ** 2 / 1.6 ** 2) < 0.01
        assert np.all(out.values[out.mask] == 0)

    def test_recover_unmasks(self, solved):
        mesh, eq, s = solved
        g = FieldGrid.regular((-0.2, -0.2), 0.1, 5, 5)
        out = sample_near_field(s, g, recover=True)
        assert not out.mask.any()

    def test_outside_mesh_masked(self, solved):
        _, _, s = solved
        g = FieldGrid.regular((5.0, 5.0), 0.1, 2, 2)
        assert sample_near_field(s, g).mask.all()


class TestRcs:
    def test_no_scatterer_floor(self):
        mesh = generate_disk_mesh(1.2, target_h=0.04)
        s = assemble_and_solve(mesh, [], PlaneWave(), W300)
        c = compute_rcs(s, radius=0.6, width=0.2)
        assert np.all(c.values < -60)

    def test_annulus_validation(self, solved):
        _, _, s = solved
        with pytest.raises(PostError):
            compute_rcs(s, radius=0.3, width=0.1)
        with pytest.raises(PostError):
            compute_rcs(s, incident_model="exact")

    def test_amplitude_normalised(self, solved):
        _, eq, s = solved
        s2 = assemble_and_solve(eq, None, PlaneWave(3.0j), W300)
        a = compute_rcs(s, np.arange(0, 360, 30.0))
        b = compute_rcs(s2, np.arange(0, 360, 30.0))
        assert np.allclose(a.values, b.values, atol=1e-9)


def _fake_system(mesh, E):
    n = mesh.n_nodes
    return HybridSystem(mesh, W300, None, sparse.identity(n, format="csr"), np.zeros(n), E=E)


class TestCurrentDensity:
    def _conductor_mesh(self):
        return generate_annulus_scene(Cylinder(0.3, Material(1.0, 1.0, 5.0)), 1.2, 0.04)

    def test_uniform_field(self):
        mesh = self._conductor_mesh()
        E = np.full(mesh.n_nodes, 2.0 - 1.5j)
        cd = current_density(_fake_system(mesh, E), 0)
        assert np.allclose(cd.values, 5.0 * 2.5) and np.isclose(cd.peak, 12.5)

    def test_phase_invariant(self, rng):
        mesh = self._conductor_mesh()
        E = rng.normal(size=mesh.n_nodes) + 1j * rng.normal(size=mesh.n_nodes)
        a = current_density(_fake_system(mesh, E), 0).peak
        b = current_density(_fake_system(mesh, E * np.exp(0.7j)), 0).peak
        assert np.isclose(a, b, rtol=1e-14)

    def test_grid(self):
        mesh = self._conductor_mesh()
        g = FieldGrid.regular((-0.35, -0.35), 0.05, 15, 15)
        cd = current_density(_fake_system(mesh, np.ones(mesh.n_nodes, complex)), 0, grid=g)
        inside = ~cd.grid.mask
        assert np.allclose(cd.grid.values[inside], 5.0)
        assert abs(inside.sum() * 0.05 ** 2 - polygon_area(mesh.contours[0].coords(mesh.nodes))) < 0.05

    def test_not_conductor(self, solved):
        mesh, _, _ = solved
        with pytest.raises(PostError):
            current_density(_fake_system(mesh, np.ones(mesh.n_nodes)), 0)


def test_cost_report(solved):
    _, _, s = solved
    c = run_costs(s)
    assert c["unknowns"] == s.n_unknowns
    parts = c["ys_generation_s"] + c["matrix_filling_s"] + c["matrix_solving_s"]
    assert abs(c["total_s"] - parts) <= 0.05 * c["total_s"]
    rep = cost_report({"unknowns": 200.0, "total_s": 2.0}, {"unknowns": 50.0, "total_s": 1.0})
    assert rep.ratio("unknowns") == 0.25 and rep.ratio("total_s") == 0.5
    assert np.isnan(rep.ratio("memory_mb"))
    with pytest.raises(KeyError):
        rep.ratio("bogus")
