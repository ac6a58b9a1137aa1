import numpy as np
import pytest
from scipy import sparse

from hybridem.mesh import MU0, Material, MeshError, apply_equivalence
from hybridem.meshgen import Cylinder, generate_annulus_scene, generate_disk_mesh
from hybridem.pde import (
    PlaneWave,
    abc_contributions,
    assemble_and_solve,
    assemble_K,
    build_contour_operators,
    build_expansion_A,
    discrete_incident,
    element_B,
    element_b,
    element_K,
    element_matrices,
    solve_fem_baseline,
)

from conftest import W300

K0 = W300 / 299792458.0

# 7-point degree-5 triangle rule (barycentric, weight / area), independent of the module copy
_A1, _B1 = 0.797426985353087, 0.101286507323456
_A2, _B2 = 0.059715871789770, 0.470142064105115
BARY = np.array([[1 / 3] * 3, [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
                 [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2]])
WTS = np.array([0.225] + [0.125939180544827] * 3 + [0.132394152788506] * 3)


def _cross(a, b):
    return a[0] * b[1] - a[1] * b[0]


def _k_by_quadrature(xy, eps, mu_r, k0):
    v = np.asarray(xy, float)
    area = 0.5 * _cross(v[1] - v[0], v[2] - v[0])
    # gradients of barycentric coordinates
    G = np.linalg.inv(np.vstack([np.ones(3), v.T]))[:, 1:]
    stiff = area * G @ G.T
    mass = np.einsum("q,qi,qj->ij", WTS, BARY, BARY) * area
    return -stiff / mu_r + k0 ** 2 * eps * mass


class TestElementK:
    def test_unit_right_triangle(self):
        Ke = element_K([[0, 0], [1, 0], [0, 1]], Material(), 0.0)
        assert np.isclose(Ke[0, 0], -1.0)
        assert np.allclose(Ke.sum(axis=1), 0)

    def test_vs_quadrature(self, rng):
        for _ in range(10):
            xy = rng.uniform(-1, 1, size=(3, 2))
            if _cross(xy[1] - xy[0], xy[2] - xy[0]) < 0:
                xy = xy[::-1]
            mat = Material(rng.uniform(1, 5), rng.uniform(1, 3))
            Ke = element_K(xy, mat, K0)
            ref = _k_by_quadrature(xy, mat.eps_r, mat.mu_r, K0)
            assert np.allclose(Ke, ref, rtol=1e-12, atol=1e-12 * np.abs(ref).max())
            assert np.allclose(Ke, Ke.T)

    def test_lossy(self):
        mat = Material(2.0, 1.0, 0.5)
        Ke = element_K([[0, 0], [1, 0], [0, 1]], mat, K0, omega=W300)
        ref = _k_by_quadrature([[0, 0], [1, 0], [0, 1]], mat.complex_eps_r(W300), 1.0, K0)
        assert np.allclose(Ke, ref, rtol=1e-12)
        assert Ke.imag.max() < 0 or Ke.imag.min() < 0

    def test_degenerate(self):
        with pytest.raises(MeshError):
            element_K([[0, 0], [1, 0], [2, 0]], Material(), K0)

    def test_mass_blend(self):
        xy = np.array([[[0, 0], [1, 0], [0, 1]]], float)
        one = np.ones(1)
        exact = element_matrices(xy, one, one, 1.0)[0]
        lumped = element_matrices(xy, one, one, 1.0, mass_blend=1.0)[0]
        half = element_matrices(xy, one, one, 1.0, mass_blend=0.5)[0]
        assert np.allclose(half, 0.5 * (exact + lumped))
        # every blend integrates constants exactly
        assert np.isclose(lumped.sum(), exact.sum())
        with pytest.raises(ValueError):
            element_matrices(xy, one, one, 1.0, mass_blend=1.5)


class TestElementBb:
    def test_B_length_three(self):
        B = element_B([0, 0], [3, 0], W300)
        jwmu = 1j * W300 * MU0
        assert np.isclose(B[0, 0], jwmu) and np.isclose(B[0, 1], jwmu / 2)
        assert np.allclose(B, B.T)
        assert np.isclose(B.sum(), jwmu * 3)

    def test_B_zero_length(self):
        with pytest.raises(MeshError):
            element_B([1, 1], [1, 1], W300)

    def test_b_zero_and_constant(self):
        tri = [[0, 0], [2, 0], [0, 1]]
        assert np.all(element_b(tri, 0.0, W300) == 0)
        b = element_b(tri, 3.0, W300)
        assert np.allclose(b, 1j * W300 * MU0 * 3.0 * 1.0 / 3)

    def test_b_linear(self):
        tri = np.array([[0, 0], [2, 0], [0, 1]], float)
        J = lambda x, y: 1 + 2 * x - y  # noqa: E731
        b = element_b(tri, J, W300)
        # exact: int N_i J = area/12 (2 J_i + sum_{j != i} J_j) for linear J
        Jv = J(tri[:, 0], tri[:, 1])
        ref = 1j * W300 * MU0 * 1.0 / 12 * (Jv + Jv.sum())
        assert np.allclose(b, ref, rtol=1e-12)


class TestGlobal:
    def test_K_symmetric_and_null(self, small_scene):
        K = assemble_K(small_scene, W300)
        assert abs(K - K.T).max() == 0
        K_static = assemble_K(small_scene, 1e-30)
        assert np.abs(K_static @ np.ones(small_scene.n_nodes)).max() < 1e-10

    def test_abc_curvature_and_symmetry(self):
        mesh = generate_disk_mesh(6.0, target_h=0.5)
        Gamma, q = abc_contributions(mesh, None, W300)
        assert not np.any(q)
        assert abs(Gamma - Gamma.T).max() == 0
        kappa_ref = abc_contributions(mesh, None, W300, kappa=1 / 6)[0]
        assert abs(Gamma - kappa_ref).max() < 1e-12 * abs(kappa_ref).max()

    def test_free_space_propagation(self):
        mesh = generate_disk_mesh(1.5, target_h=0.02)
        inc = PlaneWave(1.0, 30.0)
        s = assemble_and_solve(mesh, [], inc, W300)
        ref = inc.field(mesh.nodes, K0)
        assert np.max(np.abs(s.E - ref)) < 0.03
        assert s.residual() < 1e-10

    def test_zero_rhs(self, small_scene):
        s = assemble_and_solve(small_scene, [], None, W300)
        assert not np.any(s.E)

    def test_linearity(self, small_scene):
        a = assemble_and_solve(small_scene, [], PlaneWave(1.0), W300).E
        b = assemble_and_solve(small_scene, [], PlaneWave(2.0 - 1.0j), W300).E
        assert np.allclose(b, (2.0 - 1.0j) * a, rtol=1e-10, atol=1e-12)

    def test_A_empty_and_sparsity(self, small_scene):
        assert build_expansion_A(small_scene, []).nnz == 0
        eq = apply_equivalence(small_scene, [0])
        sets = build_contour_operators(eq, W300)
        A = build_expansion_A(eq, sets)
        ids = eq.contours[0].node_ids
        rows, cols = A.nonzero()
        assert set(rows) <= set(ids.tolist()) and set(cols) <= set(ids.tolist())
        assert A.nnz == ids.size ** 2

    def test_A_node_mismatch(self, small_scene):
        eq = apply_equivalence(small_scene, [0])
        s = build_contour_operators(eq, W300)[0]
        shifted = type(s)(**{**s.__dict__, "node_ids": np.roll(s.node_ids, 1)})
        with pytest.raises(MeshError):
            build_expansion_A(eq, [shifted])

    def test_no_contrast_matches_fem(self):
        mesh = generate_annulus_scene(Cylinder(0.3, Material()), 1.2, 0.04, far_h=0.04)
        inc = PlaneWave()
        fem = solve_fem_baseline(mesh, inc, W300)
        hyb = assemble_and_solve(apply_equivalence(mesh, [0]), None, inc, W300)
        assert np.max(np.abs(hyb.E - fem.E)) < 1e-8

    def test_hybrid_matches_fem_outside(self, small_scene):
        inc = PlaneWave()
        fem = solve_fem_baseline(small_scene, inc, W300)
        eq = apply_equivalence(small_scene, [0])
        hyb = assemble_and_solve(eq, None, inc, W300)
        outside = np.hypot(*small_scene.nodes.T) >= 0.3 - 1e-9
        err = np.abs(hyb.E - fem.E)[outside] / np.abs(fem.E[outside]).max()
        assert err.max() < 0.02

    def test_baseline_rejects_equivalent_mesh(self, small_scene):
        with pytest.raises(MeshError):
            solve_fem_baseline(apply_equivalence(small_scene, [0]), PlaneWave(), W300)

    def test_discrete_incident(self, small_scene):
        s = assemble_and_solve(small_scene, [], PlaneWave(), W300)
        inc = discrete_incident(s)
        assert inc is discrete_incident(s)
        free = small_scene.with_materials(tri_material=np.zeros(small_scene.n_triangles, int))
        sf = assemble_and_solve(free, [], PlaneWave(), W300)
        assert np.allclose(discrete_incident(sf), sf.E, rtol=0, atol=1e-12)

    def test_dump_matrix(self, small_scene, tmp_path):
        s = assemble_and_solve(small_scene, [], PlaneWave(), W300, solve=False)
        p = tmp_path / "m.txt"
        s.dump_matrix(p)
        d = np.loadtxt(p)
        M = sparse.coo_matrix((d[:, 2] + 1j * d[:, 3], (d[:, 0].astype(int), d[:, 1].astype(int))),
                              shape=s.matrix.shape)
        assert abs(M - s.matrix).max() == 0
