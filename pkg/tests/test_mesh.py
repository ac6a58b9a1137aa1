import math

import numpy as np
import pytest

from hybridem.mesh import (
    Contour,
    Material,
    Mesh,
    MeshError,
    MeshFormatError,
    apply_equivalence,
    check_conformity,
    contour_curvature,
    fictitious_node_mask,
    format_mesh,
    load_mesh,
    parse_mesh,
    points_in_polygon,
    polygon_area,
    save_mesh,
    triangles_inside,
)
from hybridem.meshgen import (
    CableGeometry,
    Cylinder,
    Square,
    generate_annulus_scene,
    generate_cable_scene,
    generate_disk_mesh,
)

# unit square split into four triangles around a centre node; the boundary is the truncation
SQUARE = """\
# four-triangle square
nodes 5
0 0
1 0
1 1
0 1
0.5 0.5
materials 1
1 1 0
triangles 4
0 1 4 0
1 2 4 0
2 3 4 0
3 0 4 0
contours 1
contour truncation 4
0 1 2 3
"""


def test_parse_square():
    m = parse_mesh(SQUARE)
    assert m.n_nodes == 5 and m.n_triangles == 4
    assert np.allclose(m.signed_areas(), 0.25)
    assert m.truncation().kind == "truncation"
    assert check_conformity(m) == []


def test_clockwise_triangles_reoriented():
    text = SQUARE.replace("0 1 4 0", "1 0 4 0").replace("2 3 4 0", "3 2 4 0")
    m = parse_mesh(text)
    assert np.all(m.signed_areas() > 0)


def test_clockwise_contour_reversed():
    m = parse_mesh(SQUARE.replace("0 1 2 3", "3 2 1 0"))
    assert polygon_area(m.contours[0].coords(m.nodes)) > 0


def test_roundtrip(tmp_path, small_scene):
    p = tmp_path / "scene.mesh"
    save_mesh(small_scene, p)
    m = load_mesh(p)
    assert np.array_equal(m.nodes, small_scene.nodes)
    assert np.array_equal(m.triangles, small_scene.triangles)
    assert np.array_equal(m.tri_material, small_scene.tri_material)
    assert m.materials == small_scene.materials
    assert [c.kind for c in m.contours] == [c.kind for c in small_scene.contours]
    assert format_mesh(m) == p.read_text()


@pytest.mark.parametrize("edit,exc,msg", [
    (lambda s: s.replace("nodes 5", "nodes five"), MeshFormatError, "bad count"),
    (lambda s: s.replace("0.5 0.5\n", "0.5\n"), MeshFormatError, "node line"),
    (lambda s: s.replace("3 0 4 0", "3 0 9 0"), MeshError, "out of range"),
    (lambda s: s.replace("3 0 4 0", "3 0 4 2"), MeshError, "unknown material"),
    (lambda s: s.replace("3 0 4 0", "3 3 4 0"), MeshError, "repeats"),
    (lambda s: s.replace("1 1 0\n", "-1 1 0\n"), MeshError, "invalid material"),
    (lambda s: s.replace("truncation", "boundary"), MeshFormatError, "unknown contour kind"),
    (lambda s: s.replace("0 1 2 3", "0 1 2"), MeshFormatError, "truncated"),
    (lambda s: s + "junk\n", MeshFormatError, "trailing"),
    (lambda s: s.replace("0 1 2 3", "0 1 2 1"), MeshError, "twice"),
    (lambda s: s.replace("contour truncation 4\n0 1 2 3", "contour object 3\n0 1 2"), MeshError,
     "not closed"),
])
def test_parse_errors(edit, exc, msg):
    with pytest.raises(exc, match=msg):
        parse_mesh(edit(SQUARE))


def test_format_error_line_number():
    with pytest.raises(MeshFormatError) as info:
        parse_mesh(SQUARE.replace("1 1\n", "1 x\n", 1))
    assert info.value.line == 5


def test_orphan_and_duplicate():
    text = SQUARE.replace("nodes 5", "nodes 6").replace("0.5 0.5\n", "0.5 0.5\n2 2\n")
    with pytest.raises(MeshError, match="orphan"):
        parse_mesh(text)
    text = SQUARE.replace("triangles 4", "triangles 5").replace("3 0 4 0\n", "3 0 4 0\n0 4 3 0\n")
    with pytest.raises(MeshError, match="duplicate"):
        parse_mesh(text)


def test_load_missing(tmp_path):
    with pytest.raises(OSError):
        load_mesh(tmp_path / "nope.mesh")


def test_material_wavenumber():
    w = 2 * math.pi * 300e6
    m = Material(4.0, 1.0, 0.01)
    k = m.wavenumber(w)
    assert k.real > 0 and k.imag < 0
    assert abs(Material(4.0).wavenumber(w) - 2 * w / 299792458.0) < 1e-12


class TestPointsInPolygon:
    def test_matches_unchunked(self, rng):
        t = np.linspace(0, 2 * np.pi, 37)[:-1]
        r = 1 + 0.3 * np.cos(5 * t)
        poly = np.column_stack([r * np.cos(t), r * np.sin(t)])
        pts = rng.uniform(-1.5, 1.5, size=(5000, 2))
        a = points_in_polygon(pts, poly)
        b = points_in_polygon(pts, poly, block=len(poly) * 7)
        assert np.array_equal(a, b)
        assert 0.2 < a.mean() < 0.8

    def test_square(self):
        poly = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
        pts = np.array([[0.5, 0.5], [1.5, 0.5], [-0.1, 0.2]])
        assert points_in_polygon(pts, poly).tolist() == [True, False, False]
        # orientation does not matter
        assert points_in_polygon(pts, poly[::-1]).tolist() == [True, False, False]


class TestEquivalence:
    def test_retags_interior(self, small_scene):
        m = apply_equivalence(small_scene, [0])
        c = m.contours[0]
        assert c.kind == "sie" and c.inner_material_id == 1 and c.outer_material_id == 0
        assert np.all(m.tri_material == 0)
        mask = fictitious_node_mask(m)
        r = np.hypot(*m.nodes.T)
        assert np.all(r[mask] < 0.3 - 1e-9)
        assert mask.sum() == np.sum(r < 0.3 - 1e-9)

    def test_idempotent(self, small_scene):
        a = apply_equivalence(small_scene, [0])
        b = apply_equivalence(a, [0])
        assert np.array_equal(a.tri_material, b.tri_material)
        assert a.contours == b.contours

    def test_empty_list(self, small_scene):
        assert apply_equivalence(small_scene, []) is small_scene

    @pytest.mark.parametrize("ids,msg", [([1], "truncation"), ([5], "does not exist"),
                                         ([0, 0], "duplicate")])
    def test_errors(self, small_scene, ids, msg):
        with pytest.raises(MeshError, match=msg):
            apply_equivalence(small_scene, ids)

    def test_inhomogeneous_interior(self, small_scene):
        mats = small_scene.tri_material.copy()
        inside = triangles_inside(small_scene, small_scene.contours[0])
        mats[np.nonzero(inside)[0][0]] = 2
        m = small_scene.with_materials(tri_material=mats,
                                       materials=small_scene.materials + (Material(5.0),))
        with pytest.raises(MeshError, match="several materials"):
            apply_equivalence(m, [0])


def test_conformity_detects_non_edge(small_scene):
    c = small_scene.contours[0]
    # skip every other node: segments become chords that are not mesh edges
    chord = Contour(c.node_ids[::2], kind="object")
    m = Mesh(small_scene.nodes, small_scene.triangles, small_scene.tri_material,
             small_scene.materials, (small_scene.contours[1],))
    issues = check_conformity(m.with_materials(contours=(chord, small_scene.contours[1])))
    assert issues and all(i.reason == "not a mesh edge" for i in issues)


def test_curvature_regular_polygon():
    n = 24
    t = 2 * np.pi * np.arange(n) / n
    nodes = 0.7 * np.column_stack([np.cos(t), np.sin(t)])
    k = contour_curvature(nodes, Contour(np.arange(n)))
    assert np.allclose(k, 1 / 0.7)


class TestGenerators:
    @pytest.mark.parametrize("radius,h", [(1.0, 0.1), (0.5, 0.02), (2.0, 0.3)])
    def test_disk(self, radius, h):
        m = generate_disk_mesh(radius, target_h=h)
        n_b = m.truncation().size
        assert n_b == round(2 * np.pi * radius / h)
        area = m.signed_areas().sum()
        poly = polygon_area(m.truncation().coords(m.nodes))
        assert abs(area - poly) < 1e-12 * poly
        assert check_conformity(m) == []
        assert np.allclose(np.hypot(*m.truncation().coords(m.nodes).T), radius)

    @pytest.mark.parametrize("h", [0.0, 1.5])
    def test_disk_bad_h(self, h):
        with pytest.raises(MeshError):
            generate_disk_mesh(1.0, target_h=h)

    def test_annulus_cylinder(self):
        m = generate_annulus_scene(Cylinder(0.5), 1.5, 0.05)
        assert check_conformity(m) == []
        obj = m.contours[0].coords(m.nodes)
        assert np.allclose(np.hypot(*obj.T), 0.5)
        lens = m.contours[0].segment_lengths(m.nodes)
        assert abs(lens.mean() - 0.05) < 0.005
        inside = m.tri_material == 1
        assert abs(m.signed_areas()[inside].sum() - polygon_area(obj)) < 1e-12

    def test_annulus_square_corners(self):
        m = generate_annulus_scene(Square(1.0), 2.0, 0.05)
        assert check_conformity(m) == []
        obj = m.contours[0].coords(m.nodes)
        for corner in ([0.5, 0.5], [-0.5, 0.5], [-0.5, -0.5], [0.5, -0.5]):
            assert np.min(np.hypot(*(obj - corner).T)) < 1e-12
        assert np.all(np.max(np.abs(obj), axis=1) > 0.5 - 1e-12)
        assert abs(polygon_area(obj) - 1.0) < 1e-12

    def test_annulus_too_big(self):
        with pytest.raises(MeshError, match="does not fit"):
            generate_annulus_scene(Cylinder(1.0), 1.01, 0.05)

    def test_deterministic(self):
        a = generate_annulus_scene(Cylinder(0.3), 1.0, 0.05)
        b = generate_annulus_scene(Cylinder(0.3), 1.0, 0.05)
        assert format_mesh(a) == format_mesh(b)

    def test_cable(self):
        g = CableGeometry()
        m = generate_cable_scene(g, h_inner=60e-6, resolve_conductors=False)
        assert check_conformity(m) == []
        assert [c.kind for c in m.contours] == ["object"] * 3 + ["truncation"]
        shapes = [m.contours[i].coords(m.nodes) - c for i, c in enumerate(g.centers())]
        for s in shapes[1:]:
            assert np.allclose(s, shapes[0], atol=1e-15)
        for i, c in enumerate(g.centers()):
            assert np.allclose(np.hypot(*(m.contours[i].coords(m.nodes) - c).T), g.conductor_radius)
            inside = triangles_inside(m, m.contours[i])
            assert np.all(m.tri_material[inside] == 2)

    def test_cable_bad_geometry(self):
        with pytest.raises(MeshError, match="overlap"):
            generate_cable_scene(CableGeometry(conductor_radius=0.45e-3), h_inner=60e-6)
