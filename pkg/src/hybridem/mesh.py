"""Triangular meshes with tagged boundary contours.

A :class:`Mesh` holds node coordinates, counter-clockwise triangles with a
material index each, a material table and a list of closed
:class:`Contour` polylines. Contours are stored counter-clockwise so that
the right-hand normal of every segment points outward.

Contour kinds
-------------
``object``
    Boundary of a material region that may be replaced by an equivalent
    surface current.
``sie``
    An ``object`` contour after :func:`apply_equivalence`; the interior now
    carries the background material.
``truncation``
    Outer boundary of the computational domain.

Text format
-----------
::

    # comment
    nodes N
    x y                 (N lines)
    materials M
    eps_r mu_r sigma    (M lines)
    triangles T
    n1 n2 n3 mat        (T lines, 0-based)
    contours C
    contour <kind> <K>
    id id id ...        (K ids, any line breaks)

Material 0 is the background medium.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import constants

log = logging.getLogger(__name__)

MU0 = constants.mu_0
EPS0 = constants.epsilon_0
C0 = constants.c

CONTOUR_KINDS = ("object", "sie", "truncation")


class MeshError(ValueError):
    """Invalid mesh data."""


class MeshFormatError(MeshError):
    """Syntax error in a mesh file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Material:
    """Linear isotropic medium.

    Parameters
    ----------
    eps_r : float
        Relative permittivity, > 0.
    mu_r : float
        Relative permeability, > 0.
    sigma : float
        Conductivity in S/m, >= 0.
    """

    eps_r: float = 1.0
    mu_r: float = 1.0
    sigma: float = 0.0

    def __post_init__(self):
        for name in ("eps_r", "mu_r", "sigma"):
            if not np.isfinite(getattr(self, name)):
                raise MeshError(f"material {name} must be finite")
        if self.eps_r <= 0 or self.mu_r <= 0 or self.sigma < 0:
            raise MeshError(
                f"invalid material eps_r={self.eps_r}, mu_r={self.mu_r}, sigma={self.sigma}"
            )

    def complex_eps_r(self, omega: float) -> complex:
        """``eps_r - j sigma / (omega eps0)``."""
        return complex(self.eps_r, -self.sigma / (omega * EPS0))

    def wavenumber(self, omega: float) -> complex:
        """Complex wavenumber with ``Im(k) <= 0``."""
        # principal root: Re(k) > 0 and Im(k) <= 0 since Im(eps_c) <= 0
        return complex((omega / C0) * np.sqrt(complex(self.mu_r) * self.complex_eps_r(omega)))

    def jwmu(self, omega: float) -> complex:
        """``j omega mu0 mu_r``."""
        return 1j * omega * MU0 * self.mu_r


@dataclass(frozen=True)
class Contour:
    """Closed polyline through mesh nodes.

    Attributes
    ----------
    node_ids : ndarray of int
        Nodes in counter-clockwise order; the closing segment from the last
        node back to the first is implied.
    kind : str
        One of ``object``, ``sie``, ``truncation``.
    inner_material_id : int or None
        Material originally enclosed, recorded by :func:`apply_equivalence`.
    outer_material_id : int or None
        Surrounding material that replaced the interior.
    normal_outward : bool
        Right-hand segment normals point out of the enclosed region.
    """

    node_ids: np.ndarray
    kind: str = "object"
    inner_material_id: int | None = None
    outer_material_id: int | None = None
    normal_outward: bool = True

    def __post_init__(self):
        ids = np.ascontiguousarray(self.node_ids, dtype=np.int64)
        ids.setflags(write=False)
        object.__setattr__(self, "node_ids", ids)
        if self.kind not in CONTOUR_KINDS:
            raise MeshError(f"unknown contour kind {self.kind!r}")

    @property
    def size(self) -> int:
        return int(self.node_ids.size)

    def segments(self) -> np.ndarray:
        """(m, 2) node pairs of the segments, including the closing one."""
        return np.column_stack([self.node_ids, np.roll(self.node_ids, -1)])

    def coords(self, nodes: np.ndarray) -> np.ndarray:
        return nodes[self.node_ids]

    def segment_lengths(self, nodes: np.ndarray) -> np.ndarray:
        p = self.coords(nodes)
        d = np.roll(p, -1, axis=0) - p
        return np.hypot(d[:, 0], d[:, 1])


@dataclass(frozen=True)
class Mesh:
    """Conforming triangular mesh.

    Attributes
    ----------
    nodes : ndarray, shape (N, 2)
    triangles : ndarray of int, shape (T, 3)
        Counter-clockwise node triples.
    tri_material : ndarray of int, shape (T,)
    materials : tuple of Material
    contours : tuple of Contour
    background_material_id : int
    """

    nodes: np.ndarray
    triangles: np.ndarray
    tri_material: np.ndarray
    materials: tuple
    contours: tuple = ()
    background_material_id: int = 0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=float)
        tris = np.ascontiguousarray(self.triangles, dtype=np.int64)
        mats = np.ascontiguousarray(self.tri_material, dtype=np.int64)
        for a in (nodes, tris, mats):
            a.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "tri_material", mats)
        object.__setattr__(self, "materials", tuple(self.materials))
        object.__setattr__(self, "contours", tuple(self.contours))

    @property
    def n_nodes(self) -> int:
        return int(self.nodes.shape[0])

    @property
    def n_triangles(self) -> int:
        return int(self.triangles.shape[0])

    @property
    def background(self) -> Material:
        return self.materials[self.background_material_id]

    def signed_areas(self) -> np.ndarray:
        if "areas" not in self._cache:
            self._cache["areas"] = triangle_signed_areas(self.nodes, self.triangles)
        return self._cache["areas"]

    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    def edge_map(self) -> "EdgeIndex":
        """Lookup from sorted node pair to the triangles sharing that edge."""
        if "edges" not in self._cache:
            self._cache["edges"] = EdgeIndex(self.triangles, self.n_nodes)
        return self._cache["edges"]

    def contour_ids(self, kind: str) -> list:
        return [i for i, c in enumerate(self.contours) if c.kind == kind]

    def truncation(self) -> Contour | None:
        ids = self.contour_ids("truncation")
        return self.contours[ids[0]] if ids else None

    def with_materials(self, tri_material=None, materials=None, contours=None) -> "Mesh":
        return Mesh(
            nodes=self.nodes,
            triangles=self.triangles,
            tri_material=self.tri_material if tri_material is None else tri_material,
            materials=self.materials if materials is None else materials,
            contours=self.contours if contours is None else contours,
            background_material_id=self.background_material_id,
        )

    def validate(self) -> None:
        """Check all structural invariants; raise :class:`MeshError`."""
        validate_mesh(self)


class EdgeIndex:
    """Sorted-key edge table; behaves like a read-only ``dict`` of lists."""

    def __init__(self, tris: np.ndarray, n_nodes: int):
        t = np.asarray(tris, dtype=np.int64)
        a = t[:, [0, 1, 2]].ravel()
        b = t[:, [1, 2, 0]].ravel()
        self._n = max(int(n_nodes), 1)
        keys = np.minimum(a, b) * self._n + np.maximum(a, b)
        owner = np.repeat(np.arange(len(t), dtype=np.int64), 3)
        order = np.argsort(keys, kind="stable")
        self.keys = keys[order]
        self.owner = owner[order]

    def _span(self, key):
        k = int(key[0]) * self._n + int(key[1])
        return np.searchsorted(self.keys, k, "left"), np.searchsorted(self.keys, k, "right")

    def get(self, key, default=None):
        i, j = self._span(key)
        return self.owner[i:j].tolist() if j > i else default

    def __getitem__(self, key):
        out = self.get(key)
        if out is None:
            raise KeyError(key)
        return out

    def __contains__(self, key) -> bool:
        i, j = self._span(key)
        return j > i

    def unique_edges(self):
        """(E, 2) node pairs and the number of triangles sharing each."""
        u, counts = np.unique(self.keys, return_counts=True)
        return np.column_stack([u // self._n, u % self._n]), counts


# ---------------------------------------------------------------------------
# geometry helpers
# ---------------------------------------------------------------------------

def triangle_signed_areas(nodes: np.ndarray, tris: np.ndarray) -> np.ndarray:
    p = nodes[tris]
    return 0.5 * (
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    )


def polygon_area(xy: np.ndarray) -> float:
    """Signed shoelace area of a closed polygon."""
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _winding_block(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    x, y = pts[:, 0][:, None], pts[:, 1][:, None]
    x0, y0 = poly[:, 0][None, :], poly[:, 1][None, :]
    x1, y1 = np.roll(poly[:, 0], -1)[None, :], np.roll(poly[:, 1], -1)[None, :]
    cross = (x1 - x0) * (y - y0) - (x - x0) * (y1 - y0)
    up = (y0 <= y) & (y1 > y) & (cross > 0)
    down = (y0 > y) & (y1 <= y) & (cross < 0)
    return up.sum(axis=1) - down.sum(axis=1)


def points_in_polygon(points: np.ndarray, poly: np.ndarray, block: int = 1 << 21) -> np.ndarray:
    """Winding-number test; points on the boundary may go either way.

    Work is split so that at most about ``block`` point-edge pairs are
    held at once.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    poly = np.asarray(poly, dtype=float)
    step = max(1, block // max(len(poly), 1))
    wn = np.empty(len(pts), dtype=np.int64)
    for s in range(0, len(pts), step):
        wn[s:s + step] = _winding_block(pts[s:s + step], poly)
    return wn != 0


def _segments_intersect(p: np.ndarray, q: np.ndarray) -> bool:
    """True if any two non-adjacent segments of closed polyline ``p`` cross.

    ``q`` is ``roll(p, -1)``. Works in blocks to bound memory.
    """
    m = len(p)
    if m < 4:
        return False
    idx = np.arange(m)
    block = max(1, 2_000_000 // m)
    for s in range(0, m, block):
        a = idx[s:s + block]
        A, B = p[a][:, None, :], q[a][:, None, :]
        C, D = p[None, :, :], q[None, :, :]

        def orient(P, Q, R):
            return (Q[..., 0] - P[..., 0]) * (R[..., 1] - P[..., 1]) - (
                Q[..., 1] - P[..., 1]) * (R[..., 0] - P[..., 0])

        o1, o2 = orient(A, B, C), orient(A, B, D)
        o3, o4 = orient(C, D, A), orient(C, D, B)
        hit = (o1 * o2 < 0) & (o3 * o4 < 0)
        diff = np.abs(a[:, None] - idx[None, :])
        adjacent = (diff <= 1) | (diff == m - 1)
        if np.any(hit & ~adjacent):
            return True
    return False


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def orient_ccw(nodes: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Return a copy of ``tris`` with clockwise triangles reversed."""
    tris = np.array(tris, dtype=np.int64, copy=True)
    area = triangle_signed_areas(nodes, tris)
    cw = area < 0
    if np.any(cw):
        log.debug("reorienting %d clockwise triangles", int(cw.sum()))
        tris[cw] = tris[cw][:, ::-1]
    return tris


def normalize_contour(nodes: np.ndarray, contour: Contour) -> Contour:
    """Drop an explicit closing repeat and make the contour counter-clockwise."""
    ids = np.asarray(contour.node_ids, dtype=np.int64)
    if ids.size > 1 and ids[0] == ids[-1]:
        ids = ids[:-1]
    if ids.size >= 3 and polygon_area(nodes[ids]) < 0:
        ids = ids[::-1].copy()
    return replace(contour, node_ids=ids)


def validate_mesh(mesh: Mesh) -> None:
    nodes, tris = mesh.nodes, mesh.triangles
    n = mesh.n_nodes
    if nodes.ndim != 2 or nodes.shape[1] != 2:
        raise MeshError("nodes must have shape (N, 2)")
    if not np.all(np.isfinite(nodes)):
        bad = int(np.nonzero(~np.all(np.isfinite(nodes), axis=1))[0][0])
        raise MeshError(f"node {bad} has non-finite coordinates")
    if tris.ndim != 2 or tris.shape[1] != 3:
        raise MeshError("triangles must have shape (T, 3)")
    if tris.size and (tris.min() < 0 or tris.max() >= n):
        bad = int(np.nonzero((tris < 0).any(1) | (tris >= n).any(1))[0][0])
        raise MeshError(f"triangle {bad} references a node out of range")
    dup = (tris[:, 0] == tris[:, 1]) | (tris[:, 1] == tris[:, 2]) | (tris[:, 0] == tris[:, 2])
    if np.any(dup):
        raise MeshError(f"triangle {int(np.nonzero(dup)[0][0])} repeats a node")
    area = mesh.signed_areas()
    if np.any(area <= 0):
        raise MeshError(f"triangle {int(np.nonzero(area <= 0)[0][0])} is degenerate or clockwise")
    used = np.zeros(n, dtype=bool)
    used[tris.ravel()] = True
    if not np.all(used):
        raise MeshError(f"node {int(np.nonzero(~used)[0][0])} is an orphan")
    key = np.sort(tris, axis=1)
    _, first = np.unique(key, axis=0, return_index=True)
    if first.size != len(tris):
        dupes = np.setdiff1d(np.arange(len(tris)), first)
        raise MeshError(f"triangle {int(dupes[0])} is a duplicate")
    nm = len(mesh.materials)
    if mesh.tri_material.shape != (len(tris),):
        raise MeshError("tri_material must have one entry per triangle")
    if len(tris) and (mesh.tri_material.min() < 0 or mesh.tri_material.max() >= nm):
        bad = int(np.nonzero((mesh.tri_material < 0) | (mesh.tri_material >= nm))[0][0])
        raise MeshError(f"triangle {bad} has an unknown material id")
    if not 0 <= mesh.background_material_id < nm:
        raise MeshError("background material id out of range")
    emap = mesh.edge_map()
    for ci, c in enumerate(mesh.contours):
        ids = c.node_ids
        if ids.size < 3:
            raise MeshError(f"contour {ci} has fewer than 3 nodes")
        if ids.min() < 0 or ids.max() >= n:
            raise MeshError(f"contour {ci} references a node out of range")
        if np.unique(ids).size != ids.size:
            raise MeshError(f"contour {ci} visits a node twice")
        closing = (int(min(ids[-1], ids[0])), int(max(ids[-1], ids[0])))
        if closing not in emap:
            raise MeshError(f"contour {ci} is not closed: closing segment {closing} is not a mesh edge")
        p = nodes[ids]
        if polygon_area(p) <= 0:
            raise MeshError(f"contour {ci} is not counter-clockwise")
        if _segments_intersect(p, np.roll(p, -1, axis=0)):
            raise MeshError(f"contour {ci} self-intersects")


# ---------------------------------------------------------------------------
# text I/O
# ---------------------------------------------------------------------------

def _tokens(text: str):
    """Yield (line_number, tokens) for non-empty lines, comments stripped."""
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield no, line.split()


def parse_mesh(text: str) -> Mesh:
    """Parse the text format and return a validated :class:`Mesh`."""
    lines = list(_tokens(text))
    pos = 0

    def header(name):
        nonlocal pos
        if pos >= len(lines):
            raise MeshFormatError(f"expected '{name} <count>', got end of file")
        no, tok = lines[pos]
        if len(tok) != 2 or tok[0] != name:
            raise MeshFormatError(f"expected '{name} <count>'", no)
        try:
            count = int(tok[1])
        except ValueError:
            raise MeshFormatError(f"bad count {tok[1]!r}", no) from None
        if count < 0:
            raise MeshFormatError("negative count", no)
        pos += 1
        return count

    def rows(count, width, conv, what):
        nonlocal pos
        out = []
        for _ in range(count):
            if pos >= len(lines):
                raise MeshFormatError(f"unexpected end of file in {what}")
            no, tok = lines[pos]
            if len(tok) != width:
                raise MeshFormatError(f"{what} line needs {width} fields", no)
            try:
                out.append([conv(t) for t in tok])
            except ValueError:
                raise MeshFormatError(f"cannot parse {what} line", no) from None
            pos += 1
        return out

    n = header("nodes")
    nodes = np.array(rows(n, 2, float, "node"), dtype=float).reshape(-1, 2)
    m = header("materials")
    mats = []
    for i, (er, mr, sg) in enumerate(rows(m, 3, float, "material")):
        try:
            mats.append(Material(er, mr, sg))
        except MeshError as exc:
            raise MeshError(f"material {i}: {exc}") from None
    t = header("triangles")
    trows = np.array(rows(t, 4, int, "triangle"), dtype=np.int64).reshape(-1, 4)
    contours = []
    if pos < len(lines):
        c = header("contours")
        for ci in range(c):
            if pos >= len(lines):
                raise MeshFormatError(f"missing contour {ci}")
            no, tok = lines[pos]
            if len(tok) != 3 or tok[0] != "contour":
                raise MeshFormatError("expected 'contour <kind> <K>'", no)
            kind = tok[1]
            if kind not in CONTOUR_KINDS:
                raise MeshFormatError(f"unknown contour kind {kind!r}", no)
            try:
                k = int(tok[2])
            except ValueError:
                raise MeshFormatError("bad contour size", no) from None
            pos += 1
            ids: list = []
            while len(ids) < k:
                if pos >= len(lines):
                    raise MeshFormatError(f"contour {ci} truncated")
                no, tok = lines[pos]
                try:
                    ids.extend(int(v) for v in tok)
                except ValueError:
                    raise MeshFormatError("bad node id in contour", no) from None
                pos += 1
            if len(ids) != k:
                raise MeshFormatError(f"contour {ci} has {len(ids)} ids, expected {k}", no)
            contours.append(Contour(np.array(ids, dtype=np.int64), kind=kind))
    if pos != len(lines):
        raise MeshFormatError("trailing content", lines[pos][0])
    tris = trows[:, :3]
    if tris.size and (tris.min() < 0 or tris.max() >= len(nodes)):
        bad = int(np.nonzero((tris < 0).any(1) | (tris >= len(nodes)).any(1))[0][0])
        raise MeshError(f"triangle {bad} references a node out of range")
    for ci, c in enumerate(contours):
        if c.size and (c.node_ids.min() < 0 or c.node_ids.max() >= len(nodes)):
            raise MeshError(f"contour {ci} references a node out of range")
    tris = orient_ccw(nodes, tris)
    contours = [normalize_contour(nodes, c) for c in contours]
    mesh = Mesh(nodes, tris, trows[:, 3], tuple(mats), tuple(contours))
    mesh.validate()
    return mesh


def load_mesh(path) -> Mesh:
    """Read a mesh file; clockwise triangles are reoriented silently."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_mesh(text)


def format_mesh(mesh: Mesh) -> str:
    out = [f"nodes {mesh.n_nodes}"]
    out.extend(f"{x!r} {y!r}" for x, y in mesh.nodes.tolist())
    out.append(f"materials {len(mesh.materials)}")
    out.extend(f"{m.eps_r!r} {m.mu_r!r} {m.sigma!r}" for m in mesh.materials)
    out.append(f"triangles {mesh.n_triangles}")
    out.extend(
        f"{a} {b} {c} {m}"
        for (a, b, c), m in zip(mesh.triangles.tolist(), mesh.tri_material.tolist())
    )
    out.append(f"contours {len(mesh.contours)}")
    for c in mesh.contours:
        out.append(f"contour {c.kind} {c.size}")
        ids = c.node_ids.tolist()
        for s in range(0, len(ids), 16):
            out.append(" ".join(str(v) for v in ids[s:s + 16]))
    return "\n".join(out) + "\n"


def save_mesh(mesh: Mesh, path) -> None:
    """Write ``mesh`` in the text format (shortest round-trip float repr)."""
    Path(path).write_text(format_mesh(mesh), encoding="utf-8")


# ---------------------------------------------------------------------------
# equivalence and conformity
# ---------------------------------------------------------------------------

def triangles_inside(mesh: Mesh, contour: Contour) -> np.ndarray:
    """Boolean mask of triangles whose centroid lies inside ``contour``."""
    poly = contour.coords(mesh.nodes)
    cen = mesh.centroids()
    lo, hi = poly.min(axis=0), poly.max(axis=0)
    cand = np.all((cen >= lo) & (cen <= hi), axis=1)
    mask = np.zeros(mesh.n_triangles, dtype=bool)
    idx = np.nonzero(cand)[0]
    if idx.size:
        mask[idx] = points_in_polygon(cen[idx], poly)
    return mask


def nodes_strictly_inside(mesh: Mesh, contour: Contour) -> np.ndarray:
    """Boolean mask of nodes inside ``contour`` and not on it."""
    poly = contour.coords(mesh.nodes)
    lo, hi = poly.min(axis=0), poly.max(axis=0)
    cand = np.nonzero(np.all((mesh.nodes >= lo) & (mesh.nodes <= hi), axis=1))[0]
    mask = np.zeros(mesh.n_nodes, dtype=bool)
    if cand.size:
        mask[cand] = points_in_polygon(mesh.nodes[cand], poly)
    mask[contour.node_ids] = False
    return mask


def _outer_materials(mesh: Mesh, contour: Contour) -> np.ndarray:
    """Materials of the triangles just outside each segment of ``contour``."""
    emap = mesh.edge_map()
    nodes, tris = mesh.nodes, mesh.triangles
    out = []
    for a, b in contour.segments().tolist():
        for t in emap.get((min(a, b), max(a, b)), ()):
            third = [v for v in tris[t] if v != a and v != b][0]
            pa, pb, pc = nodes[a], nodes[b], nodes[third]
            cross = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pb[1] - pa[1]) * (pc[0] - pa[0])
            if cross < 0:
                out.append(mesh.tri_material[t])
    return np.unique(np.asarray(out, dtype=np.int64))


def apply_equivalence(mesh: Mesh, contour_ids) -> Mesh:
    """Replace the media inside the listed contours by the surrounding medium.

    The surrounding medium is the single material of the triangles that
    touch the contour from outside; for an object in free space this is the
    background. Original and replacement material ids are recorded on each
    retagged contour, so the hybrid solver can build its admittance
    operator.

    Raises
    ------
    MeshError
        For a truncation contour, nested listed contours, an interior that
        is not a single homogeneous material or an inhomogeneous
        surrounding.
    """
    contour_ids = list(contour_ids)
    if not contour_ids:
        return mesh
    if len(set(contour_ids)) != len(contour_ids):
        raise MeshError("duplicate contour ids")
    for ci in contour_ids:
        if not 0 <= ci < len(mesh.contours):
            raise MeshError(f"contour {ci} does not exist")
        if mesh.contours[ci].kind == "truncation":
            raise MeshError(f"contour {ci} is the truncation boundary")
    polys = {ci: mesh.contours[ci].coords(mesh.nodes) for ci in contour_ids}
    for a in contour_ids:
        for b in contour_ids:
            if a != b and np.all(points_in_polygon(polys[a], polys[b])):
                raise MeshError(f"contour {a} is nested inside contour {b}")
    tri_mat = mesh.tri_material.copy()
    contours = list(mesh.contours)
    for ci in contour_ids:
        c = mesh.contours[ci]
        inside = triangles_inside(mesh, c)
        if not np.any(inside):
            raise MeshError(f"contour {ci} encloses no triangles")
        if c.kind == "sie":
            inner, outer = c.inner_material_id, c.outer_material_id
        else:
            ids = np.unique(mesh.tri_material[inside])
            if ids.size != 1:
                raise MeshError(f"contour {ci} encloses several materials {ids.tolist()}")
            inner = int(ids[0])
            around = _outer_materials(mesh, c)
            if around.size == 0:
                outer = mesh.background_material_id
            elif around.size == 1:
                outer = int(around[0])
            else:
                raise MeshError(f"contour {ci} is surrounded by several materials {around.tolist()}")
        tri_mat[inside] = outer
        contours[ci] = replace(c, kind="sie", inner_material_id=inner, outer_material_id=outer)
    return mesh.with_materials(tri_material=tri_mat, contours=tuple(contours))


@dataclass(frozen=True)
class ConformityIssue:
    contour: int
    segment: int
    nodes: tuple
    reason: str


def check_conformity(mesh: Mesh) -> list:
    """List contour segments that are not usable triangle edges.

    Interior contour segments need one triangle on each side; truncation
    segments need exactly one triangle, on the inner side.
    """
    emap = mesh.edge_map()
    nodes, tris = mesh.nodes, mesh.triangles
    issues = []
    for ci, c in enumerate(mesh.contours):
        for si, (a, b) in enumerate(c.segments().tolist()):
            key = (min(a, b), max(a, b))
            owners = emap.get(key)
            if not owners:
                issues.append(ConformityIssue(ci, si, (a, b), "not a mesh edge"))
                continue
            sides = []
            for t in owners:
                third = [v for v in tris[t] if v != a and v != b][0]
                pa, pb, pc = nodes[a], nodes[b], nodes[third]
                cross = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pb[1] - pa[1]) * (pc[0] - pa[0])
                sides.append("in" if cross > 0 else "out")
            if c.kind == "truncation":
                if sides != ["in"]:
                    issues.append(ConformityIssue(ci, si, (a, b), f"truncation edge sides {sides}"))
            elif sorted(sides) != ["in", "out"]:
                issues.append(ConformityIssue(ci, si, (a, b), f"edge sides {sides}"))
    return issues


def fictitious_node_mask(mesh: Mesh) -> np.ndarray:
    """Nodes strictly inside any ``sie`` contour."""
    mask = np.zeros(mesh.n_nodes, dtype=bool)
    for c in mesh.contours:
        if c.kind == "sie":
            mask |= nodes_strictly_inside(mesh, c)
    return mask


def contour_curvature(nodes: np.ndarray, contour: Contour) -> np.ndarray:
    """Discrete curvature per segment (circumcircle through neighbours).

    For a regular polygon inscribed in a circle of radius R this returns
    exactly 1/R on every segment.
    """
    p = contour.coords(nodes)
    prev, nxt = np.roll(p, 1, axis=0), np.roll(p, -1, axis=0)

    def circ(a, b, c):
        ab = np.hypot(*(b - a).T)
        bc = np.hypot(*(c - b).T)
        ca = np.hypot(*(a - c).T)
        cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
        return 2.0 * cross / (ab * bc * ca)

    node_kappa = circ(prev, p, nxt)
    return 0.5 * (node_kappa + np.roll(node_kappa, -1))
