"""Deterministic mesh generators for the bundled scenes.

Disks and annular scenes are built from concentric node rings stitched
pairwise by polar angle, so every contour is a ring of the mesh and
conformity holds by construction. Square objects start from a quad-split
grid whose boundary is blended radially into a circle. The cable scene
uses a conforming Delaunay triangulation of a graded point cloud.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.spatial import Delaunay, cKDTree

from .mesh import (
    Contour,
    Material,
    Mesh,
    MeshError,
    orient_ccw,
    points_in_polygon,
    validate_mesh,
)

log = logging.getLogger(__name__)

RING_STEP = math.sqrt(3.0) / 2.0  # radial spacing / tangential spacing
DEFAULT_FAR_H = 0.033
DEFAULT_NEAR_MARGIN = 0.5
DEFAULT_GRADING = 0.15


# ---------------------------------------------------------------------------
# ring machinery
# ---------------------------------------------------------------------------

@dataclass
class _Ring:
    ids: np.ndarray
    angles: np.ndarray  # increasing, spanning less than 2*pi


class _Builder:
    def __init__(self):
        self.nodes: list = []
        self.n = 0
        self.tris: list = []
        self.mats: list = []

    def add_nodes(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        ids = np.arange(self.n, self.n + len(xy), dtype=np.int64)
        self.nodes.append(xy)
        self.n += len(xy)
        return ids

    def add_tris(self, tris, mat: int) -> None:
        tris = np.asarray(tris, dtype=np.int64).reshape(-1, 3)
        self.tris.append(tris)
        self.mats.append(np.full(len(tris), mat, dtype=np.int64))

    def ring(self, xy, angles) -> _Ring:
        return _Ring(self.add_nodes(xy), np.asarray(angles, dtype=float))

    def circle_ring(self, radius, n, offset=0.0, center=(0.0, 0.0)) -> _Ring:
        ang = offset + 2.0 * np.pi * np.arange(n) / n
        xy = np.column_stack([center[0] + radius * np.cos(ang), center[1] + radius * np.sin(ang)])
        return self.ring(xy, ang)

    def finish(self):
        nodes = np.vstack(self.nodes)
        tris = orient_ccw(nodes, np.vstack(self.tris))
        return nodes, tris, np.concatenate(self.mats)


def stitch_rings(inner: _Ring, outer: _Ring) -> np.ndarray:
    """Triangulate the band between two nested star-shaped rings.

    Both rings are walked once around in order of polar angle; each step
    advances whichever ring has the next smaller angle.
    """
    ni, no = inner.ids.size, outer.ids.size
    a_in = inner.angles - inner.angles[0]
    a_out = np.mod(outer.angles - inner.angles[0] + np.pi, 2 * np.pi) - np.pi
    j0 = int(np.argmin(np.abs(a_out)))
    out_ids = np.roll(outer.ids, -j0)
    a_out = np.roll(a_out, -j0)
    a_out = a_out[0] + np.mod(a_out - a_out[0], 2 * np.pi)
    nxt_in = np.append(a_in[1:], 2 * np.pi)
    nxt_out = np.append(a_out[1:], a_out[0] + 2 * np.pi)
    ev = np.concatenate([nxt_in, nxt_out])
    kind = np.concatenate([np.zeros(ni, dtype=np.int64), np.ones(no, dtype=np.int64)])
    order = np.lexsort((kind, ev))
    kind = kind[order]
    i_before = np.cumsum(kind == 0) - (kind == 0)
    j_before = np.cumsum(kind == 1) - (kind == 1)
    ii = inner.ids
    adv_in = kind == 0
    t = np.empty((ni + no, 3), dtype=np.int64)
    t[adv_in, 0] = ii[i_before[adv_in] % ni]
    t[adv_in, 1] = ii[(i_before[adv_in] + 1) % ni]
    t[adv_in, 2] = out_ids[j_before[adv_in] % no]
    adv_out = ~adv_in
    t[adv_out, 0] = ii[i_before[adv_out] % ni]
    t[adv_out, 1] = out_ids[(j_before[adv_out] + 1) % no]
    t[adv_out, 2] = out_ids[j_before[adv_out] % no]
    return t


def fan(center_id: int, ring: _Ring) -> np.ndarray:
    ids = ring.ids
    return np.column_stack([np.full(ids.size, center_id), ids, np.roll(ids, -1)])


def ring_radii(r0: float, r1: float, hfun) -> np.ndarray:
    """Ring radii in (r0, r1], spaced about ``RING_STEP * h(r)`` apart."""
    grid = np.linspace(r0, r1, 4001)
    dens = 1.0 / (RING_STEP * hfun(grid))
    s = cumulative_trapezoid(dens, grid, initial=0.0)
    n = max(1, int(round(s[-1])))
    r = np.interp(s[-1] * np.arange(1, n + 1) / n, s, grid)
    r[-1] = r1
    return r


def ring_count(radius: float, h: float, n_min: int = 6) -> int:
    return max(n_min, int(round(2.0 * np.pi * radius / h)))


def _rings_outward(b: _Builder, start: _Ring, radii, hfun, mat: int, n_last=None, center=(0.0, 0.0)):
    """Add rings at ``radii`` outside ``start``; returns the last ring."""
    prev = start
    for i, r in enumerate(radii):
        n = ring_count(r, float(hfun(np.array([r]))[0]))
        if n_last is not None and i == len(radii) - 1:
            n = n_last
        ring = b.circle_ring(r, n, offset=(np.pi / n) * (i % 2), center=center)
        b.add_tris(stitch_rings(prev, ring), mat)
        prev = ring
    return prev


def _disk_core(b: _Builder, radius: float, h: float, mat: int, n_boundary: int,
               center=(0.0, 0.0)) -> _Ring:
    """Mesh a full disk; returns its boundary ring with ``n_boundary`` nodes."""
    c = b.add_nodes([center])[0]
    radii = ring_radii(0.0, radius, lambda r: np.full_like(r, h))
    first = radii[0]
    n1 = ring_count(first, h) if radii.size > 1 else n_boundary
    ring = b.circle_ring(first, n1, center=center)
    b.add_tris(fan(c, ring), mat)
    if radii.size == 1:
        return ring
    return _rings_outward(b, ring, radii[1:], lambda r: np.full_like(r, h), mat,
                          n_last=n_boundary, center=center)


def graded_h(h_near: float, r_near: float, h_far: float, grading: float = DEFAULT_GRADING):
    """Size function: ``h_near`` up to ``r_near``, growing linearly to ``h_far``."""
    def hfun(r):
        r = np.asarray(r, dtype=float)
        return np.minimum(h_far, h_near + grading * np.maximum(0.0, r - r_near))

    if h_far < h_near:
        return lambda r: np.full_like(np.asarray(r, dtype=float), h_near)
    return hfun


# ---------------------------------------------------------------------------
# public generators
# ---------------------------------------------------------------------------

def generate_disk_mesh(radius: float, center=(0.0, 0.0), target_h: float = 0.1,
                       material: Material | None = None) -> Mesh:
    """Disk of one material with its boundary tagged as the truncation contour.

    Parameters
    ----------
    radius : float
    center : (float, float)
    target_h : float
        Target edge length; the boundary gets ``round(2 pi R / h)`` segments.
    material : Material, optional
        Defaults to vacuum.

    Raises
    ------
    MeshError
        If ``target_h`` is not in ``(0, radius)`` or yields fewer than 8
        boundary segments.
    """
    if not radius > 0:
        raise MeshError("radius must be positive")
    if not 0 < target_h < radius:
        raise MeshError(f"target_h={target_h} must lie in (0, radius={radius})")
    n_b = ring_count(radius, target_h, n_min=1)
    if n_b < 8:
        raise MeshError(f"target_h={target_h} gives only {n_b} boundary segments (need 8)")
    b = _Builder()
    ring = _disk_core(b, radius, target_h, 0, n_b, center=center)
    nodes, tris, mats = b.finish()
    mesh = Mesh(nodes, tris, mats, (material or Material(),),
                (Contour(ring.ids, kind="truncation"),))
    validate_mesh(mesh)
    return mesh


@dataclass(frozen=True)
class Cylinder:
    """Circular object centred at the origin."""

    radius: float
    material: Material = field(default_factory=lambda: Material(2.3))

    @property
    def extent(self) -> float:
        return self.radius


@dataclass(frozen=True)
class Square:
    """Axis-aligned square object centred at the origin."""

    side: float
    material: Material = field(default_factory=lambda: Material(2.3))

    @property
    def extent(self) -> float:
        return self.side / math.sqrt(2.0)


def _square_point(u, half):
    """Point at arc-length fraction ``u`` on the square, starting at the
    lower-right corner and running counter-clockwise."""
    u = np.mod(np.asarray(u, dtype=float), 1.0)
    s = u * 8.0 * half
    side = np.minimum((s // (2 * half)).astype(int), 3)
    t = s - side * 2 * half
    x = np.choose(side, [np.full_like(t, half), half - t, np.full_like(t, -half), -half + t])
    y = np.choose(side, [-half + t, np.full_like(t, half), half - t, np.full_like(t, -half)])
    return x, y


def _square_core(b: _Builder, side: float, h: float, mat: int) -> _Ring:
    """Quad-split grid of the square; returns its boundary ring."""
    n = max(1, int(round(side / h)))
    half = side / 2.0
    g = np.linspace(-half, half, n + 1)
    X, Y = np.meshgrid(g, g, indexing="xy")
    ids = b.add_nodes(np.column_stack([X.ravel(), Y.ravel()])).reshape(n + 1, n + 1)
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    a, bb = ids[i, j], ids[i, j + 1]
    c, d = ids[i + 1, j + 1], ids[i + 1, j]
    # alternate diagonals so the grid has no preferred direction
    flip = ((i + j) % 2).astype(bool)
    t1 = np.where(flip[..., None], np.stack([a, bb, d], -1), np.stack([a, bb, c], -1))
    t2 = np.where(flip[..., None], np.stack([bb, c, d], -1), np.stack([a, c, d], -1))
    b.add_tris(np.concatenate([t1.reshape(-1, 3), t2.reshape(-1, 3)]), mat)
    loop = np.concatenate([
        ids[:n, n],              # right side, bottom to top
        ids[n, n:0:-1],          # top, right to left
        ids[n:0:-1, 0],          # left, top to bottom
        ids[0, :n],              # bottom, left to right
    ])
    xy = np.vstack(b.nodes)[loop]
    ang = np.arctan2(xy[:, 1], xy[:, 0])
    ang = ang[0] + np.mod(ang - ang[0], 2 * np.pi)
    return _Ring(loop, ang)


def _offset_square(half: float, d: float, s) -> np.ndarray:
    """Points at perimeter fractions ``s`` on the square offset outward by
    ``d`` (straight sides joined by quarter circles), counter-clockwise from
    the lower end of the right side."""
    s = np.mod(np.asarray(s, dtype=float), 1.0)
    side, arc = 2.0 * half, 0.5 * np.pi * d
    quarter = side + arc
    pos = s * 4.0 * quarter
    k = np.minimum((pos // quarter).astype(int), 3)
    r = pos - k * quarter
    on_side = r < side
    a = np.where(on_side, 0.0, (r - side) / max(d, 1e-300))
    x = np.where(on_side, half + d, half + d * np.cos(a))
    y = np.where(on_side, -half + r, half + d * np.sin(a))
    rot = k * (np.pi / 2.0)
    c, sn = np.cos(rot), np.sin(rot)
    return np.column_stack([c * x - sn * y, sn * x + c * y])


def _square_layers(b: _Builder, start: _Ring, half: float, radii, hfun, r_blend0: float,
                   r_blend1: float, mat: int, n_last: int) -> _Ring:
    """Rings outside a square: offsets of the square, blended radially into
    circles between ``r_blend0`` and ``r_blend1`` (distances from the centre
    to the middle of a side)."""
    prev = start
    for i, rho in enumerate(radii):
        h = float(hfun(np.array([rho]))[0])
        last = i == len(radii) - 1
        if last:
            ring = b.circle_ring(rho, n_last, offset=(np.pi / n_last) * (i % 2))
        else:
            w = float(np.clip((rho - r_blend0) / (r_blend1 - r_blend0), 0.0, 1.0))
            m = max(4096, 32 * int(2 * np.pi * rho / h))
            dense = _offset_square(half, rho - half, np.arange(m) / m)
            rad = np.hypot(dense[:, 0], dense[:, 1])
            dense *= ((1.0 - w) + w * rho / rad)[:, None]
            closed = np.vstack([dense, dense[:1]])
            cum = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(closed, axis=0).T))])
            n = max(8, int(round(cum[-1] / h)))
            target = (np.arange(n) + 0.5 * (i % 2)) / n * cum[-1]
            sp = np.interp(target, cum, np.arange(m + 1) / m)
            xy = _offset_square(half, rho - half, sp)
            rr = np.hypot(xy[:, 0], xy[:, 1])
            xy *= ((1.0 - w) + w * rho / rr)[:, None]
            ang = np.arctan2(xy[:, 1], xy[:, 0])
            ang = ang[0] + np.mod(ang - ang[0], 2 * np.pi)
            ring = b.ring(xy, ang)
        b.add_tris(stitch_rings(prev, ring), mat)
        prev = ring
    return prev


def generate_annulus_scene(obj, truncation_radius: float, target_h: float,
                           far_h: float = DEFAULT_FAR_H,
                           near_margin: float = DEFAULT_NEAR_MARGIN,
                           grading: float = DEFAULT_GRADING,
                           background: Material | None = None) -> Mesh:
    """Object inside a circular computational domain.

    The mesh has edge length ``target_h`` up to ``near_margin`` beyond the
    object, then grows linearly (slope ``grading``) to ``max(target_h,
    far_h)``. Contour 0 is the object boundary (kind ``object``), contour 1
    the truncation circle. Material 0 is ``background``, material 1 the
    object.

    Parameters
    ----------
    obj : Cylinder or Square
    truncation_radius : float
    target_h : float
    far_h : float
        Edge length floor away from the object. With ``target_h >= far_h``
        the mesh is uniform.
    """
    if not isinstance(obj, (Cylinder, Square)):
        raise MeshError(f"unsupported object {obj!r}")
    if not target_h > 0:
        raise MeshError("target_h must be positive")
    ext = obj.extent
    if not ext > 0:
        raise MeshError("object size must be positive")
    if ext >= truncation_radius - target_h:
        raise MeshError(
            f"object (extent {ext}) does not fit inside the truncation radius {truncation_radius}")
    bg = background or Material()
    h_far = max(target_h, far_h)
    b = _Builder()
    if isinstance(obj, Cylinder):
        hfun = graded_h(target_h, obj.radius + near_margin, h_far, grading)
        n_obj = ring_count(obj.radius, target_h, n_min=8)
        ring = _disk_core(b, obj.radius, target_h, 1, n_obj)
        obj_ring = ring
        radii = ring_radii(obj.radius, truncation_radius, hfun)
        n_trunc = ring_count(truncation_radius, float(hfun(np.array([truncation_radius]))[0]), n_min=8)
        last = _rings_outward(b, ring, radii, hfun, 0, n_last=n_trunc)
    else:
        half = obj.side / 2.0
        obj_ring = _square_core(b, obj.side, target_h, 1)
        r0 = half + near_margin
        r1 = r0 + min(3.0 * near_margin, 0.5 * (truncation_radius - r0))
        hsq = graded_h(target_h, r0, h_far, grading)
        radii = ring_radii(half, truncation_radius, hsq)
        n_trunc = ring_count(truncation_radius, float(hsq(np.array([truncation_radius]))[0]), n_min=8)
        last = _square_layers(b, obj_ring, half, radii, hsq, r0, r1, 0, n_trunc)
    nodes, tris, mats = b.finish()
    mesh = Mesh(
        nodes, tris, mats, (bg, obj.material),
        (Contour(obj_ring.ids, kind="object"), Contour(last.ids, kind="truncation")),
    )
    validate_mesh(mesh)
    log.info("annulus scene: %d nodes, %d triangles", mesh.n_nodes, mesh.n_triangles)
    return mesh


# ---------------------------------------------------------------------------
# cable scene
# ---------------------------------------------------------------------------

COPPER = Material(1.0, 1.0, 5.8e7)
BOUNDARY_RINGS = 3


@dataclass(frozen=True)
class CableGeometry:
    """Three round conductors in a dielectric sheath above a layered block.

    Lengths are in metres. The sheath is centred at the origin, the
    conductor centres sit on a circle of radius ``conductor_offset`` at
    ``conductor_angles`` (degrees), and the layers are stacked downwards
    from ``layer_top`` with permittivities ``layer_eps`` from top to
    bottom.
    """

    conductor_radius: float = 0.25e-3
    conductor_offset: float = 0.5e-3
    conductor_angles: tuple = (90.0, 210.0, 330.0)
    sheath_radius: float = 1.0e-3
    layer_top: float = -1.5e-3
    layer_thickness: float = 1.0e-3
    layer_width: float = 10.0e-3
    layer_eps: tuple = (1.0, 2.0, 2.5, 3.0)
    truncation_radius: float = 10.0e-3
    conductor: Material = COPPER
    sheath: Material = field(default_factory=lambda: Material(2.3))

    def centers(self) -> np.ndarray:
        a = np.deg2rad(np.asarray(self.conductor_angles, dtype=float))
        return self.conductor_offset * np.column_stack([np.cos(a), np.sin(a)])

    def layer_bounds(self) -> np.ndarray:
        """Interface heights from top to bottom (one more than layers)."""
        return self.layer_top - self.layer_thickness * np.arange(len(self.layer_eps) + 1)

    def check(self) -> None:
        rc, c = self.conductor_radius, self.centers()
        if rc <= 0 or self.sheath_radius <= 0 or self.layer_thickness <= 0 or self.layer_width <= 0:
            raise MeshError("cable dimensions must be positive")
        if np.any(np.hypot(*c.T) + rc >= self.sheath_radius):
            raise MeshError("conductors must lie inside the sheath")
        d = np.hypot(*(c[:, None] - c[None]).transpose(2, 0, 1))
        if len(c) > 1 and np.min(d[np.triu_indices(len(c), 1)]) <= 2 * rc:
            raise MeshError("conductors overlap")
        if self.layer_top >= -self.sheath_radius:
            raise MeshError("the layered block must lie below the sheath")
        corner = np.hypot(0.5 * self.layer_width, self.layer_bounds()[-1])
        if max(corner, self.sheath_radius) >= 0.9 * self.truncation_radius:
            raise MeshError("the scene does not fit inside the truncation radius")


class _Polyline:
    """Constraint curve sampled at parameters ``t``; ``point(t)`` maps to xy."""

    def __init__(self, point, t, closed: bool):
        self.point = point
        self.t = list(np.asarray(t, dtype=float))
        self.closed = closed
        self.ids: list = []


def _sample_curve(point, t0: float, t1: float, hfun, closed: bool, n_min: int = 1) -> np.ndarray:
    """Curve parameters spaced about ``h`` apart in arc length."""
    t = np.linspace(t0, t1, 2001)
    xy = point(t)
    ds = np.hypot(*np.diff(xy, axis=0).T)
    hm = 0.5 * (hfun(xy[1:]) + hfun(xy[:-1]))
    s = np.concatenate([[0.0], np.cumsum(ds / hm)])
    n = max(n_min, int(round(s[-1])))
    u = s[-1] * np.arange(n + (0 if closed else 1)) / n
    return np.interp(u, s, t)


def _thin(fixed: np.ndarray, cand: np.ndarray, hc: np.ndarray, alpha: float) -> np.ndarray:
    """Greedy thinning: keep candidates (in order of increasing size) that are
    at least ``alpha * h`` from every kept point."""
    order = np.argsort(hc, kind="stable")
    cand, hc = cand[order], hc[order]
    kept = [fixed]
    edges = np.geomspace(hc.min(), hc.max() * 1.0001, 48) if hc.size else np.array([])
    start = 0
    for hi in edges[1:]:
        stop = int(np.searchsorted(hc, hi, side="right"))
        if stop <= start:
            continue
        p, h = cand[start:stop], hc[start:stop]
        start = stop
        acc = np.vstack(kept)
        dist, _ = cKDTree(acc).query(p)
        ok = dist >= alpha * h
        p, h = p[ok], h[ok]
        if p.size == 0:
            continue
        tree = cKDTree(p)
        pairs = tree.query_pairs(alpha * float(h.max()), output_type="ndarray")
        alive = np.ones(len(p), dtype=bool)
        if pairs.size:
            d = np.hypot(*(p[pairs[:, 0]] - p[pairs[:, 1]]).T)
            pairs = pairs[d < alpha * np.maximum(h[pairs[:, 0]], h[pairs[:, 1]])]
            nbr: dict = {}
            for i, j in pairs:
                nbr.setdefault(int(i), []).append(int(j))
                nbr.setdefault(int(j), []).append(int(i))
            for i in range(len(p)):
                if alive[i] and i in nbr:
                    for j in nbr[i]:
                        if j > i:
                            alive[j] = False
        kept.append(p[alive])
    return np.vstack(kept[1:]) if len(kept) > 1 else np.zeros((0, 2))


def generate_cable_scene(geom: CableGeometry | None = None, h_inner: float = 20e-6,
                         resolve_conductors: bool = True, grading: float = 0.25,
                         h_max: float = 0.5e-3, background: Material | None = None) -> Mesh:
    """Conforming mesh of the cable scene.

    Inside the sheath the edge length is ``h_inner``; each conductor
    boundary gets ``round(2 pi r / h_inner)`` segments starting on its +x
    side, so the conductor contours are translated copies of one another.
    With ``resolve_conductors`` the conductor interiors are meshed at
    ``h_inner`` as well (what a volumetric solver needs); otherwise they are
    filled coarsely, which suffices for a region an equivalent model
    replaces. Outside the sheath the edge length grows with slope
    ``grading`` up to ``h_max``.

    Contours 0..2 are the conductor boundaries (kind ``object``) and the
    last contour is the truncation circle. Materials: 0 background, 1
    sheath, 2 conductor, then one per layer from top to bottom.
    """
    geom = geom or CableGeometry()
    geom.check()
    bg = background or Material()
    rc, rs, R = geom.conductor_radius, geom.sheath_radius, geom.truncation_radius
    centers = geom.centers()
    n_cond = int(round(2.0 * np.pi * rc / h_inner))
    if n_cond < 8:
        raise MeshError(f"h_inner={h_inner} gives only {n_cond} segments per conductor (need 8)")
    if not h_inner < h_max:
        raise MeshError("h_inner must be below h_max")

    def hfun(p):
        p = np.asarray(p, dtype=float).reshape(-1, 2)
        return np.minimum(h_max, h_inner + grading * np.maximum(np.hypot(p[:, 0], p[:, 1]) - rs, 0.0))

    def circle(r, c=(0.0, 0.0)):
        return lambda t: np.column_stack([c[0] + r * np.cos(t), c[1] + r * np.sin(t)])

    def segment(a, b):
        a, b = np.asarray(a, float), np.asarray(b, float)
        return lambda t: a[None] + np.asarray(t, dtype=float)[:, None] * (b - a)[None]

    # constraint curves
    lines = [_Polyline(circle(rc, c), 2.0 * np.pi * np.arange(n_cond) / n_cond, True) for c in centers]
    n_sh = ring_count(rs, h_inner, n_min=16)
    lines.append(_Polyline(circle(rs), 2.0 * np.pi * np.arange(n_sh) / n_sh, True))
    half = 0.5 * geom.layer_width
    ys = geom.layer_bounds()
    for y in ys:  # interfaces, including the top and bottom faces
        f = segment((-half, y), (half, y))
        lines.append(_Polyline(f, _sample_curve(f, 0.0, 1.0, hfun, False), False))
    for x in (-half, half):
        for y0, y1 in zip(ys[:-1], ys[1:]):
            f = segment((x, y0), (x, y1))
            lines.append(_Polyline(f, _sample_curve(f, 0.0, 1.0, hfun, False), False))
    n_tr = ring_count(R, h_max, n_min=16)
    lines.append(_Polyline(circle(R), 2.0 * np.pi * np.arange(n_tr) / n_tr, True))

    pts: list = []
    index: dict = {}

    def node(xy):
        key = (round(float(xy[0]) / 1e-12), round(float(xy[1]) / 1e-12))
        if key not in index:
            index[key] = len(pts)
            pts.append((float(xy[0]), float(xy[1])))
        return index[key]

    for ln in lines:
        ln.ids = [node(p) for p in ln.point(np.asarray(ln.t))]
    if not resolve_conductors:
        # coarse fictitious interiors: rings growing inward with slope 1
        for c in centers:
            depth_h = lambda r: h_inner + (rc - np.asarray(r, dtype=float))  # noqa: E731
            radii = ring_radii(0.0, rc, depth_h)[:-1]
            node(c)
            for i, r in enumerate(radii):
                n = ring_count(r, float(depth_h(r)))
                a = (np.pi / n) * ((len(radii) - i) % 2) + 2 * np.pi * np.arange(n) / n
                for p in circle(r, c)(a):
                    node(p)
    fixed = np.array(pts)

    # candidates: hexagonal lattice in the sheath, rings outside it, coarse lattice beyond
    gx = np.arange(-rs, rs + h_inner, h_inner)
    gy = np.arange(-rs, rs + h_inner, RING_STEP * h_inner)
    X, Y = np.meshgrid(gx, gy)
    X = X + 0.5 * h_inner * (np.arange(len(gy)) % 2)[:, None]
    lat = np.column_stack([X.ravel(), Y.ravel()])
    lat = lat[np.hypot(lat[:, 0], lat[:, 1]) < rs]
    if not resolve_conductors:
        d_c = np.hypot(lat[:, None, 0] - centers[None, :, 0], lat[:, None, 1] - centers[None, :, 1])
        lat = lat[d_c.min(axis=1) > rc]
    # boundary-conforming rings come first so the lattice yields to them
    cand = []
    for k in range(1, BOUNDARY_RINGS + 1):
        for c in centers:
            r = rc + k * RING_STEP * h_inner
            n = ring_count(r, h_inner)
            cand.append(circle(r, c)((np.pi / n) * (k % 2) + 2 * np.pi * np.arange(n) / n))
            if not resolve_conductors:
                continue
            r = rc - k * RING_STEP * h_inner
            if r > h_inner:
                n = ring_count(r, h_inner)
                cand.append(circle(r, c)((np.pi / n) * (k % 2) + 2 * np.pi * np.arange(n) / n))
        r = rs - k * RING_STEP * h_inner
        n = ring_count(r, h_inner)
        cand.append(circle(r)((np.pi / n) * (k % 2) + 2 * np.pi * np.arange(n) / n))
    cand.append(lat)
    r_end = rs + (h_max - h_inner) / grading + h_max
    for i, r in enumerate(ring_radii(rs, min(r_end, R), lambda r: hfun(np.column_stack([r, 0 * r])))):
        n = ring_count(r, float(hfun(np.array([[r, 0.0]]))[0]))
        cand.append(circle(r)((np.pi / n) * (i % 2 == 0) + 2 * np.pi * np.arange(n) / n))
    gx = np.arange(-R, R + h_max, h_max)
    gy = np.arange(-R, R + h_max, RING_STEP * h_max)
    X, Y = np.meshgrid(gx, gy)
    X = X + 0.5 * h_max * (np.arange(len(gy)) % 2)[:, None]
    cand.append(np.column_stack([X.ravel(), Y.ravel()]))
    cand = np.vstack(cand)
    cand = cand[np.hypot(cand[:, 0], cand[:, 1]) < R - 0.5 * h_max]
    free = _thin(fixed, cand, hfun(cand), alpha=0.75)
    xy = np.vstack([fixed, free])
    protected = np.arange(len(xy)) < len(fixed)

    # conforming Delaunay: split missing constraint segments until all exist
    for _ in range(30):
        tri = Delaunay(xy).simplices.astype(np.int64)
        e = np.sort(np.vstack([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1)
        have = set(map(tuple, e.tolist()))
        added = []
        for ln in lines:
            ids, t = ln.ids, ln.t
            m = len(ids) if ln.closed else len(ids) - 1
            new_ids, new_t = [], []
            for i in range(m):
                j = (i + 1) % len(ids)
                new_ids.append(ids[i])
                new_t.append(t[i])
                a, b = ids[i], ids[j]
                if (min(a, b), max(a, b)) not in have:
                    t1 = t[j] if j > 0 else t[0] + 2 * np.pi
                    tm = 0.5 * (t[i] + t1)
                    added.append(ln.point(np.array([tm]))[0])
                    new_ids.append(len(xy) + len(added) - 1)
                    new_t.append(tm)
            if not ln.closed:
                new_ids.append(ids[-1])
                new_t.append(t[-1])
            ln.ids, ln.t = new_ids, new_t
        if not added:
            break
        add = np.array(added)
        # free nodes crowding the inserted points are dropped
        near = ~protected & (cKDTree(add).query(xy)[0] < 0.5 * hfun(xy))
        keep = ~near
        remap = np.concatenate([np.cumsum(keep) - 1, int(keep.sum()) + np.arange(len(add))])
        for ln in lines:
            ln.ids = [int(remap[i]) for i in ln.ids]
        xy = np.vstack([xy[keep], add])
        protected = np.concatenate([protected[keep], np.ones(len(add), dtype=bool)])
    else:
        raise MeshError("constraint recovery did not converge")

    # materials by centroid
    cen = xy[tri].mean(axis=1)
    mats = np.zeros(len(tri), dtype=np.int64)
    mats[points_in_polygon(cen, xy[lines[len(centers)].ids])] = 1
    for ci in range(len(centers)):
        mats[points_in_polygon(cen, xy[lines[ci].ids])] = 2
    for k in range(len(geom.layer_eps)):
        inside = (np.abs(cen[:, 0]) < half) & (cen[:, 1] < ys[k]) & (cen[:, 1] > ys[k + 1])
        mats[inside] = 3 + k
    tri = orient_ccw(xy, tri)
    materials = (bg, geom.sheath, geom.conductor) + tuple(Material(e) for e in geom.layer_eps)
    contours = tuple(Contour(np.array(lines[ci].ids), kind="object") for ci in range(len(centers)))
    contours += (Contour(np.array(lines[-1].ids), kind="truncation"),)
    mesh = Mesh(xy, tri, mats, materials, contours)
    validate_mesh(mesh)
    log.info("cable scene (h_inner=%g, %s conductors): %d nodes", h_inner,
             "resolved" if resolve_conductors else "coarse", mesh.n_nodes)
    return mesh
