"""Observables from a solved system: near fields, RCS, errors, currents, costs."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .mesh import Mesh, nodes_strictly_inside, points_in_polygon, triangles_inside
from .pde import HybridSystem, _TRI_RULE, discrete_incident
from .sie import NearSingularWarning, recover_interior_fields

log = logging.getLogger(__name__)


class PostError(ValueError):
    """Invalid post-processing request."""


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------

@dataclass
class FieldGrid:
    """Samples on a regular grid, row-major with x fastest.

    ``mask`` is True where a sample is invalid (outside the mesh or in a
    fictitious region).
    """

    origin: tuple
    spacing: float
    nx: int
    ny: int
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if not self.spacing > 0:
            raise PostError("grid spacing must be positive")
        self.values = np.asarray(self.values).reshape(-1)
        self.mask = np.asarray(self.mask, dtype=bool).reshape(-1)
        if self.values.size != self.nx * self.ny or self.mask.size != self.values.size:
            raise PostError("grid values do not match nx * ny")

    @classmethod
    def regular(cls, origin, spacing, nx, ny) -> "FieldGrid":
        n = int(nx) * int(ny)
        return cls(tuple(origin), float(spacing), int(nx), int(ny),
                   np.zeros(n, dtype=complex), np.zeros(n, dtype=bool))

    def points(self) -> np.ndarray:
        x = self.origin[0] + self.spacing * np.arange(self.nx)
        y = self.origin[1] + self.spacing * np.arange(self.ny)
        X, Y = np.meshgrid(x, y, indexing="xy")
        return np.column_stack([X.ravel(), Y.ravel()])

    def valid_values(self) -> np.ndarray:
        return self.values[~self.mask]


@dataclass
class RcsCurve:
    """Bistatic scattering width.

    Attributes
    ----------
    angles : ndarray
        Degrees in ``[0, 360)``, strictly increasing.
    values : ndarray
        ``10 log10(sigma / 1 m)``.
    frequency : float
    linear : ndarray
        ``sigma`` in metres.
    """

    angles: np.ndarray
    values: np.ndarray
    frequency: float
    linear: np.ndarray = None

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.angles.shape != self.values.shape:
            raise PostError("angles and values differ in length")
        if np.any(np.diff(self.angles) <= 0):
            raise PostError("angles must be strictly increasing")
        if self.angles.size and (self.angles[0] < 0 or self.angles[-1] >= 360):
            raise PostError("angles must lie in [0, 360)")
        if self.linear is None:
            self.linear = 10.0 ** (self.values / 10.0)
        self.linear = np.asarray(self.linear, dtype=float)


def rcs_angles(n: int = 360) -> np.ndarray:
    """``n`` equally spaced angles in degrees starting at 0."""
    return 360.0 * np.arange(n) / n


# ---------------------------------------------------------------------------
# interpolation and near fields
# ---------------------------------------------------------------------------

def _locator(mesh: Mesh) -> kernels.PointLocator:
    if "locator" not in mesh._cache:
        mesh._cache["locator"] = kernels.PointLocator(mesh.nodes, mesh.triangles)
    return mesh._cache["locator"]


def interpolate(mesh: Mesh, nodal: np.ndarray, points):
    """Barycentric interpolation of nodal values; NaN-free, with a hit mask."""
    tri, bary = _locator(mesh).locate(points)
    hit = tri >= 0
    vals = np.zeros(len(tri), dtype=np.result_type(nodal, complex))
    t = mesh.triangles[tri[hit]]
    vals[hit] = np.sum(bary[hit] * nodal[t], axis=1)
    return vals, hit


def _recover(opset, boundary_E, material, omega, points):
    # callers handle flagged points themselves, so the warning is noise here
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NearSingularWarning)
        return recover_interior_fields(opset.xy, boundary_E, material, omega, points, Y=opset.Y)


def sample_near_field(system: HybridSystem, grid: FieldGrid, recover: bool = False,
                      mesh: Mesh | None = None) -> FieldGrid:
    """Interpolate the solved field on ``grid``.

    Samples outside the mesh or inside ``sie`` contours are masked unless
    ``recover`` is set, in which case interior fields are recovered from
    the contour data with the interior medium's Green's function.
    """
    mesh = mesh or system.mesh
    if system.E is None:
        raise PostError("system is not solved")
    pts = grid.points()
    vals, hit = interpolate(mesh, system.E, pts)
    mask = ~hit
    for s in system.dsao_sets:
        c = mesh.contours[s.contour_id]
        inside = points_in_polygon(pts, mesh.nodes[c.node_ids]) & hit
        if not np.any(inside):
            continue
        if recover:
            vals[inside], _ = _recover(s, system.E[c.node_ids], s.inner, system.omega, pts[inside])
        else:
            mask |= inside
    vals = np.where(mask, 0.0, vals)
    return FieldGrid(grid.origin, grid.spacing, grid.nx, grid.ny, vals, mask)


def relative_error_field(calc: FieldGrid, ref: FieldGrid) -> FieldGrid:
    """Pointwise ``|E_cal - E_ref| / max |E_ref|`` on the common valid samples."""
    same = (calc.nx, calc.ny, calc.spacing, tuple(calc.origin)) == (
        ref.nx, ref.ny, ref.spacing, tuple(ref.origin))
    if not same:
        raise PostError("grids differ")
    mask = calc.mask | ref.mask
    if np.all(mask):
        raise PostError("no common unmasked samples")
    scale = np.abs(ref.values[~mask]).max()
    err = np.where(mask, 0.0, np.abs(calc.values - ref.values) / scale)
    return FieldGrid(calc.origin, calc.spacing, calc.nx, calc.ny, err, mask)


# ---------------------------------------------------------------------------
# RCS
# ---------------------------------------------------------------------------

def _smoothstep(t):
    """Quintic step and its first two derivatives (C2 at both ends)."""
    t = np.clip(t, 0.0, 1.0)
    s = t ** 3 * (10 - 15 * t + 6 * t * t)
    ds = 30 * t * t * (1 - t) ** 2
    d2s = 60 * t * (1 - t) * (1 - 2 * t)
    return s, ds, d2s


def compute_rcs(system: HybridSystem, angles_deg=None, radius: float | None = None,
                width: float | None = None, center=(0.0, 0.0), mesh: Mesh | None = None,
                incident_model: str = "discrete") -> RcsCurve:
    """Bistatic scattering width from the solved near field.

    A smooth radial cutoff ``chi`` rising from 0 to 1 across the annulus
    ``radius -/+ width/2`` turns the scattered field into ``u = chi E_s``
    with the compactly supported source ``f = 2 grad chi . grad E_s +
    E_s lap chi``. Its radiated far field, after moving the gradient onto
    the smooth factors, is

        F(phi) = int E_s exp(jk rhat.r) (-lap chi - 2jk chi' rhat.rhohat) dA

    and ``sigma = |F|^2 / (4k |E0|^2)``. Only field values enter, so the
    linear interpolant is integrated without differentiating it.

    The scattered field outside the scatterers still carries the P1 phase
    error, which grows with distance, so the default annulus hugs the
    scatterers: it starts 5% of the gap to the truncation boundary away
    from them and is 10% of that gap wide.

    Parameters
    ----------
    system : HybridSystem
        Solved system with a plane-wave incident field.
    angles_deg : array_like, optional
        Observation angles; 360 one-degree steps by default.
    radius, width : float, optional
        Annulus centre radius and width.
    center : (float, float)
    incident_model : {"discrete", "analytic"}
        ``E_s = E - E_inc`` with ``E_inc`` either the background-only
        solution on the same mesh (:func:`discrete_incident`) or the
        exact plane wave.

    Raises
    ------
    PostError
        If the annulus leaves the mesh or touches non-background media.
    """
    mesh = mesh or system.mesh
    if system.E is None or system.incident is None:
        raise PostError("compute_rcs needs a solved plane-wave system")
    angles = rcs_angles() if angles_deg is None else np.asarray(angles_deg, dtype=float)
    c = np.asarray(center, dtype=float)
    r_nodes = np.hypot(*(mesh.nodes - c).T)
    trunc = mesh.truncation()
    r_out = float(r_nodes[trunc.node_ids].min()) if trunc is not None else float(r_nodes.max())
    bg = mesh.background_material_id
    nonbg = mesh.tri_material != bg
    for cc in mesh.contours:
        if cc.kind == "sie":
            nonbg = nonbg | triangles_inside(mesh, cc)
    r_tri = np.hypot(*(mesh.nodes[mesh.triangles] - c).transpose(2, 0, 1))
    r_obj = float(r_tri[nonbg].max()) if np.any(nonbg) else 0.0
    if incident_model not in ("discrete", "analytic"):
        raise PostError(f"unknown incident_model {incident_model!r}")
    gap = r_out - r_obj
    if width is None:
        width = 0.1 * gap
    if radius is None:
        radius = r_obj + 0.05 * gap + 0.5 * width
    r1, r2 = radius - 0.5 * width, radius + 0.5 * width
    if r1 <= r_obj or r2 >= r_out or width <= 0:
        raise PostError(f"annulus [{r1:.4g}, {r2:.4g}] must lie between scatterers "
                        f"({r_obj:.4g}) and truncation ({r_out:.4g})")
    band = (r_tri.max(axis=1) > r1) & (r_tri.min(axis=1) < r2)
    if np.any(band & (mesh.tri_material != bg)):
        raise PostError("integration annulus intersects non-background material")
    k = mesh.materials[bg].wavenumber(system.omega)
    tris = mesh.triangles[band]
    xy = mesh.nodes[tris]
    area = 0.5 * ((xy[:, 1, 0] - xy[:, 0, 0]) * (xy[:, 2, 1] - xy[:, 0, 1])
                  - (xy[:, 2, 0] - xy[:, 0, 0]) * (xy[:, 1, 1] - xy[:, 0, 1]))
    bary, wts = _TRI_RULE
    q = np.einsum("qi,tid->tqd", bary, xy).reshape(-1, 2)
    w = (area[:, None] * wts[None, :]).ravel()
    if incident_model == "discrete":
        e_inc = discrete_incident(system)[tris]
    else:
        e_inc = system.incident.field(mesh.nodes[tris].reshape(-1, 2), k).reshape(-1, 3)
    es_nodes = system.E[tris] - e_inc
    es = np.einsum("qi,ti->tq", bary, es_nodes).ravel()
    d = q - c
    rho = np.hypot(d[:, 0], d[:, 1])
    s, ds, d2s = _smoothstep((rho - r1) / width)
    chi1 = ds / width
    chi2 = d2s / width ** 2
    lap = chi2 + chi1 / rho
    keep = (chi1 != 0) | (chi2 != 0)
    ux, uy = d[:, 0] / rho, d[:, 1] / rho
    alpha = -es * w * lap
    beta = -es * w * 2j * k * chi1
    F = kernels.farfield_sum(q[keep, 0], q[keep, 1], ux[keep], uy[keep], alpha[keep], beta[keep],
                             np.deg2rad(angles), k)
    amp = abs(system.incident.amplitude)
    lin = np.abs(F) ** 2 / (4.0 * k.real) / amp ** 2
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(lin)
    return RcsCurve(angles, db, system.omega / (2 * np.pi), linear=lin)


def relative_error_rcs(calc: RcsCurve, ref: RcsCurve) -> float:
    """``sum |s_cal - s_ref|^2 / sum |s_ref|^2`` on linear scattering widths."""
    if calc.angles.shape != ref.angles.shape or not np.allclose(calc.angles, ref.angles):
        raise PostError("RCS curves use different angle grids")
    num = np.sum((calc.linear - ref.linear) ** 2)
    den = np.sum(ref.linear ** 2)
    if den == 0:
        raise PostError("reference RCS is identically zero")
    return float(num / den)


# ---------------------------------------------------------------------------
# conductor currents
# ---------------------------------------------------------------------------

@dataclass
class CurrentDensity:
    """``|J| = sigma |E|`` in a conductor.

    Attributes
    ----------
    peak : float
        Largest sampled ``|J|`` in A/m^2.
    points : ndarray
        Sample locations.
    values : ndarray
        ``|J|`` at the samples.
    grid : FieldGrid or None
    """

    peak: float
    points: np.ndarray
    values: np.ndarray
    grid: FieldGrid | None = None


def current_density(system: HybridSystem, contour_id: int, grid: FieldGrid | None = None,
                    mesh: Mesh | None = None) -> CurrentDensity:
    """Current density inside the conductor bounded by a contour.

    For a physical mesh, nodal fields on and inside the contour are used.
    For an ``sie`` contour, the boundary nodal fields are combined with
    interior fields recovered from them (the PDE values inside are
    fictitious).

    Raises
    ------
    PostError
        If the enclosed material is not conducting.
    """
    mesh = mesh or system.mesh
    c = mesh.contours[contour_id]
    poly = mesh.nodes[c.node_ids]
    if c.kind == "sie":
        mat = mesh.materials[c.inner_material_id]
    else:
        inside = triangles_inside(mesh, c)
        ids = np.unique(mesh.tri_material[inside])
        if ids.size != 1:
            raise PostError("conductor region is not homogeneous")
        mat = mesh.materials[int(ids[0])]
    if not mat.sigma > 0:
        raise PostError(f"contour {contour_id} does not enclose a conductor")
    interior = nodes_strictly_inside(mesh, c)
    if c.kind == "sie":
        sets = [s for s in system.dsao_sets if s.contour_id == contour_id]
        if not sets:
            raise PostError(f"no operators for contour {contour_id}")
        s = sets[0]
        pts = mesh.nodes[interior]
        e_in, flagged = _recover(s, system.E[c.node_ids], mat, system.omega, pts)
        pts = np.vstack([poly, pts[~flagged]])
        e = np.concatenate([system.E[c.node_ids], e_in[~flagged]])
    else:
        sel = interior.copy()
        sel[c.node_ids] = True
        pts = mesh.nodes[sel]
        e = system.E[sel]
    jv = mat.sigma * np.abs(e)
    out_grid = None
    if grid is not None:
        gp = grid.points()
        ins = points_in_polygon(gp, poly)
        vals = np.zeros(gp.shape[0])
        if np.any(ins):
            if c.kind == "sie":
                ev, _ = _recover(s, system.E[c.node_ids], mat, system.omega, gp[ins])
            else:
                ev, _ = interpolate(mesh, system.E, gp[ins])
            vals[ins] = mat.sigma * np.abs(ev)
        out_grid = FieldGrid(grid.origin, grid.spacing, grid.nx, grid.ny, vals, ~ins)
    return CurrentDensity(float(jv.max()), pts, jv, out_grid)


# ---------------------------------------------------------------------------
# cost accounting
# ---------------------------------------------------------------------------

COST_ROWS = (
    ("unknowns", "count"),
    ("memory_mb", "MB"),
    ("ys_generation_s", "s"),
    ("matrix_filling_s", "s"),
    ("matrix_solving_s", "s"),
    ("total_s", "s"),
)


def run_costs(system: HybridSystem) -> dict:
    """Cost metrics of one solved system."""
    t = system.timings
    nnz = system.matrix.nnz + t.get("factor_nnz", 0)
    mem = (nnz * 16 + sum(s.size ** 2 * 16 * 8 for s in system.dsao_sets)) / 2 ** 20
    return {
        "unknowns": float(system.n_unknowns),
        "memory_mb": float(mem),
        "ys_generation_s": float(t.get("ys_generation", 0.0)),
        "matrix_filling_s": float(t.get("matrix_filling", 0.0)),
        "matrix_solving_s": float(t.get("matrix_solving", 0.0)),
        "total_s": float(t.get("total", 0.0)),
    }


@dataclass
class CostReport:
    """FEM-vs-hybrid cost table; ``ratio = hybrid / fem``."""

    rows: list = field(default_factory=list)

    def as_table(self):
        return [(name, f, h, (h / f if f else float("nan"))) for name, f, h in self.rows]

    def ratio(self, name: str) -> float:
        for n, f, h, r in self.as_table():
            if n == name:
                return r
        raise KeyError(name)


def cost_report(fem: dict, hybrid: dict) -> CostReport:
    """Table of the metrics in :data:`COST_ROWS` for both methods."""
    return CostReport([(name, float(fem.get(name, 0.0)), float(hybrid.get(name, 0.0)))
                       for name, _ in COST_ROWS])
