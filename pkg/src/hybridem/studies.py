"""Study drivers behind the command line.

Each driver takes a :class:`~hybridem.config.SceneConfig` and returns a
:class:`StudyResult`: named CSV tables, pass/fail checks and a cost
report. Writing files is left to :mod:`hybridem.cli`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError, SceneConfig
from .mesh import Material, Mesh, MeshError, apply_equivalence, fictitious_node_mask, load_mesh
from .meshgen import (
    DEFAULT_FAR_H,
    DEFAULT_GRADING,
    DEFAULT_NEAR_MARGIN,
    CableGeometry,
    Cylinder,
    Square,
    generate_annulus_scene,
    generate_cable_scene,
)
from .oracle import MieSolution, mie_rcs
from .pde import HybridSystem, PlaneWave, assemble_and_solve, solve_fem_baseline
from .post import (
    COST_ROWS,
    FieldGrid,
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
from .sie import clear_cache

log = logging.getLogger(__name__)


@dataclass
class Check:
    """One self-check: ``passed`` compares ``value`` with ``bound``."""

    name: str
    value: float
    bound: str
    passed: bool


@dataclass
class StudyResult:
    """Tables keyed by file stem, each ``(header, rows)``."""

    tables: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)

    def add(self, name: str, header, rows) -> None:
        self.tables[name] = (tuple(header), list(rows))

    def check(self, name: str, value: float, passed: bool, bound: str) -> None:
        self.checks.append(Check(name, float(value), bound, bool(passed)))
        log.info("check %s = %.4g (%s): %s", name, value, bound, "ok" if passed else "FAILED")

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


# ---------------------------------------------------------------------------
# scenes
# ---------------------------------------------------------------------------

def _object_material(g: dict) -> Material:
    return Material(g.get("eps_r", 2.3), g.get("mu_r", 1.0), g.get("sigma", 0.0))


def cable_geometry(cfg: SceneConfig) -> CableGeometry:
    g = dict(cfg.shape)
    kw = {}
    for key in ("conductor_radius", "conductor_offset", "sheath_radius", "layer_top",
                "layer_thickness", "layer_width", "truncation_radius"):
        if key in g:
            kw[key] = g.pop(key)
    for key in ("conductor_angles", "layer_eps"):
        if key in g:
            kw[key] = tuple(g.pop(key))
    base = CableGeometry()
    kw["conductor"] = Material(1.0, g.pop("conductor_mu_r", 1.0),
                               g.pop("conductor_sigma", base.conductor.sigma))
    kw["sheath"] = Material(g.pop("sheath_eps_r", base.sheath.eps_r))
    if g:
        raise ConfigError(f"unknown cable keys {sorted(g)}")
    return CableGeometry(**kw)


def build_scene(cfg: SceneConfig, target_h: float | None = None,
                resolve_conductors: bool = True) -> Mesh:
    """Physical mesh of the configured scene.

    ``target_h`` overrides ``[mesh] target_h`` (``h_inner`` for the cable).
    """
    g, m = cfg.shape, cfg.mesh
    if cfg.geometry == "file":
        path = g["mesh_file"]
        if cfg.source is not None and not path.startswith("/"):
            path = str(cfg.source.parent / path)
        return load_mesh(path)
    if cfg.geometry == "cable":
        h = target_h if target_h is not None else m.get("target_h", 20e-6)
        return generate_cable_scene(cable_geometry(cfg), h_inner=h,
                                    resolve_conductors=resolve_conductors,
                                    grading=m.get("grading", 0.25), h_max=m.get("h_max", 0.5e-3))
    mat = _object_material(g)
    obj = (Cylinder(g.get("radius", 1.0), mat) if cfg.geometry == "cylinder"
           else Square(g.get("side", 2.0), mat))
    h = target_h if target_h is not None else m.get("target_h", 0.033)
    return generate_annulus_scene(obj, g.get("truncation_radius", 6.0), h,
                                  far_h=m.get("far_h", DEFAULT_FAR_H),
                                  near_margin=m.get("near_margin", DEFAULT_NEAR_MARGIN),
                                  grading=m.get("grading", DEFAULT_GRADING))


def hybrid_model(cfg: SceneConfig, mesh: Mesh) -> Mesh:
    objects = mesh.contour_ids("object")
    ids = cfg.sie_ids(len(objects))
    return apply_equivalence(mesh, [objects[i] for i in ids])


def _incident(cfg: SceneConfig) -> PlaneWave:
    return PlaneWave(cfg.amplitude, cfg.direction_deg)


def solve_hybrid(cfg: SceneConfig, mesh: Mesh) -> HybridSystem:
    return assemble_and_solve(hybrid_model(cfg, mesh), None, _incident(cfg), cfg.omega,
                              mass_blend=cfg.solver.get("mass_blend", 0.0))


def solve_fem(cfg: SceneConfig, mesh: Mesh) -> HybridSystem:
    return solve_fem_baseline(mesh, _incident(cfg), cfg.omega,
                              mass_blend=cfg.solver.get("mass_blend", 0.0))


def _rcs(cfg: SceneConfig, system: HybridSystem) -> RcsCurve:
    r = cfg.rcs
    return compute_rcs(system, rcs_angles(int(r.get("n_angles", 360))), radius=r.get("radius"),
                       width=r.get("width"),
                       incident_model=r.get("incident_model", "discrete"))


def mie_reference(cfg: SceneConfig) -> RcsCurve:
    if cfg.geometry != "cylinder":
        raise ConfigError("a Mie reference needs geometry = cylinder")
    g = cfg.shape
    sol = MieSolution(g.get("radius", 1.0), _object_material(g), Material(), cfg.frequency,
                      phi_inc=math.radians(cfg.direction_deg), amplitude=cfg.amplitude)
    ang = rcs_angles(int(cfg.rcs.get("n_angles", 360)))
    return mie_rcs(sol, ang)


# ---------------------------------------------------------------------------
# table helpers
# ---------------------------------------------------------------------------

RCS_HEADER = ("angle_deg", "sigma_db")
FIELD_HEADER = ("x", "y", "e_re", "e_im", "masked")
COST_HEADER = ("metric", "fem", "hybrid", "ratio")


def rcs_rows(curve: RcsCurve):
    return zip(curve.angles.tolist(), curve.values.tolist())


def grid_rows(grid: FieldGrid):
    p = grid.points()
    return zip(p[:, 0].tolist(), p[:, 1].tolist(), grid.values.real.tolist(),
               grid.values.imag.tolist(), grid.mask.astype(int).tolist())


def cost_rows(fem: dict | None, hybrid: dict | None, extra=()):
    nan = {name: math.nan for name, _ in COST_ROWS}
    rows = cost_report(fem or nan, hybrid or nan).as_table()
    for name, f, h in extra:
        rows.append((name, f, h, h / f if f else math.nan))
    return rows


def _system_grid(cfg: SceneConfig) -> FieldGrid:
    nf = cfg.nearfield
    return FieldGrid.regular((nf.get("origin_x", -3.0), nf.get("origin_y", -3.0)),
                          nf.get("spacing", 0.05), int(nf.get("nx", 121)), int(nf.get("ny", 121)))


# ---------------------------------------------------------------------------
# studies
# ---------------------------------------------------------------------------

def study_solve(cfg: SceneConfig) -> StudyResult:
    """Hybrid solve; nodal field table."""
    res = StudyResult()
    s = solve_hybrid(cfg, build_scene(cfg, resolve_conductors=False))
    m = s.mesh
    masked = fictitious_node_mask(m)
    res.add("field", FIELD_HEADER,
            zip(m.nodes[:, 0].tolist(), m.nodes[:, 1].tolist(), s.E.real.tolist(),
                s.E.imag.tolist(), masked.astype(int).tolist()))
    res.add("cost", COST_HEADER, cost_rows(None, run_costs(s)))
    res.check("residual", s.residual(), s.residual() < 1e-8, "< 1e-8")
    return res


def study_rcs(cfg: SceneConfig) -> StudyResult:
    """Hybrid RCS, compared with the Mie series or a same-mesh FEM run."""
    res = StudyResult()
    mesh = build_scene(cfg)
    s = solve_hybrid(cfg, mesh)
    curve = _rcs(cfg, s)
    res.add("rcs", RCS_HEADER, rcs_rows(curve))
    ref_kind = cfg.rcs.get("reference", "mie" if cfg.geometry == "cylinder" else "none")
    fem_cost = None
    if ref_kind == "mie":
        ref = mie_reference(cfg)
        res.add("rcs_mie", RCS_HEADER, rcs_rows(ref))
    elif ref_kind == "fem":
        f = solve_fem(cfg, mesh)
        fem_cost = run_costs(f)
        ref = _rcs(cfg, f)
        res.add("rcs_fem", RCS_HEADER, rcs_rows(ref))
    if ref_kind != "none":
        re = relative_error_rcs(curve, ref)
        dmax = float(np.abs(curve.values - ref.values).max())
        res.add("re_vs_oracle", ("reference", "re", "max_abs_db"), [(ref_kind, re, dmax)])
        tol = cfg.selfcheck["rcs_re_max"]
        res.check(f"rcs_re_vs_{ref_kind}", re, re <= tol, f"<= {tol:g}")
    res.add("cost", COST_HEADER, cost_rows(fem_cost, run_costs(s)))
    return res


def study_compare(cfg: SceneConfig) -> StudyResult:
    """Hybrid and FEM baseline on one physical mesh: RCS and costs."""
    res = StudyResult()
    mesh = build_scene(cfg)
    h, f = solve_hybrid(cfg, mesh), solve_fem(cfg, mesh)
    ch, cf = _rcs(cfg, h), _rcs(cfg, f)
    res.add("rcs", RCS_HEADER, rcs_rows(ch))
    res.add("rcs_fem", RCS_HEADER, rcs_rows(cf))
    re = relative_error_rcs(ch, cf)
    dmax = float(np.abs(ch.values - cf.values).max())
    res.add("re_vs_oracle", ("reference", "re", "max_abs_db"), [("fem", re, dmax)])
    tol = cfg.selfcheck["compare_re_max"]
    res.check("rcs_re_vs_fem", re, re <= tol, f"<= {tol:g}")
    res.add("cost", COST_HEADER, cost_rows(run_costs(f), run_costs(h)))
    return res


def study_nearfield(cfg: SceneConfig) -> StudyResult:
    """Hybrid vs FEM near fields on a grid; interiors of SIE contours masked."""
    res = StudyResult()
    mesh = build_scene(cfg)
    h, f = solve_hybrid(cfg, mesh), solve_fem(cfg, mesh)
    grid = _system_grid(cfg)
    gh = sample_near_field(h, grid)
    gf = sample_near_field(f, grid)
    err = relative_error_field(gh, gf)
    p = grid.points()
    res.add("nearfield_hybrid", FIELD_HEADER, grid_rows(gh))
    res.add("nearfield_fem", FIELD_HEADER, grid_rows(gf))
    res.add("nearfield_relerr", ("x", "y", "relerr", "masked"),
            zip(p[:, 0].tolist(), p[:, 1].tolist(), err.values.real.tolist(),
                err.mask.astype(int).tolist()))
    v = err.valid_values().real
    sc = cfg.selfcheck
    frac = float(np.mean(v < sc["nearfield_rel"]))
    res.check("nearfield_fraction_below", frac, frac >= sc["nearfield_fraction"],
              f">= {sc['nearfield_fraction']:g} below {sc['nearfield_rel']:g}")
    res.check("nearfield_max", v.max(), v.max() <= sc["nearfield_max"],
              f"<= {sc['nearfield_max']:g}")
    res.add("cost", COST_HEADER, cost_rows(run_costs(f), run_costs(h)))
    return res


def study_convergence(cfg: SceneConfig) -> StudyResult:
    """RE of the hybrid RCS over a ladder of mesh sizes.

    The reference is the FEM baseline on the finest ladder mesh, or the
    Mie series with ``reference = mie``.
    """
    res = StudyResult()
    ladder = sorted(cfg.convergence.get("ladder", [0.08, 0.04, 0.02, 0.01]), reverse=True)
    if len(ladder) < 3:
        raise ConfigError("a convergence study needs at least 3 ladder points")
    ref_kind = cfg.convergence.get("reference", "fem")
    curves, fem_cost, hyb_cost = [], None, None
    ref = mie_reference(cfg) if ref_kind == "mie" else None
    for i, h in enumerate(ladder):
        mesh = build_scene(cfg, target_h=h)
        s = solve_hybrid(cfg, mesh)
        curves.append(_rcs(cfg, s))
        if i == len(ladder) - 1:
            hyb_cost = run_costs(s)
            if ref_kind == "fem":
                f = solve_fem(cfg, mesh)
                fem_cost = run_costs(f)
                ref = _rcs(cfg, f)
        log.info("convergence: h = %g done (%d nodes)", h, mesh.n_nodes)
    re = [relative_error_rcs(c, ref) for c in curves]
    res.add("convergence", ("h", "re"), zip(ladder, re))
    res.add("rcs", RCS_HEADER, rcs_rows(curves[-1]))
    res.add("cost", COST_HEADER, cost_rows(fem_cost, hyb_cost))
    dec = all(b < a for a, b in zip(re, re[1:]))
    res.check("convergence_decreasing", float(dec), dec, "strictly decreasing")
    tol = cfg.selfcheck["convergence_final_max"]
    res.check("convergence_final_re", re[-1], re[-1] <= tol, f"<= {tol:g}")
    return res


@dataclass
class SkinLevel:
    method: str
    h_inner: float
    unknowns: int
    triangles: int
    peak: float
    total_s: float
    flagged: bool = False
    costs: dict | None = None
    system: HybridSystem | None = field(default=None, repr=False)


def _peak(system: HybridSystem) -> float:
    ids = [i for i, c in enumerate(system.mesh.contours) if c.kind in ("object", "sie")]
    return max(current_density(system, i).peak for i in ids)


def _skin_run(cfg: SceneConfig, method: str, h: float, budget: float) -> SkinLevel:
    mesh = build_scene(cfg, target_h=h, resolve_conductors=(method == "fem"))
    if mesh.n_triangles > budget:
        log.warning("%s level h_inner=%g has %d elements (budget %d); skipped",
                    method, h, mesh.n_triangles, budget)
        return SkinLevel(method, h, mesh.n_nodes, mesh.n_triangles, math.nan, math.nan, True)
    clear_cache()  # timings must include operator generation
    s = solve_fem(cfg, mesh) if method == "fem" else solve_hybrid(cfg, mesh)
    c = run_costs(s)
    return SkinLevel(method, h, s.n_unknowns, mesh.n_triangles, _peak(s), c["total_s"],
                     costs=c, system=s)


def matched_level(levels, tol: float) -> int:
    """Index of the coarsest level within ``tol`` of the finest valid level.

    ``levels`` runs from coarse to fine; flagged levels are ignored.
    """
    valid = [i for i, lv in enumerate(levels) if not lv.flagged]
    if not valid:
        raise MeshError("no ladder level fits the element budget")
    ref = levels[valid[-1]].peak
    for i in valid:
        if all(abs(levels[j].peak - ref) <= tol * abs(ref) for j in valid if j >= i):
            return i
    return valid[-1]


def _best_costs(cfg: SceneConfig, method: str, h: float, repeats: int, first: dict) -> dict:
    """Element-wise minimum of the cost metrics over repeated runs."""
    best = dict(first)
    for _ in range(repeats - 1):
        c = _skin_run(cfg, method, h, math.inf).costs
        for k, v in c.items():
            if k != "unknowns":
                best[k] = min(best[k], v)
    return best


def study_skin(cfg: SceneConfig) -> StudyResult:
    """Peak conductor current density over element ladders for both methods.

    Each method's matched level is the coarsest one whose peak stays within
    ``tolerance`` of that method's finest level; the cost table compares
    the two matched levels.
    """
    res = StudyResult()
    sk = cfg.skin
    tol = sk.get("tolerance", 0.01)
    budget = sk.get("element_budget", 400_000)
    repeats = max(1, int(sk.get("repeats", 3)))
    ladders = {
        "hybrid": sorted(sk.get("hybrid_ladder", [60e-6, 40e-6, 30e-6, 20e-6, 10e-6]), reverse=True),
        "fem": sorted(sk.get("fem_ladder", [40e-6, 20e-6, 10e-6, 7e-6, 5e-6]), reverse=True),
    }
    levels = {m: [] for m in ladders}
    for method, ladder in ladders.items():
        for h in ladder:
            lv = _skin_run(cfg, method, h, budget)
            log.info("skin %s h_inner=%g: %d unknowns, peak %.6g", method, h, lv.unknowns, lv.peak)
            lv.system = None  # matched levels are re-solved; keeps memory bounded
            levels[method].append(lv)
    rows = [(lv.method, lv.h_inner, lv.unknowns, lv.triangles, lv.peak, lv.total_s, int(lv.flagged))
            for m in ("fem", "hybrid") for lv in levels[m]]
    res.add("skin_ladder", ("method", "h_inner", "unknowns", "triangles", "peak_j", "total_s",
                            "flagged"), rows)

    match = {m: matched_level(levels[m], tol) for m in levels}
    systems, costs = {}, {}
    for m in levels:
        lv = levels[m][match[m]]
        rerun = _skin_run(cfg, m, lv.h_inner, math.inf)
        systems[m] = rerun.system
        costs[m] = _best_costs(cfg, m, lv.h_inner, repeats, rerun.costs)
    peaks = {m: levels[m][match[m]].peak for m in levels}
    res.add("cost", COST_HEADER,
            cost_rows(costs["fem"], costs["hybrid"],
                      extra=[("peak_current_density", peaks["fem"], peaks["hybrid"]),
                             ("h_inner", levels["fem"][match["fem"]].h_inner,
                              levels["hybrid"][match["hybrid"]].h_inner)]))

    geom = cable_geometry(cfg)
    spacing = sk.get("grid_spacing", geom.sheath_radius / 50)
    n = int(round(2 * geom.sheath_radius / spacing)) + 1
    grid = FieldGrid.regular((-geom.sheath_radius, -geom.sheath_radius), spacing, n, n)
    jmaps = {}
    for m, s in systems.items():
        ids = [i for i, c in enumerate(s.mesh.contours) if c.kind in ("object", "sie")]
        vals, inside = np.zeros(n * n), np.zeros(n * n, dtype=bool)
        for i in ids:
            g = current_density(s, i, grid).grid
            vals = np.where(g.mask, vals, g.values)
            inside |= ~g.mask
        jmaps[m] = (vals, inside)
    p = grid.points()
    inside = jmaps["fem"][1] | jmaps["hybrid"][1]
    res.add("current_density", ("x", "y", "j_fem", "j_hybrid", "masked"),
            zip(p[:, 0].tolist(), p[:, 1].tolist(), jmaps["fem"][0].tolist(),
                jmaps["hybrid"][0].tolist(), (~inside).astype(int).tolist()))

    hyb = [lv.peak for lv in levels["hybrid"] if not lv.flagged]
    fem = [lv.peak for lv in levels["fem"] if not lv.flagged]
    spread = (max(hyb) - min(hyb)) / abs(hyb[-1])
    res.check("skin_hybrid_spread", spread, spread <= tol, f"<= {tol:g}")
    low = abs(fem[0] - fem[-1]) / abs(fem[-1])
    res.check("skin_fem_low_end_variation", low, low > 0.05, "> 0.05")
    sc = cfg.selfcheck
    pr = peaks["hybrid"] / peaks["fem"]
    res.check("skin_peak_ratio", pr, sc["skin_peak_lo"] <= pr <= sc["skin_peak_hi"],
              f"in [{sc['skin_peak_lo']:g}, {sc['skin_peak_hi']:g}]")
    ur = costs["hybrid"]["unknowns"] / costs["fem"]["unknowns"]
    res.check("skin_unknowns_ratio", ur, ur < sc["skin_unknowns_max"], f"< {sc['skin_unknowns_max']:g}")
    tr = costs["hybrid"]["total_s"] / costs["fem"]["total_s"]
    res.check("skin_time_ratio", tr, tr < sc["skin_time_max"], f"< {sc['skin_time_max']:g}")
    return res


STUDY_DRIVERS = {
    "solve": study_solve,
    "rcs": study_rcs,
    "compare": study_compare,
    "nearfield": study_nearfield,
    "convergence": study_convergence,
    "skin": study_skin,
}


def run_study(cfg: SceneConfig) -> StudyResult:
    return STUDY_DRIVERS[cfg.study](cfg)
