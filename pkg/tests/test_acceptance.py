"""End-to-end acceptance criteria.

Each ``test_criterion_*`` prints one ``PASS``/``FAIL`` line with the
measured values next to their bounds (also repeated in the terminal
summary). Solves are shared through a module cache, so the whole file runs
in a few minutes on one core.
"""

from contextlib import contextmanager
from importlib import resources

import numpy as np
import pytest

from hybridem.cli import main
from hybridem.config import load_config
from hybridem.mesh import Material
from hybridem.meshgen import generate_disk_mesh
from hybridem.oracle import adaptive_panel_integral, cylinder_mode_admittance
from hybridem.pde import PlaneWave, assemble_and_solve, element_matrices, shape_coefficients
from hybridem.post import compute_rcs, rcs_angles, relative_error_rcs
from hybridem.sie import assemble_L, build_dsao
from hybridem.specfun import (
    SegmentGeometry,
    identities_I,
    integrate_G_halfrooftop,
    integrate_gradG_halfrooftop,
)
from hybridem.studies import (
    build_scene,
    mie_reference,
    run_study,
    solve_fem,
    solve_hybrid,
)

from conftest import ACCEPTANCE_LINES, W300, circle_xy

pytestmark = pytest.mark.slow


def _bundled(name):
    return load_config(resources.files("hybridem").joinpath("configs", name))


class Criterion:
    def __init__(self, number, title):
        self.number, self.title = number, title
        self.checks = []

    def check(self, name, value, ok, bound):
        self.checks.append((name, value, bool(ok), bound))

    def line(self, error=None):
        ok = error is None and all(c[2] for c in self.checks)
        parts = [f"{n}={v:.4g} ({b}{'' if k else ' FAIL'})" for n, v, k, b in self.checks]
        if error is not None:
            parts.append(f"error: {error!r}")
        return f"criterion {self.number} [{'PASS' if ok else 'FAIL'}] {self.title}: " + "; ".join(parts)


@contextmanager
def criterion(number, title):
    c = Criterion(number, title)
    try:
        yield c
    except Exception as exc:
        line = c.line(exc)
        ACCEPTANCE_LINES.append(line)
        print(line)
        raise
    line = c.line()
    ACCEPTANCE_LINES.append(line)
    print(line)
    failed = [n for n, _, ok, _ in c.checks if not ok]
    assert not failed, line


# ---------------------------------------------------------------------------
# shared solves
# ---------------------------------------------------------------------------

_SOLVES: dict = {}


def _solve(cfg_name, h, method="hybrid", mass_blend=0.0):
    key = (cfg_name, h, method, mass_blend)
    if key not in _SOLVES:
        cfg = _bundled(cfg_name)
        cfg.solver["mass_blend"] = mass_blend
        mesh = build_scene(cfg, target_h=h)
        s = solve_hybrid(cfg, mesh) if method == "hybrid" else solve_fem(cfg, mesh)
        _SOLVES[key] = (cfg, s)
    return _SOLVES[key]


def _rcs(cfg_name, h, method="hybrid", mass_blend=0.0, **kw):
    cfg, s = _solve(cfg_name, h, method, mass_blend)
    return compute_rcs(s, rcs_angles(360), **kw)


@pytest.fixture(scope="module", autouse=True)
def _release():
    yield
    _SOLVES.clear()


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------

def test_criterion_1_appendix_fidelity():
    rng = np.random.default_rng(2024)
    names = ("I1", "I2", "I3", "I4", "I5", "I6")
    with criterion(1, "closed-form identities and half-rooftop integrals") as c:
        worst = 0.0
        for _ in range(1000):
            obs, a = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)
            th = rng.uniform(0, 2 * np.pi)
            b = a + rng.uniform(0.05, 1.0) * np.array([np.cos(th), np.sin(th)])
            g = SegmentGeometry.from_points(obs, a, b)
            I = identities_I(g)
            for i, n in enumerate(names):
                ref = adaptive_panel_integral(n, g)
                worst = max(worst, abs(I[i] - ref) / abs(ref))
        c.check("identities_max_rel", worst, worst <= 1e-9, "<= 1e-9")

        worst_h = on_line_max = 0.0
        k = 1.3 - 0.2j
        for i in range(200):
            l0 = rng.uniform(0.005, 0.05)
            a = rng.uniform(-1, 1, 2)
            th = rng.uniform(0, 2 * np.pi)
            t = np.array([np.cos(th), np.sin(th)])
            b = a + l0 * t
            if i % 4 == 0:
                obs = a if i % 8 == 0 else b  # self-segment endpoints
            else:
                n = np.array([t[1], -t[0]])
                obs = a + rng.uniform(-0.5, 1.5) * l0 * t + rng.uniform(-1, 1) * l0 * n
            g = SegmentGeometry.from_points(obs, a, b)
            on_line = i % 4 == 0
            for rising in (True, False):
                tag = "rise" if rising else "fall"
                v = integrate_G_halfrooftop(g, k, 1.0, rising)
                ref = adaptive_panel_integral(f"Gsmall_{tag}", g, k, rtol=1e-10)
                worst_h = max(worst_h, abs(v - ref) / abs(ref))
                v = integrate_gradG_halfrooftop(g, k, rising)
                if on_line:
                    # the normal derivative vanishes identically on the source line
                    on_line_max = max(on_line_max, abs(v))
                else:
                    ref = adaptive_panel_integral(f"dGsmall_{tag}", g, k, rtol=1e-10)
                    worst_h = max(worst_h, abs(v - ref) / abs(ref))
        c.check("half_rooftop_max_rel", worst_h, worst_h <= 1e-6, "<= 1e-6")
        c.check("dG_on_line_abs", on_line_max, on_line_max == 0.0, "== 0")


def test_criterion_2_dsao_null():
    with criterion(2, "DSAO vanishes without contrast") as c:
        for name, mat in (("vacuum", Material()), ("dielectric", Material(2.3)),
                          ("lossy", Material(4.0, 1.0, 0.05))):
            s = build_dsao(circle_xy(64, 1.0), mat, mat, W300, use_cache=False)
            r = np.linalg.norm(s.Y_s) / np.linalg.norm(s.Y)
            c.check(f"ratio_{name}", r, r < 1e-8, "< 1e-8")


def test_criterion_3_sao_spectrum():
    with criterion(3, "lowest-mode admittance of the SAO") as c:
        n, a = 64, 0.5
        for name, mat in (("vacuum", Material()), ("dielectric", Material(2.3))):
            s = build_dsao(circle_xy(n, a), mat, Material(5.0), W300, use_cache=False)
            v = np.ones(n)
            y = v @ s.Y @ v / n
            ref = cylinder_mode_admittance(mat.wavenumber(W300), a, mat.jwmu(W300), 0)
            err = abs(y - ref) / abs(ref)
            c.check(f"mode0_rel_{name}", err, err <= 0.01, "<= 0.01")


def test_criterion_4_cylinder_accuracy():
    with criterion(4, "cylinder RCS vs Mie (h=0.033) and vs FEM (h=0.01)") as c:
        cfg = _bundled("cylinder_rcs.cfg")
        mie = mie_reference(cfg)
        re = relative_error_rcs(_rcs("cylinder_rcs.cfg", 0.033), mie)
        c.check("re_vs_mie_h0.033", re, re <= 1e-2, "<= 1e-2")
        hyb = _rcs("cylinder_rcs.cfg", 0.01)
        fem = _rcs("cylinder_rcs.cfg", 0.01, "fem")
        re = relative_error_rcs(hyb, fem)
        c.check("re_vs_fem_h0.01", re, re <= 1e-3, "<= 1e-3")


def test_criterion_5_cuboid_accuracy():
    cfg = _bundled("cuboid_compare.cfg")
    assert cfg.mesh["target_h"] == 0.01
    with criterion(5, "cuboid RCS and near field vs FEM (h=0.01)") as c:
        res = run_study(cfg)
        (chk,) = [x for x in res.checks if x.name == "rcs_re_vs_fem"]
        c.check("rcs_re_vs_fem", chk.value, chk.value <= 2e-3, "<= 2e-3")
        del res
        nf = run_study(_bundled("cuboid_nearfield.cfg"))
        checks = {x.name: x.value for x in nf.checks}
        frac, mx = checks["nearfield_fraction_below"], checks["nearfield_max"]
        c.check("fraction_below_2pct", frac, frac >= 0.9, ">= 0.9")
        c.check("nearfield_max", mx, mx <= 0.05, "<= 0.05")


def test_criterion_6_free_space():
    with criterion(6, "plane wave through a background-only mesh") as c:
        mesh = generate_disk_mesh(2.0, target_h=0.02)
        inc = PlaneWave(1.0, 0.0)
        s = assemble_and_solve(mesh, [], inc, W300)
        err = np.max(np.abs(s.E - inc.field(mesh.nodes, W300 / 299792458.0)))
        c.check("max_rel", err, err <= 0.03, "<= 0.03")


def test_criterion_7_skin_effect():
    cfg = _bundled("skin_scaled.cfg")
    with criterion(7, "scaled conductor skin-effect study") as c:
        res = run_study(cfg)
        for chk in res.checks:
            c.check(chk.name, chk.value, chk.passed, chk.bound)


def test_criterion_8_properties(tmp_path):
    rng = np.random.default_rng(8)
    with criterion(8, "property suite") as c:
        # rooftops and P1 shape functions sum to one
        xy = circle_xy(20, 0.7)
        L = assemble_L(xy)
        ln = np.hypot(*(np.roll(xy, -1, 0) - xy).T)
        pu = abs(L.sum() - ln.sum()) / ln.sum()
        tri = rng.uniform(-1, 1, size=(50, 3, 2))
        tri[shape_coefficients(tri)[2] < 0] = tri[shape_coefficients(tri)[2] < 0][:, ::-1]
        b, cc, _ = shape_coefficients(tri)
        pu = max(pu, np.abs(b.sum(1)).max(), np.abs(cc.sum(1)).max())
        c.check("partition_of_unity", pu, pu < 1e-12, "< 1e-12")

        eig = min(np.linalg.eigvalsh(assemble_L(circle_xy(n, r))).min()
                  for n, r in ((3, 1.0), (17, 0.2), (64, 2.0)))
        c.check("L_min_eig", eig, eig > 0, "> 0")

        K = element_matrices(tri, np.full(50, 2.3), np.ones(50), 6.28)
        asym = np.abs(K - K.transpose(0, 2, 1)).max()
        S = element_matrices(tri, np.full(50, 2.3), np.ones(50), 0.0)
        null = np.abs(S.sum(axis=2)).max() / np.abs(S).max()
        c.check("Ke_asymmetry", asym, asym == 0, "== 0")
        c.check("Ke_static_null", null, null < 1e-10, "< 1e-10")

        cfg, s1 = _solve("cylinder_rcs.cfg", 0.033)
        s2 = assemble_and_solve(s1.mesh, s1.dsao_sets, PlaneWave(2.0), cfg.omega)
        lin = np.abs(s2.E - 2 * s1.E).max() / np.abs(2 * s1.E).max()
        c.check("linearity", lin, lin < 1e-10, "< 1e-10")

        a = _rcs("cylinder_rcs.cfg", 0.01, radius=1.5, width=0.5)
        b = _rcs("cylinder_rcs.cfg", 0.01, radius=1.75, width=0.5)
        dd = float(np.abs(a.values - b.values).max())
        c.check("rcs_contour_spread_db", dd, dd <= 0.1, "<= 0.1")

        text = (resources.files("hybridem").joinpath("configs", "cylinder_rcs.cfg").read_text()
                .replace("radius = 1.0", "radius = 0.3").replace("truncation_radius = 6.0",
                                                                 "truncation_radius = 1.2")
                .replace("target_h = 0.033", "target_h = 0.04\nfar_h = 0.04"))
        (tmp_path / "s.cfg").write_text(text)
        same = 1.0
        for d in ("a", "b"):
            assert main(["run", str(tmp_path / "s.cfg"), "--out", str(tmp_path / d)]) == 0
            assert main(["mesh", str(tmp_path / "s.cfg"), "--out", str(tmp_path / d / "m")]) == 0
        for name in ("rcs.csv", "rcs_mie.csv", "re_vs_oracle.csv", "m/mesh.txt", "m/mesh_summary.csv"):
            if (tmp_path / "a" / name).read_bytes() != (tmp_path / "b" / name).read_bytes():
                same = 0.0
        c.check("byte_identical_reruns", same, same == 1.0, "== 1")


# ---------------------------------------------------------------------------
# further quantitative claims
# ---------------------------------------------------------------------------

def test_re_vs_mie_decreases_over_ladder():
    mie = mie_reference(_bundled("cylinder_rcs.cfg"))
    re = [relative_error_rcs(_rcs("cylinder_rcs.cfg", h), mie) for h in (0.08, 0.04, 0.02, 0.01)]
    print("RE vs Mie over h = 0.08, 0.04, 0.02, 0.01:", ", ".join(f"{v:.3g}" for v in re))
    assert all(b < a for a, b in zip(re, re[1:]))


@pytest.mark.xfail(strict=True, reason="P1 dispersion in the exterior: max 0.57-0.76 dB at "
                                       "pattern nulls with the consistent mass")
def test_rcs_within_half_db_of_mie_h002():
    mie = mie_reference(_bundled("cylinder_rcs.cfg"))
    d = np.abs(_rcs("cylinder_rcs.cfg", 0.02).values - mie.values).max()
    print(f"max |dB| vs Mie at h = 0.02: {d:.3f}")
    assert d <= 0.5


def test_rcs_within_half_db_of_mie_h002_blended_mass():
    mie = mie_reference(_bundled("cylinder_rcs.cfg"))
    d = np.abs(_rcs("cylinder_rcs.cfg", 0.02, mass_blend=0.5).values - mie.values).max()
    print(f"max |dB| vs Mie at h = 0.02 with mass_blend = 0.5: {d:.3f}")
    assert d <= 0.5


def test_hybrid_vs_fem_rcs_within_half_db_cuboid():
    cfg = _bundled("cuboid_compare.cfg")
    mesh = build_scene(cfg)
    a = compute_rcs(solve_hybrid(cfg, mesh), rcs_angles(360))
    b = compute_rcs(solve_fem(cfg, mesh), rcs_angles(360))
    d = np.abs(a.values - b.values).max()
    print(f"max |dB| hybrid vs FEM, cuboid at h = {cfg.mesh['target_h']}: {d:.3f}")
    assert d <= 0.5
