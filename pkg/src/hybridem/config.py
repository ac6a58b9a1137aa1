"""Scene configuration files.

Configs are INI files read with :mod:`configparser`. Every key is optional
except ``[scene] study`` and ``[scene] geometry``; defaults match the
bundled cylinder scene. Lengths are metres, frequencies hertz.

Sections
--------
``[scene]``
    ``study`` (solve, rcs, nearfield, convergence, skin, compare),
    ``geometry`` (cylinder, square, cable, file), ``frequency``,
    ``direction_deg``, ``amplitude``, ``sie`` (``all``, ``none`` or a
    comma list of contour ids).
``[geometry]``
    ``radius`` / ``side``, ``eps_r``, ``mu_r``, ``sigma``,
    ``truncation_radius``, ``mesh_file``; cable keys are the fields of
    :class:`~hybridem.meshgen.CableGeometry` (``layer_eps`` and
    ``conductor_angles`` as comma lists).
``[mesh]``
    ``target_h``, ``far_h``, ``near_margin``, ``grading``, ``h_max``.
``[solver]``
    ``mass_blend``.
``[rcs]``
    ``n_angles``, ``radius``, ``width``, ``incident_model``,
    ``reference`` (mie, fem, none).
``[nearfield]``
    ``origin_x``, ``origin_y``, ``spacing``, ``nx``, ``ny``.
``[convergence]``
    ``ladder`` (comma list of ``target_h``), ``reference`` (fem, mie).
``[skin]``
    ``hybrid_ladder``, ``fem_ladder`` (comma lists of ``h_inner``),
    ``tolerance``, ``element_budget``, ``grid_spacing``, ``repeats``.
``[selfcheck]``
    Tolerances used by ``--self-check``; see :data:`SELFCHECK_DEFAULTS`.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

STUDIES = ("solve", "rcs", "nearfield", "convergence", "skin", "compare")
GEOMETRIES = ("cylinder", "square", "cable", "file")

SELFCHECK_DEFAULTS = {
    "rcs_re_max": 1e-2,
    "compare_re_max": 2e-3,
    "nearfield_rel": 0.02,
    "nearfield_fraction": 0.9,
    "nearfield_max": 0.05,
    "convergence_final_max": 1e-3,
    "skin_peak_lo": 0.99,
    "skin_peak_hi": 1.01,
    "skin_unknowns_max": 0.5,
    "skin_time_max": 0.5,
}


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass
class SceneConfig:
    """Everything a run needs, resolved from a config file."""

    study: str
    geometry: str
    frequency: float = 300e6
    direction_deg: float = 0.0
    amplitude: complex = 1.0
    sie: str = "all"
    shape: dict = field(default_factory=dict)
    mesh: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    rcs: dict = field(default_factory=dict)
    nearfield: dict = field(default_factory=dict)
    convergence: dict = field(default_factory=dict)
    skin: dict = field(default_factory=dict)
    selfcheck: dict = field(default_factory=lambda: dict(SELFCHECK_DEFAULTS))
    source: Path | None = None

    @property
    def omega(self) -> float:
        return 2.0 * math.pi * self.frequency

    def sie_ids(self, n_objects: int) -> list:
        """Contour ids to replace by equivalent models."""
        s = self.sie.strip().lower()
        if s == "all":
            return list(range(n_objects))
        if s == "none":
            return []
        try:
            ids = [int(v) for v in s.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"sie must be all, none or a list of ids, got {self.sie!r}") from None
        bad = [i for i in ids if not 0 <= i < n_objects]
        if bad:
            raise ConfigError(f"sie ids {bad} do not name object contours")
        return ids


def parse_list(text: str) -> list:
    """Comma- or whitespace-separated floats."""
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"expected a list of numbers, got {text!r}") from None


def _number(section: str, key: str, raw: str):
    try:
        v = float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected a number, got {raw!r}") from None
    if not math.isfinite(v):
        raise ConfigError(f"[{section}] {key} must be finite")
    return v


_LIST_KEYS = {"ladder", "hybrid_ladder", "fem_ladder", "layer_eps", "conductor_angles"}
_TEXT_KEYS = {"mesh_file", "incident_model", "reference"}


def _section(cp: configparser.ConfigParser, name: str) -> dict:
    if not cp.has_section(name):
        return {}
    out = {}
    for key, raw in cp.items(name):
        if key in _TEXT_KEYS:
            out[key] = raw.strip()
        elif key in _LIST_KEYS:
            out[key] = parse_list(raw)
        else:
            out[key] = _number(name, key, raw)
    return out


def parse_config(text: str, source: Path | None = None) -> SceneConfig:
    """Parse config text; raises :class:`ConfigError`."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    known = {"scene", "geometry", "mesh", "solver", "rcs", "nearfield", "convergence", "skin",
             "selfcheck"}
    unknown = set(cp.sections()) - known
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}")
    if not cp.has_section("scene"):
        raise ConfigError("missing [scene] section")
    sc = cp["scene"]
    study = sc.get("study", "").strip().lower()
    if study not in STUDIES:
        raise ConfigError(f"study must be one of {STUDIES}, got {study!r}")
    geometry = sc.get("geometry", "").strip().lower()
    if geometry not in GEOMETRIES:
        raise ConfigError(f"geometry must be one of {GEOMETRIES}, got {geometry!r}")
    extra = set(sc.keys()) - {"study", "geometry", "frequency", "direction_deg", "amplitude", "sie"}
    if extra:
        raise ConfigError(f"unknown [scene] keys {sorted(extra)}")
    try:
        amplitude = complex(sc.get("amplitude", "1").replace(" ", ""))
    except ValueError:
        raise ConfigError("amplitude must be a complex number such as 1 or 1+0.5j") from None
    cfg = SceneConfig(
        study=study,
        geometry=geometry,
        frequency=_number("scene", "frequency", sc.get("frequency", "300e6")),
        direction_deg=_number("scene", "direction_deg", sc.get("direction_deg", "0")),
        amplitude=amplitude,
        sie=sc.get("sie", "all"),
        shape=_section(cp, "geometry"),
        mesh=_section(cp, "mesh"),
        solver=_section(cp, "solver"),
        rcs=_section(cp, "rcs"),
        nearfield=_section(cp, "nearfield"),
        convergence=_section(cp, "convergence"),
        skin=_section(cp, "skin"),
        source=source,
    )
    sel = _section(cp, "selfcheck")
    bad = set(sel) - set(SELFCHECK_DEFAULTS)
    if bad:
        raise ConfigError(f"unknown [selfcheck] keys {sorted(bad)}")
    cfg.selfcheck.update(sel)
    validate_config(cfg)
    return cfg


def load_config(path) -> SceneConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, source=path)


def validate_config(cfg: SceneConfig) -> None:
    """Check the invariants that do not need a mesh."""
    if not cfg.frequency > 0:
        raise ConfigError("frequency must be positive")
    g = cfg.shape
    if cfg.geometry in ("cylinder", "square"):
        size_key = "radius" if cfg.geometry == "cylinder" else "side"
        size = g.get(size_key, 1.0 if size_key == "radius" else 2.0)
        if not size > 0:
            raise ConfigError(f"{size_key} must be positive")
        extent = size if cfg.geometry == "cylinder" else size / math.sqrt(2.0)
        if not g.get("truncation_radius", 6.0) > extent:
            raise ConfigError("truncation_radius must exceed the object extent")
        if not cfg.mesh.get("target_h", 0.033) > 0:
            raise ConfigError("target_h must be positive")
    if cfg.geometry == "file":
        if "mesh_file" not in g:
            raise ConfigError("geometry = file needs [geometry] mesh_file")
        if cfg.study in ("convergence", "skin"):
            raise ConfigError(f"study {cfg.study} generates its own meshes; use a built-in geometry")
    if cfg.study == "skin" and cfg.geometry != "cable":
        raise ConfigError("study skin needs geometry = cable")
    if cfg.study == "convergence":
        ladder = cfg.convergence.get("ladder", [0.08, 0.04, 0.02, 0.01])
        if len(ladder) < 3:
            raise ConfigError("a convergence study needs at least 3 ladder points")
        if any(not h > 0 for h in ladder):
            raise ConfigError("ladder values must be positive")
        if cfg.convergence.get("reference", "fem") not in ("fem", "mie"):
            raise ConfigError("convergence reference must be fem or mie")
    if cfg.study == "skin":
        for key in ("hybrid_ladder", "fem_ladder"):
            lad = cfg.skin.get(key, [60e-6])
            if len(lad) < 2 or any(not h > 0 for h in lad):
                raise ConfigError(f"{key} needs at least 2 positive values")
    if cfg.rcs.get("reference", "none") not in ("mie", "fem", "none"):
        raise ConfigError("rcs reference must be mie, fem or none")
    if cfg.rcs.get("incident_model", "discrete") not in ("discrete", "analytic"):
        raise ConfigError("incident_model must be discrete or analytic")
    mb = cfg.solver.get("mass_blend", 0.0)
    if not 0.0 <= mb <= 1.0:
        raise ConfigError("mass_blend must lie in [0, 1]")
    for key in ("nx", "ny"):
        v = cfg.nearfield.get(key, 1)
        if v < 1 or v != int(v):
            raise ConfigError(f"[nearfield] {key} must be a positive integer")

