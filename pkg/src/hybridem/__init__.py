"""Hybrid surface-integral / finite-element solver for 2D TM scattering.

Homogeneous objects inside a FEM domain are replaced by equivalent
surface currents ``J_s = Y_s E`` on their boundaries, so their interiors
need no fine mesh. The common entry points are re-exported here and load
on first access.
"""

from importlib import import_module

__version__ = "0.1.0"

_EXPORTS = {
    "Material": "mesh",
    "Mesh": "mesh",
    "Contour": "mesh",
    "load_mesh": "mesh",
    "save_mesh": "mesh",
    "apply_equivalence": "mesh",
    "PlaneWave": "pde",
    "HybridSystem": "pde",
    "assemble_and_solve": "pde",
    "solve_fem_baseline": "pde",
    "build_dsao": "sie",
    "compute_rcs": "post",
    "sample_near_field": "post",
    "current_density": "post",
    "MieSolution": "oracle",
    "Cylinder": "meshgen",
    "Square": "meshgen",
    "CableGeometry": "meshgen",
    "generate_annulus_scene": "meshgen",
    "generate_cable_scene": "meshgen",
    "load_config": "config",
    "run_study": "studies",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name):
    if name in _EXPORTS:
        return getattr(import_module(f".{_EXPORTS[name]}", __name__), name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
