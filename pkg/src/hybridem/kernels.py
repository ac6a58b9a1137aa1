"""Kernel backend selection.

The compiled extension ``hybridem._kernels`` is used when importable;
otherwise, or when the environment variable ``HYBRIDEM_PURE_PYTHON`` is set
to a non-empty value other than ``0``, the numpy fallback is used.
``BACKEND`` names the active implementation.
"""

from __future__ import annotations

import logging
import os

import numpy as np

from . import _kernels_py

log = logging.getLogger(__name__)


def _select():
    if os.environ.get("HYBRIDEM_PURE_PYTHON", "0") not in ("", "0"):
        return _kernels_py, "python"
    try:
        from . import _kernels  # type: ignore[attr-defined]
    except ImportError as exc:
        log.info("compiled kernels unavailable (%s); using numpy fallback", exc)
        return _kernels_py, "python"
    return _kernels, "compiled"


_impl, BACKEND = _select()


def panel_integrals(points, contour_xy, k, n_inner=8, nsub=1, near_factor=1.0,
                    small_arg=0.1, impl=None):
    """Rooftop-weighted integrals of G and dG/dn' (see ``_kernels_py``)."""
    mod = impl or _impl
    return mod.panel_integrals(
        np.ascontiguousarray(points, dtype=float).reshape(-1, 2),
        np.ascontiguousarray(contour_xy, dtype=float),
        complex(k), int(n_inner), int(nsub), float(near_factor), float(small_arg),
    )


def farfield_sum(x, y, ux, uy, alpha, beta, angles, k, impl=None):
    mod = impl or _impl
    f = lambda a, t: np.ascontiguousarray(a, dtype=t)  # noqa: E731
    return mod.farfield_sum(
        f(x, float), f(y, float), f(ux, float), f(uy, float),
        f(alpha, complex), f(beta, complex), f(angles, float), complex(k),
    )


class PointLocator:
    """Bucket-grid triangle lookup for barycentric interpolation."""

    def __init__(self, nodes, triangles, cell=None):
        self.nodes = np.ascontiguousarray(nodes, dtype=float)
        self.tris = np.ascontiguousarray(triangles, dtype=np.int64)
        v = self.nodes[self.tris]
        lo = v.min(axis=1)
        hi = v.max(axis=1)
        if cell is None:
            cell = 2.0 * float(np.median(np.max(hi - lo, axis=1)))
        self.cell = float(cell)
        self.origin = self.nodes.min(axis=0) - 1e-9 * max(1.0, self.cell)
        span = self.nodes.max(axis=0) - self.origin
        self.nx = int(np.floor(span[0] / self.cell)) + 1
        self.ny = int(np.floor(span[1] / self.cell)) + 1
        i0 = np.floor((lo - self.origin) / self.cell).astype(np.int64)
        i1 = np.floor((hi - self.origin) / self.cell).astype(np.int64)
        i1[:, 0] = np.minimum(i1[:, 0], self.nx - 1)
        i1[:, 1] = np.minimum(i1[:, 1], self.ny - 1)
        cx = i1[:, 0] - i0[:, 0] + 1
        cy = i1[:, 1] - i0[:, 1] + 1
        cnt = cx * cy
        tid = np.repeat(np.arange(len(self.tris)), cnt)
        local = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        gx = i0[tid, 0] + local % cx[tid]
        gy = i0[tid, 1] + local // cx[tid]
        cid = gy * self.nx + gx
        order = np.lexsort((tid, cid))
        self.cell_items = np.ascontiguousarray(tid[order], dtype=np.int64)
        counts = np.bincount(cid, minlength=self.nx * self.ny)
        self.cell_start = np.zeros(self.nx * self.ny + 1, dtype=np.int64)
        np.cumsum(counts, out=self.cell_start[1:])

    def locate(self, points, impl=None):
        """Return (triangle index or -1, barycentric coordinates)."""
        mod = impl or _impl
        return mod.locate_points(
            np.ascontiguousarray(points, dtype=float).reshape(-1, 2),
            self.nodes, self.tris, self.cell_start, self.cell_items,
            (float(self.origin[0]), float(self.origin[1])), self.cell, self.nx, self.ny,
        )
