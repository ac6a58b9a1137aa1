"""Compare the compiled kernels with the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeat N] [--quick]

Each kernel runs on the workload sizes it sees in a production solve
(contour assembly at 320 segments, the far-field sum for a cylinder at
h = 0.033, point location for a near-field grid). The best of ``--repeat``
wall-clock timings is reported together with the largest relative
difference between the two backends.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from hybridem import _kernels_py, kernels
from hybridem.meshgen import generate_disk_mesh

try:
    from hybridem import _kernels as _compiled
except ImportError:  # pragma: no cover
    _compiled = None


def _best(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _rel(a, b):
    a = np.concatenate([np.ravel(x) for x in (a if isinstance(a, tuple) else (a,))])
    b = np.concatenate([np.ravel(x) for x in (b if isinstance(b, tuple) else (b,))])
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))


def workloads(quick):
    rng = np.random.default_rng(0)
    n_seg = 80 if quick else 320
    t = 2 * np.pi * (np.arange(n_seg) + 0.5) / n_seg
    xy = 0.5 * np.column_stack([np.cos(t), np.sin(t)])
    k = 2 * np.pi * 300e6 / 299792458.0 * np.sqrt(2.3)
    obs = xy * 1.0001

    n_ff = 20_000 if quick else 120_000
    r = rng.uniform(1.5, 2.0, n_ff)
    th = rng.uniform(0, 2 * np.pi, n_ff)
    ff = (r * np.cos(th), r * np.sin(th), rng.normal(size=n_ff), rng.normal(size=n_ff),
          rng.normal(size=n_ff) + 1j * rng.normal(size=n_ff),
          rng.normal(size=n_ff) + 1j * rng.normal(size=n_ff),
          np.radians(np.arange(360.0)), 2 * np.pi)

    mesh = generate_disk_mesh(1.0, target_h=0.05 if quick else 0.02)
    g = np.linspace(-0.95, 0.95, 100 if quick else 300)
    pts = np.stack(np.meshgrid(g, g), -1).reshape(-1, 2)
    loc = kernels.PointLocator(mesh.nodes, mesh.triangles)

    return [
        (f"panel_integrals ({n_seg} segments)",
         lambda m: kernels.panel_integrals(obs, xy, k, impl=m)),
        (f"farfield_sum ({n_ff} samples x 360 angles)",
         lambda m: kernels.farfield_sum(*ff, impl=m)),
        (f"locate ({len(pts)} points, {mesh.n_triangles} triangles)",
         lambda m: loc.locate(pts, impl=m)),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="smaller workloads")
    args = ap.parse_args(argv)
    if _compiled is None:
        print("compiled extension not built; only the numpy fallback is available")
        return 1
    print(f"{'kernel':50s} {'compiled s':>11s} {'python s':>11s} {'speedup':>8s} {'max rel diff':>13s}")
    for name, run in workloads(args.quick):
        tc, oc = _best(lambda: run(_compiled), args.repeat)
        tp, op = _best(lambda: run(_kernels_py), args.repeat)
        if name.startswith("locate"):
            diff = float(np.any(oc[0] != op[0])) if isinstance(oc, tuple) else float(np.any(oc != op))
        else:
            diff = _rel(oc, op)
        print(f"{name:50s} {tc:11.4f} {tp:11.4f} {tp / tc:8.1f} {diff:13.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
