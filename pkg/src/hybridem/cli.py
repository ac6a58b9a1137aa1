"""Command line entry point.

::

    hybridem run <config> --out <dir> [--threads N] [--self-check]
    hybridem mesh <config> --out <dir>

Exit codes: 0 success, 1 configuration error, 2 mesh error, 3 solver
error, 4 self-check mismatch.

Thread limits must be in the environment before numpy loads its BLAS, so
the numerical modules are imported only after the arguments are parsed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

log = logging.getLogger("hybridem")

EXIT_OK, EXIT_CONFIG, EXIT_MESH, EXIT_SOLVER, EXIT_ORACLE = 0, 1, 2, 3, 4
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")
MANIFEST = "manifest.json"


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_atomic(path: Path, text: str) -> None:
    """Write via a temporary file in the same directory and rename."""
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_outputs(out: Path, files: dict) -> dict:
    """Write ``{name: text}`` plus a manifest with sha256 checksums."""
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for name in sorted(files):
        data = files[name]
        write_atomic(out / name, data)
        raw = data.encode("utf-8")
        entries.append({"file": name, "bytes": len(raw), "sha256": hashlib.sha256(raw).hexdigest()})
    manifest = {"files": entries}
    write_atomic(out / MANIFEST, json.dumps(manifest, indent=2) + "\n")
    return manifest


def _result_files(result) -> dict:
    files = {f"{name}.csv": csv_text(h, rows) for name, (h, rows) in result.tables.items()}
    files["checks.csv"] = csv_text(
        ("check", "value", "bound", "passed"),
        [(c.name, c.value, c.bound, int(c.passed)) for c in result.checks])
    return files


def _cmd_run(args) -> int:
    from .studies import run_study

    cfg = _load(args.config)
    result = run_study(cfg)
    write_outputs(Path(args.out), _result_files(result))
    failed = [c for c in result.checks if not c.passed]
    for c in result.checks:
        log.info("%-30s %-12.5g %-24s %s", c.name, c.value, c.bound, "ok" if c.passed else "FAIL")
    if args.self_check and failed:
        log.error("self-check failed: %s", ", ".join(c.name for c in failed))
        return EXIT_ORACLE
    return EXIT_OK


def _cmd_mesh(args) -> int:
    import numpy as np

    from .mesh import check_conformity, format_mesh, triangle_signed_areas
    from .studies import build_scene

    cfg = _load(args.config)
    mesh = build_scene(cfg)
    issues = check_conformity(mesh)
    xy = mesh.nodes[mesh.triangles]
    edges = np.linalg.norm(xy - np.roll(xy, -1, axis=1), axis=2)
    area = triangle_signed_areas(mesh.nodes, mesh.triangles)
    quality = 4 * np.sqrt(3) * area / np.sum(edges ** 2, axis=1)
    summary = [
        ("nodes", mesh.n_nodes),
        ("triangles", mesh.n_triangles),
        ("contours", len(mesh.contours)),
        ("min_edge", float(edges.min())),
        ("max_edge", float(edges.max())),
        ("min_quality", float(quality.min())),
        ("conformity_issues", len(issues)),
    ]
    write_outputs(Path(args.out), {"mesh.txt": format_mesh(mesh),
                                   "mesh_summary.csv": csv_text(("metric", "value"), summary)})
    return EXIT_OK


def _load(path):
    from .config import load_config

    return load_config(path)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hybridem",
                                description="2D TM hybrid SIE-FEM scattering solver")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the study named in a config")
    r.add_argument("config")
    r.add_argument("--out", required=True)
    r.add_argument("--threads", type=int, default=None, help="BLAS/LAPACK thread limit")
    r.add_argument("--self-check", action="store_true",
                   help="exit 4 if any oracle or acceptance check fails")
    r.set_defaults(func=_cmd_run)
    m = sub.add_parser("mesh", help="generate and write the scene mesh")
    m.add_argument("config")
    m.add_argument("--out", required=True)
    m.add_argument("--threads", type=int, default=None)
    m.set_defaults(func=_cmd_mesh)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose > 1 else
                        logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be at least 1", file=sys.stderr)
            return EXIT_CONFIG
        for var in THREAD_VARS:
            os.environ[var] = str(args.threads)

    from .config import ConfigError
    from .mesh import MeshError
    from .oracle import OracleError
    from .pde import SolverError
    from .post import PostError
    from .sie import SingularOperatorError

    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MeshError as exc:
        print(f"mesh error: {exc}", file=sys.stderr)
        return EXIT_MESH
    except (SolverError, SingularOperatorError, PostError, OracleError, MemoryError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
