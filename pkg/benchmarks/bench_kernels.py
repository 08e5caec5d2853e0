"""Compare the numba and pure-numpy kernel backends.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat N] [--subdiv K] [--no-end-to-end]

Each kernel is called once to warm up (this triggers jit compilation on the
numba side) and then timed as the best of ``--repeat`` calls. The end-to-end
section runs a full sphere reconstruction in two fresh interpreters, one per
value of ``SHAPEFLOW_NUMBA``, because the backend is fixed at import time.
"""
import argparse
import os
import subprocess
import sys
import time
import timeit

import numpy as np

from shapeflow.kernels import _numpy as np_backend
from shapeflow._mc_tables import TRI_TABLE
from shapeflow.levelset import GridSource, GridSpec, rasterize
from shapeflow.mesh import icosphere, vertex_normals

try:
    from shapeflow.kernels import _numba as nb_backend
except ImportError:
    nb_backend = None

END_TO_END = """
import time
from shapeflow import kernels
from shapeflow.flow import FlowConfig, run
from shapeflow.levelset import AnalyticSource
run(FlowConfig(max_iters=2, subdiv={subdiv}), AnalyticSource("sphere"))
t = time.perf_counter()
run(FlowConfig(max_iters=100, subdiv={subdiv}), AnalyticSource("sphere"))
print(kernels.backend_name(), time.perf_counter() - t)
"""


def _cases(subdiv):
    mesh = icosphere(1.1, subdiv)
    normals = vertex_normals(mesh)
    table, degree = mesh.ring_table()
    centers = np.arange(mesh.n_vertices, dtype=np.int64)
    grid = rasterize("sphere", GridSpec.cube(64))
    src = GridSource(grid)
    origin, spacing = np.asarray(grid.spec.origin), np.asarray(grid.spec.spacing)
    pts = np.random.default_rng(0).uniform(-2, 2, (20000, 3))
    values = np.ascontiguousarray(grid.values)
    return {
        "trilinear_sample (20k pts, 10 ch)": lambda b: b.trilinear_sample(src.channels, origin, spacing, pts),
        f"vertex_normal_sums ({mesh.n_faces} faces)": lambda b: b.vertex_normal_sums(mesh.vertices, mesh.faces),
        f"paraboloid_fit ({mesh.n_vertices} vertices)":
            lambda b: b.paraboloid_fit(mesh.vertices, normals, centers, table, degree),
        "mc_triangles (64^3 grid)": lambda b: b.mc_triangles(values, 0.0, TRI_TABLE),
    }


def _best(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--subdiv", type=int, default=4)
    ap.add_argument("--no-end-to-end", action="store_true")
    args = ap.parse_args(argv)

    if nb_backend is None:
        print("numba is not installed; only the numpy column is measured")
    print(f"{'kernel':<40} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for name, call in _cases(args.subdiv).items():
        t_np = _best(lambda: call(np_backend), args.repeat) * 1e3
        if nb_backend is None:
            print(f"{name:<40} {t_np:>10.2f} {'-':>10} {'-':>8}")
            continue
        t_nb = _best(lambda: call(nb_backend), args.repeat) * 1e3
        print(f"{name:<40} {t_np:>10.2f} {t_nb:>10.2f} {t_np / t_nb:>7.1f}x")

    if args.no_end_to_end:
        return
    print(f"\nsphere reconstruction, 100 iterations, subdiv {args.subdiv}:")
    code = END_TO_END.format(subdiv=args.subdiv)
    for flag in ("0", "1"):
        env = dict(os.environ, SHAPEFLOW_NUMBA=flag)
        t0 = time.perf_counter()
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        backend, seconds = out.stdout.split()
        print(f"  {backend:<6} {float(seconds):7.2f} s  (process wall time {time.perf_counter() - t0:.1f} s)")


if __name__ == "__main__":
    main()
