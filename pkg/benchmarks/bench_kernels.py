"""Time the numba and numpy kernels side by side.

Usage::

    python3 benchmarks/bench_kernels.py [--h 0.05] [--repeat 5]

Each kernel is called once untimed (numba compiles on first use) and then
``repeat`` times; the best wall time is reported.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from ringflow import generate_mesh, kernels, preset, solve_sweep
from ringflow.fields import recover_gradient
from ringflow.solver import EPS_REG, _Assembler
from ringflow.streamline import Tracer, boundary_seeds


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(h):
    mesh = generate_mesh(preset("square"), h)
    field = solve_sweep(mesh, [16.0])[16.0]
    grad = recover_gradient(field)
    rng = np.random.default_rng(0)
    asm = _Assembler(mesh)
    order = np.flatnonzero(asm.is_free)
    u = field.values.copy()
    pts = rng.uniform(-1, 1, size=(20_000, 2))
    a = rng.uniform(-1, 1, size=(2_000, 2))
    idx = kernels.SegmentIndex(a, a + rng.normal(scale=0.02, size=a.shape))
    seeds = boundary_seeds(mesh.ring, 16)
    mesh_args = (u, mesh.triangles, mesh.basis_gradients, mesh.areas, 16.0, EPS_REG)

    def relax(fn):
        return lambda: fn(u.copy(), order, asm.vt_ptr, asm.vt_tri, asm.vt_loc, mesh.triangles,
                          mesh.basis_gradients, mesh.areas, 16.0, EPS_REG, 1e-12, np.zeros(len(order)))

    def trace(flag):
        def run():
            kernels.USE_NUMBA = flag
            tracer = Tracer(grad)
            for x in seeds:
                tracer.trace(x)
        return run

    return mesh, {
        "assemble_p": (lambda: kernels.assemble_p_numba(*mesh_args), lambda: kernels.assemble_p_numpy(*mesh_args)),
        "relax (1 sweep)": (relax(kernels.relax_numba), relax(kernels.relax_numpy)),
        "locate (20k pts)": (lambda: mesh.locator.locate(pts, "numba"), lambda: mesh.locator.locate(pts, "numpy")),
        "segment_query (20k pts)": (lambda: idx.query(pts, 0.1, "numba"), lambda: idx.query(pts, 0.1, "numpy")),
        "trace (16 seeds)": (trace(True), trace(False)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--h", type=float, default=0.05)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    saved = kernels.USE_NUMBA
    mesh, table = cases(args.h)
    print(f"square ring, h={args.h}: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles")
    print(f"{'kernel':<26}{'numba [ms]':>12}{'numpy [ms]':>12}{'speed-up':>10}")
    try:
        for name, (fast, slow) in table.items():
            tf = best_of(fast, args.repeat)
            ts = best_of(slow, args.repeat)
            print(f"{name:<26}{1e3 * tf:>12.2f}{1e3 * ts:>12.2f}{ts / tf:>9.1f}x")
    finally:
        kernels.USE_NUMBA = saved


if __name__ == "__main__":
    main()
