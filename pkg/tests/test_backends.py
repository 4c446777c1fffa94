"""The numba and numpy kernels must agree."""

import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import fields_for, mesh_for
from ringflow import kernels, solve_sweep
from ringflow.fields import recover_gradient
from ringflow.solver import EPS_REG, _Assembler, dirichlet_values
from ringflow.streamline import Tracer, boundary_seeds


@pytest.fixture(scope="module")
def mesh():
    return mesh_for("truncated-square", 0.1)


@pytest.mark.parametrize("p", [2.0, 4.0, 64.0])
def test_assemble(mesh, p, rng):
    u = rng.random(mesh.n_vertices)
    args = (u, mesh.triangles, mesh.basis_gradients, mesh.areas, p, EPS_REG)
    e0, g0, h0 = kernels.assemble_p_numpy(*args)
    e1, g1, h1 = kernels.assemble_p_numba(*args)
    assert e1 == pytest.approx(e0, rel=1e-12)
    np.testing.assert_allclose(g1, g0, rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(h1, h0, rtol=1e-10, atol=1e-14)


def test_relax(mesh, rng):
    asm = _Assembler(mesh)
    u0 = dirichlet_values(mesh)
    u0[asm.is_free] = rng.random(int(asm.is_free.sum()))
    order = np.flatnonzero(asm.is_free)
    out = []
    for fn in (kernels.relax_numpy, kernels.relax_numba):
        u, ch = u0.copy(), np.zeros(len(order))
        big = fn(u, order, asm.vt_ptr, asm.vt_tri, asm.vt_loc, mesh.triangles, mesh.basis_gradients, mesh.areas,
                 8.0, EPS_REG, 1e-14, ch)
        out.append((u, ch, big))
    np.testing.assert_allclose(out[1][0], out[0][0], atol=1e-12)
    np.testing.assert_allclose(out[1][1], out[0][1], atol=1e-12)
    assert out[1][2] == pytest.approx(out[0][2], abs=1e-12)


def test_locate(mesh, rng):
    pts = rng.uniform(-1.1, 1.1, size=(500, 2))
    t0, b0 = mesh.locator.locate(pts, backend="numpy")
    t1, b1 = mesh.locator.locate(pts, backend="numba")
    np.testing.assert_array_equal(t0, t1)
    np.testing.assert_allclose(b0[t0 >= 0], b1[t1 >= 0], atol=1e-14)
    assert (t0 == -1).any() and (t0 >= 0).any()


@pytest.mark.parametrize("radius", [0.05, np.inf])
def test_segment_query(rng, radius):
    a = rng.uniform(-1, 1, size=(300, 2))
    b = a + rng.normal(scale=0.05, size=a.shape)
    idx = kernels.SegmentIndex(a, b)
    pts = rng.uniform(-1.2, 1.2, size=(400, 2))
    d0, s0, t0 = idx.query(pts, radius, backend="numpy")
    d1, s1, t1 = idx.query(pts, radius, backend="numba")
    np.testing.assert_allclose(d0, d1, atol=1e-14)
    hit = np.isfinite(d0)
    np.testing.assert_array_equal(s0[hit], s1[hit])
    np.testing.assert_allclose(t0[hit], t1[hit], atol=1e-12)


def _hausdorff(a, b):
    ia = kernels.SegmentIndex(a[:-1], a[1:])
    ib = kernels.SegmentIndex(b[:-1], b[1:])
    return max(ia.query(b, np.inf)[0].max(), ib.query(a, np.inf)[0].max())


def test_trace(monkeypatch):
    f = fields_for("square", 0.1, (4.0, 16.0, 64.0))[16.0]
    grad = recover_gradient(f)
    seeds = boundary_seeds(f.mesh.ring, 12)
    monkeypatch.setattr(kernels, "USE_NUMBA", True)
    fast = [Tracer(grad).trace(x) for x in seeds]
    monkeypatch.setattr(kernels, "USE_NUMBA", False)
    slow = [Tracer(grad).trace(x) for x in seeds]
    for a, b in zip(fast, slow):
        assert a.termination == b.termination
        # last-ulp differences can shift the adaptive steps, so compare curves, not samples
        assert _hausdorff(a.points, b.points) <= f.mesh.h / 100
        assert abs(a.values[-1] - b.values[-1]) <= f.mesh.h / 100


def test_solve(monkeypatch):
    m = mesh_for("hexagon", 0.1)
    monkeypatch.setattr(kernels, "USE_NUMBA", False)
    slow = solve_sweep(m, [4.0])[4.0]
    monkeypatch.setattr(kernels, "USE_NUMBA", True)
    fast = solve_sweep(m, [4.0])[4.0]
    np.testing.assert_allclose(fast.values, slow.values, atol=1e-9)


@pytest.mark.parametrize("value, name", [("numpy", "numpy"), ("NumPy ", "numpy"), ("numba", "numba")])
def test_environment_selects_backend(value, name):
    env = {**os.environ, "RINGFLOW_BACKEND": value}
    out = subprocess.run(
        [sys.executable, "-c", "from ringflow import _backend; print(_backend.backend_name())"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == name
