import numpy as np
import pytest

from conftest import fields_for, mesh_for
from ringflow import solve_p_laplace, solve_sweep
from ringflow.closed_forms import annulus_oracle
from ringflow.errors import ConvergenceError, DomainError
from ringflow.mesh import INNER, OUTER
from ringflow.solver import P_MAX, continuation_schedule


def test_schedule():
    assert continuation_schedule(2) == [2.0]
    assert continuation_schedule(64) == [2.0, 4.0, 8.0, 16.0, 32.0, 64.0]
    assert continuation_schedule(10) == [2.0, 4.0, 8.0, 10.0]


@pytest.mark.parametrize("p", [1.5, 2.0 - 1e-9, P_MAX * 2, np.inf, np.nan])
def test_bad_exponent(p):
    with pytest.raises(DomainError):
        solve_p_laplace(mesh_for("annulus", 0.1), p)


@pytest.mark.parametrize("tol", [0.0, 1e-3])
def test_bad_tolerance(tol):
    with pytest.raises(DomainError):
        solve_p_laplace(mesh_for("annulus", 0.1), 4.0, tol=tol)


def test_empty_sweep():
    with pytest.raises(DomainError):
        solve_sweep(mesh_for("annulus", 0.1), [])


def test_harmonic_matches_log():
    f = fields_for("annulus", 0.05, (2.0,))[2.0]
    r = np.linalg.norm(f.mesh.vertices, axis=1)
    err = np.max(np.abs(f.values - np.log(2 / r) / np.log(2)))
    assert err <= 2e-3
    assert f.report.final_residual <= 1e-10


def test_annulus_p4_coarse(coarse_annulus):
    f = coarse_annulus
    err = np.max(np.abs(f.values - annulus_oracle(4.0, 1.0, 2.0)(f.mesh.vertices)))
    assert err <= 2e-3


@pytest.mark.parametrize("name", ["square", "hexagon"])
def test_boundary_values_and_max_principle(name):
    fs = fields_for(name, 0.1, (4.0, 16.0, 64.0))
    for f in fs.values():
        tags = f.mesh.boundary_tags
        assert np.all(f.values[tags == OUTER] == 0.0)
        assert np.all(f.values[tags == INNER] == 1.0)
        assert f.values.min() >= -1e-10 and f.values.max() <= 1 + 1e-10


@pytest.mark.parametrize("name", ["square", "truncated-square"])
def test_monotone_in_p(name):
    fs = fields_for(name, 0.1, (4.0, 16.0, 32.0, 64.0))
    ps = sorted(fs)
    for lo, hi in zip(ps[:-1], ps[1:]):
        assert np.min(fs[hi].values - fs[lo].values) >= -1e-6


def test_energy_descent_and_report():
    f = fields_for("square", 0.1, (4.0, 16.0, 64.0))[64.0]
    rep = f.report
    assert rep.converged
    assert [s.p for s in rep.stages] == [2.0, 4.0, 8.0, 16.0, 32.0, 64.0]
    for s in rep.stages:
        e = np.asarray(s.energies)
        assert np.all(np.diff(e) <= 1e-12 * np.abs(e[:-1]))
    text = rep.to_text()
    assert text.startswith("p = 64\n") and "stage p=32" in text


def test_sweep_equals_single_solve():
    m = mesh_for("hexagon", 0.1)
    a = solve_sweep(m, [8.0])[8.0]
    b = fields_for("hexagon", 0.1, (4.0, 16.0, 64.0))
    c = solve_sweep(m, [4.0, 8.0])[8.0]
    np.testing.assert_allclose(a.values, c.values, atol=1e-9)
    assert set(b) == {4.0, 16.0, 64.0}


def test_convergence_error_carries_history():
    with pytest.raises(ConvergenceError) as info:
        solve_sweep(mesh_for("square", 0.1), [4.0], max_iter=0)
    assert len(info.value.history) >= 1


def test_field_is_read_only(coarse_annulus):
    with pytest.raises(ValueError):
        coarse_annulus.values[0] = 0.5


def test_field_call_interpolates(coarse_annulus):
    v = coarse_annulus(np.array([(1.5, 0.0), (0.0, -1.5)]))
    exact = annulus_oracle(4.0, 1.0, 2.0)(np.array([(1.5, 0.0)]))[0]
    np.testing.assert_allclose(v, exact, atol=3e-3)
