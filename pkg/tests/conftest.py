import functools

import numpy as np
import pytest

from ringflow import generate_mesh, preset, recover_gradient, solve_sweep
from ringflow.ridge import boundary_speed, build_ridge

_ACCEPTANCE_LINES: list[str] = []


@functools.lru_cache(maxsize=None)
def mesh_for(name: str, h: float):
    return generate_mesh(preset(name), h)


@functools.lru_cache(maxsize=None)
def fields_for(name: str, h: float, ps: tuple):
    return solve_sweep(mesh_for(name, h), list(ps))


@functools.lru_cache(maxsize=None)
def pipeline_for(name: str, h: float, p: float, ps: tuple | None = None):
    """(field, gradient, boundary profile, ridge) at exponent ``p``."""
    f = fields_for(name, h, ps or (p,))[p]
    grad = recover_gradient(f)
    profile = boundary_speed(f)
    return f, grad, profile, build_ridge(f, profile, grad)


@pytest.fixture(scope="session")
def coarse_square():
    return fields_for("square", 0.05, (4.0, 16.0))


@pytest.fixture(scope="session")
def coarse_annulus():
    return fields_for("annulus", 0.05, (4.0,))[4.0]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
