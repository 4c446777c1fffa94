import numpy as np
import pytest

from conftest import fields_for, mesh_for
from ringflow.closed_forms import radial_speed
from ringflow.errors import DomainError
from ringflow.fields import (
    appendix_integrals,
    check_gradient_bound,
    check_level_convexity,
    check_subharmonic,
    equicontinuity_diagnostic,
    gradient_bound,
    level_band,
    level_curves,
    recover_gradient,
)
from ringflow.mesh import INTERIOR
from ringflow.solver import ScalarField


def _field(mesh, values, p=4.0):
    return ScalarField(mesh, values, p)


class TestRecoverGradient:
    def test_linear_exact(self):
        m = mesh_for("truncated-square", 0.1)
        g = recover_gradient(_field(m, m.vertices[:, 0]))
        np.testing.assert_allclose(g.triangle, np.tile([1.0, 0.0], (m.n_triangles, 1)), atol=1e-12)
        np.testing.assert_allclose(g.vertex, np.tile([1.0, 0.0], (m.n_vertices, 1)), atol=1e-12)

    def test_constant_zero(self):
        m = mesh_for("square", 0.1)
        g = recover_gradient(_field(m, np.full(m.n_vertices, 0.3)))
        assert np.all(g.speed <= 1e-12)
        assert g.degenerate.all()

    def test_annulus_speed(self, coarse_annulus):
        g = recover_gradient(coarse_annulus)
        pts = 1.5 * np.c_[np.cos(np.linspace(0, 2 * np.pi, 16)), np.sin(np.linspace(0, 2 * np.pi, 16))]
        speed = np.linalg.norm(g.at(pts), axis=1)
        exact = radial_speed(4.0, 1.0, 2.0, 1.5)
        np.testing.assert_allclose(speed, exact, rtol=0.02)

    def test_speed_positive_in_annulus(self, coarse_annulus):
        g = recover_gradient(coarse_annulus)
        assert not g.degenerate.any()


class TestSubharmonic:
    def test_linear_is_harmonic(self):
        m = mesh_for("square", 0.05)
        assert abs(check_subharmonic(_field(m, m.vertices[:, 0] + 0.5))) <= 1e-10

    def test_annulus(self, coarse_annulus):
        assert check_subharmonic(coarse_annulus) <= 1e-3

    def test_square_p16(self, coarse_square):
        assert check_subharmonic(coarse_square[16.0]) <= 5e-3

    def test_strictly_subharmonic_detected(self):
        m = mesh_for("square", 0.05)
        # |x|^2 has Laplacian 4
        assert check_subharmonic(_field(m, np.sum(m.vertices**2, axis=1))) == pytest.approx(4.0, rel=0.02)

    def test_infinite_p(self):
        m = mesh_for("square", 0.1)
        with pytest.raises(DomainError):
            check_subharmonic(_field(m, m.vertices[:, 0], p=np.inf))


class TestLevelConvexity:
    def test_annulus_circle(self, coarse_annulus):
        assert check_level_convexity(coarse_annulus, 0.5) <= 1e-2
        (curve,) = level_curves(coarse_annulus, 0.5)
        np.testing.assert_allclose(curve[0], curve[-1])

    def test_square(self, coarse_square):
        assert check_level_convexity(coarse_square[16.0], 0.1) <= 5e-2

    @pytest.mark.parametrize("c", [1.5, 0.0, 1.0, -0.2])
    def test_outside_range(self, coarse_square, c):
        with pytest.raises(DomainError):
            check_level_convexity(coarse_square[16.0], c)

    def test_reflex_detected(self):
        # the level set of a field with a dented level curve is not convex
        m = mesh_for("annulus", 0.05)
        x, y = m.vertices.T
        r, th = np.hypot(x, y), np.arctan2(y, x)
        dented = _field(m, (2 - r * (1 + 0.1 * np.cos(4 * th))) / 1.0)
        assert check_level_convexity(dented, 0.5) > 0.1


class TestGradientBound:
    def test_formula(self):
        assert gradient_bound(4.0, 0.5) == pytest.approx(np.sqrt(2))
        assert gradient_bound(64.0, 1e-9) == pytest.approx(1.0, abs=1e-9)
        assert gradient_bound(np.inf, 0.5) == 1.0

    @pytest.mark.parametrize("p, c", [(2.0, 0.5), (4.0, 0.0), (4.0, 1.0)])
    def test_bad_args(self, p, c):
        with pytest.raises(DomainError):
            gradient_bound(p, c)

    def test_annulus_margin(self, coarse_annulus):
        assert check_gradient_bound(coarse_annulus, 0.5) >= -0.02

    @pytest.mark.parametrize("p", [4.0, 16.0])
    def test_square_margin(self, coarse_square, p):
        assert min(check_gradient_bound(coarse_square[p], c) for c in (0.25, 0.5, 0.75)) >= -0.02


@pytest.fixture(scope="module")
def sweep():
    return fields_for("square", 0.1, (4.0, 16.0, 64.0))


class TestSweepDiagnostics:
    def test_band_excludes_boundary(self, sweep):
        band = level_band(sweep[64.0], 0.3, 0.7)
        assert np.all(sweep[64.0].mesh.boundary_tags[band] == INTERIOR)

    def test_equicontinuity_shrinks_with_delta(self, sweep):
        band = level_band(sweep[64.0], 0.3, 0.7)
        fs = [sweep[4.0]]
        big = equicontinuity_diagnostic(fs, band, 0.3).moduli[0]
        small = equicontinuity_diagnostic(fs, band, 1e-6).moduli[0]
        assert small == 0.0 < big

    def test_equicontinuity_table(self, sweep):
        band = level_band(sweep[64.0], 0.3, 0.7)
        tab = equicontinuity_diagnostic(list(sweep.values()), band, 0.15)
        assert tab.ps == (4.0, 16.0, 64.0)
        assert tab.spread >= 1.0

    def test_region_touching_boundary(self, sweep):
        with pytest.raises(DomainError):
            equicontinuity_diagnostic([sweep[4.0]], np.ones(sweep[4.0].mesh.n_vertices, bool), 0.1)

    def test_integrals_self_is_zero(self, sweep):
        band = level_band(sweep[64.0], 0.3, 0.7)
        i_val, j_val = appendix_integrals(sweep[64.0], sweep[64.0], band)
        assert i_val == 0.0 and j_val > 0.0

    def test_integrals_decreasing(self, sweep):
        band = level_band(sweep[64.0], 0.3, 0.7)
        i4 = appendix_integrals(sweep[4.0], sweep[64.0], band)[0]
        i16 = appendix_integrals(sweep[16.0], sweep[64.0], band)[0]
        assert i16 < i4

    def test_integrals_mesh_mismatch(self, sweep, coarse_annulus):
        band = level_band(sweep[64.0], 0.3, 0.7)
        with pytest.raises(DomainError):
            appendix_integrals(coarse_annulus, sweep[64.0], band)
