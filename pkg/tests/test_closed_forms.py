import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ringflow.closed_forms import (
    annulus_oracle,
    radial_exponent,
    radial_potential,
    radial_speed,
    square_ridge_oracle,
)
from ringflow.errors import DomainError, SingularityError


def test_punctured_disk_value():
    # 1 - 0.25**(2/3) evaluated independently
    assert radial_potential(4, 0.0, 1.0, 0.25) == pytest.approx(1 - 0.25 ** (2 / 3), rel=1e-14)
    assert radial_potential(4, 0.0, 1.0, 0.25) == pytest.approx(0.60315, abs=5e-6)


def test_cone():
    assert radial_potential(np.inf, 0.0, 1.0, 0.3) == pytest.approx(0.7)


@pytest.mark.parametrize("p", [2.0, 3.0, 4.0, 16.0, 64.0, np.inf])
@pytest.mark.parametrize("a, R", [(1.0, 2.0), (0.02, 1.0)])
def test_boundary_values(p, a, R):
    assert radial_potential(p, a, R, a) == pytest.approx(1.0)
    assert radial_potential(p, a, R, R) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("p", [3.0, 4.0, 64.0, np.inf])
def test_point_centre(p):
    assert radial_potential(p, 0.0, 1.0, 0.0) == pytest.approx(1.0)


@pytest.mark.parametrize("p", [2.5, 4.0, 10.0, 64.0])
def test_strictly_decreasing(p):
    r = np.linspace(1.0, 2.0, 200)
    assert np.all(np.diff(radial_potential(p, 1.0, 2.0, r)) < 0)


def test_radial_ode():
    # r |u'|^{p-2} u' is constant for a radial p-harmonic function
    p = 5.0
    r = np.linspace(1.1, 1.9, 9)
    flux = r * radial_speed(p, 1.0, 2.0, r) ** (p - 1)
    np.testing.assert_allclose(flux, flux[0], rtol=1e-12)


def test_harmonic_log_form():
    r = np.array([1.0, 1.5, 2.0])
    np.testing.assert_allclose(radial_potential(2.0, 1.0, 2.0, r), np.log(2 / r) / np.log(2))


def test_p64_close_to_cone():
    r = np.linspace(1.0, 2.0, 10_001)
    gap = np.max(np.abs(radial_potential(64, 1.0, 2.0, r) - radial_potential(np.inf, 1.0, 2.0, r)))
    assert gap < 0.02


@settings(max_examples=40, deadline=None)
@given(p=st.floats(2.0, 100.0), r=st.floats(1.01, 1.99))
def test_speed_is_derivative(p, r):
    step = 1e-5
    num = (radial_potential(p, 1.0, 2.0, r - step) - radial_potential(p, 1.0, 2.0, r + step)) / (2 * step)
    assert radial_speed(p, 1.0, 2.0, r) == pytest.approx(num, abs=1e-8)


def test_speed_cone_constant():
    np.testing.assert_allclose(radial_speed(np.inf, 1.0, 2.0, np.linspace(1, 2, 5)), 1.0)


def test_speed_at_rim():
    assert radial_speed(4, 0.0, 1.0, 1.0) == pytest.approx(2 / 3)


def test_speed_blows_up_at_centre():
    r = np.array([1e-3, 1e-6])
    s = radial_speed(4, 0.0, 1.0, r)
    np.testing.assert_allclose(s * r ** (1 / 3), 2 / 3, rtol=1e-12)
    with pytest.raises(SingularityError):
        radial_speed(4, 0.0, 1.0, 0.0)


@pytest.mark.parametrize(
    "args",
    [(4, 1.0, 2.0, 0.5), (4, 1.0, 2.0, 2.5), (1.5, 1.0, 2.0, 1.5), (4, 2.0, 1.0, 1.5), (2.0, 0.0, 1.0, 0.5)],
)
def test_domain_errors(args):
    with pytest.raises(DomainError):
        radial_potential(*args)


def test_exponent():
    assert radial_exponent(4) == pytest.approx(2 / 3)
    assert radial_exponent(np.inf) == 1.0
    assert radial_exponent(2) == 0.0


def test_annulus_oracle_centre():
    u = annulus_oracle(4.0, 1.0, 2.0, center=(1.0, 1.0))
    np.testing.assert_allclose(u(np.array([(2.0, 1.0), (1.0, 3.0)])), [1.0, 0.0], atol=1e-15)


class TestSquareRidgeOracle:
    def test_segments(self):
        g = square_ridge_oracle(1.0)
        ends = {tuple(np.asarray(pl[0], float)) for pl in g.polylines}
        assert ends == {(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)}
        assert all(np.allclose(pl[-1], 0) for pl in g.polylines)

    def test_scaled(self):
        g = square_ridge_oracle(2.0)
        assert g.contains(np.array([(1.5, 1.5), (-2.0, 2.0)]), 1e-12).all()

    def test_membership(self):
        g = square_ridge_oracle(1.0)
        assert g.contains(np.array([(0.5, 0.5)]), 1e-9)[0]
        assert not g.contains(np.array([(0.5, 0.4)]), 1e-3)[0]
        assert g.distance(np.array([(0.5, 0.4)]))[0] == pytest.approx(0.1 / np.sqrt(2))

    def test_bad_size(self):
        with pytest.raises(DomainError):
            square_ridge_oracle(0.0)
