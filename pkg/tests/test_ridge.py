import numpy as np
import pytest

from conftest import mesh_for, pipeline_for
from ringflow.closed_forms import radial_speed, square_ridge_oracle
from ringflow.errors import DomainError
from ringflow.geometry import BoundaryParam
from ringflow.ridge import (
    RidgeGraph,
    arclength_of,
    boundary_speed,
    classify_meetings,
    edge_monotonicity_check,
    eikonal_check,
    level_speed_maxima,
    off_ridge_oscillation,
    quadrilateral_violations,
    upper_level_excess,
)
from ringflow.streamline import REACHED_INNER, MeetingEvent, Tracer, boundary_seeds, detect_meetings, near_inner

H = 0.05


@pytest.fixture(scope="module")
def square():
    return pipeline_for("square", H, 64.0, (32.0, 64.0))


@pytest.fixture(scope="module")
def square_sweep(square):
    f, grad, _, ridge = square
    tracer = Tracer(grad)
    sls = [tracer.trace(x) for x in boundary_seeds(f.mesh.ring, 64)]
    return sls, detect_meetings(sls, H, exclude=near_inner(f.mesh.ring, 2 * H))


class TestBoundarySpeed:
    def test_square_extrema(self, square):
        prof = square[2]
        np.testing.assert_allclose(sorted(m.s for m in prof.minima), [0, 2, 4, 6], atol=1e-9)
        np.testing.assert_allclose(sorted(m.s for m in prof.maxima), [1, 3, 5, 7], atol=2 * H)
        assert prof.alternates()
        assert not prof.full_flat

    def test_vertices_are_slow(self, square):
        prof = square[2]
        corner = np.isin(np.round(prof.s, 9), [0.0, 2.0, 4.0, 6.0])
        assert prof.speed[corner].max() <= 0.05 * prof.speed.max()

    def test_annulus_flat(self):
        prof = pipeline_for("annulus", H, 64.0)[2]
        assert prof.full_flat
        assert prof.minima == [] and prof.maxima == []

    def test_hexagon(self):
        prof = pipeline_for("hexagon", H, 64.0)[2]
        assert len(prof.minima) == 6 and len(prof.maxima) == 6
        assert prof.alternates()

    def test_too_few_samples(self, square):
        with pytest.raises(DomainError):
            boundary_speed(square[0], 32)

    def test_samples_on_boundary(self, square):
        prof = square[2]
        ring = square[0].mesh.ring
        np.testing.assert_allclose(ring.omega.signed_distance(prof.points), 0, atol=1e-12)
        assert prof.perimeter == pytest.approx(8.0)


class TestEdgeMonotonicity:
    def test_square(self, square):
        assert max(edge_monotonicity_check(square[2], e) for e in range(4)) <= 1e-3

    def test_hexagon(self):
        prof = pipeline_for("hexagon", H, 64.0)[2]
        assert max(edge_monotonicity_check(prof, e) for e in range(6)) <= 1e-3

    def test_annulus_has_no_edges(self):
        with pytest.raises(DomainError):
            edge_monotonicity_check(pipeline_for("annulus", H, 64.0)[2], 0)


class TestBuildRidge:
    def test_square_diagonals(self, square):
        ridge = square[3]
        assert len(ridge) == 4
        assert ridge.hausdorff(square_ridge_oracle(1.0), H / 4) <= 2 * H
        assert all(s.termination == REACHED_INNER for s in ridge.streamlines)
        np.testing.assert_allclose(np.abs(ridge.sources), 1.0)

    def test_truncated_square(self):
        ridge = pipeline_for("truncated-square", H, 64.0)[3]
        src = {tuple(np.round(s, 9)) for s in ridge.sources}
        assert (-0.8, -1.0) in src and (-1.0, -0.8) in src
        cut = [i for i, s in enumerate(ridge.sources) if tuple(np.round(s, 9)) in {(-0.8, -1.0), (-1.0, -0.8)}]
        merged = [m for m in ridge.merges if set(m.ids) == set(cut)]
        assert len(merged) == 1
        # the pair joins on the bisector before reaching the origin
        x, y = merged[0].point
        assert abs(x - y) <= 2 * H and np.hypot(x, y) > 4 * H

    def test_annulus_empty(self):
        ridge = pipeline_for("annulus", H, 64.0)[3]
        assert ridge.empty and len(ridge) == 0
        assert np.all(np.isinf(ridge.distance(np.array([(1.5, 0.0)]))))


class TestRidgeGraph:
    def test_distance_and_sampling(self):
        g = square_ridge_oracle(1.0)
        pts = g.sample(0.01)
        assert np.all(g.distance(pts) <= 1e-12)
        assert g.distance(np.array([(0.0, -1.0)]))[0] == pytest.approx(np.sqrt(2) / 2)
        assert np.isinf(g.distance(np.array([(0.0, -1.0)]), radius=0.5)[0])
        np.testing.assert_allclose(g.terminals, np.zeros((4, 2)))

    def test_hausdorff_of_shift(self):
        g = square_ridge_oracle(1.0)
        shifted = RidgeGraph([pl + (0.03, 0.0) for pl in g.polylines], g.sources, g.source_s)
        assert g.hausdorff(shifted, 0.005) == pytest.approx(0.03, abs=1e-3)
        assert g.hausdorff(g, 0.01) == 0.0

    def test_members(self):
        g = square_ridge_oracle(1.0)
        d = g.distance(np.array([(0.5, 0.5)]), members=[0])
        assert d[0] == pytest.approx(np.sqrt(2) * 0.5)


class TestMeetingClassification:
    def test_square_meetings_on_ridge(self, square, square_sweep):
        sls, meets = square_sweep
        on, off = classify_meetings(meets, square[3], 2 * H)
        assert len(meets) > 0 and off == []
        assert len(on) == len(meets)

    def test_annulus_no_meetings(self):
        f, grad, _, ridge = pipeline_for("annulus", H, 64.0)
        tracer = Tracer(grad)
        sls = [tracer.trace(x) for x in boundary_seeds(f.mesh.ring, 64)]
        assert detect_meetings(sls, H, exclude=near_inner(f.mesh.ring, 2 * H)) == []

    def test_off_ridge_event(self, square):
        ev = MeetingEvent((0.0, -0.5), (0, 1), (0.1, 0.1))
        on, off = classify_meetings([ev], square[3], 2 * H)
        assert on == [] and off == [ev]

    def test_truncated_cut_corner_meets_attracting_pair(self):
        f, grad, _, ridge = pipeline_for("truncated-square", H, 64.0)
        tracer = Tracer(grad)
        cut = [i for i, s in enumerate(ridge.sources) if tuple(np.round(s, 9)) in {(-0.8, -1.0), (-1.0, -0.8)}]
        for seed in [(-0.85, -0.95), (-0.95, -0.85)]:
            s = tracer.trace(seed)
            d = ridge.distance(s.points, members=cut)
            assert d[~near_inner(f.mesh.ring, 2 * H)(s.points)].min() <= 2 * H


class TestQuadrilateral:
    def test_square_sweep(self, square, square_sweep):
        sls, meets = square_sweep
        assert quadrilateral_violations(square[0].mesh.ring, sls, meets, square[3], 2 * H) == []

    def test_sector_violation_detected(self, square, square_sweep):
        sls, _ = square_sweep
        # a meeting in the middle of the bottom sector, far from both bounding diagonals
        i = next(k for k, s in enumerate(sls) if np.allclose(s.seed, (-0.25, -1.0)))
        j = next(k for k, s in enumerate(sls) if np.allclose(s.seed, (0.25, -1.0)))
        fake = MeetingEvent((0.0, -0.5), (i, j), (0.3, 0.3))
        bad = quadrilateral_violations(square[0].mesh.ring, sls, [fake], square[3], 2 * H)
        assert bad == [fake]


def test_arclength_of():
    bp = BoundaryParam.of(mesh_for("square", 0.1).ring.omega)
    assert arclength_of(bp, (0.5, -1.0)) == pytest.approx(1.5)
    assert arclength_of(bp, (-1.0, 0.0)) == pytest.approx(7.0)


class TestEikonal:
    def test_rectangle(self):
        f, grad, prof, _ = pipeline_for("rectangle", 0.02, 64.0)
        assert len(prof.plateaus) == 2
        rep = eikonal_check(grad, prof)
        assert rep.max_deviation <= 2 * 0.02
        assert rep.meetings == []

    def test_annulus_full_flat(self):
        f, grad, prof, _ = pipeline_for("annulus", H, 64.0)
        rep = eikonal_check(grad, prof, seeds_per_arc=12)
        assert len(rep.streamlines) == 12
        assert rep.max_deviation <= 2 * H and rep.meetings == []


class TestLevelSpeed:
    def test_excess_helper(self):
        assert upper_level_excess([3.0, 2.0, 2.5, 1.0]) == pytest.approx(0.5)
        assert upper_level_excess([3.0, 2.0, 1.0]) < 0
        assert upper_level_excess([np.nan, 1.0]) == 0.0

    def test_maxima_between_streamlines(self, square):
        f, grad, _, _ = square
        tracer = Tracer(grad)
        first, second = tracer.trace((-0.1, -1.0)), tracer.trace((0.1, -1.0))
        m = level_speed_maxima(grad, first, second, [0.2, 0.5, 0.8, 1.5])
        assert np.all(np.isfinite(m[:3])) and np.isnan(m[3])
        # speeds near the axis stay close to one at large p
        np.testing.assert_allclose(m[:3], 1.0, atol=0.05)


class TestOffRidgeOscillation:
    def test_rougher_across_the_ridge(self, square):
        _, grad, _, ridge = square
        across = off_ridge_oscillation(grad, ridge, 0.0)
        away = off_ridge_oscillation(grad, ridge, 2 * H)
        assert away < 0.25 * across

    def test_annulus_near_exact_slope(self):
        _, grad, _, ridge = pipeline_for("annulus", H, 64.0)
        r = np.linspace(1.0, 2.0, 2001)
        exact = np.abs(np.gradient(radial_speed(64.0, 1.0, 2.0, r), r)).max()
        assert exact <= off_ridge_oscillation(grad, ridge, 2 * H) <= exact + 0.05

    def test_no_edges_left(self, square):
        _, grad, _, ridge = square
        assert off_ridge_oscillation(grad, ridge, 10.0) == 0.0
