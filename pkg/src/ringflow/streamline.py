"""Ascending gradient-flow streamlines ``dx/dt = grad u(x)``.

The velocity field is the barycentric interpolation of the area-weighted
recovered nodal gradient, which is continuous and piecewise linear, so an
embedded Runge-Kutta pair with error control is well posed on it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .errors import DomainError, IntegrityError, TracingIncompleteError
from .fields import GradientField
from .geometry import ConvexRegion, ConvexRing
from .solver import ScalarField

REACHED_INNER = "reached_inner"
STAGNATED = "stagnated"
LEFT_DOMAIN = "left_domain"
MAX_STEPS = "max_steps"
_TERM_NAMES = {
    kernels.TERM_REACHED_INNER: REACHED_INNER,
    kernels.TERM_STAGNATED: STAGNATED,
    kernels.TERM_LEFT_DOMAIN: LEFT_DOMAIN,
    kernels.TERM_MAX_STEPS: MAX_STEPS,
}


@dataclass(frozen=True)
class TraceOptions:
    """Integration and termination controls; ``None`` means "derive from h".

    snap
        Stop once within this distance of the inner boundary (default h/2).
    record_spacing
        Minimal distance between stored points (default h/8).
    speed_floor, dwell_limit
        Stagnation: speed below ``speed_floor`` for longer than ``dwell_limit``.
    nudge
        Offset of a zero-speed seed along the inward bisector (default h/4).
    """

    rtol: float = 1e-7
    atol: float = 1e-10
    snap: float | None = None
    record_spacing: float | None = None
    speed_floor: float = 1e-8
    dwell_limit: float = 10.0
    nudge: float | None = None
    leave_tol: float | None = None
    max_steps: int = 200_000

    def resolved(self, h: float) -> "TraceOptions":
        return replace(
            self,
            snap=0.5 * h if self.snap is None else self.snap,
            record_spacing=h / 8.0 if self.record_spacing is None else self.record_spacing,
            nudge=0.25 * h if self.nudge is None else self.nudge,
            leave_tol=h if self.leave_tol is None else self.leave_tol,
        )


@dataclass(frozen=True, eq=False)
class Streamline:
    """A traced streamline; ``points[0]`` is the (possibly nudged) start."""

    seed: np.ndarray
    points: np.ndarray
    times: np.ndarray
    speeds: np.ndarray
    values: np.ndarray
    termination: str
    nudged: bool = False
    rejected_steps: int = 0

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def __len__(self) -> int:
        return len(self.points)

    @property
    def length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.points, axis=0), axis=1)))


def _region_args(reg: ConvexRegion):
    if reg.kind == "disk":
        return kernels.REGION_DISK, np.asarray(reg.center, float), float(reg.radius), np.zeros((1, 2))
    if reg.kind == "polygon":
        return kernels.REGION_POLYGON, np.zeros(2), 0.0, np.ascontiguousarray(reg.ccw().vertices, dtype=float)
    raise DomainError("point regions must be regularized before tracing")


def inward_direction(ring: ConvexRing, x, vertex_tol: float = 1e-9) -> np.ndarray:
    """Unit inward direction at a point of the outer boundary.

    At a polygon vertex this is the interior angle bisector.
    """
    x = np.asarray(x, dtype=float)
    om = ring.omega
    if om.kind == "disk":
        d = om.center - x
        return d / np.linalg.norm(d)
    v = om.ccw().vertices
    k = np.argmin(np.linalg.norm(v - x, axis=1))
    if np.linalg.norm(v[k] - x) <= vertex_tol:
        a = v[k - 1] - v[k]
        b = v[(k + 1) % len(v)] - v[k]
        d = a / np.linalg.norm(a) + b / np.linalg.norm(b)
        return d / np.linalg.norm(d)
    a, b = om.edges()
    ab = b - a
    t = np.clip(np.einsum("ej,ej->e", x - a, ab) / np.einsum("ej,ej->e", ab, ab), 0.0, 1.0)
    e = np.argmin(np.linalg.norm(a + t[:, None] * ab - x, axis=1))
    n = np.array([-ab[e, 1], ab[e, 0]])
    return n / np.linalg.norm(n)


def _is_vertex(ring: ConvexRing, x, tol: float = 1e-9) -> bool:
    om = ring.omega
    return om.kind == "polygon" and bool(np.min(np.linalg.norm(om.vertices - x, axis=1)) <= tol)


class Tracer:
    """Traces many seeds on one gradient field, sharing the prepared arrays."""

    def __init__(self, grad: GradientField, options: TraceOptions | None = None):
        self.grad = grad
        mesh = grad.mesh
        if mesh.ring is None:
            raise DomainError("tracing needs a mesh that knows its ring")
        self.ring = mesh.ring
        self.opts = (options or TraceOptions()).resolved(mesh.h)
        verts, tris, start, items, lo0, lo1, cell, nx, ny = mesh.locator.args()
        self._mesh_args = (verts, tris, mesh.locator.neighbors, start, items, lo0, lo1, cell, nx, ny)
        self._vgrad = np.ascontiguousarray(grad.vertex)
        self._u = np.ascontiguousarray(grad.field.values)
        self._inner = _region_args(self.ring.mesh_inner)
        self._outer = _region_args(self.ring.omega)
        self._diam = np.ascontiguousarray(mesh.diameters)

    def _run(self, start: np.ndarray):
        o = self.opts
        return kernels.trace(
            *self._mesh_args, self._vgrad, self._u, float(start[0]), float(start[1]),
            *self._inner, *self._outer,
            o.rtol, o.atol, self._diam, o.snap, o.leave_tol, o.speed_floor, o.dwell_limit,
            o.record_spacing, o.max_steps,
        )

    def trace(self, seed) -> Streamline:
        seed = np.asarray(seed, dtype=float).reshape(2)
        if self.ring.signed_distance(seed[None])[0] > 1e-9:
            raise DomainError(f"seed {seed.tolist()} lies outside the ring")
        o = self.opts
        speed0 = np.linalg.norm(self.grad.at(seed[None])[0])
        on_outer = abs(self.ring.omega.signed_distance(seed[None])[0]) <= 1e-9
        nudge = on_outer and (_is_vertex(self.ring, seed) or not speed0 > o.speed_floor)
        start = seed + o.nudge * inward_direction(self.ring, seed) if nudge else seed
        pts, times, speeds, vals, term, rej = self._run(start)
        name = _TERM_NAMES[int(term)]
        if nudge and name == STAGNATED:
            raise TracingIncompleteError(f"streamline from vertex seed {seed.tolist()} stagnated after the nudge")
        return Streamline(seed, pts.copy(), times.copy(), speeds.copy(), vals.copy(), name, nudge, int(rej))


def trace(grad: GradientField, seed, opts: TraceOptions | None = None) -> Streamline:
    """Trace the ascending streamline from ``seed`` (see :class:`TraceOptions`).

    Raises
    ------
    DomainError
        If the seed lies outside the closed ring.
    TracingIncompleteError
        If a vertex seed still stagnates after being nudged inward.
    """
    return Tracer(grad, opts).trace(seed)


def trace_many(grad: GradientField, seeds, opts: TraceOptions | None = None) -> list[Streamline]:
    tr = Tracer(grad, opts)
    return [tr.trace(s) for s in np.atleast_2d(np.asarray(seeds, dtype=float))]


def boundary_seeds(ring: ConvexRing, n: int, offset: float = 0.0) -> np.ndarray:
    """``n`` seeds equally spaced in arclength along the outer boundary.

    ``offset`` is the arclength of the first seed measured from the first
    polygon vertex (or the rightmost point of a disk).
    """
    from .geometry import BoundaryParam

    bp = BoundaryParam.of(ring.omega)
    s = (offset + bp.arclength * np.arange(n) / n) % bp.arclength
    return bp.point(s)


# ---------------------------------------------------------------------------
# per-streamline diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpeedProfile:
    """``F(t) = u(alpha(t))`` with its speed-based derivative estimate.

    ``monotone_violation`` is ``min(0, min diff(speed))``.
    ``convexity_violation`` is the worst relative decrease of the secant
    slope of F, ``min(0, min (m_{i+1/2} - m_{i-1/2}) / max(m_{i-1/2}, m_{i+1/2}))``.
    """

    t: np.ndarray
    F: np.ndarray
    dF: np.ndarray
    speed: np.ndarray
    monotone_violation: float
    convexity_violation: float


def speed_profile(s: Streamline, field: ScalarField | None = None, stencil: float = 0.0) -> SpeedProfile:
    """Speed and ``F(t) = u(alpha(t))`` along a streamline.

    Parameters
    ----------
    s : Streamline
    field : ScalarField, optional
        Potential used for ``F``; defaults to the values recorded while tracing.
    stencil : float
        Minimum arclength between the samples whose secant slopes enter the
        convexity test. A P1 potential has a different gradient on every
        triangle, so secants shorter than a couple of cells measure that jump
        rather than the curvature of ``F``. 0 uses every sample.

    Notes
    -----
    ``monotone_violation`` is the most negative speed decrement and
    ``convexity_violation`` the most negative change of consecutive secant
    slopes relative to the larger of the two; both are 0 when the property holds.
    """
    F = np.asarray(s.values if field is None else field(s.points), dtype=float)
    speed = s.speeds
    mono = float(min(0.0, np.min(np.diff(speed)))) if len(speed) > 1 else 0.0
    idx = np.arange(len(F))
    if stencil > 0 and len(F) > 2:
        arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(s.points, axis=0), axis=1))])
        keep = [0]
        for i in range(1, len(arc)):
            if arc[i] - arc[keep[-1]] >= stencil:
                keep.append(i)
        idx = np.asarray(keep)
    conv = 0.0
    if len(idx) > 2:
        dt = np.diff(s.times[idx])
        slope = np.diff(F[idx]) / np.where(dt > 0, dt, np.inf)
        big = np.maximum(np.maximum(slope[1:], slope[:-1]), np.finfo(float).tiny)
        conv = float(min(0.0, np.min((slope[1:] - slope[:-1]) / big)))
    return SpeedProfile(s.times, F, speed**2, speed, mono, conv)


def lipschitz_excess(s: Streamline) -> float:
    """Largest ``chord / (max speed * dt) - 1`` over consecutive samples."""
    chord = np.linalg.norm(np.diff(s.points, axis=0), axis=1)
    bound = np.maximum(s.speeds[1:], s.speeds[:-1]) * np.diff(s.times)
    ok = bound > 0
    if not ok.any():
        return 0.0
    return float(np.max(chord[ok] / bound[ok] - 1.0))


# ---------------------------------------------------------------------------
# meetings between streamlines
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MeetingEvent:
    """Two streamlines join: ``ids[0]`` runs within tolerance of ``ids[1]`` from ``params[0]`` on."""

    point: tuple[float, float]
    ids: tuple[int, int]
    params: tuple[float, float]


def _segment_index(s: Streamline) -> kernels.SegmentIndex:
    return kernels.SegmentIndex(s.points[:-1], s.points[1:])


def _suffix_start(dist: np.ndarray, min_samples: int) -> int:
    """First index from which every distance is finite (within tolerance)."""
    far = np.nonzero(~np.isfinite(dist))[0]
    k = 0 if len(far) == 0 else far[-1] + 1
    return k if len(dist) - k >= min_samples else -1


def _side(points, seg_ids, index: kernels.SegmentIndex):
    a = index.seg_a[seg_ids]
    b = index.seg_b[seg_ids]
    return np.sign((b[:, 0] - a[:, 0]) * (points[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (points[:, 0] - a[:, 0]))


def _pair_meeting(si, sj, idx_j, tol, min_samples):
    """Earliest index on ``si`` after which it stays within ``tol`` of ``sj``; also checks crossings."""
    if len(sj) < 2:
        d = np.linalg.norm(si.points - sj.points[0], axis=1)
        d = np.where(d <= tol, d, np.inf)
        seg = np.zeros(len(d), dtype=np.int64)
        par = np.zeros(len(d))
    else:
        d, seg, par = idx_j.query(si.points, tol)
    k = _suffix_start(d, min_samples)
    near = np.isfinite(d)
    # a transversal crossing shows up as a side change before the common arc
    upto = len(d) if k < 0 else k
    cand = np.nonzero(near[:upto])[0]
    if len(cand) > 1 and len(sj) > 1:
        side = _side(si.points[cand], seg[cand], idx_j)
        consecutive = np.diff(cand) == 1
        flips = consecutive & (side[1:] * side[:-1] < 0)
        if flips.any():
            c = cand[np.nonzero(flips)[0][0]]
            raise IntegrityError(f"streamlines cross transversally near {si.points[c].round(6).tolist()}")
    if k < 0:
        return None
    if len(sj) < 2:
        tj = sj.times[0]
    else:
        sk = seg[k]
        tj = sj.times[sk] + par[k] * (sj.times[sk + 1] - sj.times[sk])
    return k, float(tj)


def detect_meetings(
    streamlines, tol: float, min_samples: int = 3, exclude=None
) -> list[MeetingEvent]:
    """Proximity-plus-persistence meetings among ``streamlines``.

    A meeting of ``i`` and ``j`` is the earliest sample of one curve from
    which it stays within ``tol`` of the other until it ends, confirmed over
    at least ``min_samples`` samples.  ``exclude(points) -> bool mask``
    drops events at the given locations (used to ignore the terminal
    convergence at the inner boundary).

    Raises
    ------
    IntegrityError
        If two streamlines cross without merging.
    """
    sl = list(streamlines)
    idx = [_segment_index(s) for s in sl]
    events = []
    for i in range(len(sl)):
        for j in range(i + 1, len(sl)):
            best = None
            for a, b in ((i, j), (j, i)):
                hit = _pair_meeting(sl[a], sl[b], idx[b], tol, min_samples)
                if hit is None:
                    continue
                k, tb = hit
                ta = float(sl[a].times[k])
                pt = sl[a].points[k]
                if exclude is not None and exclude(pt[None])[0]:
                    continue
                if best is None or ta + tb < best[0]:
                    params = (ta, tb) if a == i else (tb, ta)
                    best = (ta + tb, MeetingEvent((float(pt[0]), float(pt[1])), (i, j), params))
            if best is not None:
                events.append(best[1])
    return events


def near_inner(ring: ConvexRing, margin: float):
    """Mask factory for points within ``margin`` of the (meshed) inner boundary."""

    def mask(points):
        return ring.mesh_inner.signed_distance(points) <= margin

    return mask


def constant_speed_prefix(s: Streamline, ridge, tol: float) -> tuple[float, float]:
    """Time of first contact with the ridge and the relative speed variation before it.

    ``ridge`` must provide ``distance(points)``.  A streamline that never
    comes within ``tol`` of the ridge uses its full length.

    Raises
    ------
    TracingIncompleteError
        If the streamline neither approaches the ridge nor reaches the inner boundary.
    """
    d = ridge.distance(s.points)
    hit = np.nonzero(d <= tol)[0]
    if len(hit):
        k = int(hit[0])
    elif s.termination == REACHED_INNER:
        k = len(s) - 1
    else:
        raise TracingIncompleteError("streamline ended without reaching the ridge or the inner boundary")
    v0 = s.speeds[0]
    if k == 0 or v0 <= 0:
        return float(s.times[k]), 0.0
    var = float(np.max(np.abs(s.speeds[: k + 1] - v0)) / v0)
    return float(s.times[k]), var
