"""Boundary speed profile, attracting streamlines and the ridge they span.

The attracting streamlines start at the local minima of the boundary speed
(polygon vertices, where the speed vanishes, and any smooth minima).  A flat
minimal arc contributes the streamlines from both of its endpoints.  Their
union is the ridge, the only place where streamlines may merge.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from . import kernels
from .errors import DomainError, TracingIncompleteError
from .fields import GradientField, level_curves
from .geometry import BoundaryParam, ConvexRing
from .mesh import INTERIOR
from .solver import ScalarField
from .streamline import (
    REACHED_INNER,
    MeetingEvent,
    Streamline,
    TraceOptions,
    Tracer,
    detect_meetings,
    near_inner,
)

FLAT_FRACTION = 0.01
FLAT_MIN_SAMPLES = 5


# ---------------------------------------------------------------------------
# boundary speed
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Extremum:
    """A local extremum of the boundary speed: a point (``s0 == s1``) or a flat arc ``[s0, s1]``.

    Arclengths are measured counterclockwise; for an arc crossing the
    start of the parameterization ``s1`` exceeds the perimeter.
    """

    s0: float
    s1: float
    speed: float

    @property
    def is_arc(self) -> bool:
        return self.s1 > self.s0

    @property
    def s(self) -> float:
        return 0.5 * (self.s0 + self.s1)


@dataclass(frozen=True, eq=False)
class BoundarySpeedProfile:
    """Sampled outer-boundary speed with alternating minima and maxima.

    ``edge`` gives the polygon edge of each sample (-1 on a circle).
    ``full_flat`` marks a profile that is flat all the way round (a disk
    ring), in which case ``minima`` and ``maxima`` are empty.
    """

    ring: ConvexRing
    s: np.ndarray
    points: np.ndarray
    speed: np.ndarray
    edge: np.ndarray
    minima: list[Extremum]
    maxima: list[Extremum]
    flat_threshold: float
    full_flat: bool = False

    @property
    def perimeter(self) -> float:
        return BoundaryParam.of(self.ring.omega).arclength

    @property
    def flat_arcs(self) -> list[Extremum]:
        """Flat extrema (minimal or maximal constant-speed subarcs)."""
        if self.full_flat:
            per = self.perimeter
            return [Extremum(0.0, per, float(np.mean(self.speed)))]
        return [e for e in self.minima + self.maxima if e.is_arc]

    def arc_samples(self, arc: Extremum) -> np.ndarray:
        """Speeds of the samples inside ``arc`` (wrapping past the perimeter)."""
        per = self.perimeter
        s = self.s
        m = ((s >= arc.s0 - 1e-12) & (s <= arc.s1 + 1e-12)) | ((s + per >= arc.s0 - 1e-12) & (s + per <= arc.s1 + 1e-12))
        return self.speed[m]

    @property
    def plateaus(self) -> list[Extremum]:
        """Flat arcs that are genuinely constant rather than rounded peaks or valleys.

        The central half of a plateau must vary by less than a tenth of the
        flatness threshold; a smooth extremum fails this because its central
        half still spans about a quarter of the threshold.
        """
        if self.full_flat:
            return self.flat_arcs
        out = []
        for arc in self.flat_arcs:
            q = 0.25 * (arc.s1 - arc.s0)
            v = self.arc_samples(Extremum(arc.s0 + q, arc.s1 - q, arc.speed))
            if len(v) >= 2 and np.ptp(v) < 0.1 * self.flat_threshold:
                out.append(arc)
        return out

    def alternates(self) -> bool:
        """Minima and maxima interleave around the closed boundary."""
        if self.full_flat:
            return True
        if len(self.minima) != len(self.maxima):
            return False
        per = self.perimeter
        tags = sorted([(e.s % per, 0) for e in self.minima] + [(e.s % per, 1) for e in self.maxima])
        kinds = [t for _, t in tags]
        return all(kinds[i] != kinds[(i + 1) % len(kinds)] for i in range(len(kinds)))


def _samples(bp: BoundaryParam, n: int):
    """Arclengths, points, inward normals and edge ids of the profile samples.

    Each polygon edge is sampled from vertex to vertex with its own normal,
    so every vertex appears twice (end of one edge, start of the next).
    """
    if bp.region.kind == "disk":
        s = bp.arclength * np.arange(n) / n
        return s, bp.point(s), bp.inward_normal(s), np.full(n, -1)
    ss, pts, nrm, eid = [], [], [], []
    verts = bp.region.vertices
    for e in range(bp.n_segments):
        a, b = bp.breaks[e], bp.breaks[e + 1]
        m = max(8, int(np.ceil((b - a) * n / bp.arclength)))
        t = np.linspace(0.0, 1.0, m + 1)
        ss.append(a + t * (b - a))
        pts.append(verts[e] + t[:, None] * (verts[(e + 1) % len(verts)] - verts[e]))
        nrm.append(np.repeat(bp.inward_normal(np.array([0.5 * (a + b)])), m + 1, axis=0))
        eid.append(np.full(m + 1, e))
    return np.concatenate(ss), np.concatenate(pts), np.concatenate(nrm), np.concatenate(eid)


def boundary_speed(field: ScalarField, n_samples: int = 256, offset: float | None = None) -> BoundarySpeedProfile:
    """Normal-derivative speed ``u(x + h n) / h`` along the outer boundary.

    On a polygon each edge is sampled separately with its own normal, so a
    vertex gets one one-sided value per incident edge.  Local extrema are
    separated by at least the flatness threshold (1% of the profile range,
    or of the mean speed when the range is smaller), and a run of at least
    five samples within the threshold of an extremum forms a flat arc.
    """
    if n_samples < 64:
        raise DomainError("the boundary profile needs at least 64 samples")
    ring = field.mesh.ring
    if ring is None:
        raise DomainError("field mesh does not carry its ring")
    h = field.mesh.h if offset is None else offset
    bp = BoundaryParam.of(ring.omega)
    s, pts, nrm, eid = _samples(bp, n_samples)
    speed = field(pts + h * nrm) / h
    if np.any(~np.isfinite(speed)):
        raise DomainError("inward offset left the mesh; use a smaller offset")
    rng = float(np.ptp(speed))
    thr = FLAT_FRACTION * max(rng, float(np.mean(np.abs(speed))))
    if rng <= thr:
        return BoundarySpeedProfile(ring, s, pts, speed, eid, [], [], thr, True)
    minima, maxima = _extrema(s, speed, bp.arclength, thr)
    return BoundarySpeedProfile(ring, s, pts, speed, eid, minima, maxima, thr)


def _grow(v: np.ndarray, i: int, thr: float) -> tuple[int, int]:
    """Cyclic run of samples around ``i`` staying within ``thr`` of ``v[i]``."""
    n = len(v)
    lo = hi = i
    while hi - lo < n - 1 and abs(v[(lo - 1) % n] - v[i]) <= thr:
        lo -= 1
    while hi - lo < n - 1 and abs(v[(hi + 1) % n] - v[i]) <= thr:
        hi += 1
    return lo, hi


def _as_extremum(s, v, per, i, thr) -> Extremum:
    lo, hi = _grow(v, i, thr)
    n = len(v)
    if hi - lo + 1 >= FLAT_MIN_SAMPLES:
        s0 = s[lo % n] + per * (lo // n)
        s1 = s[hi % n] + per * (hi // n)
        if s0 < 0:
            s0, s1 = s0 + per, s1 + per
        return Extremum(float(s0), float(s1), float(v[i]))
    si = float(s[i] % per)
    return Extremum(si, si, float(v[i]))


def _extrema(s, v, per, thr):
    # tile to make peak detection cyclic, keep the middle copy
    n = len(v)
    tiled = np.concatenate([v, v, v])
    lo_idx, _ = find_peaks(-tiled, prominence=thr, plateau_size=1)
    hi_idx, _ = find_peaks(tiled, prominence=thr, plateau_size=1)
    lo_idx = np.unique(lo_idx[(lo_idx >= n) & (lo_idx < 2 * n)] - n)
    hi_idx = np.unique(hi_idx[(hi_idx >= n) & (hi_idx < 2 * n)] - n)
    minima = [_as_extremum(s, v, per, i, thr) for i in lo_idx]
    maxima = [_as_extremum(s, v, per, i, thr) for i in hi_idx]
    return minima, maxima


def edge_monotonicity_check(profile: BoundarySpeedProfile, edge: int) -> float:
    """Worst wrong-sign speed increment on the two half-edges of a polygon edge.

    The edge is split at its largest sample; speed should not decrease from
    the first vertex up to it and should not increase after it.  Returns a
    nonnegative violation.
    """
    if profile.ring.omega.kind != "polygon":
        raise DomainError("edge monotonicity needs a polygonal outer boundary")
    if not 0 <= edge <= int(profile.edge.max()):
        raise DomainError(f"edge index {edge} out of range")
    v = profile.speed[profile.edge == edge]
    k = int(np.argmax(v))
    up = np.diff(v[: k + 1])
    down = np.diff(v[k:])
    return float(max(0.0, -up.min(initial=0.0), down.max(initial=0.0)))


# ---------------------------------------------------------------------------
# ridge graph
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RidgeGraph:
    """Union of attracting streamlines with a segment index for distance queries.

    ``polylines[k]`` starts at ``sources[k]`` on the outer boundary.
    ``source_s`` holds the boundary arclength of each source (NaN when
    unknown, e.g. for closed-form ridges).
    """

    polylines: list[np.ndarray]
    sources: np.ndarray
    source_s: np.ndarray = field(default_factory=lambda: np.empty(0))
    merges: list[MeetingEvent] = field(default_factory=list)
    streamlines: list[Streamline] = field(default_factory=list)

    def __post_init__(self):
        lines = [np.asarray(p, dtype=float).reshape(-1, 2) for p in self.polylines]
        object.__setattr__(self, "polylines", lines)
        segs = [(p[:-1], p[1:]) for p in lines if len(p) > 1]
        a = np.concatenate([s[0] for s in segs]) if segs else np.empty((0, 2))
        b = np.concatenate([s[1] for s in segs]) if segs else np.empty((0, 2))
        owner = np.concatenate([np.full(len(p) - 1, k) for k, p in enumerate(lines) if len(p) > 1]) if segs else np.empty(0, int)
        object.__setattr__(self, "_index", kernels.SegmentIndex(a, b))
        object.__setattr__(self, "_owner", owner.astype(np.int64))
        if len(self.source_s) != len(lines):
            object.__setattr__(self, "source_s", np.full(len(lines), np.nan))

    def __len__(self) -> int:
        return len(self.polylines)

    @property
    def empty(self) -> bool:
        return len(self._index) == 0

    @property
    def terminals(self) -> np.ndarray:
        return np.array([p[-1] for p in self.polylines]).reshape(-1, 2)

    def distance(self, points, radius: float = np.inf, members=None) -> np.ndarray:
        """Distance from each point to the ridge (``inf`` beyond ``radius`` or if empty).

        ``members`` restricts the query to the listed polylines.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.empty:
            return np.full(len(pts), np.inf)
        if members is not None:
            sub = RidgeGraph([self.polylines[k] for k in members], self.sources[list(members)])
            return sub.distance(pts, radius)
        d, _, _ = self._index.query(pts, radius)
        return d

    def contains(self, points, tol: float) -> np.ndarray:
        return self.distance(points, tol) <= tol

    def sample(self, spacing: float) -> np.ndarray:
        """Points along every polyline no farther apart than ``spacing``."""
        out = []
        for p in self.polylines:
            if len(p) == 1:
                out.append(p)
                continue
            for a, b in zip(p[:-1], p[1:]):
                k = max(1, int(np.ceil(np.linalg.norm(b - a) / spacing)))
                out.append(a + np.linspace(0, 1, k, endpoint=False)[:, None] * (b - a))
            out.append(p[-1:])
        return np.concatenate(out) if out else np.empty((0, 2))

    def hausdorff(self, other: "RidgeGraph", spacing: float) -> float:
        """Symmetric Hausdorff distance, evaluated on samples ``spacing`` apart."""
        if self.empty or other.empty:
            return 0.0 if self.empty and other.empty else np.inf
        return float(max(other.distance(self.sample(spacing)).max(), self.distance(other.sample(spacing)).max()))


def _minimum_seeds(profile: BoundarySpeedProfile) -> list[float]:
    out = []
    for m in profile.minima:
        out.extend([m.s0, m.s1] if m.is_arc else [m.s0])
    return out


def build_ridge(
    field: ScalarField,
    profile: BoundarySpeedProfile,
    grad: GradientField | None = None,
    opts: TraceOptions | None = None,
    merge_tol: float | None = None,
) -> RidgeGraph:
    """Trace the attracting streamlines and assemble the ridge.

    Raises
    ------
    TracingIncompleteError
        If an attracting streamline fails to reach the inner boundary.
    """
    from .fields import recover_gradient

    grad = recover_gradient(field) if grad is None else grad
    bp = BoundaryParam.of(profile.ring.omega)
    seeds_s = _minimum_seeds(profile)
    tracer = Tracer(grad, opts)
    lines, sls, src = [], [], []
    for sv in seeds_s:
        seed = bp.point(np.array([sv]))[0]
        sl = tracer.trace(seed)
        if sl.termination != REACHED_INNER:
            raise TracingIncompleteError(f"attracting streamline from {seed.round(6).tolist()} ended as {sl.termination}")
        sls.append(sl)
        src.append(seed)
        lines.append(np.vstack([seed, sl.points]) if sl.nudged else sl.points)
    h = field.mesh.h
    tol = h if merge_tol is None else merge_tol
    merges = detect_meetings(sls, tol, exclude=near_inner(profile.ring, 2 * h)) if len(sls) > 1 else []
    return RidgeGraph(lines, np.array(src).reshape(-1, 2), np.mod(np.array(seeds_s, dtype=float), bp.arclength), merges, sls)


def classify_meetings(meetings, ridge: RidgeGraph, tol: float) -> tuple[list[MeetingEvent], list[MeetingEvent]]:
    """Split meetings into those within ``tol`` of the ridge and the rest."""
    meetings = list(meetings)
    if not meetings:
        return [], []
    d = ridge.distance(np.array([m.point for m in meetings]), tol)
    on = [m for m, di in zip(meetings, d) if di <= tol]
    off = [m for m, di in zip(meetings, d) if not di <= tol]
    return on, off


# ---------------------------------------------------------------------------
# structural checks
# ---------------------------------------------------------------------------


def _sector(ridge: RidgeGraph, s: float, per: float) -> tuple[int, int]:
    """Indices of the ridge sources bounding the boundary arc containing ``s``."""
    ss = ridge.source_s
    order = np.argsort(ss)
    k = np.searchsorted(ss[order], s % per, side="right")
    return int(order[(k - 1) % len(order)]), int(order[k % len(order)])


def quadrilateral_violations(
    ring: ConvexRing, streamlines, meetings, ridge: RidgeGraph, tol: float
) -> list[MeetingEvent]:
    """Meetings lying farther than ``tol`` from the attracting streamlines bounding their sector.

    Each streamline belongs to the sector between the two attracting
    streamlines whose sources enclose its seed on the outer boundary.  With
    no ridge every meeting is a violation.
    """
    meetings = list(meetings)
    if len(ridge) == 0 or np.isnan(ridge.source_s).any():
        return meetings
    bp = BoundaryParam.of(ring.omega)
    bad = []
    for m in meetings:
        members = set()
        for k in m.ids:
            members.update(_sector(ridge, arclength_of(bp, streamlines[k].seed), bp.arclength))
        if ridge.distance(np.array([m.point]), tol, members=sorted(members))[0] > tol:
            bad.append(m)
    return bad


def arclength_of(bp: BoundaryParam, x) -> float:
    """Arclength parameter of the boundary location nearest to ``x``."""
    x = np.asarray(x, dtype=float)
    reg = bp.region
    if reg.kind == "disk":
        d = x - reg.center
        return float(np.mod(np.arctan2(d[1], d[0]), 2 * np.pi) * reg.radius)
    a, b = reg.edges()
    ab = b - a
    t = np.clip(np.einsum("ej,ej->e", x - a, ab) / np.einsum("ej,ej->e", ab, ab), 0.0, 1.0)
    e = int(np.argmin(np.linalg.norm(a + t[:, None] * ab - x, axis=1)))
    return float(bp.breaks[e] + t[e] * (bp.breaks[e + 1] - bp.breaks[e]))


def off_ridge_oscillation(grad: GradientField, ridge: RidgeGraph, margin: float) -> float:
    """Largest speed difference quotient across mesh edges kept ``margin`` away from the ridge.

    Only interior vertices farther than ``margin`` from the ridge take part,
    so this measures how rough the recovered speed is away from the ridge.
    It is reported as a diagnostic; nothing is asserted about it.
    """
    mesh = grad.mesh
    keep = (mesh.boundary_tags == INTERIOR) & (ridge.distance(mesh.vertices, margin) > margin)
    e = mesh.edges[keep[mesh.edges[:, 0]] & keep[mesh.edges[:, 1]]]
    if len(e) == 0:
        return 0.0
    length = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
    return float(np.max(np.abs(grad.speed[e[:, 0]] - grad.speed[e[:, 1]]) / length))


@dataclass(frozen=True, eq=False)
class EikonalReport:
    """Straightness and separation of streamlines seeded on flat boundary arcs."""

    streamlines: list[Streamline]
    deviations: np.ndarray
    meetings: list[MeetingEvent]

    @property
    def max_deviation(self) -> float:
        return float(self.deviations.max()) if len(self.deviations) else 0.0


def straightness(s: Streamline) -> float:
    """Largest distance from the line through the first two points of ``s``."""
    p = s.points
    if len(p) < 3:
        return 0.0
    d = p[1] - p[0]
    d = d / np.linalg.norm(d)
    r = p - p[0]
    return float(np.max(np.abs(r[:, 0] * d[1] - r[:, 1] * d[0])))


def eikonal_check(
    grad: GradientField,
    profile: BoundarySpeedProfile,
    seeds_per_arc: int = 8,
    tol: float | None = None,
    opts: TraceOptions | None = None,
) -> EikonalReport:
    """Trace from the interior of every boundary plateau and measure straightness and meetings.

    Seeds avoid the outer tenth of each arc.  Meetings within ``2h`` of the
    inner boundary, where all streamlines converge, are not counted.
    """
    ring = profile.ring
    h = grad.mesh.h
    tol = max(h, 1e-3) if tol is None else tol
    bp = BoundaryParam.of(ring.omega)
    tracer = Tracer(grad, opts)
    sls = []
    for arc in profile.plateaus:
        span = arc.s1 - arc.s0
        if profile.full_flat:
            s = arc.s0 + span * np.arange(seeds_per_arc) / seeds_per_arc
        else:
            s = arc.s0 + span * np.linspace(0.1, 0.9, seeds_per_arc)
        sls.extend(tracer.trace(x) for x in bp.point(s))
    dev = np.array([straightness(s) for s in sls])
    meets = detect_meetings(sls, tol, exclude=near_inner(ring, 2 * h)) if len(sls) > 1 else []
    return EikonalReport(sls, dev, meets)


def _crossing(s: Streamline, c: float):
    """First point where the values along ``s`` reach ``c`` (linear in between)."""
    v = s.values
    k = np.nonzero(v >= c)[0]
    if len(k) == 0 or k[0] == 0:
        return None
    k = k[0]
    w = (c - v[k - 1]) / (v[k] - v[k - 1])
    return s.points[k - 1] + w * (s.points[k] - s.points[k - 1])


def _arc_between(curve: np.ndarray, q1, q2) -> np.ndarray:
    """Counterclockwise piece of a closed curve from the point nearest ``q1`` to that nearest ``q2``."""
    poly = curve[:-1] if np.allclose(curve[0], curve[-1]) else curve
    area2 = np.sum(poly[:, 0] * np.roll(poly[:, 1], -1) - np.roll(poly[:, 0], -1) * poly[:, 1])
    if area2 < 0:
        poly = poly[::-1]
    i = int(np.argmin(np.linalg.norm(poly - q1, axis=1)))
    j = int(np.argmin(np.linalg.norm(poly - q2, axis=1)))
    idx = np.arange(i, i + ((j - i) % len(poly)) + 1) % len(poly)
    return np.vstack([q1, poly[idx], q2])


def level_speed_maxima(grad: GradientField, first: Streamline, second: Streamline, levels) -> np.ndarray:
    """Maximal speed on each level-curve arc between two streamlines.

    ``second`` must lie counterclockwise of ``first`` (seen from the inner
    region); the arc runs counterclockwise from ``first`` to ``second``.
    Levels beyond the reach of either streamline give NaN.
    """
    f = grad.field
    out = []
    for c in levels:
        q1, q2 = _crossing(first, c), _crossing(second, c)
        if q1 is None or q2 is None:
            out.append(np.nan)
            continue
        curves = level_curves(f, c)
        curve = min(curves, key=lambda cv: np.linalg.norm(cv - q1, axis=1).min())
        arc = _arc_between(curve, q1, q2)
        seg = np.linalg.norm(np.diff(arc, axis=0), axis=1)
        k = np.maximum(1, np.ceil(seg / (0.25 * f.mesh.h)).astype(int))
        dense = np.vstack([a + np.linspace(0, 1, n, endpoint=False)[:, None] * (b - a) for a, b, n in zip(arc[:-1], arc[1:], k)] + [arc[-1:]])
        sp = np.linalg.norm(grad.at(dense), axis=1)
        out.append(float(np.nanmax(sp)))
    return np.array(out)


def upper_level_excess(maxima) -> float:
    """Largest ``max speed(c2) - max speed(c1)`` over level pairs ``c1 < c2``; at most 0 by the theory."""
    m = np.asarray(maxima, dtype=float)
    m = m[np.isfinite(m)]
    if len(m) < 2:
        return 0.0
    run_min = np.minimum.accumulate(m)
    return float(np.max(m[1:] - run_min[:-1]))
