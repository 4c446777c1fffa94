"""Convex regions, convex rings and boundary parameterizations.

Only three region kinds are supported: strictly convex polygons, closed
disks and single points.  Smooth convex bodies other than disks are handled
by approximating them with a fine inscribed polygon (see
:func:`inscribed_polygon`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ContainmentError, DegenerateGapError, ValidationError

#: default radius used to regularize a point-like inner set for meshing
DEFAULT_EPS_K = 0.02

_GAP_TOL = 1e-12


def _as_points(x):
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    return pts


def _cross2(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


@dataclass(frozen=True, eq=False)
class ConvexRegion:
    """A polygon, disk or point in the plane.

    Use the :meth:`polygon`, :meth:`disk` and :meth:`point` constructors.
    Construction does not check convexity; call :func:`validate_convex`.
    """

    kind: str
    vertices: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None
    radius: Optional[float] = None
    location: Optional[np.ndarray] = None

    @classmethod
    def polygon(cls, vertices) -> "ConvexRegion":
        v = np.array(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise ValidationError("vertices", "expected a list of 2D points")
        v.setflags(write=False)
        return cls("polygon", vertices=v)

    @classmethod
    def disk(cls, center, radius) -> "ConvexRegion":
        c = np.array(center, dtype=float).reshape(2)
        c.setflags(write=False)
        return cls("disk", center=c, radius=float(radius))

    @classmethod
    def point(cls, location) -> "ConvexRegion":
        p = np.array(location, dtype=float).reshape(2)
        p.setflags(write=False)
        return cls("point", location=p)

    # ------------------------------------------------------------------
    def __repr__(self):
        if self.kind == "polygon":
            return f"ConvexRegion.polygon({self.vertices.tolist()})"
        if self.kind == "disk":
            return f"ConvexRegion.disk({self.center.tolist()}, {self.radius})"
        return f"ConvexRegion.point({self.location.tolist()})"

    @property
    def centroid(self) -> np.ndarray:
        if self.kind == "disk":
            return np.array(self.center)
        if self.kind == "point":
            return np.array(self.location)
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        cr = _cross2(v, w)
        area = cr.sum() / 2.0
        if abs(area) < 1e-300:
            return v.mean(axis=0)
        return ((v + w) * cr[:, None]).sum(axis=0) / (6.0 * area)

    @property
    def area(self) -> float:
        if self.kind == "disk":
            return np.pi * self.radius**2
        if self.kind == "point":
            return 0.0
        v = self.vertices
        return abs(_cross2(v, np.roll(v, -1, axis=0)).sum()) / 2.0

    @property
    def perimeter(self) -> float:
        if self.kind == "disk":
            return 2.0 * np.pi * self.radius
        if self.kind == "point":
            return 0.0
        v = self.vertices
        return float(np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1).sum())

    def edges(self):
        """Polygon edges as ``(starts, ends)`` arrays."""
        v = self.vertices
        return v, np.roll(v, -1, axis=0)

    def scaled(self, factor: float, about) -> "ConvexRegion":
        about = np.asarray(about, dtype=float)
        if self.kind == "polygon":
            return ConvexRegion.polygon(about + factor * (self.vertices - about))
        if self.kind == "disk":
            return ConvexRegion.disk(about + factor * (self.center - about), factor * self.radius)
        return ConvexRegion.point(about + factor * (self.location - about))

    def ccw(self) -> "ConvexRegion":
        """Same region with counterclockwise polygon orientation."""
        if self.kind != "polygon":
            return self
        v = self.vertices
        if _cross2(v, np.roll(v, -1, axis=0)).sum() < 0:
            return ConvexRegion.polygon(v[::-1])
        return self

    # ------------------------------------------------------------------
    def signed_distance(self, x) -> np.ndarray:
        """Exact signed distance, negative inside (zero-area sets are never inside)."""
        pts = _as_points(x)
        if self.kind == "disk":
            return np.linalg.norm(pts - self.center, axis=1) - self.radius
        if self.kind == "point":
            return np.linalg.norm(pts - self.location, axis=1)
        a, b = self.ccw().edges()
        d = _point_segment_distance(pts[:, None, :], a[None], b[None]).min(axis=1)
        inside = np.all(_cross2(b - a, pts[:, None, :] - a) > 0.0, axis=1)
        return np.where(inside, -d, d)

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        """Closed containment test with optional outward slack."""
        return self.signed_distance(x) <= tol

    def project_to_boundary(self, x) -> np.ndarray:
        """Nearest point on the boundary for each input point."""
        pts = _as_points(x)
        if self.kind == "point":
            return np.broadcast_to(self.location, pts.shape).copy()
        if self.kind == "disk":
            d = pts - self.center
            n = np.linalg.norm(d, axis=1)
            n = np.where(n == 0, 1.0, n)
            return self.center + self.radius * d / n[:, None]
        a, b = self.edges()
        ab = b - a
        t = np.einsum("pej,ej->pe", pts[:, None, :] - a[None], ab) / np.einsum("ej,ej->e", ab, ab)
        t = np.clip(t, 0.0, 1.0)
        proj = a[None] + t[..., None] * ab[None]
        k = np.linalg.norm(proj - pts[:, None, :], axis=2).argmin(axis=1)
        return proj[np.arange(len(pts)), k]


def _point_segment_distance(p, a, b):
    ab = b - a
    denom = np.einsum("...j,...j->...", ab, ab)
    denom = np.where(denom == 0, 1.0, denom)
    t = np.clip(np.einsum("...j,...j->...", p - a, ab) / denom, 0.0, 1.0)
    return np.linalg.norm(p - (a + t[..., None] * ab), axis=-1)


def _segments_intersect(a, b, c, d):
    d1 = _cross2(b - a, c - a)
    d2 = _cross2(b - a, d - a)
    d3 = _cross2(d - c, a - c)
    d4 = _cross2(d - c, b - c)
    return (d1 * d2 <= 0) & (d3 * d4 <= 0)


def segment_distance(a, b, c, d) -> np.ndarray:
    """Euclidean distance between segments ``ab`` and ``cd`` (broadcasting)."""
    a, b, c, d = (np.asarray(z, dtype=float) for z in (a, b, c, d))
    m = np.minimum(
        np.minimum(_point_segment_distance(a, c, d), _point_segment_distance(b, c, d)),
        np.minimum(_point_segment_distance(c, a, b), _point_segment_distance(d, a, b)),
    )
    return np.where(_segments_intersect(a, b, c, d), 0.0, m)


def validate_convex(region: ConvexRegion) -> bool:
    """Check the structural invariants of a region.

    Returns False for well-formed but non-convex (or degenerate) polygons.
    Malformed input raises :class:`ValidationError`.
    """
    if region.kind == "polygon":
        v = region.vertices
        if v is None or len(v) < 3:
            raise ValidationError("vertices", "a polygon needs at least 3 vertices")
        if not np.all(np.isfinite(v)):
            raise ValidationError("vertices", "non-finite coordinate")
        e = np.roll(v, -1, axis=0) - v
        cr = _cross2(e, np.roll(e, -1, axis=0))
        if not (np.all(cr > 0) or np.all(cr < 0)):
            return False
        # a star polygon can have consistent turning; total turning must be one loop
        ang = np.arctan2(cr, np.einsum("ij,ij->i", e, np.roll(e, -1, axis=0)))
        return bool(abs(abs(ang.sum()) - 2 * np.pi) < 1e-9)
    if region.kind == "disk":
        if region.radius is None or not np.isfinite(region.radius):
            raise ValidationError("radius", "missing radius")
        if region.radius < 0:
            raise ValidationError("radius", "radius must be nonnegative")
        return True
    if region.kind == "point":
        if region.location is None or not np.all(np.isfinite(region.location)):
            raise ValidationError("location", "missing location")
        return True
    raise ValidationError("kind", f"unknown region kind {region.kind!r}")


def dist_between(a: ConvexRegion, b: ConvexRegion) -> float:
    """Distance from the boundary of ``a`` to the set ``b``."""
    if b.kind == "point":
        return float(abs(a.signed_distance(b.location)[0]))
    if b.kind == "disk":
        return float(max(0.0, abs(a.signed_distance(b.center)[0]) - b.radius))
    # b is a polygon
    if a.kind == "point":
        return float(max(0.0, b.signed_distance(a.location)[0]))
    if a.kind == "disk":
        r = np.linalg.norm(b.vertices - a.center, axis=1)
        dmax = r.max()
        dmin = max(0.0, float(b.signed_distance(a.center)[0]))
        if dmin >= a.radius:
            return float(dmin - a.radius)
        if dmax <= a.radius:
            return float(a.radius - dmax)
        return 0.0
    a0, a1 = a.edges()
    b0, b1 = b.edges()
    d = segment_distance(a0[:, None], a1[:, None], b0[None], b1[None])
    return float(d.min())


def _max_signed_distance(outer: ConvexRegion, inner: ConvexRegion) -> float:
    """Largest signed distance (w.r.t. ``outer``) over the set ``inner``."""
    if inner.kind == "point":
        return float(outer.signed_distance(inner.location)[0])
    if inner.kind == "polygon":
        return float(outer.signed_distance(inner.vertices).max())
    if outer.kind == "disk":
        return float(np.linalg.norm(inner.center - outer.center) + inner.radius - outer.radius)
    return float(outer.signed_distance(inner.center)[0] + inner.radius)


@dataclass(frozen=True, eq=False)
class ConvexRing:
    """The ring ``omega \\ inner`` normalized so the boundary gap is 1.

    ``eps_k`` is the radius of the disk that stands in for a point-like inner
    set when meshing; the true point is kept in ``inner``.
    """

    omega: ConvexRegion
    inner: ConvexRegion
    scale: float = 1.0
    eps_k: float = DEFAULT_EPS_K
    name: str = "custom"

    @property
    def gap(self) -> float:
        return dist_between(self.omega, self.inner)

    @property
    def mesh_inner(self) -> ConvexRegion:
        """The inner region actually meshed around (regularized if a point)."""
        if self.inner.kind == "point":
            return ConvexRegion.disk(self.inner.location, self.eps_k)
        return self.inner

    @property
    def inner_center(self) -> np.ndarray:
        return self.inner.centroid

    def signed_distance(self, x) -> np.ndarray:
        """Signed distance-like function of the meshed ring (negative inside)."""
        return np.maximum(self.omega.signed_distance(x), -self.mesh_inner.signed_distance(x))

    def contains(self, x, tol: float = 1e-9) -> np.ndarray:
        return self.signed_distance(x) <= tol

    def with_eps_k(self, eps_k: float) -> "ConvexRing":
        return ConvexRing(self.omega, self.inner, self.scale, float(eps_k), self.name)


def normalize_ring(
    omega: ConvexRegion,
    inner: ConvexRegion,
    eps_k: float = DEFAULT_EPS_K,
    name: str = "custom",
) -> ConvexRing:
    """Build a ring scaled about the inner centroid so that dist(∂omega, inner) = 1."""
    if omega.kind == "point":
        raise ValidationError("omega", "the outer region must have interior")
    for label, reg in (("omega", omega), ("inner", inner)):
        if not validate_convex(reg):
            raise ValidationError(label, "region is not strictly convex")
    if omega.kind == "disk" and omega.radius <= 0:
        raise ValidationError("omega", "the outer disk must have positive radius")
    omega = omega.ccw()
    inner = inner.ccw()
    size = np.sqrt(max(omega.area, 1e-300))
    reach = _max_signed_distance(omega, inner)
    if reach > _GAP_TOL * size:
        raise ContainmentError("inner region is not contained in omega")
    gap = dist_between(omega, inner)
    if gap <= _GAP_TOL * size or reach > -_GAP_TOL * size:
        raise DegenerateGapError("inner region touches the boundary of omega")
    factor = 1.0 / gap
    about = inner.centroid
    if inner.kind == "point":
        about = np.array(inner.location)
    ring = ConvexRing(omega.scaled(factor, about), inner.scaled(factor, about), factor, eps_k, name)
    if inner.kind == "point" and ring.eps_k >= 0.5:
        raise ValidationError("eps_k", "regularization radius must be below half the gap")
    return ring


@dataclass(frozen=True, eq=False)
class BoundaryParam:
    """Arclength parameterization of a polygon or circle boundary.

    ``breaks`` holds cumulative arclength at each segment start plus the total
    length; polygon segments run counterclockwise from ``vertices[0]``.
    """

    region: ConvexRegion
    arclength: float
    breaks: np.ndarray = field(repr=False)

    @classmethod
    def of(cls, region: ConvexRegion) -> "BoundaryParam":
        region = region.ccw()
        if region.kind == "polygon":
            a, b = region.edges()
            lengths = np.linalg.norm(b - a, axis=1)
            breaks = np.concatenate([[0.0], np.cumsum(lengths)])
        elif region.kind == "disk":
            breaks = np.array([0.0, region.perimeter])
        else:
            raise ValidationError("region", "a point has no boundary to parameterize")
        return cls(region, float(breaks[-1]), breaks)

    @property
    def n_segments(self) -> int:
        return len(self.breaks) - 1

    def _locate(self, s):
        s = np.mod(np.asarray(s, dtype=float), self.arclength)
        k = np.clip(np.searchsorted(self.breaks, s, side="right") - 1, 0, self.n_segments - 1)
        return s, k

    def point(self, s) -> np.ndarray:
        s, k = self._locate(s)
        reg = self.region
        if reg.kind == "disk":
            th = s / reg.radius
            return reg.center + reg.radius * np.stack([np.cos(th), np.sin(th)], axis=-1)
        a, b = reg.edges()
        t = (s - self.breaks[k]) / (self.breaks[k + 1] - self.breaks[k])
        return a[k] + t[..., None] * (b[k] - a[k])

    def tangent(self, s) -> np.ndarray:
        s, k = self._locate(s)
        reg = self.region
        if reg.kind == "disk":
            th = s / reg.radius
            return np.stack([-np.sin(th), np.cos(th)], axis=-1)
        a, b = reg.edges()
        e = b[k] - a[k]
        return e / np.linalg.norm(e, axis=-1, keepdims=True)

    def inward_normal(self, s) -> np.ndarray:
        t = self.tangent(s)
        return np.stack([-t[..., 1], t[..., 0]], axis=-1)

    def vertex_arclengths(self) -> np.ndarray:
        """Arclength of each polygon vertex (empty for a circle)."""
        if self.region.kind != "polygon":
            return np.empty(0)
        return self.breaks[:-1].copy()

    def segment_of(self, s) -> np.ndarray:
        return self._locate(s)[1]


def inscribed_polygon(curve: Callable[[np.ndarray], np.ndarray], n: int) -> ConvexRegion:
    """Polygon through ``n`` points of a closed convex curve.

    ``curve`` maps angles in [0, 2π) to an ``(n, 2)`` array of boundary points
    listed counterclockwise.
    """
    th = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    return ConvexRegion.polygon(curve(th)).ccw()


def ellipse_polygon(a: float, b: float, n: int = 256, center=(0.0, 0.0)) -> ConvexRegion:
    c = np.asarray(center, dtype=float)
    return inscribed_polygon(lambda t: c + np.stack([a * np.cos(t), b * np.sin(t)], axis=1), n)
