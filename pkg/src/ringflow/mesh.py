"""Triangulation of convex rings.

Meshes are produced by force-balance relaxation of a point cloud against the
ring's signed distance (Persson & Strang's DistMesh scheme), followed by an
exact snap of the boundary vertices onto ∂Ω and ∂K.  Everything is
deterministic for a given seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import Delaunay

from . import kernels
from .errors import ResolutionError
from .geometry import ConvexRing

INTERIOR, OUTER, INNER = 0, 1, 2

#: node count around a small regularized inner disk
_MIN_INNER_NODES = 24
#: growth rate of the local size away from a refined inner boundary
_GRADING = 0.3


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Conforming P1 triangle mesh of a ring.

    ``boundary_tags`` holds ``OUTER``/``INNER``/``INTERIOR`` per vertex.  All
    triangles are positively oriented.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_tags: np.ndarray
    h: float
    ring: ConvexRing | None = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("vertices", "triangles", "boundary_tags"):
            getattr(self, name).setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """Gradients of the three hat functions on each triangle, shape (m, 3, 2)."""
        p = self.vertices[self.triangles]
        # gradient of lambda_i is the inward-rotated opposite edge over 2A
        e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
        g = np.stack([-e[..., 1], e[..., 0]], axis=-1)
        return g / (2.0 * self.areas[:, None, None])

    @cached_property
    def free(self) -> np.ndarray:
        return self.boundary_tags == INTERIOR

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges (sorted vertex pairs)."""
        t = self.triangles
        e = np.concatenate([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    @cached_property
    def neighbors(self) -> np.ndarray:
        """Triangle across the edge opposite each local vertex, -1 on the boundary."""
        t = self.triangles
        m = len(t)
        e = np.concatenate([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]])
        e.sort(axis=1)
        owner = np.tile(np.arange(m), 3)
        local = np.repeat(np.arange(3), m)
        key = e[:, 0].astype(np.int64) * self.n_vertices + e[:, 1]
        order = np.argsort(key, kind="stable")
        ks = key[order]
        nb = -np.ones((m, 3), dtype=np.int64)
        same = np.nonzero(ks[1:] == ks[:-1])[0]
        a, b = order[same], order[same + 1]
        nb[owner[a], local[a]] = owner[b]
        nb[owner[b], local[b]] = owner[a]
        return nb

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        t = self.triangles
        nb = self.neighbors
        rows, cols = np.nonzero(nb < 0)
        return np.stack([t[rows, (cols + 1) % 3], t[rows, (cols + 2) % 3]], axis=1)

    @cached_property
    def vertex_areas(self) -> np.ndarray:
        """Barycentric (lumped) area per vertex."""
        va = np.zeros(self.n_vertices)
        np.add.at(va, self.triangles.ravel(), np.repeat(self.areas / 3.0, 3))
        return va

    @cached_property
    def diameters(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return np.max(np.linalg.norm(p - np.roll(p, 1, axis=1), axis=2), axis=1)

    def min_angle(self) -> float:
        """Smallest interior angle over the mesh, in degrees."""
        p = self.vertices[self.triangles]
        a = np.roll(p, -1, axis=1) - p
        b = np.roll(p, 1, axis=1) - p
        cosang = np.einsum("tij,tij->ti", a, b) / (
            np.linalg.norm(a, axis=2) * np.linalg.norm(b, axis=2)
        )
        return float(np.degrees(np.arccos(np.clip(cosang, -1, 1))).min())

    @cached_property
    def locator(self) -> "kernels.TriangleLocator":
        return kernels.TriangleLocator(self.vertices, self.triangles, self.neighbors)

    def locate(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Containing triangle (-1 if outside) and barycentric coordinates."""
        return self.locator.locate(np.atleast_2d(np.asarray(points, dtype=float)))

    def interpolate(self, values, points) -> np.ndarray:
        """P1 interpolation of nodal ``values`` (scalar or vector) at ``points``; NaN outside."""
        values = np.asarray(values, dtype=float)
        tri, bary = self.locate(points)
        out_shape = (len(tri),) + values.shape[1:]
        out = np.full(out_shape, np.nan)
        ok = tri >= 0
        nodes = self.triangles[tri[ok]]
        out[ok] = np.einsum("pk,pk...->p...", bary[ok], values[nodes])
        return out


_SLIVER_ANGLE = np.deg2rad(20.0)


def _size_function(ring: ConvexRing, h: float):
    """Target local edge length; graded near a small inner boundary."""
    inner = ring.mesh_inner
    s_k = inner.perimeter / _MIN_INNER_NODES if inner.kind != "point" else h
    if s_k >= h:
        return (lambda x: np.full(len(x), h)), h
    return (lambda x: np.minimum(h, s_k + _GRADING * np.abs(inner.signed_distance(x)))), s_k


def _fixed_points(ring: ConvexRing) -> np.ndarray:
    pts = []
    for reg in (ring.omega, ring.mesh_inner):
        if reg.kind == "polygon":
            pts.append(reg.vertices)
    return np.concatenate(pts) if pts else np.empty((0, 2))


def _initial_points(ring: ConvexRing, size, hmin, rng) -> np.ndarray:
    om = ring.omega
    if om.kind == "polygon":
        lo, hi = om.vertices.min(axis=0), om.vertices.max(axis=0)
    else:
        lo, hi = om.center - om.radius, om.center + om.radius
    ys = np.arange(lo[1], hi[1] + hmin, hmin * np.sqrt(3) / 2)
    xs = np.arange(lo[0], hi[0] + hmin, hmin)
    X, Y = np.meshgrid(xs, ys)
    X[1::2] += hmin / 2
    p = np.stack([X.ravel(), Y.ravel()], axis=1)
    p = p[ring.signed_distance(p) < -1e-3 * hmin]
    keep_prob = (hmin / size(p)) ** 2
    return p[rng.random(len(p)) < keep_prob]


def generate_mesh(ring: ConvexRing, h: float, seed: int = 0, max_iter: int = 400) -> TriangleMesh:
    """Triangulate the closure of the ring with target edge length ``h``.

    Raises :class:`ResolutionError` when the ring is too thin for ``h``.
    """
    if not 0 < h < 0.5:
        raise ResolutionError(f"mesh size h={h} outside (0, 0.5)")
    inner = ring.mesh_inner
    gap = ring.gap if ring.inner.kind != "point" else 1.0 - ring.eps_k
    if gap < 2 * h:
        raise ResolutionError(f"gap {gap:.3g} < 2h; use a smaller h")
    if inner.kind == "disk" and inner.radius <= 0:
        raise ResolutionError("regularization radius must be positive")

    rng = np.random.default_rng(seed)
    size, hmin = _size_function(ring, h)
    dist = ring.signed_distance
    geps = 1e-3 * hmin
    deps = np.sqrt(np.finfo(float).eps) * hmin
    fscale, deltat, dptol, ttol = 1.2, 0.2, 1e-3, 0.1

    pfix = _fixed_points(ring)
    p = _initial_points(ring, size, hmin, rng)
    if len(pfix):
        near = np.min(np.linalg.norm(p[:, None, :] - pfix[None], axis=2), axis=1)
        p = np.concatenate([pfix, p[near > 0.5 * size(p)]])
    nfix = len(pfix)

    pold = np.full_like(p, np.inf)
    bars = None
    for _ in range(max_iter):
        if np.max(np.linalg.norm(p - pold, axis=1) / size(p)) > ttol or bars is None:
            pold = p.copy()
            t = Delaunay(p).simplices
            cen = p[t].mean(axis=1)
            t = t[dist(cen) < -geps]
            bars = _unique_edges(t, len(p))
        vec = p[bars[:, 0]] - p[bars[:, 1]]
        L = np.linalg.norm(vec, axis=1)
        hb = size((p[bars[:, 0]] + p[bars[:, 1]]) / 2)
        L0 = hb * fscale * np.sqrt(np.sum(L**2) / np.sum(hb**2))
        F = np.maximum(L0 - L, 0.0)
        Fv = (F / L)[:, None] * vec
        Ftot = np.stack(
            [
                np.bincount(bars[:, 0], Fv[:, k], len(p)) - np.bincount(bars[:, 1], Fv[:, k], len(p))
                for k in range(2)
            ],
            axis=1,
        )
        Ftot[:nfix] = 0.0
        p = p + deltat * Ftot
        d = dist(p)
        ix = d > 0
        if np.any(ix):
            q = p[ix]
            dgx = (dist(q + [deps, 0]) - d[ix]) / deps
            dgy = (dist(q + [0, deps]) - d[ix]) / deps
            g2 = dgx**2 + dgy**2
            g2 = np.where(g2 == 0, 1.0, g2)
            p[ix] = q - (d[ix] / g2)[:, None] * np.stack([dgx, dgy], axis=1)
        move = np.linalg.norm(deltat * Ftot[d < -geps], axis=1) / size(p[d < -geps])
        if move.size == 0 or move.max() < dptol:
            break

    return _finalize(ring, p, h, geps, nfix, size)


def _unique_edges(t, n):
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    e.sort(axis=1)
    key = np.unique(e[:, 0].astype(np.int64) * n + e[:, 1])
    return np.stack([key // n, key % n], axis=1)


def _boundary_nodes(t):
    e = np.concatenate([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]])
    e.sort(axis=1)
    n = int(t.max()) + 1
    key, counts = np.unique(e[:, 0].astype(np.int64) * n + e[:, 1], return_counts=True)
    once = key[counts == 1]
    return np.unique(np.concatenate([once // n, once % n]))


def _min_angles(q):
    out = np.full(len(q), np.pi)
    for k in range(3):
        u = q[:, (k + 1) % 3] - q[:, k]
        v = q[:, (k + 2) % 3] - q[:, k]
        cosv = np.einsum("ij,ij->i", u, v) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        out = np.minimum(out, np.arccos(np.clip(cosv, -1.0, 1.0)))
    return out


def _finalize(ring: ConvexRing, p0: np.ndarray, h: float, geps: float, nfix: int, size) -> TriangleMesh:
    for _ in range(10):
        t = Delaunay(p0).simplices
        t = t[ring.signed_distance(p0[t].mean(axis=1)) < -geps]
        # boundary vertices are exactly those on boundary edges of the triangulation
        bnodes = _boundary_nodes(t)
        tags = np.zeros(len(p0), dtype=np.int8)
        d_out = np.abs(ring.omega.signed_distance(p0[bnodes]))
        d_in = np.abs(ring.mesh_inner.signed_distance(p0[bnodes]))
        is_outer = d_out <= d_in
        tags[bnodes[is_outer]] = OUTER
        tags[bnodes[~is_outer]] = INNER
        p = p0.copy()
        p[bnodes[is_outer]] = ring.omega.project_to_boundary(p0[bnodes[is_outer]])
        p[bnodes[~is_outer]] = ring.mesh_inner.project_to_boundary(p0[bnodes[~is_outer]])
        bad = _min_angles(p[t]) < _SLIVER_ANGLE
        if not bad.any():
            break
        # interior nodes crowding the boundary are removed, then we retriangulate
        cand = np.unique(t[bad])
        cand = cand[(tags[cand] == INTERIOR) & (cand >= nfix)]
        cand = cand[-ring.signed_distance(p[cand]) < 0.5 * size(p[cand])]
        if len(cand) == 0:
            break
        p0 = np.delete(p0, cand, axis=0)

    # drop unused points and orient counterclockwise
    used = np.unique(t)
    remap = -np.ones(len(p), dtype=np.int64)
    remap[used] = np.arange(len(used))
    p, tags, t = p[used], tags[used], remap[t]
    q = p[t]
    cr = (q[:, 1, 0] - q[:, 0, 0]) * (q[:, 2, 1] - q[:, 0, 1]) - (q[:, 1, 1] - q[:, 0, 1]) * (
        q[:, 2, 0] - q[:, 0, 0]
    )
    t[cr < 0] = t[cr < 0][:, [0, 2, 1]]
    order = np.lexsort((t[:, 2], t[:, 1], t[:, 0]))
    return TriangleMesh(p, np.ascontiguousarray(t[order]), tags, float(h), ring)
