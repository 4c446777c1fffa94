"""Gradient recovery and field-level diagnostics.

The checks here turn qualitative properties of p-harmonic potentials in
convex rings into measured numbers: subharmonicity, convexity of level
curves, the interior gradient bound, equicontinuity of the speed across p,
and two integral convergence diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree
from shapely.geometry import LineString

from .errors import DomainError
from .mesh import INTERIOR, TriangleMesh
from .solver import ScalarField


@dataclass(frozen=True, eq=False)
class GradientField:
    """Piecewise-constant gradients plus an area-weighted nodal recovery.

    Attributes
    ----------
    triangle : (m, 2) array
        Exact gradient of the linear interpolant on each triangle.
    vertex : (n, 2) array
        Area-weighted average of the incident triangle gradients.
    speed : (n,) array
        ``|vertex|``.
    degenerate : (n,) bool array
        Vertices whose recovered speed is below ``floor``.
    """

    field: ScalarField
    triangle: np.ndarray
    vertex: np.ndarray
    speed: np.ndarray
    degenerate: np.ndarray
    floor: float

    @property
    def mesh(self) -> TriangleMesh:
        return self.field.mesh

    @property
    def triangle_speed(self) -> np.ndarray:
        return np.linalg.norm(self.triangle, axis=1)

    def at(self, points) -> np.ndarray:
        """Barycentric interpolation of the recovered gradient; NaN outside."""
        return self.mesh.interpolate(self.vertex, points)


def recover_gradient(field: ScalarField, floor: float = 1e-12) -> GradientField:
    mesh = field.mesh
    tg = field.triangle_gradients()
    w = mesh.areas
    num = np.stack(
        [np.bincount(mesh.triangles.ravel(), np.repeat(w * tg[:, k], 3), mesh.n_vertices) for k in range(2)],
        axis=1,
    )
    den = np.bincount(mesh.triangles.ravel(), np.repeat(w, 3), mesh.n_vertices)
    vg = num / den[:, None]
    speed = np.linalg.norm(vg, axis=1)
    return GradientField(field, tg, vg, speed, speed < floor, floor)


# ---------------------------------------------------------------------------
# discrete operators
# ---------------------------------------------------------------------------


def cotangent_laplacian(mesh: TriangleMesh, values) -> np.ndarray:
    """Lumped cotangent Laplacian ``(1/A_i) sum_j w_ij (u_j - u_i)`` at every vertex."""
    u = np.asarray(values, dtype=float)
    t = mesh.triangles
    # stiffness K_kl = area * G_k . G_l, and (K u)_i = -sum_j w_ij (u_j - u_i)
    G = mesh.basis_gradients
    loc = mesh.areas[:, None] * np.einsum("tkd,tld,tl->tk", G, G, u[t])
    Ku = np.bincount(t.ravel(), loc.ravel(), mesh.n_vertices)
    return -Ku / mesh.vertex_areas


def mollified_laplacian(mesh: TriangleMesh, values, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """Weak Laplacian tested against smooth bumps of the given radius.

    For every vertex whose ``radius``-disk lies in the ring, returns
    ``<Lap u, phi> / int phi`` with ``phi = (1 - |x - x_i|^2 / radius^2)_+^2``
    sampled at the nodes.  This is a local average of the cotangent
    Laplacian; pointwise, the cotangent Laplacian of a discrete p-harmonic
    function carries O(p |D^2 u|) noise that does not shrink with h.

    Returns ``(centers, laplacian)``.
    """
    u = np.asarray(values, dtype=float)
    area_lap = cotangent_laplacian(mesh, u) * mesh.vertex_areas
    depth = -mesh.ring.signed_distance(mesh.vertices)
    centers = np.nonzero(depth >= radius)[0]
    if len(centers) == 0:
        return centers, np.empty(0)
    nb = cKDTree(mesh.vertices).query_ball_point(mesh.vertices[centers], radius)
    rows = np.repeat(np.arange(len(centers)), [len(x) for x in nb])
    cols = np.concatenate(nb).astype(np.int64)
    r2 = np.sum((mesh.vertices[cols] - mesh.vertices[centers[rows]]) ** 2, axis=1) / radius**2
    phi = sp.csr_matrix(((1.0 - r2) ** 2, (rows, cols)), shape=(len(centers), mesh.n_vertices))
    return centers, (phi @ area_lap) / (phi @ mesh.vertex_areas)


def check_subharmonic(field: ScalarField, radius: float | None = None) -> float:
    """Largest weak Laplacian over interior test bumps (should be <= 0).

    ``radius`` defaults to three mesh sizes.
    """
    if not np.isfinite(field.p):
        raise DomainError("subharmonicity is checked for finite p only")
    mesh = field.mesh
    _, lap = mollified_laplacian(mesh, field.values, 3.0 * mesh.h if radius is None else radius)
    if len(lap) == 0:
        raise DomainError("no test bump fits inside the ring")
    return float(lap.max())


# ---------------------------------------------------------------------------
# level curves
# ---------------------------------------------------------------------------


def level_segments(mesh: TriangleMesh, values, c: float) -> tuple[np.ndarray, np.ndarray]:
    """Marching-triangles segments of ``{u = c}``.

    Returns ``(points, edge_pairs)``: crossing points keyed by mesh edge, and
    one pair of point indices per crossed triangle.
    """
    u = np.asarray(values, dtype=float)
    edges = mesh.edges
    ua, ub = u[edges[:, 0]], u[edges[:, 1]]
    # half-open rule so a vertex exactly at c is counted once
    cross = (ua >= c) != (ub >= c)
    eid = -np.ones(len(edges), dtype=np.int64)
    eid[cross] = np.arange(cross.sum())
    s = (c - ua[cross]) / (ub[cross] - ua[cross])
    pts = mesh.vertices[edges[cross, 0]] + s[:, None] * (
        mesh.vertices[edges[cross, 1]] - mesh.vertices[edges[cross, 0]]
    )
    n = mesh.n_vertices
    key_all = edges[:, 0].astype(np.int64) * n + edges[:, 1]
    t = mesh.triangles
    loc = []
    for a, b in ((1, 2), (2, 0), (0, 1)):
        e = np.sort(t[:, [a, b]], axis=1)
        loc.append(eid[np.searchsorted(key_all, e[:, 0].astype(np.int64) * n + e[:, 1])])
    loc = np.stack(loc, axis=1)
    hit = loc >= 0
    two = hit.sum(axis=1) == 2
    pairs = np.sort(loc[two], axis=1)[:, 1:]
    return pts, pairs


def _chain(pairs: np.ndarray, n_pts: int) -> list[np.ndarray]:
    """Link segments into polylines (closed loops repeat their first index)."""
    adj = [[] for _ in range(n_pts)]
    for a, b in pairs:
        adj[a].append(b)
        adj[b].append(a)
    seen = np.zeros(n_pts, dtype=bool)
    order = sorted(range(n_pts), key=lambda i: (len(adj[i]) != 1, i))
    chains = []
    for start in order:
        if seen[start] or not adj[start]:
            continue
        path = [start]
        seen[start] = True
        prev, cur = -1, start
        while True:
            nxt = [k for k in adj[cur] if k != prev and (not seen[k] or (k == start and len(path) > 2))]
            if not nxt:
                break
            prev, cur = cur, nxt[0]
            path.append(cur)
            if cur == start:
                break
            seen[cur] = True
        chains.append(np.array(path))
    return chains


def level_curves(field: ScalarField, c: float) -> list[np.ndarray]:
    """Polylines of ``{u = c}``; closed curves end with their first point."""
    v = field.values
    if not v.min() < c < v.max():
        raise DomainError(f"level c={c} outside the range of the field")
    pts, pairs = level_segments(field.mesh, v, c)
    return [pts[ch] for ch in _chain(pairs, len(pts))]


def _reflex_turning(poly: np.ndarray) -> float:
    closed = len(poly) > 3 and np.allclose(poly[0], poly[-1])
    q = poly[:-1] if closed else poly
    # collapse coincident points (level curve through a vertex)
    keep = np.ones(len(q), dtype=bool)
    keep[1:] = np.linalg.norm(np.diff(q, axis=0), axis=1) > 1e-14
    q = q[keep]
    if len(q) < 3:
        return 0.0
    if closed:
        a, b = np.roll(q, 1, axis=0) - q, np.roll(q, -1, axis=0) - q
        e_in, e_out = -a, b
    else:
        e_in, e_out = q[1:-1] - q[:-2], q[2:] - q[1:-1]
    turn = np.arctan2(
        e_in[:, 0] * e_out[:, 1] - e_in[:, 1] * e_out[:, 0], np.einsum("ij,ij->i", e_in, e_out)
    )
    total = turn.sum()
    # orientation: the dominant turning sign is the convex one
    sign = 1.0 if total >= 0 else -1.0
    return float(np.sum(np.maximum(-sign * turn, 0.0)))


def check_level_convexity(field: ScalarField, c: float, resolution: float | None = None) -> float:
    """Total absolute turning at reflex vertices of ``{u = c}`` (radians).

    The marching-triangles polyline is first simplified (Douglas-Peucker)
    with tolerance ``resolution``, default ``h / 20``: where a level curve
    crosses a ridge its P1 position is only known to that accuracy, and
    wiggles below it are not geometry.
    """
    if not 0.0 < c < 1.0:
        raise DomainError(f"level c={c} must lie in (0, 1)")
    tol = field.mesh.h / 20.0 if resolution is None else resolution
    total = 0.0
    for curve in level_curves(field, c):
        if tol > 0 and len(curve) > 3:
            curve = np.asarray(LineString(curve).simplify(tol, preserve_topology=False).coords)
        total += _reflex_turning(curve)
    return total


# ---------------------------------------------------------------------------
# gradient bound
# ---------------------------------------------------------------------------


def gradient_bound(p: float, c: float) -> float:
    """The interior bound ``(1/(1-c))^(1/(p-2))`` for ``|grad u_p|`` on ``{u_p <= c}``."""
    if not 0.0 < c < 1.0:
        raise DomainError("c must lie in (0, 1)")
    if not p > 2.0:
        raise DomainError("the bound needs p > 2")
    if np.isinf(p):
        return 1.0
    return float((1.0 / (1.0 - c)) ** (1.0 / (p - 2.0)))


def check_gradient_bound(field: ScalarField, c: float) -> float:
    """Bound minus the largest triangle speed on ``{u <= c}`` (>= 0 expected)."""
    bound = gradient_bound(field.p, c)
    tri_max = field.values[field.mesh.triangles].max(axis=1)
    sel = tri_max <= c
    if not sel.any():
        return bound
    speed = np.linalg.norm(field.triangle_gradients()[sel], axis=1)
    return float(bound - speed.max())


# ---------------------------------------------------------------------------
# sweeps over p
# ---------------------------------------------------------------------------


def level_band(field: ScalarField, lo: float, hi: float) -> np.ndarray:
    """Vertex mask of ``{lo <= u <= hi}``."""
    return (field.values >= lo) & (field.values <= hi)


def _check_region(mesh: TriangleMesh, mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (mesh.n_vertices,):
        raise DomainError("region mask must have one entry per vertex")
    if np.any(mask & (mesh.boundary_tags != INTERIOR)):
        raise DomainError("region touches the boundary of the ring")
    return mask


@dataclass(frozen=True)
class ModulusTable:
    ps: tuple[float, ...]
    moduli: tuple[float, ...]
    delta: float

    @property
    def spread(self) -> float:
        """Ratio of the largest to the smallest modulus."""
        lo = min(self.moduli)
        return float(max(self.moduli) / lo) if lo > 0 else np.inf

    def bounded(self, factor: float = 2.0) -> bool:
        return self.spread <= factor


def equicontinuity_diagnostic(fields, region: np.ndarray, delta: float) -> ModulusTable:
    """Oscillation of the recovered speed over close vertex pairs in ``region``.

    ``fields`` must share one mesh; ``region`` is a vertex mask that may not
    contain boundary vertices.
    """
    fields = sorted(fields, key=lambda f: f.p)
    mesh = fields[0].mesh
    if any(f.mesh is not mesh for f in fields):
        raise DomainError("all fields must share one mesh")
    mask = _check_region(mesh, region)
    idx = np.nonzero(mask)[0]
    pairs = cKDTree(mesh.vertices[idx]).query_pairs(delta, output_type="ndarray")
    moduli = []
    for f in fields:
        s = recover_gradient(f).speed[idx]
        moduli.append(float(np.abs(s[pairs[:, 0]] - s[pairs[:, 1]]).max()) if len(pairs) else 0.0)
    return ModulusTable(tuple(f.p for f in fields), tuple(moduli), float(delta))


def appendix_integrals(field_p: ScalarField, field_ref: ScalarField, region: np.ndarray) -> tuple[float, float]:
    """Gradient-distance and speed-regularity integrals over a vertex region.

    ``I = sum |grad u_p - grad u_ref|^2 area`` and
    ``J = sum |grad(|grad u_p|^2)|^2 area``, both over the triangles whose
    three vertices lie in ``region``; ``|grad u_p|^2`` is the recovered
    nodal speed squared, interpolated linearly.
    """
    mesh = field_p.mesh
    if field_ref.mesh is not mesh:
        raise DomainError("fields must share one mesh")
    mask = _check_region(mesh, region)
    sel = mask[mesh.triangles].all(axis=1)
    a = mesh.areas[sel]
    dg = field_p.triangle_gradients()[sel] - field_ref.triangle_gradients()[sel]
    I = float(np.sum(a * np.einsum("td,td->t", dg, dg)))
    s2 = recover_gradient(field_p).speed ** 2
    gs = np.einsum("tk,tkd->td", s2[mesh.triangles[sel]], mesh.basis_gradients[sel])
    J = float(np.sum(a * np.einsum("td,td->t", gs, gs)))
    return I, J
