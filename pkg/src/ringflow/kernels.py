"""Hot numeric kernels with a numba path and a pure-numpy path.

Each kernel exists twice: ``*_numba`` (compiled with ``@njit``) and
``*_numpy`` (vectorized numpy, or plain Python for inherently sequential
loops such as ODE integration).  The public names dispatch on
:data:`ringflow._backend.USE_NUMBA`, which honours ``RINGFLOW_BACKEND``.
"""

from __future__ import annotations

import math

import numpy as np

from ._backend import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# p-energy assembly
# ---------------------------------------------------------------------------


def assemble_p_numpy(u, tris, bgrad, areas, p, eps_reg):
    """Regularized p-energy, its gradient and the local Hessian blocks.

    Returns ``(energy, grad, hess)`` with ``hess`` of shape (m, 3, 3); the
    energy is ``sum area * (|g|^2 + eps)^(p/2) / p``.
    """
    g = np.einsum("tk,tkd->td", u[tris], bgrad)
    s2 = np.einsum("td,td->t", g, g) + eps_reg
    w = s2 ** (0.5 * p - 1.0)
    energy = float(np.sum(areas * s2 * w) / p)
    Gg = np.einsum("tkd,td->tk", bgrad, g)
    loc = (areas * w)[:, None] * Gg
    grad = np.zeros(len(u))
    np.add.at(grad, tris.ravel(), loc.ravel())
    w2 = (p - 2.0) * s2 ** (0.5 * p - 2.0)
    GG = np.einsum("tkd,tld->tkl", bgrad, bgrad)
    hess = areas[:, None, None] * (w[:, None, None] * GG + w2[:, None, None] * Gg[:, :, None] * Gg[:, None, :])
    return energy, grad, hess


@njit
def assemble_p_numba(u, tris, bgrad, areas, p, eps_reg):
    m = tris.shape[0]
    grad = np.zeros(u.shape[0])
    hess = np.empty((m, 3, 3))
    energy = 0.0
    gg = np.empty(3)
    for t in range(m):
        gx = 0.0
        gy = 0.0
        for k in range(3):
            uk = u[tris[t, k]]
            gx += uk * bgrad[t, k, 0]
            gy += uk * bgrad[t, k, 1]
        s2 = gx * gx + gy * gy + eps_reg
        w = s2 ** (0.5 * p - 1.0)
        w2 = (p - 2.0) * s2 ** (0.5 * p - 2.0)
        a = areas[t]
        energy += a * s2 * w
        for k in range(3):
            gg[k] = bgrad[t, k, 0] * gx + bgrad[t, k, 1] * gy
            grad[tris[t, k]] += a * w * gg[k]
        for k in range(3):
            for l in range(3):
                dot = bgrad[t, k, 0] * bgrad[t, l, 0] + bgrad[t, k, 1] * bgrad[t, l, 1]
                hess[t, k, l] = a * (w * dot + w2 * gg[k] * gg[l])
    return energy / p, grad, hess


def energy_only(u, tris, bgrad, areas, p, eps_reg):
    g = np.einsum("tk,tkd->td", u[tris], bgrad)
    s2 = np.einsum("td,td->t", g, g) + eps_reg
    return float(np.sum(areas * s2 ** (0.5 * p)) / p)


# ---------------------------------------------------------------------------
# point location
# ---------------------------------------------------------------------------


def _bucket_grid(lo, hi, n_cells_hint):
    span = np.maximum(hi - lo, 1e-12)
    cell = math.sqrt(span[0] * span[1] / max(n_cells_hint, 1))
    nx = max(1, int(math.ceil(span[0] / cell)))
    ny = max(1, int(math.ceil(span[1] / cell)))
    return cell, nx, ny


def _build_buckets(bb_lo, bb_hi, lo, cell, nx, ny):
    """CSR lists of items whose bounding boxes overlap each grid cell."""
    i0 = np.clip(((bb_lo[:, 0] - lo[0]) / cell).astype(np.int64), 0, nx - 1)
    i1 = np.clip(((bb_hi[:, 0] - lo[0]) / cell).astype(np.int64), 0, nx - 1)
    j0 = np.clip(((bb_lo[:, 1] - lo[1]) / cell).astype(np.int64), 0, ny - 1)
    j1 = np.clip(((bb_hi[:, 1] - lo[1]) / cell).astype(np.int64), 0, ny - 1)
    nxs = i1 - i0 + 1
    nys = j1 - j0 + 1
    counts = nxs * nys
    item = np.repeat(np.arange(len(bb_lo)), counts)
    off = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    ci = np.repeat(i0, counts) + off % np.repeat(nxs, counts)
    cj = np.repeat(j0, counts) + off // np.repeat(nxs, counts)
    cid = cj * nx + ci
    order = np.argsort(cid, kind="stable")
    start = np.zeros(nx * ny + 1, dtype=np.int64)
    np.add.at(start, cid + 1, 1)
    return np.cumsum(start), item[order].astype(np.int64)


def _locate_loop(points, verts, tris, start, items, lo0, lo1, cell, nx, ny):
    n = points.shape[0]
    tri = np.empty(n, dtype=np.int64)
    bary = np.zeros((n, 3))
    for k in range(n):
        t = _grid_locate_py(verts, tris, start, items, lo0, lo1, cell, nx, ny, points[k, 0], points[k, 1])
        tri[k] = t
        if t >= 0:
            l0, l1, l2 = _bary_py(verts, tris, t, points[k, 0], points[k, 1])
            bary[k, 0] = l0
            bary[k, 1] = l1
            bary[k, 2] = l2
    return tri, bary


def locate_numpy(points, verts, tris, start, items, lo0, lo1, cell, nx, ny):
    n = len(points)
    i = np.floor((points[:, 0] - lo0) / cell).astype(np.int64)
    j = np.floor((points[:, 1] - lo1) / cell).astype(np.int64)
    inside = (i >= 0) & (j >= 0) & (i < nx) & (j < ny)
    cid = np.where(inside, j * nx + i, 0)
    cnt = np.where(inside, start[cid + 1] - start[cid], 0)
    pt = np.repeat(np.arange(n), cnt)
    off = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    cand = items[np.repeat(start[cid], cnt) + off]
    v = verts[tris[cand]]
    d1 = v[:, 1] - v[:, 0]
    d2 = v[:, 2] - v[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    pp = points[pt] - v[:, 0]
    l1 = (pp[:, 0] * d2[:, 1] - pp[:, 1] * d2[:, 0]) / det
    l2 = (d1[:, 0] * pp[:, 1] - d1[:, 1] * pp[:, 0]) / det
    lam = np.stack([1.0 - l1 - l2, l1, l2], axis=1)
    score = lam.min(axis=1)
    tri = -np.ones(n, dtype=np.int64)
    bary = np.zeros((n, 3))
    if len(pt):
        # best candidate per point: sort by (point, -score)
        order = np.lexsort((-score, pt))
        first = np.ones(len(order), dtype=bool)
        first[1:] = pt[order][1:] != pt[order][:-1]
        sel = order[first]
        ok = score[sel] >= -1e-10
        tri[pt[sel[ok]]] = cand[sel[ok]]
        bary[pt[sel[ok]]] = lam[sel[ok]]
    return tri, bary


class TriangleLocator:
    """Uniform bucket grid over triangle bounding boxes."""

    def __init__(self, verts, tris, neighbors):
        self.verts = np.ascontiguousarray(verts, dtype=float)
        self.tris = np.ascontiguousarray(tris, dtype=np.int64)
        self.neighbors = np.ascontiguousarray(neighbors, dtype=np.int64)
        lo = self.verts.min(axis=0) - 1e-9
        hi = self.verts.max(axis=0) + 1e-9
        self.cell, self.nx, self.ny = _bucket_grid(lo, hi, len(tris) / 2)
        self.lo = lo
        tv = self.verts[self.tris]
        self.start, self.items = _build_buckets(tv.min(axis=1), tv.max(axis=1), lo, self.cell, self.nx, self.ny)

    def args(self):
        return (self.verts, self.tris, self.start, self.items, self.lo[0], self.lo[1], self.cell, self.nx, self.ny)

    def locate(self, points, backend=None):
        points = np.ascontiguousarray(points, dtype=float)
        use_numba = USE_NUMBA if backend is None else backend == "numba"
        fn = _compiled()["locate"] if use_numba else locate_numpy
        return fn(points, *self.args())


# ---------------------------------------------------------------------------
# point-to-segment-set distances
# ---------------------------------------------------------------------------


@njit
def _seg_dist(px, py, ax, ay, bx, by):
    dx = bx - ax
    dy = by - ay
    den = dx * dx + dy * dy
    t = 0.0
    if den > 0.0:
        t = ((px - ax) * dx + (py - ay) * dy) / den
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    qx = ax + t * dx - px
    qy = ay + t * dy - py
    return math.sqrt(qx * qx + qy * qy), t


@njit
def segment_query_numba(points, seg_a, seg_b, start, items, lo0, lo1, cell, nx, ny, radius):
    """Nearest segment within ``radius`` (ring search over the bucket grid)."""
    n = points.shape[0]
    dist = np.full(n, np.inf)
    seg = -np.ones(n, dtype=np.int64)
    par = np.zeros(n)
    reach = nx + ny
    if radius / cell < reach:
        reach = int(math.ceil(radius / cell))
    for k in range(n):
        x = points[k, 0]
        y = points[k, 1]
        ci = int(math.floor((x - lo0) / cell))
        cj = int(math.floor((y - lo1) / cell))
        for j in range(max(cj - reach, 0), min(cj + reach, ny - 1) + 1):
            for i in range(max(ci - reach, 0), min(ci + reach, nx - 1) + 1):
                cid = j * nx + i
                for q in range(start[cid], start[cid + 1]):
                    s = items[q]
                    d, t = _seg_dist(x, y, seg_a[s, 0], seg_a[s, 1], seg_b[s, 0], seg_b[s, 1])
                    if d < dist[k] or (d == dist[k] and s < seg[k]):
                        dist[k] = d
                        seg[k] = s
                        par[k] = t
        if dist[k] > radius:
            dist[k] = np.inf
            seg[k] = -1
            par[k] = 0.0
    return dist, seg, par


def segment_query_numpy(points, seg_a, seg_b, start, items, lo0, lo1, cell, nx, ny, radius, chunk=2048):
    # exact brute force in chunks; the bucket grid only matters for the numba path
    n = len(points)
    dist = np.full(n, np.inf)
    seg = -np.ones(n, dtype=np.int64)
    par = np.zeros(n)
    if len(seg_a) == 0:
        return dist, seg, par
    ab = seg_b - seg_a
    den = np.einsum("sj,sj->s", ab, ab)
    den = np.where(den > 0, den, 1.0)
    for c0 in range(0, n, chunk):
        p = points[c0 : c0 + chunk]
        t = np.clip(np.einsum("psj,sj->ps", p[:, None, :] - seg_a[None], ab) / den, 0.0, 1.0)
        q = seg_a[None] + t[..., None] * ab[None]
        d = np.linalg.norm(q - p[:, None, :], axis=2)
        k = np.argmin(d, axis=1)
        rows = np.arange(len(p))
        dk = d[rows, k]
        keep = dk <= radius
        dist[c0 : c0 + chunk] = np.where(keep, dk, np.inf)
        seg[c0 : c0 + chunk] = np.where(keep, k, -1)
        par[c0 : c0 + chunk] = np.where(keep, t[rows, k], 0.0)
    return dist, seg, par


class SegmentIndex:
    """Uniform spatial hash over segment bounding boxes.

    ``query(points, radius)`` returns distance, segment id and segment
    parameter of the nearest segment within ``radius`` (inf / -1 beyond it).
    """

    def __init__(self, seg_a, seg_b, cell=None):
        self.seg_a = np.ascontiguousarray(seg_a, dtype=float).reshape(-1, 2)
        self.seg_b = np.ascontiguousarray(seg_b, dtype=float).reshape(-1, 2)
        allp = np.concatenate([self.seg_a, self.seg_b]) if len(self.seg_a) else np.zeros((1, 2))
        lo = allp.min(axis=0) - 1e-9
        hi = allp.max(axis=0) + 1e-9
        if cell is None:
            _, nx, ny = _bucket_grid(lo, hi, max(len(self.seg_a), 1))
            cell = max(float(np.max((hi - lo) / np.array([nx, ny]))), 1e-12)
        self.cell = float(cell)
        self.nx = max(1, int(math.ceil((hi[0] - lo[0]) / self.cell)))
        self.ny = max(1, int(math.ceil((hi[1] - lo[1]) / self.cell)))
        self.lo = lo
        self.start, self.items = _build_buckets(
            np.minimum(self.seg_a, self.seg_b), np.maximum(self.seg_a, self.seg_b), lo, self.cell, self.nx, self.ny
        )

    def __len__(self):
        return len(self.seg_a)

    def query(self, points, radius, backend=None):
        points = np.ascontiguousarray(np.atleast_2d(points), dtype=float)
        use_numba = USE_NUMBA if backend is None else backend == "numba"
        if len(self.seg_a) == 0:
            n = len(points)
            return np.full(n, np.inf), -np.ones(n, dtype=np.int64), np.zeros(n)
        fn = segment_query_numba if use_numba else segment_query_numpy
        return fn(
            points, self.seg_a, self.seg_b, self.start, self.items,
            self.lo[0], self.lo[1], self.cell, self.nx, self.ny, float(radius),
        )


# ---------------------------------------------------------------------------
# streamline integration (Dormand-Prince 5(4))
# ---------------------------------------------------------------------------

TERM_REACHED_INNER = 0
TERM_STAGNATED = 1
TERM_LEFT_DOMAIN = 2
TERM_MAX_STEPS = 3

# region codes for the boundary distance helpers
REGION_DISK = 0
REGION_POLYGON = 1


def _sdf_impl(kind, center, radius, poly, x, y):
    if kind == 0:
        dx = x - center[0]
        dy = y - center[1]
        return math.sqrt(dx * dx + dy * dy) - radius
    n = poly.shape[0]
    dmin = 1e300
    inside = True
    for i in range(n):
        ax = poly[i, 0]
        ay = poly[i, 1]
        bx = poly[(i + 1) % n, 0]
        by = poly[(i + 1) % n, 1]
        d, _ = _seg_dist_py(x, y, ax, ay, bx, by)
        if d < dmin:
            dmin = d
        if (bx - ax) * (y - ay) - (by - ay) * (x - ax) <= 0.0:
            inside = False
    return -dmin if inside else dmin


def _seg_dist_py(px, py, ax, ay, bx, by):
    dx = bx - ax
    dy = by - ay
    den = dx * dx + dy * dy
    t = 0.0
    if den > 0.0:
        t = ((px - ax) * dx + (py - ay) * dy) / den
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    qx = ax + t * dx - px
    qy = ay + t * dy - py
    return math.sqrt(qx * qx + qy * qy), t


def _walk_impl(verts, tris, nbrs, start, items, lo0, lo1, cell, nx, ny, t0, x, y):
    """Walk from triangle ``t0`` toward (x, y).

    Returns (triangle, inside flag).  When the walk leaves the mesh, the last
    triangle is returned with inside=False so callers can extrapolate.
    """
    t = t0
    if t < 0:
        t = _grid_locate_py(verts, tris, start, items, lo0, lo1, cell, nx, ny, x, y)
        if t >= 0:
            return t, True
        t = 0
    for _ in range(4096):
        l0, l1, l2 = _bary_py(verts, tris, t, x, y)
        if l0 >= -1e-12 and l1 >= -1e-12 and l2 >= -1e-12:
            return t, True
        k = 0
        mn = l0
        if l1 < mn:
            k = 1
            mn = l1
        if l2 < mn:
            k = 2
        nb = nbrs[t, k]
        if nb < 0:
            # try the other negative edge before giving up
            alt = -1
            lam = (l0, l1, l2)
            for j in range(3):
                if j != k and lam[j] < -1e-12 and nbrs[t, j] >= 0:
                    alt = nbrs[t, j]
            if alt < 0:
                g = _grid_locate_py(verts, tris, start, items, lo0, lo1, cell, nx, ny, x, y)
                if g >= 0:
                    return g, True
                return t, False
            nb = alt
        t = nb
    g = _grid_locate_py(verts, tris, start, items, lo0, lo1, cell, nx, ny, x, y)
    if g >= 0:
        return g, True
    return t, False


def _bary_py(verts, tris, t, x, y):
    a = tris[t, 0]
    b = tris[t, 1]
    c = tris[t, 2]
    x0 = verts[a, 0]
    y0 = verts[a, 1]
    d1x = verts[b, 0] - x0
    d1y = verts[b, 1] - y0
    d2x = verts[c, 0] - x0
    d2y = verts[c, 1] - y0
    det = d1x * d2y - d1y * d2x
    px = x - x0
    py = y - y0
    l1 = (px * d2y - py * d2x) / det
    l2 = (d1x * py - d1y * px) / det
    return 1.0 - l1 - l2, l1, l2


def _grid_locate_py(verts, tris, start, items, lo0, lo1, cell, nx, ny, x, y):
    i = int(math.floor((x - lo0) / cell))
    j = int(math.floor((y - lo1) / cell))
    if i < 0 or j < 0 or i >= nx or j >= ny:
        return -1
    cid = j * nx + i
    best = -1
    best_min = -1e300
    for q in range(start[cid], start[cid + 1]):
        t = items[q]
        l0, l1, l2 = _bary_py(verts, tris, t, x, y)
        mn = min(l0, min(l1, l2))
        if mn > best_min:
            best_min = mn
            best = t
    if best_min >= -1e-10:
        return best
    return -1


def _eval_impl(verts, tris, nbrs, start, items, lo0, lo1, cell, nx, ny, vgrad, u, t0, x, y):
    """Interpolated gradient and value at (x, y); extrapolates from the nearest triangle outside."""
    t, inside = _walk_impl(verts, tris, nbrs, start, items, lo0, lo1, cell, nx, ny, t0, x, y)
    l0, l1, l2 = _bary_py(verts, tris, t, x, y)
    if not inside:
        l0 = max(l0, 0.0)
        l1 = max(l1, 0.0)
        l2 = max(l2, 0.0)
        s = l0 + l1 + l2
        l0 /= s
        l1 /= s
        l2 /= s
    a = tris[t, 0]
    b = tris[t, 1]
    c = tris[t, 2]
    gx = l0 * vgrad[a, 0] + l1 * vgrad[b, 0] + l2 * vgrad[c, 0]
    gy = l0 * vgrad[a, 1] + l1 * vgrad[b, 1] + l2 * vgrad[c, 1]
    uv = l0 * u[a] + l1 * u[b] + l2 * u[c]
    return gx, gy, uv, t


def _trace_impl(
    verts, tris, nbrs, start, items, lo0, lo1, cell, nx, ny, vgrad, u,
    x0, y0,
    in_kind, in_center, in_radius, in_poly,
    out_kind, out_center, out_radius, out_poly,
    rtol, atol, diam, snap, leave_tol, speed_floor, dwell_limit, min_record, max_steps,
):
    """Integrate dx/dt = grad u from (x0, y0) with an adaptive Dormand-Prince 5(4) scheme.

    Every step is capped so that it moves at most one diameter of the current
    triangle.  Returns ``(points, times, speeds, values, termination, rejected)``.
    """
    cap = max_steps + 2
    pts = np.empty((cap, 2))
    times = np.empty(cap)
    spd = np.empty(cap)
    uvals = np.empty(cap)

    # Dormand-Prince tableau
    a21 = 1.0 / 5.0
    a31, a32 = 3.0 / 40.0, 9.0 / 40.0
    a41, a42, a43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
    a51, a52, a53, a54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
    a61, a62, a63, a64, a65 = 9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0
    b1, b3, b4, b5, b6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
    e1 = 71.0 / 57600.0
    e3 = -71.0 / 16695.0
    e4 = 71.0 / 1920.0
    e5 = -17253.0 / 339200.0
    e6 = 22.0 / 525.0
    e7 = -1.0 / 40.0

    x = x0
    y = y0
    t = 0.0
    tri = -1
    k1x, k1y, uv, tri = _eval_impl(verts, tris, nbrs, start, items, lo0, lo1, cell, nx, ny, vgrad, u, tri, x, y)
    sp = math.sqrt(k1x * k1x + k1y * k1y)
    n = 0
    pts[0, 0] = x
    pts[0, 1] = y
    times[0] = 0.0
    spd[0] = sp
    uvals[0] = uv
    n = 1
    last_x = x
    last_y = y
    dt = diam[tri] / max(sp, speed_floor) * 0.25
    dwell = 0.0
    term = TERM_MAX_STEPS
    n_rej = 0

    if _sdf_impl(in_kind, in_center, in_radius, in_poly, x, y) <= snap:
        return pts[:n], times[:n], spd[:n], uvals[:n], TERM_REACHED_INNER, 0

    for _step in range(max_steps):
        # cap the step so it moves at most one element diameter
        dt = min(dt, diam[tri] / max(sp, 1e-300))
        while True:
            k2x, k2y, _, tr = _eval_impl(verts, tris, nbrs, start, items, lo0, lo1, cell, nx, ny, vgrad, u, tri,
                                         x + dt * a21 * k1x, y + dt * a21 * k1y)
            k3x, k3y, _, tr = _eval_impl(verts, tris, nbrs, start, items, lo0, lo1, cell, nx, ny, vgrad, u, tr,
                                         x + dt * (a31 * k1x + a32 * k2x), y + dt * (a31 * k1y + a32 * k2y))
            k4x, k4y, _, tr = _eval_impl(verts, tris, nbrs, start, items, lo0, lo1, cell, nx, ny, vgrad, u, tr,
                                         x + dt * (a41 * k1x + a42 * k2x + a43 * k3x),
                                         y + dt * (a41 * k1y + a42 * k2y + a43 * k3y))
            k5x, k5y, _, tr = _eval_impl(verts, tris, nbrs, start, items, lo0, lo1, cell, nx, ny, vgrad, u, tr,
                                         x + dt * (a51 * k1x + a52 * k2x + a53 * k3x + a54 * k4x),
                                         y + dt * (a51 * k1y + a52 * k2y + a53 * k3y + a54 * k4y))
            k6x, k6y, _, tr = _eval_impl(verts, tris, nbrs, start, items, lo0, lo1, cell, nx, ny, vgrad, u, tr,
                                         x + dt * (a61 * k1x + a62 * k2x + a63 * k3x + a64 * k4x + a65 * k5x),
                                         y + dt * (a61 * k1y + a62 * k2y + a63 * k3y + a64 * k4y + a65 * k5y))
            xn = x + dt * (b1 * k1x + b3 * k3x + b4 * k4x + b5 * k5x + b6 * k6x)
            yn = y + dt * (b1 * k1y + b3 * k3y + b4 * k4y + b5 * k5y + b6 * k6y)
            k7x, k7y, uvn, trn = _eval_impl(verts, tris, nbrs, start, items, lo0, lo1, cell, nx, ny, vgrad, u, tr,
                                            xn, yn)
            ex = dt * (e1 * k1x + e3 * k3x + e4 * k4x + e5 * k5x + e6 * k6x + e7 * k7x)
            ey = dt * (e1 * k1y + e3 * k3y + e4 * k4y + e5 * k5y + e6 * k6y + e7 * k7y)
            scx = atol + rtol * max(abs(x), abs(xn))
            scy = atol + rtol * max(abs(y), abs(yn))
            err = math.sqrt(0.5 * ((ex / scx) ** 2 + (ey / scy) ** 2))
            if err <= 1.0:
                break
            n_rej += 1
            dt *= max(0.1, 0.9 * err ** -0.2)
            if dt * max(sp, speed_floor) < 1e-14:
                break
        # accept
        t += dt
        x = xn
        y = yn
        tri = trn
        k1x = k7x
        k1y = k7y
        uv = uvn
        sp = math.sqrt(k1x * k1x + k1y * k1y)
        if err > 0.0:
            dt *= min(5.0, 0.9 * err ** -0.2)
        else:
            dt *= 5.0

        d_in = _sdf_impl(in_kind, in_center, in_radius, in_poly, x, y)
        done = d_in <= snap
        moved = math.sqrt((x - last_x) ** 2 + (y - last_y) ** 2)
        if done or moved >= min_record:
            pts[n, 0] = x
            pts[n, 1] = y
            times[n] = t
            spd[n] = sp
            uvals[n] = uv
            n += 1
            last_x = x
            last_y = y
        if done:
            term = TERM_REACHED_INNER
            break
        if _sdf_impl(out_kind, out_center, out_radius, out_poly, x, y) > leave_tol:
            term = TERM_LEFT_DOMAIN
            break
        if sp < speed_floor:
            dwell += dt
            if dwell > dwell_limit:
                term = TERM_STAGNATED
                break
        else:
            dwell = 0.0
    if term != TERM_REACHED_INNER and (pts[n - 1, 0] != x or pts[n - 1, 1] != y):
        pts[n, 0] = x
        pts[n, 1] = y
        times[n] = t
        spd[n] = sp
        uvals[n] = uv
        n += 1
    return pts[:n], times[:n], spd[:n], uvals[:n], term, n_rej


trace_numpy = _trace_impl


# ---------------------------------------------------------------------------
# nodal relaxation (nonlinear Gauss-Seidel)
# ---------------------------------------------------------------------------


def _node_derivative(u, i, x, vt_ptr, vt_tri, vt_loc, tris, bgrad, areas, p, eps_reg):
    """Scaled first and second derivative of the p-energy in the value at node ``i``.

    Contributions are normalized by the largest triangle weight so that the
    ratio is meaningful even when the weights themselves underflow.
    """
    lmax = -1e308
    for j in range(vt_ptr[i], vt_ptr[i + 1]):
        t = vt_tri[j]
        gx = 0.0
        gy = 0.0
        for k in range(3):
            v = x if tris[t, k] == i else u[tris[t, k]]
            gx += v * bgrad[t, k, 0]
            gy += v * bgrad[t, k, 1]
        lw = math.log(areas[t]) + (0.5 * p - 1.0) * math.log(gx * gx + gy * gy + eps_reg)
        if lw > lmax:
            lmax = lw
    d1 = 0.0
    d2 = 0.0
    for j in range(vt_ptr[i], vt_ptr[i + 1]):
        t = vt_tri[j]
        k0 = vt_loc[j]
        gx = 0.0
        gy = 0.0
        for k in range(3):
            v = x if tris[t, k] == i else u[tris[t, k]]
            gx += v * bgrad[t, k, 0]
            gy += v * bgrad[t, k, 1]
        s2 = gx * gx + gy * gy + eps_reg
        w = math.exp(math.log(areas[t]) + (0.5 * p - 1.0) * math.log(s2) - lmax)
        bx = bgrad[t, k0, 0]
        by = bgrad[t, k0, 1]
        gb = bx * gx + by * gy
        d1 += w * gb
        d2 += w * (bx * bx + by * by + (p - 2.0) * gb * gb / s2)
    return d1, d2


def _relax_impl(u, order, vt_ptr, vt_tri, vt_loc, tris, bgrad, areas, p, eps_reg, xtol, changes):
    """One Gauss-Seidel sweep of exact nodal energy minimization over ``order``.

    Each nodal problem is convex in the nodal value; its root is bracketed by
    the neighbour range and found by safeguarded Newton.  The change of each
    visited node is written to ``changes``; the largest one is returned.
    """
    biggest = 0.0
    for n in range(order.shape[0]):
        i = order[n]
        lo = 1e308
        hi = -1e308
        for j in range(vt_ptr[i], vt_ptr[i + 1]):
            t = vt_tri[j]
            for k in range(3):
                v = u[tris[t, k]]
                if tris[t, k] != i:
                    lo = min(lo, v)
                    hi = max(hi, v)
        width = max(hi - lo, 1e-300)
        f_lo = _node_derivative(u, i, lo, vt_ptr, vt_tri, vt_loc, tris, bgrad, areas, p, eps_reg)[0]
        while f_lo > 0.0:
            lo -= width
            width *= 2.0
            f_lo = _node_derivative(u, i, lo, vt_ptr, vt_tri, vt_loc, tris, bgrad, areas, p, eps_reg)[0]
        f_hi = _node_derivative(u, i, hi, vt_ptr, vt_tri, vt_loc, tris, bgrad, areas, p, eps_reg)[0]
        while f_hi < 0.0:
            hi += width
            width *= 2.0
            f_hi = _node_derivative(u, i, hi, vt_ptr, vt_tri, vt_loc, tris, bgrad, areas, p, eps_reg)[0]
        x = min(max(u[i], lo), hi)
        for _ in range(200):
            d1, d2 = _node_derivative(u, i, x, vt_ptr, vt_tri, vt_loc, tris, bgrad, areas, p, eps_reg)
            if d1 == 0.0:
                break
            if d1 > 0.0:
                hi = x
            else:
                lo = x
            step = d1 / d2 if d2 > 0.0 else 0.0
            xn = x - step
            if not (lo < xn < hi):
                xn = 0.5 * (lo + hi)
            if abs(xn - x) <= xtol or hi - lo <= xtol:
                x = xn
                break
            x = xn
        changes[n] = abs(x - u[i])
        biggest = max(biggest, changes[n])
        u[i] = x
    return biggest


relax_numpy = _relax_impl


def _jit_with(fn, deps):
    """Compile ``fn`` with numba after rebinding helper globals to compiled versions."""
    import types

    import numba

    gl = dict(fn.__globals__)
    gl.update(deps)
    clone = types.FunctionType(fn.__code__, gl, fn.__name__, fn.__defaults__)
    return numba.njit(cache=False)(clone)


_COMPILED = {}


def _compiled():
    """Lazily build the numba family of the pure-Python kernels above."""
    if not _COMPILED:
        seg = _jit_with(_seg_dist_py, {})
        bary = _jit_with(_bary_py, {})
        grid = _jit_with(_grid_locate_py, {"_bary_py": bary})
        sdf = _jit_with(_sdf_impl, {"_seg_dist_py": seg})
        walk = _jit_with(_walk_impl, {"_bary_py": bary, "_grid_locate_py": grid})
        ev = _jit_with(_eval_impl, {"_walk_impl": walk, "_bary_py": bary})
        _COMPILED["locate"] = _jit_with(_locate_loop, {"_bary_py": bary, "_grid_locate_py": grid})
        _COMPILED["trace"] = _jit_with(_trace_impl, {"_sdf_impl": sdf, "_eval_impl": ev})
        nd = _jit_with(_node_derivative, {})
        _COMPILED["relax"] = _jit_with(_relax_impl, {"_node_derivative": nd})
    return _COMPILED


def locate_numba(*args):
    return _compiled()["locate"](*args)


def trace_numba(*args):
    return _compiled()["trace"](*args)


def relax_numba(*args):
    return _compiled()["relax"](*args)


def relax(*args):
    return (relax_numba if USE_NUMBA else relax_numpy)(*args)


def assemble_p(u, tris, bgrad, areas, p, eps_reg):
    fn = assemble_p_numba if USE_NUMBA else assemble_p_numpy
    return fn(u, tris, bgrad, areas, float(p), float(eps_reg))


def trace(*args):
    return (trace_numba if USE_NUMBA else trace_numpy)(*args)
