"""File formats: fields, streamlines, ridges, run configuration and SVG figures.

Text tables use ``%.17g`` so that every float survives a round trip
unchanged.  The binary field format is a fixed header followed by a NumPy
``.npz`` payload::

    b"RINGFLOW" | uint16 version | uint32 meta length | meta (JSON) | npz
"""

from __future__ import annotations

import io as _io
import json
import struct
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import domains
from .errors import ConfigError, IntegrityError
from .geometry import ConvexRing
from .mesh import TriangleMesh
from .solver import P_MAX, ScalarField

MAGIC = b"RINGFLOW"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sHI")


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------


def field_table(field: ScalarField, speed=None) -> str:
    """Tabular text ``id x y u speed`` (speed column omitted when not given)."""
    v = field.mesh.vertices
    lines = [f"# ringflow field v{FORMAT_VERSION} p={field.p:.17g} h={field.mesh.h:.17g}"]
    lines.append("# id x y u" + (" speed" if speed is not None else ""))
    for i in range(len(v)):
        row = f"{i} {v[i, 0]:.17g} {v[i, 1]:.17g} {field.values[i]:.17g}"
        if speed is not None:
            row += f" {speed[i]:.17g}"
        lines.append(row)
    return "\n".join(lines) + "\n"


def read_field_table(text: str) -> dict:
    """Parse :func:`field_table` output into ``vertices``, ``values`` and optional ``speed``."""
    rows = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows:
        raise IntegrityError("field table has no rows")
    data = np.array([[float(t) for t in r.split()] for r in rows])
    if data.shape[1] not in (4, 5):
        raise IntegrityError("field table rows must have 4 or 5 columns")
    if not np.array_equal(data[:, 0], np.arange(len(data))):
        raise IntegrityError("field table ids are not consecutive")
    out = {"vertices": data[:, 1:3], "values": data[:, 3]}
    if data.shape[1] == 5:
        out["speed"] = data[:, 4]
    return out


def _ring_meta(ring: ConvexRing | None):
    return None if ring is None else domains.ring_to_mapping(ring)


def dumps_field(field: ScalarField) -> bytes:
    mesh = field.mesh
    meta = {"p": field.p, "h": mesh.h, "ring": _ring_meta(mesh.ring), "ring_name": getattr(mesh.ring, "name", None)}
    mb = json.dumps(meta, sort_keys=True).encode()
    buf = _io.BytesIO()
    np.savez(
        buf,
        vertices=mesh.vertices,
        triangles=mesh.triangles,
        boundary_tags=mesh.boundary_tags,
        values=field.values,
    )
    return _HEADER.pack(MAGIC, FORMAT_VERSION, len(mb)) + mb + buf.getvalue()


def loads_field(blob: bytes) -> ScalarField:
    """Inverse of :func:`dumps_field`.

    Raises
    ------
    IntegrityError
        On a wrong magic string, an unsupported version or a truncated payload.
    """
    if len(blob) < _HEADER.size:
        raise IntegrityError("field file is truncated")
    magic, version, n = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise IntegrityError("not a ringflow field file")
    if version != FORMAT_VERSION:
        raise IntegrityError(f"unsupported field format version {version}")
    try:
        meta = json.loads(blob[_HEADER.size : _HEADER.size + n])
        arr = np.load(_io.BytesIO(blob[_HEADER.size + n :]))
        ring = None
        if meta["ring"] is not None:
            ring = domains.ring_from_mapping(meta["ring"])
            if meta.get("ring_name"):
                ring = ConvexRing(ring.omega, ring.inner, ring.scale, ring.eps_k, meta["ring_name"])
        mesh = TriangleMesh(
            np.array(arr["vertices"]), np.array(arr["triangles"]), np.array(arr["boundary_tags"]), float(meta["h"]), ring
        )
        return ScalarField(mesh, np.array(arr["values"]), float(meta["p"]))
    except (ValueError, KeyError, OSError, EOFError, zipfile.BadZipFile) as exc:
        raise IntegrityError(f"corrupt field file: {exc}") from exc


def save_field(path, field: ScalarField) -> None:
    Path(path).write_bytes(dumps_field(field))


def load_field(path) -> ScalarField:
    return loads_field(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# streamlines and ridges
# ---------------------------------------------------------------------------


def streamline_table(streamlines) -> str:
    """Tabular text ``id t x y u speed``, one row per stored point."""
    lines = ["# id t x y u speed"]
    for k, s in enumerate(streamlines):
        for t, (x, y), u, v in zip(s.times, s.points, s.values, s.speeds):
            lines.append(f"{k} {t:.17g} {x:.17g} {y:.17g} {u:.17g} {v:.17g}")
    return "\n".join(lines) + "\n"


def read_streamline_table(text: str) -> list[dict]:
    rows = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows:
        return []
    data = np.array([[float(t) for t in r.split()] for r in rows])
    if data.shape[1] != 6:
        raise IntegrityError("streamline rows must have 6 columns")
    out = []
    for k in np.unique(data[:, 0]).astype(int):
        d = data[data[:, 0] == k]
        out.append({"id": int(k), "times": d[:, 1], "points": d[:, 2:4], "values": d[:, 4], "speeds": d[:, 5]})
    return out


def streamlines_to_json(streamlines) -> dict:
    return {
        "version": FORMAT_VERSION,
        "streamlines": [
            {
                "id": k,
                "seed": [float(c) for c in s.seed],
                "termination": s.termination,
                "nudged": bool(s.nudged),
                "points": s.points.tolist(),
            }
            for k, s in enumerate(streamlines)
        ],
    }


def ridge_to_json(ridge) -> dict:
    segments = []
    for k, line in enumerate(ridge.polylines):
        for a, b in zip(line[:-1], line[1:]):
            segments.append({"source": k, "a": [float(a[0]), float(a[1])], "b": [float(b[0]), float(b[1])]})
    return {
        "version": FORMAT_VERSION,
        "sources": ridge.sources.tolist(),
        "segments": segments,
        "merges": [{"ids": list(m.ids), "point": list(m.point), "params": list(m.params)} for m in ridge.merges],
    }


def ridge_polylines_from_json(doc: dict) -> list[np.ndarray]:
    """Rebuild the per-source polylines from a ridge document."""
    by = {}
    for seg in doc["segments"]:
        by.setdefault(seg["source"], []).append(seg)
    out = []
    for k in sorted(by):
        segs = by[k]
        out.append(np.array([segs[0]["a"]] + [s["b"] for s in segs]))
    return out


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------


def _floats(value: str) -> list[float]:
    try:
        return [float(t) for t in value.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"expected numbers, got {value!r}") from exc


@dataclass
class RunConfig:
    """Everything needed to reproduce one run.

    ``seeds`` is a count of equally spaced boundary seeds, an explicit
    ``(n, 2)`` array, or ``("edge", k)`` for ``k`` seeds per polygon edge.
    ``domain`` holds the domain keys understood by :mod:`ringflow.domains`.
    """

    domain: dict = field(default_factory=lambda: {"preset": "square"})
    p: list[float] = field(default_factory=lambda: [4.0, 8.0, 16.0, 32.0, 64.0])
    h: float = 0.02
    seeds: object = 64
    tolerances: dict = field(default_factory=dict)
    out: str = "ringflow-out"
    n_boundary: int = 256

    def __post_init__(self):
        self.validate()

    def validate(self) -> "RunConfig":
        if not self.p:
            raise ConfigError("p list is empty")
        for p in self.p:
            if not (np.isfinite(p) and 2.0 <= p <= P_MAX):
                raise ConfigError(f"p={p} outside [2, {P_MAX:g}]")
        if not (np.isfinite(self.h) and 0.0 < self.h <= 0.5):
            raise ConfigError(f"h={self.h} outside (0, 0.5]")
        if not 64 <= int(self.n_boundary) <= 100_000:
            raise ConfigError("n_boundary must lie in [64, 100000]")
        s = self.seeds
        if isinstance(s, (int, np.integer)):
            if not 1 <= s <= 100_000:
                raise ConfigError("seed count must lie in [1, 100000]")
        elif isinstance(s, tuple):
            if len(s) != 2 or s[0] != "edge" or not 1 <= int(s[1]) <= 10_000:
                raise ConfigError("per-edge seeds must be ('edge', k) with 1 <= k <= 10000")
        else:
            arr = np.asarray(s, dtype=float)
            if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) == 0:
                raise ConfigError("explicit seeds must be a non-empty list of 2D points")
        unknown = set(self.domain) - domains.DOMAIN_KEYS
        if unknown:
            raise ConfigError(f"unknown domain keys: {', '.join(sorted(unknown))}")
        from .verify import DEFAULT_THRESHOLDS

        bad = set(self.tolerances) - set(DEFAULT_THRESHOLDS)
        if bad:
            raise ConfigError(f"unknown tolerance keys: {', '.join(sorted(bad))}")
        for k, v in self.tolerances.items():
            if not np.isfinite(v):
                raise ConfigError(f"tolerance {k} must be finite")
        return self

    def ring(self) -> ConvexRing:
        return domains.ring_from_mapping(self.domain)

    @classmethod
    def from_mapping(cls, d: dict) -> "RunConfig":
        """Build from flat string keys; ``tol.<name>`` keys override thresholds."""
        kw: dict = {}
        dom, tol = {}, {}
        for key, value in d.items():
            if key in domains.DOMAIN_KEYS:
                dom[key] = value
            elif key.startswith("tol."):
                tol[key[4:]] = float(value)
            elif key == "p":
                kw["p"] = _floats(value)
            elif key == "h":
                kw["h"] = float(value)
            elif key == "seeds":
                kw["seeds"] = parse_seeds(value)
            elif key == "out":
                kw["out"] = value
            elif key == "n_boundary":
                kw["n_boundary"] = int(value)
            else:
                raise ConfigError(f"unknown configuration key {key!r}")
        if dom:
            kw["domain"] = dom
        kw["tolerances"] = tol
        return cls(**kw)

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        return cls.from_mapping(domains.parse_kv(text))

    def to_mapping(self) -> dict:
        out = {k: str(v) for k, v in self.domain.items()}
        out["p"] = ", ".join(f"{p:g}" for p in self.p)
        out["h"] = f"{self.h:.17g}"
        out["seeds"] = format_seeds(self.seeds)
        out["out"] = self.out
        out["n_boundary"] = str(self.n_boundary)
        for k in sorted(self.tolerances):
            out[f"tol.{k}"] = f"{self.tolerances[k]:.17g}"
        return out


def parse_seeds(value: str):
    """``"64"`` -> 64, ``"edge:8"`` -> ("edge", 8), ``"x y, x y"`` -> array."""
    v = value.strip()
    if v.startswith("edge:"):
        try:
            return ("edge", int(v[5:]))
        except ValueError as exc:
            raise ConfigError(f"bad per-edge seed count {v!r}") from exc
    if "," not in v and len(v.split()) == 1:
        try:
            return int(v)
        except ValueError as exc:
            raise ConfigError(f"bad seed count {v!r}") from exc
    return domains._points(v)


def format_seeds(seeds) -> str:
    if isinstance(seeds, (int, np.integer)):
        return str(int(seeds))
    if isinstance(seeds, tuple):
        return f"edge:{int(seeds[1])}"
    return ", ".join(f"{x:.17g} {y:.17g}" for x, y in np.asarray(seeds))


def read_thresholds(text: str) -> dict:
    """Threshold overrides from flat ``name = value`` text."""
    from .verify import DEFAULT_THRESHOLDS

    d = domains.parse_kv(text)
    bad = set(d) - set(DEFAULT_THRESHOLDS)
    if bad:
        raise ConfigError(f"unknown tolerance keys: {', '.join(sorted(bad))}")
    try:
        return {k: float(v) for k, v in d.items()}
    except ValueError as exc:
        raise ConfigError(f"bad tolerance value: {exc}") from exc


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _path(points, flip) -> str:
    pts = np.asarray(points)
    return "M " + " L ".join(f"{_fmt(x)} {_fmt(flip(y))}" for x, y in pts)


def render_svg(ring: ConvexRing, level_curves=(), streamlines=(), ridge=None, size: float = 600.0) -> str:
    """Vector figure of the ring, level curves, streamlines and the ridge.

    Coordinates are written in model units (y flipped) with six decimals;
    the ``viewBox`` maps them to ``size`` pixels.  Element classes
    (``omega``, ``inner``, ``level``, ``streamline``, ``ridge``) let tests
    and style sheets pick out each layer.
    """
    from .geometry import BoundaryParam

    om = ring.omega
    bp = BoundaryParam.of(om)
    outline = bp.point(np.linspace(0, bp.arclength, 361)) if om.kind == "disk" else np.vstack([om.vertices, om.vertices[:1]])
    lo = outline.min(axis=0)
    hi = outline.max(axis=0)
    pad = 0.05 * float(np.max(hi - lo))
    lo, hi = lo - pad, hi + pad
    w, h = hi - lo

    def flip(y):
        return lo[1] + hi[1] - y

    stroke = 0.004 * float(max(w, h))
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(size)}" height="{_fmt(size * h / w)}" '
        f'viewBox="{_fmt(lo[0])} {_fmt(lo[1])} {_fmt(w)} {_fmt(h)}">',
        f'<g fill="none" stroke-width="{_fmt(stroke)}" stroke-linejoin="round">',
        f'<path class="omega" stroke="black" d="{_path(outline, flip)} Z"/>',
    ]
    inner = ring.mesh_inner
    if inner.kind == "disk":
        c = inner.center
        out.append(f'<circle class="inner" stroke="black" fill="#cccccc" cx="{_fmt(c[0])}" cy="{_fmt(flip(c[1]))}" r="{_fmt(inner.radius)}"/>')
    else:
        v = inner.vertices
        out.append(f'<path class="inner" stroke="black" fill="#cccccc" d="{_path(np.vstack([v, v[:1]]), flip)} Z"/>')
    for curve in level_curves:
        out.append(f'<path class="level" stroke="#999999" d="{_path(curve, flip)}"/>')
    for s in streamlines:
        pts = s.points if hasattr(s, "points") else s
        out.append(f'<path class="streamline" stroke="#1f4e9c" d="{_path(pts, flip)}"/>')
    if ridge is not None:
        for line in ridge.polylines:
            if len(line) > 1:
                out.append(f'<path class="ridge" stroke="#c0392b" stroke-width="{_fmt(2.5 * stroke)}" d="{_path(line, flip)}"/>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def svg_paths(svg: str, cls: str) -> list[np.ndarray]:
    """Model-space polylines of the ``<path>`` elements with class ``cls`` (y flipped back)."""
    import re

    m = re.search(r'viewBox="([-\d.]+) ([-\d.]+) ([-\d.]+) ([-\d.]+)"', svg)
    y0, hh = float(m.group(2)), float(m.group(4))
    out = []
    for d in re.findall(rf'<path class="{cls}"[^>]* d="([^"]+)"', svg):
        nums = [float(t) for t in re.findall(r"-?\d+\.\d+", d)]
        pts = np.array(nums).reshape(-1, 2)
        pts[:, 1] = 2 * y0 + hh - pts[:, 1]
        out.append(pts)
    return out
