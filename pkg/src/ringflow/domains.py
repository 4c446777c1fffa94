"""Preset rings and the key/value domain description format.

A domain description is a flat ``key = value`` text (UTF-8, ``#`` comments)::

    omega_kind = polygon
    omega_vertices = -1 -1, 1 -1, 1 1, -1 1
    inner_kind = point
    inner_location = 0 0
    eps_k = 0.02

or simply ``preset = truncated-square`` with optional ``delta``.
"""

from __future__ import annotations

import re

import numpy as np

from .errors import ConfigError
from .geometry import DEFAULT_EPS_K, ConvexRegion, ConvexRing, normalize_ring

PRESETS = ("square", "truncated-square", "rectangle", "annulus", "ngon(N)", "hexagon", "punctured-disk")

DOMAIN_KEYS = {
    "preset",
    "delta",
    "eps_k",
    "omega_kind",
    "omega_vertices",
    "omega_center",
    "omega_radius",
    "inner_kind",
    "inner_vertices",
    "inner_center",
    "inner_radius",
    "inner_location",
}


def parse_kv(text: str) -> dict:
    """Parse flat ``key = value`` text; later keys override earlier ones."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


def format_kv(d: dict) -> str:
    return "".join(f"{k} = {v}\n" for k, v in d.items())


def square(eps_k: float = DEFAULT_EPS_K) -> ConvexRing:
    om = ConvexRegion.polygon([(-1, -1), (1, -1), (1, 1), (-1, 1)])
    return normalize_ring(om, ConvexRegion.point((0, 0)), eps_k, name="square")


def truncated_square(delta: float = 0.2, eps_k: float = DEFAULT_EPS_K) -> ConvexRing:
    """Square with the south-west corner cut off along a segment of legs ``delta``."""
    if not 0 < delta < 1:
        raise ConfigError("delta must lie in (0, 1)")
    om = ConvexRegion.polygon(
        [(-1 + delta, -1), (1, -1), (1, 1), (-1, 1), (-1, -1 + delta)]
    )
    return normalize_ring(om, ConvexRegion.point((0, 0)), eps_k, name="truncated-square")


def rectangle(eps_k: float = DEFAULT_EPS_K) -> ConvexRing:
    """A 2:1 rectangle around a thin slab; the long edges face the slab at the minimal gap."""
    om = ConvexRegion.polygon([(-2, -1), (2, -1), (2, 1), (-2, 1)])
    k = ConvexRegion.polygon([(-0.9, -0.1), (0.9, -0.1), (0.9, 0.1), (-0.9, 0.1)])
    return normalize_ring(om, k, eps_k, name="rectangle")


def annulus(outer: float = 2.0, inner: float = 1.0) -> ConvexRing:
    return normalize_ring(ConvexRegion.disk((0, 0), outer), ConvexRegion.disk((0, 0), inner), name="annulus")


def ngon(n: int, eps_k: float = DEFAULT_EPS_K) -> ConvexRing:
    """Regular n-gon with inradius 1 around a point; the bottom edge is horizontal."""
    if n < 3:
        raise ConfigError("ngon needs at least 3 sides")
    ang = -np.pi / 2 + np.pi / n + 2 * np.pi * np.arange(n) / n
    rc = 1.0 / np.cos(np.pi / n)
    om = ConvexRegion.polygon(rc * np.stack([np.cos(ang), np.sin(ang)], axis=1))
    return normalize_ring(om, ConvexRegion.point((0, 0)), eps_k, name=f"ngon({n})")


def punctured_disk(eps_k: float = DEFAULT_EPS_K) -> ConvexRing:
    return normalize_ring(ConvexRegion.disk((0, 0), 1.0), ConvexRegion.point((0, 0)), eps_k, name="punctured-disk")


def preset(name: str, delta: float = 0.2, eps_k: float | None = None) -> ConvexRing:
    """Look up a preset ring by name (``ngon(N)`` takes its side count inline)."""
    kw = {} if eps_k is None else {"eps_k": float(eps_k)}
    key = name.strip().lower()
    m = re.fullmatch(r"ngon\((\d+)\)", key)
    if m:
        return ngon(int(m.group(1)), **kw)
    if key == "square":
        return square(**kw)
    if key == "truncated-square":
        return truncated_square(delta, **kw)
    if key == "rectangle":
        return rectangle(**kw)
    if key == "hexagon":
        return ngon(6, **kw)
    if key == "annulus":
        return annulus()
    if key == "punctured-disk":
        return punctured_disk(**kw)
    raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


def _points(value: str) -> np.ndarray:
    try:
        pts = [[float(t) for t in chunk.split()] for chunk in value.split(",") if chunk.strip()]
        arr = np.array(pts, dtype=float)
    except ValueError as exc:
        raise ConfigError(f"bad point list {value!r}") from exc
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ConfigError(f"bad point list {value!r}")
    return arr


def _region(d: dict, prefix: str) -> ConvexRegion:
    kind = d.get(f"{prefix}_kind")
    if kind == "polygon":
        return ConvexRegion.polygon(_points(d[f"{prefix}_vertices"]))
    if kind == "disk":
        return ConvexRegion.disk(_points(d[f"{prefix}_center"])[0], float(d[f"{prefix}_radius"]))
    if kind == "point":
        return ConvexRegion.point(_points(d[f"{prefix}_location"])[0])
    raise ConfigError(f"{prefix}_kind must be polygon, disk or point")


def ring_from_mapping(d: dict) -> ConvexRing:
    unknown = set(d) - DOMAIN_KEYS
    if unknown:
        raise ConfigError(f"unknown domain keys: {', '.join(sorted(unknown))}")
    eps_k = float(d["eps_k"]) if "eps_k" in d else None
    try:
        if "preset" in d:
            return preset(d["preset"], float(d.get("delta", 0.2)), eps_k)
        ring = normalize_ring(_region(d, "omega"), _region(d, "inner"), eps_k or DEFAULT_EPS_K)
    except KeyError as exc:
        raise ConfigError(f"missing domain key {exc.args[0]}") from exc
    return ring


def ring_from_text(text: str) -> ConvexRing:
    return ring_from_mapping(parse_kv(text))


def ring_to_mapping(ring: ConvexRing) -> dict:
    """Inverse of :func:`ring_from_mapping` for already-normalized rings."""

    def pts(a):
        return ", ".join(f"{x:.17g} {y:.17g}" for x, y in np.atleast_2d(a))

    out = {}
    for prefix, reg in (("omega", ring.omega), ("inner", ring.inner)):
        out[f"{prefix}_kind"] = reg.kind
        if reg.kind == "polygon":
            out[f"{prefix}_vertices"] = pts(reg.vertices)
        elif reg.kind == "disk":
            out[f"{prefix}_center"] = pts(reg.center)
            out[f"{prefix}_radius"] = f"{reg.radius:.17g}"
        else:
            out[f"{prefix}_location"] = pts(reg.location)
    out["eps_k"] = f"{ring.eps_k:.17g}"
    return out
