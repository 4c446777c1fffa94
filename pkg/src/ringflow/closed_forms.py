"""Closed-form oracles: radial potentials of annuli and the square's ridge.

For a radial p-harmonic function ``(r u'^{p-1})' = 0`` gives
``u' ~ r^{-1/(p-1)}``, hence ``u = A + B r^k`` with ``k = (p-2)/(p-1)``.
``k = 0`` (p = 2) is the logarithmic limit and ``k = 1`` (p = inf) the cone.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, SingularityError
from .ridge import RidgeGraph


def radial_exponent(p: float) -> float:
    """``k = (p-2)/(p-1)``; 1 for ``p = inf``."""
    if not p >= 2:
        raise DomainError(f"radial forms need p >= 2, got {p}")
    return 1.0 if np.isinf(p) else (p - 2.0) / (p - 1.0)


def _check(p, a, R, r):
    if not (0 <= a < R and np.isfinite(R)):
        raise DomainError(f"need 0 <= a < R, got a={a}, R={R}")
    r = np.asarray(r, dtype=float)
    tol = 1e-12 * R
    if np.any(r < a - tol) or np.any(r > R + tol) or np.any(~np.isfinite(r)):
        raise DomainError(f"radius outside [{a}, {R}]")
    k = radial_exponent(p)
    if k == 0.0 and a == 0.0:
        raise DomainError("p = 2 has no bounded radial potential around a point")
    return k, np.clip(r, a, R)


def _pm1(x, k):
    """``x**k - 1`` without cancellation for small ``k`` (``x = 0`` gives -1)."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(x > 0, np.expm1(k * np.log(np.where(x > 0, x, 1.0))), -1.0)


def radial_potential(p: float, a: float, R: float, r):
    """Radial potential equal to 1 at ``r = a`` and 0 at ``r = R``.

    Examples
    --------
    >>> round(float(radial_potential(4, 0.0, 1.0, 0.25)), 5)
    0.60315
    >>> float(radial_potential(np.inf, 0.0, 1.0, 0.3))
    0.7
    """
    k, r = _check(p, a, R, r)
    if k == 0.0:
        out = np.log(R / r) / np.log(R / a)
    else:
        out = (_pm1(R, k) - _pm1(r, k)) / (_pm1(R, k) - _pm1(a, k))
    return out if out.ndim else float(out)


def radial_speed(p: float, a: float, R: float, r):
    """``|u'(r)|`` of :func:`radial_potential`.

    Raises
    ------
    SingularityError
        At ``r = 0`` around a point (``a = 0``) for finite p, where the speed is unbounded.
    """
    k, r = _check(p, a, R, r)
    if k == 1.0:
        out = np.full_like(r, 1.0 / (R - a))
    else:
        if np.any(r <= 0):
            raise SingularityError("radial speed is unbounded at the centre")
        if k == 0.0:
            out = 1.0 / (r * np.log(R / a))
        else:
            out = k * r ** (k - 1.0) / (_pm1(R, k) - _pm1(a, k))
    return out if out.ndim else float(out)


def annulus_oracle(p: float, a: float, R: float, center=(0.0, 0.0)):
    """Callable ``points -> u`` for the annulus ``a < |x - center| < R``."""
    c = np.asarray(center, dtype=float)

    def u(points):
        r = np.linalg.norm(np.atleast_2d(points) - c, axis=1)
        return radial_potential(p, a, R, np.clip(r, a, R))

    return u


def square_ridge_oracle(side_half: float = 1.0) -> RidgeGraph:
    """The four half-diagonals of ``[-s, s]^2`` joining the corners to the origin."""
    if not side_half > 0:
        raise DomainError("side_half must be positive")
    s = float(side_half)
    corners = np.array([(-s, -s), (s, -s), (s, s), (-s, s)])
    per = 8.0 * s
    return RidgeGraph(
        [np.array([c, (0.0, 0.0)]) for c in corners],
        corners,
        np.arange(4) * per / 4.0,
    )
