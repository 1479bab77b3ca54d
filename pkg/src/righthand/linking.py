"""Gauss linking kernel, the linking integral of curve pairs, and a crossing oracle.

The Euclidean Gauss kernel is

    K(p, q; V, W) = (1/4pi) <V, W x (p - q)> / |p - q|^3,

and the linking number of disjoint closed curves is the double integral of
``K`` against their tangents.  S^3 curves are handled in one stereographic
chart (shared pole) per pair.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import CurvesIntersect, DegenerateProjection, InvalidCurve, NearSingular
from .geometry import R3, Polyline, normalize, project_pair

NEAR_SINGULAR = 1e-9
MIN_SEPARATION = 1e-6
EPS = np.finfo(float).eps


@dataclass(frozen=True)
class LinkingResult:
    value: float
    stderr: float
    method: str
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.stderr >= 0:
            raise ValueError("stderr must be nonnegative")

    @property
    def integer(self):
        return int(round(self.value))

    def as_dict(self):
        out = {"value": self.value, "stderr": self.stderr, "method": self.method}
        out.update(self.info)
        return out


def gauss_kernel(p, q, V, W):
    """Gauss linking kernel; broadcasts over leading axes.

    Raises
    ------
    NearSingular
        If ``|p - q| < 1e-9``.
    """
    r = np.asarray(p, dtype=float) - np.asarray(q, dtype=float)
    dist = np.linalg.norm(r, axis=-1)
    if np.any(dist < NEAR_SINGULAR):
        raise NearSingular("kernel evaluated within 1e-9 of the diagonal")
    triple = np.sum(np.asarray(V, dtype=float) * np.cross(W, r), axis=-1)
    return triple / (4.0 * np.pi * dist**3)


@dataclass(frozen=True)
class PairIntegral:
    """Raw double integral of the kernel over two (open or closed) R^3 polylines."""

    value: float
    quad_error: float
    abs_sum: float
    n_pairs: int
    n_exhausted: int

    @property
    def stderr(self):
        # quadrature estimate plus a bound on the rounding error of the row sums
        n2 = max(self.n_pairs, 1) ** 0.5
        return self.quad_error + 4.0 * EPS * n2 * self.abs_sum


def pair_integral(c1, c2, min_distance=MIN_SEPARATION):
    """Kernel double integral over two R^3 polylines (either may be open)."""
    if c1.ambient != R3 or c2.ambient != R3:
        raise InvalidCurve("pair_integral expects R3 polylines")
    a0, a1 = (np.ascontiguousarray(x) for x in c1.segments())
    b0, b1 = (np.ascontiguousarray(x) for x in c2.segments())
    vals, errs, absv, n_exh, status = _kernels.gauss_pair_sums(a0, a1, b0, b1, min_distance)
    if status:
        raise CurvesIntersect(f"curves come within {min_distance:g} of each other")
    return PairIntegral(
        value=float(np.sum(vals)),
        quad_error=float(np.sum(errs)),
        abs_sum=float(np.sum(absv)),
        n_pairs=len(a0) * len(b0),
        n_exhausted=int(n_exh),
    )


def linking_integral(c1, c2, pole=None):
    """Gauss linking integral of two disjoint closed polylines.

    S^3 curves are projected from a shared pole first.  The returned
    ``stderr`` combines the per-pair ``|Q3 - Q2|`` quadrature estimate and a
    rounding bound.

    Raises
    ------
    MixedAmbient
        If one curve lies on S^3 and the other in R^3.
    CurvesIntersect
        If the curves come within ``1e-6`` of each other.
    """
    if not (c1.closed and c2.closed):
        raise InvalidCurve("linking_integral needs closed curves")
    e1, e2 = project_pair(c1, c2, pole)
    res = pair_integral(e1, e2)
    return LinkingResult(res.value, res.stderr, "gauss_integral")


def _frame(direction):
    d = normalize(direction)
    helper = np.eye(3)[int(np.argmin(np.abs(d)))]
    u = normalize(np.cross(helper, d))
    w = np.cross(d, u)
    return u, w, d


def crossing_number(c1, c2, direction=(0.0, 0.0, 1.0), pole=None, tol=1e-9, retries=16):
    """Linking number as half the signed crossing count in a planar projection.

    Projects along ``direction``; a degenerate picture (vertex on a strand,
    overlapping strands, coincident heights at resolution ``tol``) is retried
    with deterministically perturbed directions.

    Raises
    ------
    DegenerateProjection
        If every attempted direction is degenerate.
    """
    if not (c1.closed and c2.closed):
        raise InvalidCurve("crossing_number needs closed curves")
    e1, e2 = project_pair(c1, c2, pole)
    a0, a1 = (np.ascontiguousarray(x) for x in e1.segments())
    b0, b1 = (np.ascontiguousarray(x) for x in e2.segments())
    rng = np.random.default_rng(12345)
    d = np.asarray(direction, dtype=float)
    for attempt in range(retries + 1):
        u, w, dn = _frame(d)
        total, degenerate = _kernels.crossing_sum(a0, a1, b0, b1, u, w, dn, tol)
        if not degenerate:
            if total % 2:
                raise DegenerateProjection("odd crossing count between closed curves")
            return total // 2
        d = np.asarray(direction, dtype=float) + 0.05 * (attempt + 1) * rng.standard_normal(3)
    raise DegenerateProjection(f"no generic projection direction after {retries} retries")


# Template curves ---------------------------------------------------------


def circle(center, normal, radius=1.0, n=256, phase=0.0):
    """Closed polygon inscribed in a circle, counterclockwise about ``normal``."""
    normal = normalize(normal)
    u, w, _ = _frame(normal)
    t = phase + 2.0 * np.pi * np.arange(n) / n
    pts = np.asarray(center, float) + radius * (np.cos(t)[:, None] * u + np.sin(t)[:, None] * w)
    return Polyline(pts, closed=True, ambient=R3)


def hopf_link_circles(n=256):
    """Unit circle in the xy-plane and unit circle in the xz-plane through its center."""
    return circle((0, 0, 0), (0, 0, 1), n=n), circle((1, 0, 0), (0, 1, 0), n=n)


def torus_link(p, q, n=512, major=2.0, minor=1.0):
    """Components of the (p, q) torus link with ``gcd(p, q)`` = number of components.

    Each component winds ``q / g`` times longitudinally and ``p / g`` times
    meridionally; for ``p = 2`` consecutive components link ``q / 2`` times.
    """
    g = int(np.gcd(p, q))
    t = 2.0 * np.pi * np.arange(n) / n
    comps = []
    for k in range(g):
        phi = (p // g) * t + 2.0 * np.pi * k / q
        theta = (q // g) * t
        r = major + minor * np.cos(phi)
        pts = np.column_stack([r * np.cos(theta), r * np.sin(theta), -minor * np.sin(phi)])
        comps.append(Polyline(pts, closed=True, ambient=R3))
    return comps
