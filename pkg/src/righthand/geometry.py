"""Points and curves on the unit three-sphere and in Euclidean three-space.

Points are plain numpy arrays: shape ``(4,)`` (or ``(n, 4)``) for the unit
sphere S^3 in R^4, shape ``(3,)`` (or ``(n, 3)``) for R^3.  Curves are
:class:`Polyline` objects which carry their ambient space explicitly.

Stereographic projection is always taken from a pole after an
orientation-preserving rotation sending the pole to ``e4``, so that linking
numbers computed in the Euclidean chart do not depend on the pole.
"""
from __future__ import annotations

import functools
import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import AntipodalPoints, InvalidCurve, MixedAmbient, PoleCollision

R3 = "R3"
S3 = "S3"

E4 = np.array([0.0, 0.0, 0.0, 1.0])

#: minimum chordal distance between a point and the projection pole
POLE_CLEARANCE = 1e-6
#: pairs of points closer to antipodal than this (in angle) have no unique geodesic
ANTIPODAL_MARGIN = 1e-6


def normalize(p):
    """Project nonzero vectors of R^4 radially onto S^3 (last axis)."""
    p = np.asarray(p, dtype=float)
    norm = np.linalg.norm(p, axis=-1, keepdims=True)
    if np.any(norm == 0) or not np.all(np.isfinite(p)):
        raise ValueError("cannot normalize a zero or non-finite vector")
    return p / norm


def random_s3(n, rng):
    """Draw ``n`` points uniformly (round measure) on S^3."""
    return normalize(rng.standard_normal((n, 4)))


def rotation_to_pole(pole):
    """Return ``Q`` in SO(4) with ``Q @ pole == e4``."""
    pole = normalize(pole)
    v = pole - E4
    vv = v @ v
    if vv < 1e-30:
        return np.eye(4)
    householder = np.eye(4) - 2.0 * np.outer(v, v) / vv
    # the householder reflection has det -1; a reflection fixing e4 restores orientation
    return np.diag([-1.0, 1.0, 1.0, 1.0]) @ householder


def stereographic_project(p, pole=E4):
    """Stereographic image of ``p`` (shape ``(4,)`` or ``(n, 4)``) from ``pole``.

    Raises
    ------
    PoleCollision
        If any point lies within ``1e-6`` of the pole.
    """
    p = np.asarray(p, dtype=float)
    pole = normalize(pole)
    if np.any(np.linalg.norm(p - pole, axis=-1) <= POLE_CLEARANCE):
        raise PoleCollision("point within 1e-6 of the projection pole")
    y = p @ rotation_to_pole(pole).T
    return y[..., :3] / (1.0 - y[..., 3:4])


def inverse_stereographic(x, pole=E4):
    """Closed-form inverse of :func:`stereographic_project`."""
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1, keepdims=True)
    y = np.concatenate([2.0 * x, r2 - 1.0], axis=-1) / (r2 + 1.0)
    return y @ rotation_to_pole(pole)


@functools.lru_cache(maxsize=None)
def pole_design(n=60):
    """A fixed, well-spread set of ``n`` points on S^3 used as projection poles.

    Built deterministically by Riesz-energy repulsion from a seeded start, so
    the set is identical across runs and platforms up to rounding.
    """
    rng = np.random.default_rng(20240601)
    x = random_s3(n, rng)
    for _ in range(400):
        diff = x[:, None, :] - x[None, :, :]
        d2 = np.sum(diff * diff, axis=-1) + np.eye(n)
        force = np.sum(diff / d2[..., None] ** 2, axis=1)
        force -= np.sum(force * x, axis=1, keepdims=True) * x
        x = normalize(x + 0.02 * force / np.max(np.linalg.norm(force, axis=1)))
    x.flags.writeable = False
    return x


def choose_pole(*point_sets):
    """Pick the design pole farthest (in min chordal distance) from all samples."""
    pts = np.concatenate([np.asarray(s, dtype=float).reshape(-1, 4) for s in point_sets])
    dist, _ = cKDTree(pts).query(pole_design())
    return pole_design()[int(np.argmax(dist))].copy()


@dataclass(frozen=True, eq=False)
class Polyline:
    """An oriented piecewise-linear curve in R^3 or on S^3.

    ``vertices`` has shape ``(n, 3)`` or ``(n, 4)``; ``ambient`` must agree
    with the column count (it is inferred when omitted).  A closed polyline
    joins its last vertex back to its first; a repeated first vertex at the
    end is dropped.  An open polyline with a single vertex is accepted as the
    degenerate (length zero) curve, which is what :func:`geodesic_arc`
    returns for coincident endpoints.
    """

    vertices: np.ndarray
    closed: bool = False
    ambient: str = ""

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] not in (3, 4):
            raise InvalidCurve(f"vertices must have shape (n, 3) or (n, 4), got {v.shape}")
        ambient = self.ambient or (R3 if v.shape[1] == 3 else S3)
        if ambient not in (R3, S3) or (v.shape[1] == 3) != (ambient == R3):
            raise InvalidCurve(f"ambient {ambient!r} does not match {v.shape[1]} columns")
        if not np.all(np.isfinite(v)):
            raise InvalidCurve("non-finite vertex coordinates")
        if self.closed and len(v) > 1 and np.array_equal(v[0], v[-1]):
            v = v[:-1]
        if ambient == S3 and np.max(np.abs(np.linalg.norm(v, axis=1) - 1.0)) > 1e-9:
            raise InvalidCurve("S3 vertices must have unit norm")
        minimum = 3 if self.closed else 1
        if len(v) < minimum:
            raise InvalidCurve(f"{'closed' if self.closed else 'open'} polyline needs "
                               f"at least {minimum} vertices")
        if len(v) > 1 and np.any(np.all(v[1:] == v[:-1], axis=1)):
            raise InvalidCurve("consecutive vertices must be distinct")
        v.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "ambient", ambient)

    def __len__(self):
        return len(self.vertices)

    @property
    def n_segments(self):
        n = len(self.vertices)
        return n if self.closed else n - 1

    def segments(self):
        """Start and end points of every segment, closing segment included."""
        v = self.vertices
        if self.closed:
            return v, np.roll(v, -1, axis=0)
        return v[:-1], v[1:]

    @property
    def length(self):
        """Total chordal (straight-segment) length."""
        a, b = self.segments()
        return float(np.sum(np.linalg.norm(b - a, axis=1)))

    @property
    def spherical_length(self):
        """Length with every segment replaced by its great-circle arc."""
        if self.ambient != S3:
            raise MixedAmbient("spherical length is defined for S3 polylines only")
        a, b = self.segments()
        return float(np.sum(_angle(a, b)))

    def reversed(self):
        return Polyline(self.vertices[::-1], self.closed, self.ambient)

    def refined(self, factor=2):
        """Subdivide every segment into ``factor`` pieces (geodesically on S^3)."""
        a, b = self.segments()
        s = np.arange(factor)[None, :, None] / factor
        pts = a[:, None, :] * (1.0 - s) + b[:, None, :] * s
        pts = pts.reshape(-1, a.shape[1])
        if not self.closed:
            pts = np.vstack([pts, self.vertices[-1]])
        if self.ambient == S3:
            pts = normalize(pts)
        return Polyline(pts, self.closed, self.ambient)

    def transformed(self, rotation, translation=None):
        """Apply ``x -> rotation @ x + translation`` to every vertex."""
        v = self.vertices @ np.asarray(rotation).T
        if translation is not None:
            v = v + np.asarray(translation)
        return Polyline(v, self.closed, self.ambient)


def _angle(a, b):
    """Great-circle angle between unit vectors, accurate at both ends of [0, pi]."""
    return 2.0 * np.arctan2(np.linalg.norm(a - b, axis=-1), np.linalg.norm(a + b, axis=-1))


def geodesic_arc(a, b, n_samples):
    """Minimizing great-circle arc from ``a`` to ``b`` sampled at ``n_samples`` points.

    Coincident endpoints give the degenerate single-vertex polyline.
    """
    a = normalize(a)
    b = normalize(b)
    theta = float(_angle(a, b))
    if theta > np.pi - ANTIPODAL_MARGIN:
        raise AntipodalPoints("antipodal endpoints: minimizing geodesic is not unique")
    if theta < 1e-15:
        return Polyline(a[None, :], closed=False, ambient=S3)
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2 for a non-degenerate arc")
    s = np.linspace(0.0, 1.0, n_samples)[:, None]
    pts = (np.sin((1.0 - s) * theta) * a + np.sin(s * theta) * b) / np.sin(theta)
    pts[0], pts[-1] = a, b
    return Polyline(normalize(pts), closed=False, ambient=S3)


def project_polyline(curve, pole):
    """Stereographic image of an S^3 polyline as an R^3 polyline."""
    if curve.ambient != S3:
        raise MixedAmbient("only S3 polylines can be projected")
    return Polyline(stereographic_project(curve.vertices, pole), curve.closed, R3)


def project_pair(c1, c2, pole=None):
    """Bring two curves into a single Euclidean chart.

    R^3 curves are returned unchanged; S^3 curves are projected from a shared
    pole (chosen from :func:`pole_design` unless given).
    """
    if c1.ambient != c2.ambient:
        raise MixedAmbient(f"cannot combine {c1.ambient} and {c2.ambient} curves")
    if c1.ambient == R3:
        return c1, c2
    if pole is None:
        pole = choose_pole(c1.vertices, c2.vertices)
    return project_polyline(c1, pole), project_polyline(c2, pole)


def random_rotation(dim, rng):
    """Haar-random rotation in SO(dim)."""
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def tangent_frame(p):
    """Oriented orthonormal frames of the tangent spaces at points of S^3.

    Returns an array ``(n, 3, 4)`` whose rows ``e1, e2, e3`` satisfy
    ``det[p, e1, e2, e3] = +1`` (outward normal first).
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    n = len(p)
    frames = np.empty((n, 3, 4))
    basis = np.eye(4)
    for i in range(n):
        # start from the three coordinate axes least aligned with p
        order = np.argsort(np.abs(p[i]))[:3]
        m = np.column_stack([p[i], basis[:, order]])
        q, _ = np.linalg.qr(m)
        q[:, 0] = p[i]
        if np.linalg.det(q) < 0:
            q[:, 3] = -q[:, 3]
        frames[i] = q[:, 1:].T
    return frames


def read_curve(path):
    """Read a curve file.

    Format: first non-comment line is ``closed`` or ``open``; each further line
    holds 3 (R^3) or 4 (S^3) whitespace-separated decimals; ``#`` starts a
    comment line.
    """
    with open(path) as fh:
        lines = [ln.strip() for ln in fh]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines or lines[0] not in ("closed", "open"):
        raise InvalidCurve(f"{path}: first line must be 'closed' or 'open'")
    try:
        rows = [[float(tok) for tok in ln.split()] for ln in lines[1:]]
    except ValueError as exc:
        raise InvalidCurve(f"{path}: {exc}") from None
    widths = {len(r) for r in rows}
    if len(widths) != 1 or widths.pop() not in (3, 4):
        raise InvalidCurve(f"{path}: every vertex line needs 3 or 4 columns")
    return Polyline(np.array(rows), closed=lines[0] == "closed")


def write_curve(path, curve, comment=None):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write("closed\n" if curve.closed else "open\n")
        for row in curve.vertices:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")
    os.replace(tmp, path)


def hopf_fiber(p, n=2048, anti=False):
    """Closed polyline through ``p`` along its Hopf (or anti-Hopf) circle.

    The Hopf circle is ``t -> (e^{it} z1, e^{it} z2)``; the anti-Hopf circle
    uses ``e^{-it}`` on the second factor.  Oriented by increasing ``t``.
    """
    p = normalize(p)
    t = 2.0 * np.pi * np.arange(n) / n
    z1 = (p[0] + 1j * p[1]) * np.exp(1j * t)
    z2 = (p[2] + 1j * p[3]) * np.exp((-1j if anti else 1j) * t)
    return Polyline(np.column_stack([z1.real, z1.imag, z2.real, z2.imag]), closed=True, ambient=S3)
