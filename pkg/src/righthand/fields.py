"""Catalog of volume-preserving vector fields on S^3 with closed-form contact data.

Conventions
-----------
* The invariant volume ``Omega`` has total mass 1.  It is stored as a density
  ``rho`` against the round volume normalized to mass 1 (the round volume of
  S^3 is ``2 pi^2``), so ``Omega = rho * vol_round / (2 pi^2)``.
* S^3 carries the boundary orientation of the unit ball: ``vol_round(u, v, w)
  = det[p, u, v, w]``.
* Covectors are represented by their ambient R^4 coefficient vectors; only
  their pairing with tangent vectors is meaningful.

The primitive ``nu`` of ``omega = Omega(X, -)`` is known in closed form for
every catalog entry.  For the Hopf field it is ``lambda / (4 pi^2)`` with
``lambda = x1 dx2 - x2 dx1 + x3 dx4 - x4 dx3``.
"""
from __future__ import annotations

import functools
import re
from dataclasses import dataclass

import numpy as np

from .errors import NoPrimitiveAvailable, UnknownField
from .geometry import normalize, tangent_frame

FOUR_PI2 = 4.0 * np.pi**2
ROUND_VOLUME = 2.0 * np.pi**2


def _block1(p):
    """Coefficients of x1 dx2 - x2 dx1 (equivalently the rotation of the first plane)."""
    out = np.zeros_like(p)
    out[..., 0] = -p[..., 1]
    out[..., 1] = p[..., 0]
    return out


def _block2(p):
    out = np.zeros_like(p)
    out[..., 2] = -p[..., 3]
    out[..., 3] = p[..., 2]
    return out


# Named positive conformal factors f(p) for ConformalHopf.
CONFORMAL_FACTORS = {
    "default": lambda p: 2.0 + p[..., 0],
    "one": lambda p: np.ones(p.shape[:-1]),
    # two core circles with periods 2*pi and 2*pi/sqrt(2)
    "irrational": lambda p: 1.0 + (np.sqrt(2.0) - 1.0) * (p[..., 2] ** 2 + p[..., 3] ** 2),
}


def round_average(g, n=48):
    """Average of ``g`` over S^3 against the normalized round measure.

    Tensor quadrature in Hopf coordinates ``(eta, xi1, xi2)``: Gauss-Legendre
    in ``u = sin^2 eta`` (the round measure is uniform in ``(u, xi1, xi2)``)
    and the periodic trapezoid rule in both angles.
    """
    u, wu = np.polynomial.legendre.leggauss(n)
    u = 0.5 * (u + 1.0)
    wu = 0.5 * wu
    xi = 2.0 * np.pi * np.arange(2 * n) / (2 * n)
    U, X1, X2 = np.meshgrid(u, xi, xi, indexing="ij")
    c, s = np.sqrt(1.0 - U), np.sqrt(U)
    pts = np.stack([c * np.cos(X1), c * np.sin(X1), s * np.cos(X2), s * np.sin(X2)], axis=-1)
    vals = g(pts)
    return float(np.einsum("i,ijk->", wu, vals) / (2 * n) ** 2)


@functools.lru_cache(maxsize=None)
def _conformal_constant(f_name):
    """``c_f = 1 / <1/f>``: the density of ``Omega`` is ``c_f / f``."""
    f = CONFORMAL_FACTORS[f_name]
    return 1.0 / round_average(lambda p: 1.0 / f(p))


@dataclass(frozen=True)
class FieldSpec:
    """One catalog field.

    ``kind`` is ``"hopf"``, ``"antihopf"``, ``"ellipsoid"`` (rates ``a``, ``b``
    on the two complex planes) or ``"conformal"`` (``f * Hopf`` for the named
    factor ``f_name``).
    """

    kind: str
    a: float = 1.0
    b: float = 1.0
    f_name: str = "default"

    def __post_init__(self):
        if self.kind not in ("hopf", "antihopf", "ellipsoid", "conformal"):
            raise UnknownField(f"unknown field kind {self.kind!r}")
        if self.kind == "ellipsoid" and not (self.a > 0 and self.b > 0):
            raise UnknownField("ellipsoid rates must be positive")
        if self.kind == "conformal" and self.f_name not in CONFORMAL_FACTORS:
            raise UnknownField(f"unknown conformal factor {self.f_name!r}")

    @property
    def name(self):
        if self.kind == "ellipsoid":
            return f"ellipsoid:a={self.a:g},b={self.b:g}"
        if self.kind == "conformal":
            return f"conformal:f={self.f_name}"
        return self.kind

    def __str__(self):
        return self.name

    def vector(self, p):
        """The field ``X`` at ``p`` (shape ``(..., 4)``)."""
        p = np.asarray(p, dtype=float)
        if self.kind == "hopf":
            return _block1(p) + _block2(p)
        if self.kind == "antihopf":
            return _block1(p) - _block2(p)
        if self.kind == "ellipsoid":
            return self.a * _block1(p) + self.b * _block2(p)
        return self.factor(p)[..., None] * (_block1(p) + _block2(p))

    def factor(self, p):
        """Conformal factor ``f`` relative to the underlying linear field (1 if none)."""
        p = np.asarray(p, dtype=float)
        if self.kind == "conformal":
            return CONFORMAL_FACTORS[self.f_name](p)
        return np.ones(p.shape[:-1])

    @property
    def density_constant(self):
        return _conformal_constant(self.f_name) if self.kind == "conformal" else 1.0

    def density(self, p):
        """Density ``rho`` of ``Omega`` against the normalized round measure."""
        p = np.asarray(p, dtype=float)
        if self.kind == "conformal":
            return self.density_constant / self.factor(p)
        return np.ones(p.shape[:-1])

    def primitive(self, p):
        """Closed-form primitive ``nu`` of ``omega`` at ``p``."""
        p = np.asarray(p, dtype=float)
        if self.kind == "hopf":
            lam = _block1(p) + _block2(p)
        elif self.kind == "antihopf":
            lam = -(_block1(p) - _block2(p))
        elif self.kind == "ellipsoid":
            lam = self.b * _block1(p) + self.a * _block2(p)
        elif self.kind == "conformal":
            lam = self.density_constant * (_block1(p) + _block2(p))
        else:  # pragma: no cover - guarded by __post_init__
            raise NoPrimitiveAvailable(self.kind)
        return lam / FOUR_PI2


HOPF = FieldSpec("hopf")
ANTIHOPF = FieldSpec("antihopf")

_ELLIPSOID = re.compile(r"^ellipsoid:a=([^,]+),b=(.+)$")
_CONFORMAL = re.compile(r"^conformal:f=(\w+)$")


def parse_field(text):
    """Parse ``hopf``, ``antihopf``, ``ellipsoid:a=1,b=2`` or ``conformal:f=default``."""
    text = text.strip().lower()
    if text in ("hopf", "antihopf"):
        return FieldSpec(text)
    m = _ELLIPSOID.match(text)
    if m:
        try:
            a, b = float(m.group(1)), float(m.group(2))
        except ValueError:
            raise UnknownField(f"bad ellipsoid rates in {text!r}") from None
        return FieldSpec("ellipsoid", a=a, b=b)
    m = _CONFORMAL.match(text)
    if m:
        return FieldSpec("conformal", f_name=m.group(1))
    raise UnknownField(f"unknown field {text!r}")


def eval_field(spec, p):
    return spec.vector(p)


def eval_primitive(spec, p, primitive=None):
    """Value of ``nu`` at ``p``; ``primitive`` overrides the canonical one."""
    if primitive is not None:
        return primitive(np.asarray(p, dtype=float))
    if not hasattr(spec, "primitive"):
        raise NoPrimitiveAvailable(f"{spec} has no closed-form primitive")
    return spec.primitive(p)


def nu_of_x(spec, p, primitive=None):
    """The function ``nu(X)`` at points ``p``."""
    p = np.asarray(p, dtype=float)
    return np.sum(eval_primitive(spec, p, primitive) * spec.vector(p), axis=-1)


def shifted_primitive(spec, gradient):
    """Primitive ``nu + dg`` for a function ``g`` given by its ambient gradient."""
    def nu(p):
        return spec.primitive(p) + gradient(p)
    return nu


def grad_x1x3(p, scale=1.0):
    """Ambient gradient of ``g = scale * x1 * x3``."""
    out = np.zeros_like(p)
    out[..., 0] = scale * p[..., 2]
    out[..., 2] = scale * p[..., 0]
    return out


def omega(spec, p, u, v):
    """``omega(u, v) = Omega(X, u, v)`` for tangent vectors at ``p``."""
    p, u, v = (np.asarray(x, dtype=float) for x in (p, u, v))
    m = np.stack(np.broadcast_arrays(p, spec.vector(p), u, v), axis=-2)
    return spec.density(p) * np.linalg.det(m) / ROUND_VOLUME


def divergence_defect(spec, p, h=1e-3):
    """Finite-difference divergence of ``X`` with respect to ``Omega`` at ``p``.

    Central differences of ``rho X`` along an orthonormal tangent frame, with
    the stencil points pushed back onto the sphere; the result is
    ``div(rho X) / rho``, which vanishes for an ``Omega``-preserving field up
    to ``O(h^2)``.
    """
    if not 1e-6 <= h <= 1e-2:
        raise ValueError("step h must lie in [1e-6, 1e-2]")
    p = np.atleast_2d(normalize(p))
    frames = tangent_frame(p)

    def flux(y):
        y = normalize(y)
        return spec.density(y)[..., None] * spec.vector(y)

    total = np.zeros(len(p))
    for i in range(3):
        e = frames[:, i, :]
        total += np.sum((flux(p + h * e) - flux(p - h * e)) * e, axis=1) / (2.0 * h)
    out = total / spec.density(p)
    return out if len(out) > 1 else float(out[0])


def exterior_derivative_fd(nu, p, u, v, h=1e-3):
    """Central-difference ``d nu (u, v)`` for a covector field ``nu`` on S^3."""
    p = np.atleast_2d(p)

    def ext(y):
        return nu(normalize(y))

    du = (ext(p + h * u) - ext(p - h * u)) / (2.0 * h)
    dv = (ext(p + h * v) - ext(p - h * v)) / (2.0 * h)
    return np.sum(du * v, axis=-1) - np.sum(dv * u, axis=-1)
