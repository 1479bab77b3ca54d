"""Contact-type certification and conformal Reeb reconstruction.

A closed two-form ``omega = Omega(X, -)`` is contact-type when it has a
primitive ``nu`` with ``nu ^ omega > 0``; equivalently, ``Lk_omega(mu)``
never vanishes over the invariant probability measures.  Over a finite
family of measures this can only be checked, not proved; the report says
which family was used.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .asymptotic import lk_omega_direct
from .errors import EmptyMeasureFamily, NonTransverse
from .fields import eval_primitive, nu_of_x, omega
from .geometry import random_s3, tangent_frame

DEFAULT_TOLERANCE = 1e-3
TRANSVERSALITY = 1e-9

CERTIFIED_POSITIVE = "certified_positive"
CERTIFIED_NEGATIVE = "certified_negative"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class MeasureValue:
    provenance: str
    value: float
    stderr: float


@dataclass(frozen=True)
class CertificationReport:
    """Per-measure ``Lk_omega`` values and the 3-sigma verdict at ``tolerance``."""

    field_name: str
    values: tuple
    tolerance: float
    verdict: str = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "verdict", _verdict(self.values, self.tolerance))

    def as_dict(self):
        return {
            "field": self.field_name,
            "tolerance": self.tolerance,
            "verdict": self.verdict,
            "measures": [
                {"provenance": v.provenance, "value": v.value, "stderr": v.stderr}
                for v in self.values
            ],
        }


def _verdict(values, tol):
    if values and all(v.value - 3.0 * v.stderr > tol for v in values):
        return CERTIFIED_POSITIVE
    if values and all(v.value + 3.0 * v.stderr < -tol for v in values):
        return CERTIFIED_NEGATIVE
    return INCONCLUSIVE


def direct_stderr(spec, mu, primitive=None):
    """Error estimate for :func:`lk_omega_direct`.

    Monte Carlo samples (``volume`` provenance) get the weighted standard
    error; time quadratures get the difference from the same rule on every
    other node.
    """
    vals = nu_of_x(spec, mu.points, primitive)
    w = mu.weights
    mean = float(np.dot(w, vals))
    if mu.provenance.get("kind") == "volume":
        n = len(w)
        if n < 2:
            return 0.0
        return float(np.sqrt(n / (n - 1) * np.sum(w**2 * (vals - mean) ** 2)))
    if len(w) < 4:
        return abs(mean)
    half = w[::2] / w[::2].sum()
    return float(abs(mean - np.dot(half, vals[::2])))


def mcduff_certify(spec, measures, tolerance=DEFAULT_TOLERANCE, primitive=None):
    """Evaluate ``Lk_omega`` on each measure and issue a verdict.

    ``certified_positive`` means every value exceeds ``tolerance`` by three
    standard errors; it is a statement about this family only.

    Raises
    ------
    EmptyMeasureFamily
        If ``measures`` is empty.
    """
    measures = list(measures)
    if not measures:
        raise EmptyMeasureFamily("at least one measure is required")
    values = tuple(
        MeasureValue(mu.label, lk_omega_direct(spec, mu, primitive),
                     direct_stderr(spec, mu, primitive))
        for mu in measures
    )
    return CertificationReport(spec.name, values, float(tolerance))


def contact_density(spec, p, primitive=None):
    """``(nu ^ omega)(e1, e2, e3)`` on the oriented orthonormal frame at each ``p``."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    e = tangent_frame(p)
    nu = eval_primitive(spec, p, primitive)
    total = np.zeros(len(p))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        nu_i = np.sum(nu * e[:, i], axis=1)
        total += nu_i * omega(spec, p, e[:, j], e[:, k])
    return total


def contact_type_check(spec, n_samples, seed=0, primitive=None):
    """Minimum of the ``nu ^ omega`` density over ``n_samples`` random points."""
    pts = random_s3(int(n_samples), np.random.default_rng(seed))
    return float(np.min(contact_density(spec, pts, primitive)))


def reconstruct_reeb(spec, p, primitive=None):
    """``R = X / nu(X)`` at ``p`` (shape ``(4,)`` or ``(n, 4)``).

    Raises
    ------
    NonTransverse
        If ``nu(X) <= 1e-9`` at some point.
    """
    p = np.asarray(p, dtype=float)
    nx = nu_of_x(spec, p, primitive)
    if np.any(nx <= TRANSVERSALITY):
        raise NonTransverse("nu(X) is not positive at some point")
    return spec.vector(p) / np.asarray(nx)[..., None]


@dataclass(frozen=True)
class ReebDefects:
    nu_defect: float
    omega_defect: float
    n_samples: int
    seed: int

    def as_dict(self):
        return {"nu_defect": self.nu_defect, "omega_defect": self.omega_defect,
                "n_samples": self.n_samples, "seed": self.seed}


def verify_reeb(spec, n_samples, seed=0, primitive=None):
    """Defects ``max |nu(R) - 1|`` and ``max |omega(R, v)|`` over random points and unit tangents ``v``."""
    rng = np.random.default_rng(seed)
    pts = random_s3(int(n_samples), rng)
    R = reconstruct_reeb(spec, pts, primitive)
    nu = eval_primitive(spec, pts, primitive)
    nu_def = float(np.max(np.abs(np.sum(nu * R, axis=1) - 1.0)))
    coef = rng.standard_normal((len(pts), 3))
    coef /= np.linalg.norm(coef, axis=1, keepdims=True)
    v = np.einsum("ni,nij->nj", coef, tangent_frame(pts))
    om_def = float(np.max(np.abs(omega(spec, pts, R, v))))
    return ReebDefects(nu_def, om_def, int(n_samples), int(seed))
