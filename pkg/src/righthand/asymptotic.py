"""Asymptotic linking of flow lines and the linking of invariant measures with the volume.

Two estimators of ``Lk_omega(mu)`` are provided:

* :func:`lk_omega_direct`, the weighted sum of ``nu(X)`` over a
  :class:`MeasureSample`, for any primitive ``nu`` of ``omega``;
* :func:`lk_omega_kernel`, a Monte Carlo average of time-normalized Gauss
  double integrals over pairs of flow segments.

:func:`asymptotic_linking` closes two long flow segments at near-return
times and normalizes their linking number by the product of the times.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels
from .errors import (NearSingular, NoRecurrence, OrbitsNotDisjoint,
                     OutOfRangeParameter)
from .fields import eval_primitive, nu_of_x
from .flow import (close_up, find_recurrences, flow_to, integrate, integrate_batch,
                   integrate_cached)
from .geometry import S3, Polyline, choose_pole, normalize, project_polyline, random_s3
from .linking import LinkingResult, linking_integral, pair_integral

#: finite-time error constant in the asymptotic stderr
FINITE_TIME_C = 1.0
#: allowed fraction of segment pairs whose subdivision depth was exhausted
MAX_EXHAUSTED_FRACTION = 0.01


@dataclass(frozen=True, eq=False)
class MeasureSample:
    """Weighted point cloud standing in for an invariant probability measure."""

    points: np.ndarray
    weights: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float)
        if x.shape[1:] != (4,) or w.shape != (len(x),):
            raise ValueError("points (n, 4) and weights (n,) required")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        object.__setattr__(self, "points", x)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.weights)

    @property
    def label(self):
        prov = dict(self.provenance)
        kind = prov.pop("kind", "sample")
        args = ",".join(f"{k}={_fmt(v)}" for k, v in sorted(prov.items()))
        return f"{kind}({args})"


def _fmt(v):
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ",".join(f"{float(x):.6g}" for x in v) + "]"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _normalized(w):
    w = np.asarray(w, dtype=float)
    w = w / w.sum()
    # absorb the last rounding so the sum is 1 to within one ulp
    w[-1] = max(0.0, 1.0 - w[:-1].sum())
    return w


def orbit_period(spec, p0, horizon=50.0, delta=1e-6, tol=1e-11):
    """First return time of ``p0`` (gap below ``delta``) within ``horizon``.

    The search window starts at 8 and doubles up to ``horizon``.
    """
    window = min(8.0, horizon)
    while True:
        events = find_recurrences(integrate(spec, p0, window, tol), delta)
        # a minimum at the window's end is not yet resolved
        events = [e for e in events if e.time < window - 0.1 or window >= horizon]
        if events:
            return events[0].time
        if window >= horizon:
            raise NoRecurrence(f"no return within {delta:g} before t={horizon:g}")
        window = min(2.0 * window, horizon)


def periodic_orbit_measure(spec, p0, period=None, nodes=128):
    """Uniform time quadrature (``nodes`` points) over one period of ``p0``."""
    if nodes < 2:
        raise OutOfRangeParameter("nodes must be at least 2")
    p0 = normalize(p0)
    if period is None:
        period = orbit_period(spec, p0)
    times = period * np.arange(1, nodes) / nodes
    pts = np.vstack([p0, flow_to(spec, p0, times)])
    return MeasureSample(pts, _normalized(np.ones(nodes)),
                         {"kind": "periodic_orbit", "period": float(period), "p0": p0.tolist()})


def birkhoff_measure(spec, p0, T, nodes=1024):
    """Trapezoid-weighted uniform time samples of ``phi^[0,T](p0)``."""
    if nodes < 2:
        raise OutOfRangeParameter("nodes must be at least 2")
    p0 = normalize(p0)
    times = T * np.arange(1, nodes) / (nodes - 1)
    pts = np.vstack([p0, flow_to(spec, p0, times)])
    w = np.ones(nodes)
    w[[0, -1]] = 0.5
    return MeasureSample(pts, _normalized(w),
                         {"kind": "birkhoff", "T": float(T), "p0": p0.tolist()})


def volume_measure(spec, n, seed=0):
    """``n`` round-uniform points reweighted by the density of ``Omega``."""
    if n < 1:
        raise OutOfRangeParameter("n must be positive")
    pts = random_s3(n, np.random.default_rng(seed))
    return MeasureSample(pts, _normalized(spec.density(pts)),
                         {"kind": "volume", "n_samples": int(n), "seed": int(seed)})


def volume_quadrature(spec, n_eta=32, n_xi=32):
    """Product quadrature for ``Omega`` in Hopf coordinates.

    Gauss-Legendre nodes in ``u = sin^2 eta`` (the round volume is uniform
    in ``(u, xi1, xi2)``) and uniform periodic grids in both angles, weighted
    by the density of ``Omega``.  Trigonometric terms of degree below
    ``n_xi`` in either angle are integrated exactly.
    """
    if n_eta < 1 or n_xi < 2:
        raise OutOfRangeParameter("need n_eta >= 1 and n_xi >= 2")
    x, wx = np.polynomial.legendre.leggauss(int(n_eta))
    u, wu = 0.5 * (x + 1.0), 0.5 * wx
    xi = 2.0 * np.pi * (np.arange(n_xi) + 0.5) / n_xi
    U, X1, X2 = np.meshgrid(u, xi, xi, indexing="ij")
    c, s = np.sqrt(1.0 - U), np.sqrt(U)
    pts = np.stack([c * np.cos(X1), c * np.sin(X1), s * np.cos(X2), s * np.sin(X2)],
                   axis=-1).reshape(-1, 4)
    w = np.repeat(wu, n_xi * n_xi) * spec.density(pts)
    return MeasureSample(pts, _normalized(w),
                         {"kind": "volume_quadrature", "n_eta": int(n_eta), "n_xi": int(n_xi)})


def lk_omega_direct(spec, mu, primitive=None):
    """``sum_i w_i nu(X)(p_i)``; ``primitive`` replaces the canonical ``nu``.

    Raises
    ------
    NoPrimitiveAvailable
        If ``spec`` has no closed-form primitive and none is supplied.
    """
    eval_primitive(spec, mu.points[:1], primitive)
    return float(np.dot(mu.weights, nu_of_x(spec, mu.points, primitive)))


def _polylines_within(a, b, delta):
    """Whether two open polylines in R^4 (vertex arrays) come within ``delta``."""
    la = np.max(np.linalg.norm(np.diff(a, axis=0), axis=1), initial=0.0)
    lb = np.max(np.linalg.norm(np.diff(b, axis=0), axis=1), initial=0.0)
    tree = cKDTree(b)
    # segments closer than delta have vertices within delta + la + lb
    cand = tree.query_ball_point(a, delta + la + lb)
    for i, js in enumerate(cand):
        for j in js:
            for ii in (i - 1, i):
                for jj in (j - 1, j):
                    if 0 <= ii < len(a) - 1 and 0 <= jj < len(b) - 1:
                        if _kernels.segment_distance(a[ii], a[ii + 1], b[jj], b[jj + 1]) < delta:
                            return True
    return False


def _last_event(traj, horizon, delta):
    events = [e for e in find_recurrences(traj, delta) if e.time <= horizon * (1 + 1e-6)]
    if not events:
        raise NoRecurrence(f"no return within {delta:g} before t={horizon:g}")
    return events[-1]


def asymptotic_linking(spec, p, q, S, T, delta=1e-3, jitter=1e-3, tol=1e-9, cache=None):
    """Normalized linking ``lk(k(S*, p), k(T*, q)) / (S* T*)`` of closed-up flow lines.

    ``S*`` and ``T*`` are the last returns (gap at most ``delta``) not later
    than ``S`` and ``T``; a refined return time may exceed the horizon by a
    relative ``1e-6``.  The stderr adds ``C / min(S*, T*)`` with ``C = 1`` to
    the quadrature error as a finite-time allowance.

    Raises
    ------
    OrbitsNotDisjoint
        If the two computed trajectories come within ``delta``.
    NoRecurrence
        If either trajectory has no admissible return.
    """
    if S < 10 or T < 10:
        raise OutOfRangeParameter("horizons S and T must be at least 10")
    if not 0 < delta < 2:
        raise OutOfRangeParameter("delta must lie in (0, 2)")
    p, q = normalize(p), normalize(q)
    # a short overrun lets a return exactly at the horizon be detected
    tp = integrate_cached(spec, p, S + 1.0, tol, cache)
    tq = integrate_cached(spec, q, T + 1.0, tol, cache)
    if _polylines_within(tp.points, tq.points, delta):
        raise OrbitsNotDisjoint(f"orbits of p and q come within {delta:g}")
    ep = _last_event(tp, S, delta)
    eq = _last_event(tq, T, delta)
    kp = close_up(tp, ep, jitter)
    kq = close_up(tq, eq, jitter)
    lk = linking_integral(kp, kq)
    norm = ep.time * eq.time
    stderr = lk.stderr / norm + FINITE_TIME_C / min(ep.time, eq.time)
    info = {"S_star": ep.time, "T_star": eq.time, "gap_S": ep.gap, "gap_T": eq.gap,
            "link": lk.value}
    return LinkingResult(lk.value / norm, stderr, "asymptotic", info)


def lk_omega_kernel(spec, mu_seed, S, T, n_volume=64, seed=0, tol=1e-7, max_spacing=0.1):
    """Monte Carlo estimate of the Gauss double average against ``mu x Omega``.

    For each of ``n_volume`` points ``q_j`` drawn from ``Omega`` (round
    uniform, reweighted by the density), the Gauss double integral of the
    flow segments ``phi^[0,S](p_j)`` and ``phi^[0,T](q_j)`` is divided by
    ``S T``.  With ``mu_seed`` a point, ``p_j = mu_seed`` (the Birkhoff
    measure of the seed); with ``mu_seed=None`` the ``p_j`` are drawn from
    ``Omega`` as well, which targets ``Lk_omega(Omega)``.

    Orbits are sampled more coarsely than elsewhere (``tol``,
    ``max_spacing``); the kernel quadrature works on the chords, and the
    Monte Carlo error dominates.  Each pair is projected from its own pole.  The stderr combines the
    weighted sample standard error with the mean quadrature error.

    Raises
    ------
    NearSingular
        If the subdivision depth was exhausted on more than 1% of segment pairs.
    """
    if S < 10 or T < 10:
        raise OutOfRangeParameter("horizons S and T must be at least 10")
    if n_volume < 16:
        raise OutOfRangeParameter("n_volume must be at least 16")
    rng = np.random.default_rng(seed)
    qs = random_s3(n_volume, rng)
    w = spec.density(qs)
    if mu_seed is None:
        ps = random_s3(n_volume, rng)
        w = w * spec.density(ps)
    else:
        ps = np.repeat(normalize(mu_seed)[None, :], n_volume, axis=0)
    w = w / w.sum()

    def orbit(x, horizon):
        return integrate_batch(spec, x[None, :], horizon, tol, max_spacing=max_spacing)[1][0]

    seed_orbit = orbit(ps[0], S) if mu_seed is not None else None
    values = np.empty(n_volume)
    quad = np.empty(n_volume)
    n_pairs = 0
    n_exhausted = 0
    for j in range(n_volume):
        a = seed_orbit if mu_seed is not None else orbit(ps[j], S)
        b = orbit(qs[j], T)
        pole = choose_pole(a, b)
        ca = project_polyline(Polyline(a, closed=False, ambient=S3), pole)
        cb = project_polyline(Polyline(b, closed=False, ambient=S3), pole)
        res = pair_integral(ca, cb)
        values[j] = res.value / (S * T)
        quad[j] = res.stderr / (S * T)
        n_pairs += res.n_pairs
        n_exhausted += res.n_exhausted
    if n_exhausted > MAX_EXHAUSTED_FRACTION * n_pairs:
        raise NearSingular(f"subdivision exhausted on {n_exhausted} of {n_pairs} segment pairs")

    mean = float(np.dot(w, values))
    stat = np.sqrt(n_volume / (n_volume - 1) * np.sum(w**2 * (values - mean) ** 2))
    stderr = float(np.hypot(stat, np.dot(w, quad)))
    info = {"S": float(S), "T": float(T), "n_volume": int(n_volume), "seed": int(seed),
            "mode": "volume" if mu_seed is None else "seed", "stat_stderr": float(stat),
            "n_exhausted": int(n_exhausted)}
    return LinkingResult(mean, stderr, "kernel_mc", info)
