"""Flow integration on S^3, recurrence detection and loop closing.

The integrator is the Dormand-Prince 5(4) pair with the local error
controlled per unit time and a step cap keeping consecutive samples within
0.05 in chordal distance.  After every accepted step the state is pushed
back onto the sphere.
"""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import EmbeddingFailure, OutOfRangeParameter, StepUnderflow
from .geometry import S3, Polyline, geodesic_arc, normalize

MAX_SPACING = 0.05
MIN_STEP = 1e-12
# interpolation error allowance before a candidate return is polished
SCREEN_SLACK = 1e-4

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Samples ``points[k] = phi^{times[k]}(p0)`` of one flow line."""

    times: np.ndarray
    points: np.ndarray
    spec: object = field(repr=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.points, dtype=float)
        if t.ndim != 1 or x.shape != (len(t), 4):
            raise ValueError("times (n,) and points (n, 4) required")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValueError("times must start at 0 and increase strictly")
        if np.max(np.abs(np.linalg.norm(x, axis=1) - 1.0)) > 1e-10:
            raise ValueError("trajectory points must lie on S3")
        t.flags.writeable = False
        x.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "points", x)

    @property
    def p0(self):
        return self.points[0]

    @property
    def duration(self):
        return float(self.times[-1])

    def as_polyline(self):
        return Polyline(self.points, closed=False, ambient=S3)


@dataclass(frozen=True)
class RecurrenceEvent:
    time: float
    gap: float


def _dp_step(f, y, h):
    k = [f(y)]
    for s in range(1, 7):
        ys = y + h * sum(a * kk for a, kk in zip(_A[s], k))
        k.append(f(ys))
    y5 = y + h * sum(b * kk for b, kk in zip(_B5, k) if b != 0.0)
    err = h * sum(e * kk for e, kk in zip(_E, k) if e != 0.0)
    return y5, err


def integrate_batch(spec, p0, T, tol=1e-10, stops=None, record_steps=True,
                    max_spacing=MAX_SPACING):
    """Integrate several initial conditions on a shared time grid.

    Parameters
    ----------
    p0 : array (m, 4)
    T : float
        Final time (always hit exactly).
    stops : array, optional
        Times in ``(0, T)`` that the step sequence must hit exactly.
    record_steps : bool
        Record every accepted step; otherwise only ``stops`` and ``T``.

    Returns
    -------
    times : (n,) array, starting at 0
    points : (m, n, 4) array
    """
    if not 0 < T <= 1e5:
        raise OutOfRangeParameter(f"horizon T={T} outside (0, 1e5]")
    if not 1e-12 <= tol <= 1e-4:
        raise OutOfRangeParameter(f"tol={tol} outside [1e-12, 1e-4]")
    y = normalize(np.atleast_2d(np.asarray(p0, dtype=float)))
    targets = np.unique(np.append(np.asarray(stops if stops is not None else [], float), T))
    targets = targets[targets > 0]
    f = spec.vector
    t = 0.0
    times = [0.0]
    states = [y]
    h = min(0.01, T)
    ti = 0
    while ti < len(targets):
        speed = float(np.max(np.linalg.norm(f(y), axis=1)))
        h_cap = 0.9 * max_spacing / max(speed, 1e-12)
        h = min(h, h_cap)
        target = targets[ti]
        hit = t + h >= target - 1e-12 * max(1.0, target)
        if hit:
            h = target - t
        y_new, err = _dp_step(f, y, h)
        err_rate = float(np.max(np.abs(err))) / h
        if not np.isfinite(err_rate):
            err_rate = np.inf
        if err_rate <= tol:
            t = target if hit else t + h
            y = normalize(y_new)
            if hit:
                ti += 1
            if record_steps or hit:
                times.append(t)
                states.append(y)
        # standard controller on the error per unit time (err ~ h^5, rate ~ h^4)
        fac = 0.9 * (tol / max(err_rate, 1e-300)) ** 0.25
        h_next = h * min(5.0, max(0.2, fac))
        if err_rate > tol and h_next < MIN_STEP:
            raise StepUnderflow(f"step size {h_next:g} below 1e-12 at t={t:g}")
        h = max(h_next, MIN_STEP) if err_rate <= tol else h_next
    return np.array(times), np.stack(states, axis=1)


def integrate(spec, p0, T, tol=1e-10, max_spacing=MAX_SPACING):
    """Trajectory of ``spec`` from ``p0`` over ``[0, T]``."""
    times, pts = integrate_batch(spec, np.asarray(p0)[None, :], T, tol, max_spacing=max_spacing)
    return Trajectory(times, pts[0], spec)


def flow_to(spec, p0, times, tol=1e-11):
    """``phi^t(p0)`` at the given increasing positive times, shape ``(len(times), 4)``."""
    times = np.asarray(times, dtype=float)
    _, pts = integrate_batch(spec, np.atleast_2d(p0), float(times[-1]), tol,
                             stops=times, record_steps=False)
    return pts[0, 1:]


def find_recurrences(traj, delta):
    """Near returns of a trajectory to its starting point.

    Local minima (time > 1) of the squared chordal distance to ``p0`` are
    located by three-point parabolic interpolation and screened with a cubic
    Hermite interpolant; survivors with gap at most ``delta`` are polished by
    Newton steps on re-integrated points and returned in time order.
    """
    if not 0 < delta < 2:
        raise OutOfRangeParameter("delta must lie in (0, 2)")
    t = traj.times
    d2 = np.sum((traj.points - traj.p0) ** 2, axis=1)
    idx = np.flatnonzero((d2[1:-1] <= d2[:-2]) & (d2[1:-1] < d2[2:])) + 1
    events = []
    for i in idx:
        if t[i] <= 1.0 or d2[i] > (delta + 0.1) ** 2:
            continue
        t_star, _ = _parabola_vertex(t[i - 1:i + 2], d2[i - 1:i + 2])
        gap = float(np.linalg.norm(hermite_point(traj, t_star) - traj.p0))
        if t_star <= 1.0 or gap > delta + SCREEN_SLACK:
            continue
        t_star, gap = _polish(traj, t_star, t[i - 1], t[i + 1])
        if t_star > 1.0 and gap <= delta:
            events.append(RecurrenceEvent(float(t_star), gap))
    return events


def _point_at(traj, t):
    """``phi^t(p0)`` re-integrated at high accuracy from the nearest earlier sample."""
    k = int(np.clip(np.searchsorted(traj.times, t, side="right") - 1, 0, len(traj.times) - 1))
    dt = t - traj.times[k]
    if dt <= 1e-14:
        return traj.points[k]
    return flow_to(traj.spec, traj.points[k], [dt], tol=1e-12)[0]


def _polish(traj, t_star, lo, hi, iterations=3):
    """Newton steps on ``<phi^t(p0) - p0, X> = 0`` using re-integrated points."""
    x = _point_at(traj, t_star)
    for _ in range(iterations):
        v = traj.spec.vector(x)
        step = -float(np.dot(x - traj.p0, v)) / float(np.dot(v, v))
        t_new = min(max(t_star + step, lo), hi)
        x_new = _point_at(traj, t_new)
        if np.linalg.norm(x_new - traj.p0) > np.linalg.norm(x - traj.p0):
            break
        t_star, x = t_new, x_new
        if abs(step) < 1e-13:
            break
    return t_star, float(np.linalg.norm(x - traj.p0))


def hermite_point(traj, t):
    """Cubic Hermite interpolant of the trajectory (positions and field values)."""
    times = traj.times
    k = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2))
    t0, t1 = times[k], times[k + 1]
    h = t1 - t0
    s = (t - t0) / h
    x0, x1 = traj.points[k], traj.points[k + 1]
    v0, v1 = traj.spec.vector(x0), traj.spec.vector(x1)
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    return normalize(h00 * x0 + h10 * h * v0 + h01 * x1 + h11 * h * v1)


def _parabola_vertex(ts, ys):
    t0, t1, t2 = ts
    y0, y1, y2 = ys
    # divided differences
    d01 = (y1 - y0) / (t1 - t0)
    d12 = (y2 - y1) / (t2 - t1)
    curv = (d12 - d01) / (t2 - t0)
    if curv <= 0:
        return float(t1), float(y1)
    slope = d01 - curv * (t0 + t1)
    tv = -slope / (2.0 * curv)
    tv = min(max(tv, t0), t2)
    yv = y0 + d01 * (tv - t0) + curv * (tv - t0) * (tv - t1)
    return float(tv), float(min(yv, y1))


def _binormal(m, t, x):
    """Unit tangent vector at ``m`` orthogonal to ``t`` and, when possible, to ``x``."""
    basis = [m, t]
    for cand in [x] + list(np.eye(4)):
        v = cand - sum(np.dot(cand, b) * b for b in basis)
        nv = np.linalg.norm(v)
        if nv > 1e-6:
            basis.append(v / nv)
            break
    q, _ = np.linalg.qr(np.column_stack(basis), mode="complete")
    return q[:, 3]


def _points_to_polyline_distance(pts, a, b):
    """Distance from each point to a polyline given by segment endpoints (R^4)."""
    d = b - a
    dd = np.maximum(np.sum(d * d, axis=1), 1e-300)
    out = np.empty(len(pts))
    for k, p in enumerate(pts):
        s = np.clip(np.sum((p - a) * d, axis=1) / dd, 0.0, 1.0)
        out[k] = np.sqrt(np.min(np.sum((a + s[:, None] * d - p) ** 2, axis=1)))
    return out


def close_up(traj, event, jitter=1e-3, arc_samples=9, resolution=1e-6):
    """Close the flow segment ``[0, event.time]`` with a geodesic arc back to ``p0``.

    The closing arc is pushed off the flow line along a binormal bump of
    height ``min(jitter, gap)`` (halved on failure, at most 8 halvings) until its
    interior stays ``resolution`` away from the flow segment.  The flow
    segment itself is not checked: a periodic orbit traversed several times
    overlaps itself by construction.

    Raises
    ------
    EmbeddingFailure
        If no admissible offset is found.
    """
    t = traj.times
    if not 0 < event.time <= t[-1] * (1 + 1e-12):
        raise OutOfRangeParameter("event time outside the trajectory span")
    if jitter < 0:
        raise OutOfRangeParameter("jitter must be nonnegative")
    k = int(np.searchsorted(t, event.time, side="right"))
    flow_pts = traj.points[:k]
    dt = event.time - t[k - 1]
    if dt > 1e-13:
        end = flow_to(traj.spec, flow_pts[-1], [dt])[0]
        if np.linalg.norm(end - flow_pts[-1]) > 1e-12:
            flow_pts = np.vstack([flow_pts, end])
    end = flow_pts[-1]
    p0 = traj.p0
    gap = float(np.linalg.norm(end - p0))
    if gap < 1e-9:
        if gap > 0:
            flow_pts = flow_pts[:-1]
        return Polyline(flow_pts, closed=True, ambient=S3)

    arc = geodesic_arc(end, p0, arc_samples).vertices
    interior = arc[1:-1]
    s = np.linspace(0.0, 1.0, arc_samples)[1:-1, None]
    mid = normalize(end + p0)
    tangent = normalize(p0 - end - np.dot(p0 - end, mid) * mid)
    b = _binormal(mid, tangent, traj.spec.vector(mid))
    seg_a, seg_b = flow_pts[:-1], flow_pts[1:]
    res = min(resolution, gap / 16.0)
    # offsets much taller than the arc itself only add a spike
    amp = min(float(jitter), gap)
    for _ in range(9):
        bump = normalize(interior + amp * np.sin(np.pi * s) * b)
        if np.min(_points_to_polyline_distance(bump, seg_a, seg_b)) >= res:
            return Polyline(np.vstack([flow_pts, bump]), closed=True, ambient=S3)
        if amp == 0.0:
            break
        amp *= 0.5
    raise EmbeddingFailure("closing arc meets the flow segment for every tried offset")


# Trajectory cache ---------------------------------------------------------


def cache_key(spec, p0, T, tol):
    payload = json.dumps([spec.name, [repr(float(x)) for x in p0], repr(float(T)), repr(float(tol))])
    return hashlib.sha256(payload.encode()).hexdigest()[:32]


class TrajectoryCache:
    """Text cache: one ``time x1 x2 x3 x4`` row per sample, keyed by inputs."""

    def __init__(self, directory):
        self.directory = os.fspath(directory)
        os.makedirs(self.directory, exist_ok=True)

    def path(self, spec, p0, T, tol):
        return os.path.join(self.directory, cache_key(spec, p0, T, tol) + ".traj")

    def load(self, spec, p0, T, tol):
        path = self.path(spec, p0, T, tol)
        if not os.path.exists(path):
            return None
        data = np.loadtxt(path, ndmin=2)
        return Trajectory(data[:, 0], data[:, 1:], spec)

    def store(self, traj, T, tol):
        path = self.path(traj.spec, traj.p0, T, tol)
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".part")
        with os.fdopen(fd, "w") as fh:
            np.savetxt(fh, np.column_stack([traj.times, traj.points]), fmt="%.17g")
        os.replace(tmp, path)
        return path

    def integrate(self, spec, p0, T, tol=1e-10):
        traj = self.load(spec, p0, T, tol)
        if traj is None:
            traj = integrate(spec, p0, T, tol)
            self.store(traj, T, tol)
        return traj


def integrate_cached(spec, p0, T, tol=1e-10, cache=None):
    if cache is None:
        return integrate(spec, p0, T, tol)
    return cache.integrate(spec, p0, T, tol)
