"""Compiled inner loops for the linking module.

All loops run in a fixed order and accumulate one partial sum per segment of
the first curve, so results are bit-reproducible.
"""
import math

import numpy as np
from numba import njit

INV_4PI = 1.0 / (4.0 * math.pi)

# Gauss-Legendre nodes and weights on [0, 1]
_G3X = np.array([0.5 - math.sqrt(15.0) / 10.0, 0.5, 0.5 + math.sqrt(15.0) / 10.0])
_G3W = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])
_G2X = np.array([0.5 - math.sqrt(3.0) / 6.0, 0.5 + math.sqrt(3.0) / 6.0])
_G2W = np.array([0.5, 0.5])

MAX_DEPTH = 12
SEPARATION_RATIO = 4.0


@njit(cache=True)
def segment_distance(p0, p1, q0, q1):
    """Minimum distance between segments [p0, p1] and [q0, q1] in R^k."""
    d1 = p1 - p0
    d2 = q1 - q0
    r = p0 - q0
    a = np.dot(d1, d1)
    e = np.dot(d2, d2)
    f = np.dot(d2, r)
    eps = 1e-300
    if a <= eps and e <= eps:
        return math.sqrt(np.dot(r, r))
    if a <= eps:
        s = 0.0
        t = min(max(f / e, 0.0), 1.0)
    else:
        c = np.dot(d1, r)
        if e <= eps:
            t = 0.0
            s = min(max(-c / a, 0.0), 1.0)
        else:
            b = np.dot(d1, d2)
            denom = a * e - b * b
            if denom > 1e-14 * a * e:
                s = min(max((b * f - c * e) / denom, 0.0), 1.0)
            else:
                s = 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = min(max(-c / a, 0.0), 1.0)
            elif t > 1.0:
                t = 1.0
                s = min(max((b - c) / a, 0.0), 1.0)
    diff = r + d1 * s - d2 * t
    return math.sqrt(np.dot(diff, diff))


@njit(cache=True)
def _rule(a0, A, b0, B, cx, cy, cz, s0, s1, t0, t1, xs, ws):
    """Tensor Gauss rule for the kernel on the parameter box [s0,s1]x[t0,t1]."""
    total = 0.0
    ds = s1 - s0
    dt = t1 - t0
    n = xs.shape[0]
    for i in range(n):
        s = s0 + ds * xs[i]
        px = a0[0] + s * A[0]
        py = a0[1] + s * A[1]
        pz = a0[2] + s * A[2]
        for j in range(n):
            t = t0 + dt * xs[j]
            rx = px - (b0[0] + t * B[0])
            ry = py - (b0[1] + t * B[1])
            rz = pz - (b0[2] + t * B[2])
            r2 = rx * rx + ry * ry + rz * rz
            total += ws[i] * ws[j] * (cx * rx + cy * ry + cz * rz) / (r2 * math.sqrt(r2))
    return total * ds * dt * INV_4PI


@njit(cache=True)
def gauss_pair_sums(a_start, a_end, b_start, b_end, min_distance):
    """Gauss linking double integral over all segment pairs of two polylines.

    Returns ``(row_values, row_errors, row_abs, n_exhausted, status)``.  Row
    ``i`` holds the contribution of segment ``i`` of the first curve.  Each
    leaf is integrated with a 3x3 Gauss rule; ``|Q3 - Q2|`` is accumulated as
    the quadrature error.  Segment pairs closer than 4x their combined length
    are bisected (to depth 12).  ``status`` is 1 when some pair of segments is
    closer than ``min_distance``; the sums are then incomplete.
    """
    n1 = a_start.shape[0]
    n2 = b_start.shape[0]
    values = np.zeros(n1)
    errors = np.zeros(n1)
    absval = np.zeros(n1)
    n_exhausted = 0
    stack = np.empty((4 * MAX_DEPTH + 8, 5))
    g3x, g3w, g2x, g2w = _G3X, _G3W, _G2X, _G2W
    for i in range(n1):
        a0 = a_start[i]
        A = a_end[i] - a0
        la = math.sqrt(np.dot(A, A))
        ma = a0 + 0.5 * A
        v = 0.0
        err = 0.0
        ab = 0.0
        for j in range(n2):
            b0 = b_start[j]
            B = b_end[j] - b0
            lb = math.sqrt(np.dot(B, B))
            cx = A[1] * B[2] - A[2] * B[1]
            cy = A[2] * B[0] - A[0] * B[2]
            cz = A[0] * B[1] - A[1] * B[0]
            mb = b0 + 0.5 * B
            dm = ma - mb
            sep = math.sqrt(np.dot(dm, dm)) - 0.5 * (la + lb)
            if sep >= SEPARATION_RATIO * (la + lb):
                q3 = _rule(a0, A, b0, B, cx, cy, cz, 0.0, 1.0, 0.0, 1.0, g3x, g3w)
                q2 = _rule(a0, A, b0, B, cx, cy, cz, 0.0, 1.0, 0.0, 1.0, g2x, g2w)
                v += q3
                err += abs(q3 - q2)
                ab += abs(q3)
                continue
            if sep < min_distance:
                if segment_distance(a0, a_end[i], b0, b_end[j]) < min_distance:
                    return values, errors, absval, n_exhausted, 1
            # adaptive bisection over the parameter box
            top = 0
            stack[0, 0] = 0.0
            stack[0, 1] = 1.0
            stack[0, 2] = 0.0
            stack[0, 3] = 1.0
            stack[0, 4] = 0.0
            top = 1
            while top > 0:
                top -= 1
                s0 = stack[top, 0]
                s1 = stack[top, 1]
                t0 = stack[top, 2]
                t1 = stack[top, 3]
                depth = stack[top, 4]
                lsa = (s1 - s0) * la
                lsb = (t1 - t0) * lb
                sm = 0.5 * (s0 + s1)
                tm = 0.5 * (t0 + t1)
                dx = a0[0] + sm * A[0] - b0[0] - tm * B[0]
                dy = a0[1] + sm * A[1] - b0[1] - tm * B[1]
                dz = a0[2] + sm * A[2] - b0[2] - tm * B[2]
                ssep = math.sqrt(dx * dx + dy * dy + dz * dz) - 0.5 * (lsa + lsb)
                if ssep >= SEPARATION_RATIO * (lsa + lsb) or depth >= MAX_DEPTH:
                    if ssep < SEPARATION_RATIO * (lsa + lsb):
                        n_exhausted += 1
                    q3 = _rule(a0, A, b0, B, cx, cy, cz, s0, s1, t0, t1, g3x, g3w)
                    q2 = _rule(a0, A, b0, B, cx, cy, cz, s0, s1, t0, t1, g2x, g2w)
                    v += q3
                    err += abs(q3 - q2)
                    ab += abs(q3)
                    continue
                split_s = lsa >= 0.5 * lsb
                split_t = lsb >= 0.5 * lsa
                if split_s and split_t:
                    for ks in range(2):
                        for kt in range(2):
                            stack[top, 0] = s0 if ks == 0 else sm
                            stack[top, 1] = sm if ks == 0 else s1
                            stack[top, 2] = t0 if kt == 0 else tm
                            stack[top, 3] = tm if kt == 0 else t1
                            stack[top, 4] = depth + 1.0
                            top += 1
                elif split_s:
                    for ks in range(2):
                        stack[top, 0] = s0 if ks == 0 else sm
                        stack[top, 1] = sm if ks == 0 else s1
                        stack[top, 2] = t0
                        stack[top, 3] = t1
                        stack[top, 4] = depth + 1.0
                        top += 1
                else:
                    for kt in range(2):
                        stack[top, 0] = s0
                        stack[top, 1] = s1
                        stack[top, 2] = t0 if kt == 0 else tm
                        stack[top, 3] = tm if kt == 0 else t1
                        stack[top, 4] = depth + 1.0
                        top += 1
        values[i] = v
        errors[i] = err
        absval[i] = ab
    return values, errors, absval, n_exhausted, 0


@njit(cache=True)
def crossing_sum(a_start, a_end, b_start, b_end, u, w, d, tol):
    """Sum of signed crossings between two polylines projected along ``d``.

    ``u, w, d`` is a right-handed orthonormal frame; the picture plane is
    spanned by ``u, w`` and the viewer looks from ``+d``.  Returns
    ``(signed_sum, degenerate)``; ``degenerate`` is set when a vertex falls
    within ``tol`` of the other strand in the picture plane, strands overlap,
    or two strands meet in space.
    """
    n1 = a_start.shape[0]
    n2 = b_start.shape[0]
    total = 0
    for i in range(n1):
        p0 = a_start[i]
        P = a_end[i] - p0
        px = np.dot(p0, u)
        py = np.dot(p0, w)
        ex = np.dot(P, u)
        ey = np.dot(P, w)
        le = math.sqrt(ex * ex + ey * ey)
        pxmin = min(px, px + ex) - tol
        pxmax = max(px, px + ex) + tol
        pymin = min(py, py + ey) - tol
        pymax = max(py, py + ey) + tol
        for j in range(n2):
            q0 = b_start[j]
            Q = b_end[j] - q0
            qx = np.dot(q0, u)
            qy = np.dot(q0, w)
            fx = np.dot(Q, u)
            fy = np.dot(Q, w)
            if max(qx, qx + fx) < pxmin or min(qx, qx + fx) > pxmax:
                continue
            if max(qy, qy + fy) < pymin or min(qy, qy + fy) > pymax:
                continue
            lf = math.sqrt(fx * fx + fy * fy)
            denom = ex * fy - ey * fx
            rx = qx - px
            ry = qy - py
            if abs(denom) <= 1e-14 * (le * lf + 1e-300):
                # parallel in the picture plane: degenerate only if collinear and overlapping
                if le > 0 and abs(rx * ey - ry * ex) / le < tol:
                    return 0, True
                continue
            s = (rx * fy - ry * fx) / denom
            t = (rx * ey - ry * ex) / denom
            se = tol / max(le, 1e-300)
            te = tol / max(lf, 1e-300)
            if s < -se or s > 1.0 + se or t < -te or t > 1.0 + te:
                continue
            if s < se or s > 1.0 - se or t < te or t > 1.0 - te:
                return 0, True
            ha = np.dot(p0 + s * P, d)
            hb = np.dot(q0 + t * Q, d)
            if abs(ha - hb) < tol:
                return 0, True
            # orientation of the crossing: sign of (over x under) . d
            c = np.dot(np.cross(P, Q), d)
            sign = 1 if c > 0 else -1
            if ha < hb:
                sign = -sign
            total += sign
    return total, False
