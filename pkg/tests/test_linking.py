import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_link_pair, unit
from righthand.errors import (CurvesIntersect, DegenerateProjection, InvalidCurve,
                              MixedAmbient, NearSingular)
from righthand.geometry import R3, Polyline, hopf_fiber
from righthand.linking import (LinkingResult, circle, crossing_number, gauss_kernel,
                               hopf_link_circles, linking_integral, pair_integral, torus_link)

vec3 = st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=3)


def test_kernel_hand_value():
    val = gauss_kernel([0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1])
    assert val == pytest.approx(-1.0 / (4 * np.pi), rel=1e-15)


@given(vec3, vec3, vec3)
def test_kernel_repeated_vector_vanishes(p, q, v):
    if np.linalg.norm(np.subtract(p, q)) < 1e-3:
        return
    assert gauss_kernel(p, q, v, v) == pytest.approx(0.0, abs=1e-12 * (1 + np.dot(v, v)))


def test_kernel_coplanar_vanishes(rng):
    # lines through a common point: V, W and p - q span a plane
    n = 1000
    c = rng.standard_normal((n, 3))
    V, W = rng.standard_normal((n, 3)), rng.standard_normal((n, 3))
    s, t = rng.standard_normal((2, n, 1))
    assert np.max(np.abs(gauss_kernel(c + s * V, c + t * W, V, W))) < 1e-12


def test_kernel_envelope(rng):
    n = 100_000
    p, q, V, W = rng.standard_normal((4, n, 3))
    bound = np.linalg.norm(V, axis=1) * np.linalg.norm(W, axis=1) / (
        4 * np.pi * np.sum((p - q) ** 2, axis=1))
    assert np.all(np.abs(gauss_kernel(p, q, V, W)) <= bound * (1 + 1e-12))


def test_kernel_near_diagonal():
    with pytest.raises(NearSingular):
        gauss_kernel([0, 0, 0], [0, 0, 1e-10], [1, 0, 0], [0, 1, 0])


def test_hopf_link_circles():
    c1, c2 = hopf_link_circles(256)
    res = linking_integral(c1, c2)
    assert res.method == "gauss_integral" and res.stderr <= 1e-3
    assert abs(res.value - 1.0) < 1e-6
    assert crossing_number(c1, c2) == 1


def test_distant_circles():
    c1 = circle((0, 0, 0), (0, 0, 1))
    c2 = circle((10, 0, 0), (0, 0, 1))
    assert abs(linking_integral(c1, c2).value) < 1e-4
    assert crossing_number(c1, c2) == 0


def test_torus_link_2_4():
    c1, c2 = torus_link(2, 4, 512)
    assert crossing_number(c1, c2) == 2
    assert linking_integral(c1, c2).integer == 2


def test_hopf_fibers_on_s3():
    a, b = hopf_fiber([1, 0, 0, 0], 512), hopf_fiber([0, 0, 1, 0], 512)
    assert abs(linking_integral(a, b).value - 1.0) < 1e-3
    assert crossing_number(a, b) == 1
    a, b = (hopf_fiber(p, 512, anti=True) for p in ([1, 0, 0, 0], [0.6, 0, 0.8, 0]))
    assert crossing_number(a, b) == -1


def test_symmetry_orientation_refinement():
    c1, c2 = torus_link(2, 6, 256)
    ab, ba = linking_integral(c1, c2), linking_integral(c2, c1)
    assert abs(ab.value - ba.value) <= ab.stderr + ba.stderr
    assert linking_integral(c1.reversed(), c2).value == pytest.approx(-ab.value, abs=1e-9)
    fine = linking_integral(c1.refined(2), c2.refined(2))
    assert abs(fine.value - ab.value) < max(ab.stderr, 1e-9)


def test_random_pairs_agree_with_crossings(rng):
    for _ in range(10):
        c1, c2, lk = random_link_pair(rng)
        res = linking_integral(c1, c2)
        assert crossing_number(c1, c2) == lk == round(res.value)
        assert abs(res.value - lk) < 3 * res.stderr


def test_intersecting_curves():
    c1 = circle((0, 0, 0), (0, 0, 1))
    c2 = circle((1, 0, 0), (0, 0, 1))
    with pytest.raises(CurvesIntersect):
        linking_integral(c1, c2)


def test_open_or_mixed_curves_rejected():
    open_curve = Polyline(np.eye(3), closed=False)
    closed = circle((0, 0, 0), (0, 0, 1))
    with pytest.raises(InvalidCurve):
        linking_integral(open_curve, closed)
    with pytest.raises(MixedAmbient):
        linking_integral(hopf_fiber([1, 0, 0, 0], 16), closed)


def test_degenerate_projection_without_retries():
    c1 = Polyline(np.array([[0, 0, 1.0], [0.5, 0.5, 1.0], [0.5, -0.5, 1.0]]), closed=True, ambient=R3)
    c2 = Polyline(np.array([[-1, 0, 0.0], [1, 0, 0.0], [0, 2, 0.0]]), closed=True, ambient=R3)
    with pytest.raises(DegenerateProjection):
        crossing_number(c1, c2, retries=0)
    assert crossing_number(c1, c2) == 0


def test_short_segment_pairs_bounded(rng):
    worst = 0.0
    for _ in range(200):
        a0 = rng.standard_normal(3)
        a1 = a0 + rng.uniform(1e-3, 0.1) * unit(rng.standard_normal(3))
        b0 = a0 + rng.uniform(1e-4, 0.2) * unit(rng.standard_normal(3))
        b1 = b0 + rng.uniform(1e-3, 0.1) * unit(rng.standard_normal(3))
        try:
            res = pair_integral(Polyline(np.array([a0, a1])), Polyline(np.array([b0, b1])),
                                min_distance=1e-4)
        except CurvesIntersect:
            continue
        worst = max(worst, abs(res.value))
    assert worst <= 1.0


def test_result_type():
    with pytest.raises(ValueError):
        LinkingResult(1.0, -1.0, "gauss_integral")
    r = LinkingResult(0.9999, 1e-3, "gauss_integral", {"x": 1})
    assert r.integer == 1 and r.as_dict()["x"] == 1
