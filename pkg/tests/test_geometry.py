import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from righthand.errors import AntipodalPoints, InvalidCurve, MixedAmbient, PoleCollision
from righthand.geometry import (E4, R3, S3, Polyline, choose_pole, geodesic_arc, hopf_fiber,
                                inverse_stereographic, pole_design, project_pair,
                                random_rotation, random_s3, read_curve, rotation_to_pole,
                                stereographic_project, tangent_frame, write_curve)

finite4 = arrays(np.float64, 4, elements=st.floats(-1, 1, allow_nan=False)).filter(
    lambda v: np.linalg.norm(v) > 1e-3)


def test_antipode_of_pole_maps_to_origin():
    assert np.allclose(stereographic_project([0, 0, 0, -1], E4), 0.0)


def test_equator_point_projects_to_itself():
    assert np.allclose(stereographic_project([1, 0, 0, 0], E4), [1, 0, 0])


def test_projection_from_the_pole_itself_fails():
    with pytest.raises(PoleCollision):
        stereographic_project([0, 0, 0, 1], E4)


def test_inverse_round_trip(rng):
    pts = random_s3(10_000, rng)
    for pole in (E4, random_s3(1, rng)[0]):
        back = inverse_stereographic(stereographic_project(pts, pole), pole)
        assert np.max(np.abs(back - pts)) < 1e-10


@given(finite4)
def test_rotation_to_pole_is_special_orthogonal(v):
    q = rotation_to_pole(v)
    assert np.allclose(q @ q.T, np.eye(4), atol=1e-12)
    assert np.isclose(np.linalg.det(q), 1.0)
    assert np.allclose(q @ (v / np.linalg.norm(v)), E4, atol=1e-12)


def test_geodesic_quarter_circle():
    arc = geodesic_arc([1, 0, 0, 0], [0, 1, 0, 0], 65)
    assert abs(arc.spherical_length - np.pi / 2) < 1e-9
    assert np.allclose(np.linalg.norm(arc.vertices, axis=1), 1.0, atol=1e-12)


def test_geodesic_degenerate_and_antipodal():
    arc = geodesic_arc([0, 1, 0, 0], [0, 1, 0, 0], 10)
    assert len(arc) == 1 and arc.length == 0.0
    with pytest.raises(AntipodalPoints):
        geodesic_arc([1, 0, 0, 0], [-1, 0, 0, 0], 10)


@given(finite4, finite4)
def test_geodesic_length_symmetric_and_equals_angle(a, b):
    a, b = a / np.linalg.norm(a), b / np.linalg.norm(b)
    if np.dot(a, b) < -1 + 1e-9:
        return
    ab = geodesic_arc(a, b, 33)
    ba = geodesic_arc(b, a, 33)
    angle = np.arccos(np.clip(np.dot(a, b), -1, 1))
    assert abs(ab.spherical_length - ba.spherical_length) < 1e-9
    # arccos is ill-conditioned near 0; compare where it is reliable
    if angle > 1e-6:
        assert abs(ab.spherical_length - angle) < 1e-9


def test_chordal_length_converges_quadratically():
    a, b = np.array([1.0, 0, 0, 0]), np.array([0, 0.6, 0.8, 0])
    angle = np.pi / 2
    defects = [angle - geodesic_arc(a, b, n + 1).length for n in (8, 16, 32)]
    assert defects[0] / defects[1] >= 3 and defects[1] / defects[2] >= 3


def test_polyline_invariants():
    with pytest.raises(InvalidCurve):
        Polyline(np.zeros((2, 3)), closed=True)
    with pytest.raises(InvalidCurve):
        Polyline(np.array([[0, 0, 0], [0, 0, 0], [1, 0, 0.0]]))
    with pytest.raises(InvalidCurve):
        Polyline(np.array([[2.0, 0, 0, 0], [0, 1.0, 0, 0]]))
    with pytest.raises(InvalidCurve):
        Polyline(np.zeros((3, 3)), ambient=S3)
    square = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 0.0]])
    c = Polyline(square, closed=True)
    assert len(c) == 4 and c.ambient == R3 and c.length == pytest.approx(4.0)
    with pytest.raises(ValueError):
        c.vertices[0, 0] = 5.0


def test_reverse_and_refine():
    c = hopf_fiber([1, 0, 0, 0], 64)
    assert np.array_equal(c.reversed().vertices[::-1], c.vertices)
    r = c.refined(2)
    assert len(r) == 128 and r.ambient == S3
    assert abs(r.spherical_length - 2 * np.pi) < abs(c.length - 2 * np.pi)


def test_mixed_ambient_is_rejected():
    s = hopf_fiber([1, 0, 0, 0], 16)
    e = Polyline(np.eye(3), closed=True)
    with pytest.raises(MixedAmbient):
        project_pair(s, e)


def test_pole_design_is_fixed_and_spread():
    d = pole_design()
    assert d.shape == (60, 4)
    assert np.allclose(np.linalg.norm(d, axis=1), 1.0)
    dist = np.linalg.norm(d[:, None] - d[None], axis=-1) + 10 * np.eye(60)
    assert dist.min() > 0.4
    assert np.array_equal(d, pole_design())


def test_choose_pole_stays_away_from_samples():
    c = hopf_fiber([1, 0, 0, 0], 256)
    pole = choose_pole(c.vertices)
    assert np.min(np.linalg.norm(c.vertices - pole, axis=1)) > 0.5


def test_tangent_frames_are_oriented(rng):
    p = random_s3(200, rng)
    f = tangent_frame(p)
    m = np.concatenate([p[:, None, :], f], axis=1)
    assert np.allclose(np.linalg.det(m), 1.0)
    assert np.allclose(np.einsum("nij,nkj->nik", m, m), np.eye(4), atol=1e-12)


def test_random_rotation(rng):
    q = random_rotation(3, rng)
    assert np.isclose(np.linalg.det(q), 1.0) and np.allclose(q @ q.T, np.eye(3))


def test_curve_file_round_trip(tmp_path):
    c = hopf_fiber([0.6, 0, 0.8, 0], 32)
    path = tmp_path / "fiber.xyz"
    write_curve(path, c, comment="test fiber")
    back = read_curve(path)
    assert back.closed and back.ambient == S3
    assert np.array_equal(back.vertices, c.vertices)


def test_curve_file_errors(tmp_path):
    bad = tmp_path / "bad.xyz"
    bad.write_text("closed\n1 2\n3 4\n5 6\n")
    with pytest.raises(InvalidCurve):
        read_curve(bad)
    bad.write_text("loop\n1 2 3\n")
    with pytest.raises(InvalidCurve):
        read_curve(bad)
