import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

FOUR_PI2 = 4.0 * np.pi**2


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def random_link_pair(rng, n=192):
    """A random rigid motion of a template pair with known linking number.

    Returns ``(c1, c2, expected)``.  Templates: Hopf-link circles, the
    (2, 4) and (2, 6) torus links, and unlinked circle pairs (far apart or
    interleaved but unlinked).  Orientation of either curve is flipped at
    random.
    """
    from righthand.geometry import random_rotation
    from righthand.linking import circle, hopf_link_circles, torus_link

    kind = rng.integers(5)
    if kind == 0:
        c1, c2 = hopf_link_circles(n)
        lk = 1
    elif kind == 1:
        c1, c2 = torus_link(2, 4, 2 * n)
        lk = 2
    elif kind == 2:
        c1, c2 = torus_link(2, 6, 2 * n)
        lk = 3
    elif kind == 3:
        c1 = circle((0, 0, 0), (0, 0, 1), n=n)
        c2 = circle(rng.uniform(3, 6) * unit(rng.standard_normal(3)), unit(rng.standard_normal(3)), n=n)
        lk = 0
    else:
        # circle in the xz-plane beside the unit circle, not threading it
        c1 = circle((0, 0, 0), (0, 0, 1), n=n)
        c2 = circle((2.5, 0, 0), (0, 1, 0), n=n)
        lk = 0
    if rng.random() < 0.5:
        c1, lk = c1.reversed(), -lk
    if rng.random() < 0.5:
        c2, lk = c2.reversed(), -lk
    rot = random_rotation(3, rng)
    shift = rng.uniform(-2, 2, 3)
    return c1.transformed(rot, shift), c2.transformed(rot, shift), lk


# acceptance criteria report their verdicts here; printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
