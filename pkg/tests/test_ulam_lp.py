import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from righthand.errors import OutOfRangeParameter, ResolutionTooLarge
from righthand.fields import ANTIHOPF, HOPF, parse_field
from righthand.geometry import random_s3
from righthand.ulam_lp import (UlamChain, build_chain, cell_index, check_chain,
                               from_hopf_coordinates, hopf_coordinates, identity_chain,
                               load_chain, min_invariant_linking, save_chain)

FOUR_PI2 = 4 * np.pi**2
CONFORMAL = parse_field("conformal:f=default")
C_F = (2 + np.sqrt(3)) / 2


@pytest.fixture(scope="module")
def hopf_chain():
    return build_chain(HOPF, (8, 8, 8), tau=0.1, samples_per_cell=16, seed=7)


@pytest.fixture(scope="module")
def conformal_chain():
    return build_chain(CONFORMAL, (8, 8, 8), tau=0.1, samples_per_cell=16, seed=0)


def test_hopf_coordinates_round_trip():
    p = random_s3(1000, np.random.default_rng(0))
    assert np.allclose(from_hopf_coordinates(*hopf_coordinates(p)), p, atol=1e-12)


def test_cells_partition_sphere():
    res = (5, 6, 7)
    idx = cell_index(random_s3(20_000, np.random.default_rng(1)), res)
    assert idx.min() >= 0 and idx.max() < 5 * 6 * 7
    # each sample lies inside the box of the cell it is assigned to
    chain = identity_chain(np.zeros(5 * 6 * 7))
    boxes = UlamChain("x", res, 0.1, 8, 0, chain.transition, chain.objective,
                      chain.volumes).cells()
    p = random_s3(500, np.random.default_rng(2))
    eta, xi1, xi2 = hopf_coordinates(p)
    b = boxes[cell_index(p, res)]
    assert np.all((b[:, 0] <= eta) & (eta <= b[:, 1]))
    assert np.all((b[:, 2] <= xi1) & (xi1 <= b[:, 3]))
    assert np.all((b[:, 4] <= xi2) & (xi2 <= b[:, 5]))


def test_chain_is_stochastic(hopf_chain):
    assert hopf_chain.n_cells == 512
    rows = np.asarray(hopf_chain.transition.sum(axis=1)).ravel()
    assert np.max(np.abs(rows - 1)) < 1e-9
    assert hopf_chain.transition.data.min() >= 0
    assert np.allclose(hopf_chain.objective, 1 / FOUR_PI2, atol=1e-12)


@pytest.mark.parametrize("axis", [1, 2])
def test_hopf_chain_rotation_symmetry(hopf_chain, axis):
    n_eta, n1, n2 = hopf_chain.resolution
    k, i, j = np.unravel_index(np.arange(hopf_chain.n_cells), hopf_chain.resolution)
    if axis == 1:
        i = (i + 1) % n1
    else:
        j = (j + 1) % n2
    perm = np.ravel_multi_index((k, i, j), hopf_chain.resolution)
    P = hopf_chain.transition.toarray()
    conj = np.empty_like(P)
    conj[np.ix_(perm, perm)] = P
    tv = 0.5 * np.abs(conj - P).sum(axis=1)
    assert tv.max() < 0.1


@pytest.mark.parametrize("spec, chain_name", [(HOPF, "hopf_chain"), (CONFORMAL, "conformal_chain")])
def test_volume_measure_nearly_stationary(spec, chain_name, request):
    chain = request.getfixturevalue(chain_name)
    assert abs(chain.volumes.sum() - 1) < 1e-12
    assert chain.stationarity_residual(chain.volumes) < 0.05


def test_preconditions():
    with pytest.raises(ResolutionTooLarge):
        build_chain(HOPF, (50, 50, 50))
    with pytest.raises(OutOfRangeParameter):
        build_chain(HOPF, (4, 4, 4), tau=5.0)
    with pytest.raises(OutOfRangeParameter):
        build_chain(HOPF, (4, 4, 4), samples_per_cell=4)


def test_check_chain_rejects_bad_rows():
    chain = identity_chain([1.0, 2.0])
    bad = UlamChain("x", (1, 1, 2), 0.1, 8, 0, sp.csr_matrix(np.array([[0.5, 0.2], [0, 1.0]])),
                    chain.objective, chain.volumes)
    with pytest.raises(ValueError):
        check_chain(bad)


def test_hopf_lp(hopf_chain):
    res = min_invariant_linking(hopf_chain)
    assert abs(res.min_value - 1 / FOUR_PI2) < 0.2 / FOUR_PI2
    assert res.min_value - 1e-9 > 0
    assert res.feasibility_residual <= 1e-7
    assert abs(res.argmin_weights.sum() - 1) < 1e-12 and res.argmin_weights.min() >= 0
    assert hopf_chain.stationarity_residual(res.argmin_weights) < 1e-6


def test_antihopf_max_negative():
    chain = build_chain(ANTIHOPF, (8, 8, 8), seed=7)
    res = min_invariant_linking(chain, maximize=True)
    assert res.min_value < 0 and res.maximize
    assert abs(res.min_value + 1 / FOUR_PI2) < 0.2 / FOUR_PI2


def test_lp_below_uniform_measure(conformal_chain):
    res = min_invariant_linking(conformal_chain)
    assert res.min_value <= conformal_chain.objective @ conformal_chain.volumes + 1e-9


def test_conformal_lp_below_core_circle_bound(conformal_chain):
    res = min_invariant_linking(conformal_chain)
    # core circles x1 = x2 = 0 and x3 = x4 = 0 have f-averages 2 and sqrt(3)
    core = C_F * min(2.0, np.sqrt(3)) / FOUR_PI2
    assert res.min_value <= core + 0.2 / FOUR_PI2


def test_refinement_stable(hopf_chain):
    fine = build_chain(HOPF, (12, 12, 12), seed=7)
    a = min_invariant_linking(hopf_chain).min_value
    b = min_invariant_linking(fine).min_value
    assert abs(a - b) < 0.3 / FOUR_PI2


@settings(max_examples=30)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=12))
def test_identity_chain_min(objective):
    res = min_invariant_linking(identity_chain(objective))
    assert res.min_value == pytest.approx(min(objective), abs=1e-8)
    assert min_invariant_linking(identity_chain(objective), maximize=True).min_value == \
        pytest.approx(max(objective), abs=1e-8)


def test_serialization_round_trip(tmp_path, hopf_chain):
    path = tmp_path / "chain.json"
    save_chain(hopf_chain, path)
    back = load_chain(path)
    assert back.resolution == hopf_chain.resolution and back.seed == 7
    assert (back.transition != hopf_chain.transition).nnz == 0
    assert np.array_equal(back.objective, hopf_chain.objective)
    assert len(back.as_dict()["cells"]) == 512
