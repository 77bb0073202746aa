import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ail_lab.errors import StructuralError
from ail_lab.expert import (ExpertDataset, collect, estimate_occupancy,
                            estimation_error, expected_l1_risk, l1_risk_study,
                            missing_mass_distribution)
from ail_lab.instances import make_isolated_absorbing, make_rbas
from ail_lab.mdp import compute_occupancy


def test_two_traj_estimate(fig2, two_traj_data):
    d = estimate_occupancy(two_traj_data, 3, 2).dist
    assert d[0, 0, 0] == 1.0
    assert d[1, 0, 0] == 0.5 and d[1, 1, 0] == 0.5
    assert d.sum() == 2.0


def test_single_trajectory_is_one_hot():
    inst = make_rbas(20, horizon=30)
    d = estimate_occupancy(collect(inst, 1, 4), 20, 2).dist
    assert np.all((d == 0) | (d == 1))
    assert np.all(d.reshape(30, -1).sum(1) == 1)


def test_ten_trajectory_estimate():
    paths = np.array([[[0, 0]]] * 4 + [[[1, 0]]] * 6)
    d = estimate_occupancy(ExpertDataset(paths), 2, 2).dist
    assert d[0, 0, 0] == pytest.approx(0.4) and d[0, 1, 0] == pytest.approx(0.6)


def test_empty_dataset_rejected():
    with pytest.raises(StructuralError):
        ExpertDataset(np.zeros((0, 3, 2), dtype=int))


def test_estimation_error_rbas_is_deterministic():
    inst = make_rbas(20, horizon=1000)
    dE = compute_occupancy(inst.mdp, inst.expert)
    per, tot = estimation_error(dE, estimate_occupancy(collect(inst, 1, 0), 20, 2))
    np.testing.assert_allclose(per, 36 / 19)
    assert tot == pytest.approx(1894.74, abs=0.5)
    inst = make_rbas(20, horizon=100)
    _, tot = estimation_error(compute_occupancy(inst.mdp, inst.expert),
                              estimate_occupancy(collect(inst, 1, 9), 20, 2))
    assert tot == pytest.approx(189.47, abs=0.5)


def test_estimation_error_identity_and_shape(fig2):
    d = compute_occupancy(fig2.mdp, fig2.expert)
    assert estimation_error(d, d)[1] == 0.0
    with pytest.raises(StructuralError):
        estimation_error(d, np.zeros((3, 3, 2)))


def _occ(draw_vals, H=2, n=6):
    v = np.asarray(draw_vals, dtype=float).reshape(H, n) + 1e-6
    return v / v.sum(1, keepdims=True)


vec = st.lists(st.floats(0, 1), min_size=12, max_size=12)


@settings(max_examples=60, deadline=None)
@given(vec, vec, vec)
def test_estimation_error_triangle(a, b, c):
    a, b, c = _occ(a), _occ(b), _occ(c)
    ab, bc, ac = (estimation_error(x, y)[1] for x, y in ((a, b), (b, c), (a, c)))
    assert ac <= ab + bc + 1e-12
    assert 0 <= ab <= 2 * 2 + 1e-12


def test_estimator_is_unbiased(fig2):
    d = compute_occupancy(fig2.mdp, fig2.expert).dist
    est = np.mean([estimate_occupancy(collect(fig2, 2, s), 3, 2).dist
                   for s in range(1000)], axis=0)
    assert np.abs(est - d).reshape(2, -1).sum(1).max() < 0.05


def test_dataset_json_round_trip():
    ds = collect(make_rbas(5, horizon=4), 3, 8)
    doc = ds.to_dict()
    assert set(doc) == {"horizon", "trajectories", "seed"}
    back = ExpertDataset.from_dict(doc)
    np.testing.assert_array_equal(back.paths, ds.paths)
    assert back.source_seed == 8


# ---------------------------------------------------------------- risk

@pytest.mark.parametrize("c", [0.1, 0.5, 1.0])
@pytest.mark.parametrize("X", [100, 1000])
def test_missing_mass_lower_bound(X, c):
    rep = l1_risk_study(X, int(c * X), "missing_mass", 1000, seed=1)
    assert rep.mean_risk >= 1 / (3 * math.exp(c))


def test_uniform_large_sample_rate():
    rep = l1_risk_study(10, 10**6, "uniform", 200, seed=2)
    assert rep.mean_risk <= 2 * math.sqrt(10 / 1e6)


def test_point_mass_has_zero_risk():
    rep = l1_risk_study(1, 37, "uniform", 100, seed=0)
    assert rep.mean_risk == 0.0 and rep.std_error == 0.0


def test_monte_carlo_matches_exact_risk():
    q = missing_mass_distribution(50)
    rep = l1_risk_study(50, 20, q, 4000, seed=5)
    assert abs(rep.mean_risk - expected_l1_risk(q, 20)) <= 3 * rep.std_error


def test_isolated_uniform_n1_risk():
    # one sample from uniform over S: risk 2(1 - 1/S)
    assert expected_l1_risk(np.full(100, 0.01), 1) == pytest.approx(1.98)


def test_missing_mass_distribution_shape():
    q = missing_mass_distribution(10)
    assert q.sum() == pytest.approx(1.0)
    assert np.all(q[:-1] == 1 / 11)


def test_risk_study_seeded():
    a = l1_risk_study(30, 5, "uniform", 200, seed=3)
    b = l1_risk_study(30, 5, "uniform", 200, seed=3)
    assert a.mean_risk == b.mean_risk
