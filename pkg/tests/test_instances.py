import json

import numpy as np
import pytest

from ail_lab.errors import InvalidSpecError
from ail_lab.instances import (InstanceSpec, LabeledInstance, make_fig2_example,
                               make_instance, make_isolated_absorbing,
                               make_nonconvex_witness, make_offline_lower_bound,
                               make_rbas, nonconvex_policy, nonconvex_witness_target,
                               offline_lower_bound_rho, validate_assumptions)
from ail_lab.learners import occupancy_loss
from ail_lab.mdp import TabularMDP, compute_occupancy, policy_value
from conftest import random_policy


def test_fig2_structure(fig2):
    P = fig2.mdp.dense_transition()
    np.testing.assert_array_equal(fig2.mdp.initial_dist, [0.5, 0.5, 0.0])
    np.testing.assert_allclose(P[0, 0, 0], [0.5, 0.5, 0])
    np.testing.assert_allclose(P[0, 1, 1], [0, 0, 1])
    np.testing.assert_allclose(P[0, 2, 0], [0, 0, 1])
    assert fig2.good_states == (0, 1) and fig2.bad_states == (2,)


def test_rbas_expert_value_is_horizon():
    inst = make_rbas(20, 19, 1000)
    assert policy_value(inst.mdp, inst.expert) == pytest.approx(1000.0, abs=1e-9)


@pytest.mark.parametrize("kwargs", [dict(num_states=20), dict(num_states=7, num_good=4),
                                    dict(num_states=6, num_actions=3, kernel="random")])
def test_rbas_passes_validator(kwargs):
    inst = make_rbas(horizon=5, **kwargs)
    rep = validate_assumptions(inst)
    assert rep.holds("rbas")
    assert not rep.holds("isolated")


def test_rbas_rejects_zero_good_states():
    with pytest.raises(InvalidSpecError):
        make_rbas(5, 0)
    with pytest.raises(InvalidSpecError):
        make_rbas(5, 5)


def test_expert_never_visits_bad_states():
    for inst in (make_rbas(8, 5, 6, kernel="random"), make_fig2_example(3),
                 make_offline_lower_bound(5, 4, 10)):
        d = compute_occupancy(inst.mdp, inst.expert).dist
        assert np.all(d.sum(-1)[:, list(inst.bad_states)] <= 1e-12)


def test_reachability_violation_has_witness(fig2):
    P = fig2.mdp.dense_transition().copy()
    P[:, 0, 0] = (0.0, 1.0, 0.0)
    broken = fig2.with_mdp(TabularMDP(P, fig2.mdp.reward, fig2.mdp.initial_dist))
    rep = validate_assumptions(broken)
    assert not rep.rbas["reachability"].passed
    assert rep.rbas["reachability"].witness == (0, 0, 0, 0)
    assert rep.rbas["partition"].passed and rep.rbas["bad_absorbing"].passed


def test_isolated_two_state_example():
    inst = make_isolated_absorbing(2, 1, rho=[0.5, 0.5])
    rep = validate_assumptions(inst)
    assert rep.holds("isolated")
    assert not rep.holds("rbas")


def test_isolated_marginals_never_move():
    inst = make_isolated_absorbing(5, 6)
    pi = random_policy(np.random.default_rng(0), 6, 5, 2)
    ds = compute_occupancy(inst.mdp, pi).dist.sum(-1)
    np.testing.assert_allclose(ds, np.tile(inst.mdp.initial_dist, (6, 1)), atol=1e-15)


def test_isolated_expert_value():
    inst = make_isolated_absorbing(100, 100)
    assert policy_value(inst.mdp, inst.expert) == pytest.approx(100.0)


def test_offline_lower_bound_rho():
    np.testing.assert_allclose(offline_lower_bound_rho(4, 10), [1 / 11, 1 / 11, 9 / 11, 0])
    np.testing.assert_allclose(offline_lower_bound_rho(4, 1), [0.5, 0.5, 0.0, 0.0])
    with pytest.raises(InvalidSpecError):
        offline_lower_bound_rho(5, 1)


def test_offline_lower_bound_is_rbas():
    inst = make_offline_lower_bound(4, 3, 10)
    assert validate_assumptions(inst).holds("rbas")
    P = inst.mdp.dense_transition()
    np.testing.assert_allclose(P[0, 1, 0], inst.mdp.initial_dist)


def test_nonconvex_witness_closed_form():
    inst = make_nonconvex_witness()
    target = nonconvex_witness_target()
    for x in np.linspace(0, 1, 5):
        for y in np.linspace(0, 1, 5):
            d = compute_occupancy(inst.mdp, nonconvex_policy(x, y)).dist
            assert occupancy_loss(d, target) == pytest.approx(2 * (2 - x - x * y), abs=1e-12)
    d00 = compute_occupancy(inst.mdp, nonconvex_policy(0, 0)).dist
    d11 = compute_occupancy(inst.mdp, nonconvex_policy(1, 1)).dist
    assert occupancy_loss(d00, target) == pytest.approx(4.0)
    assert occupancy_loss(d11, target) == 0.0


def test_make_instance_dispatch_and_errors():
    inst = make_instance(InstanceSpec("offline_lower_bound", 4, horizon=3, params={"N": 10}))
    assert inst.kind == "offline_lower_bound"
    with pytest.raises(InvalidSpecError):
        make_instance(InstanceSpec("offline_lower_bound", 4))
    with pytest.raises(InvalidSpecError):
        make_instance(InstanceSpec("nope"))


def test_generators_are_byte_deterministic():
    spec = InstanceSpec("rbas", 6, horizon=4, rng_seed=3, params={"kernel": "random"})
    a = json.dumps(make_instance(spec).to_dict())
    b = json.dumps(make_instance(spec).to_dict())
    assert a == b


def test_instance_json_round_trip(fig2):
    doc = json.loads(json.dumps(fig2.to_dict()))
    assert doc["metadata"] == {"kind": "fig2_example", "good_states": [0, 1], "bad_states": [2],
                               "expert_action": 0}
    back = LabeledInstance.from_dict(doc)
    assert back.good_states == fig2.good_states
    np.testing.assert_array_equal(back.expert.probs, fig2.expert.probs)
    assert validate_assumptions(back).holds("rbas")
