import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ail_lab.errors import AssumptionError
from ail_lab.expert import collect, estimate_occupancy, estimation_error, expected_l1_risk
from ail_lab.instances import make_isolated_absorbing, make_rbas
from ail_lab.learners import bc_fit, isolated_absorbing_solve, tvail_lp, tvail_ogd
from ail_lab.mdp import NonStationaryPolicy, compute_occupancy
from ail_lab.theory import (approx_condition_lhs, approx_opt_report, bound_audit,
                            c_coefficient, epsilon_of, imitation_gap)
from conftest import beta_policy


def brute_c(inst, pi):
    """Direct conditional probabilities on the full state space."""
    P = inst.mdp.dense_transition()
    H = inst.mdp.horizon
    good = list(inst.good_states)
    M = np.einsum("hsa,hsat->hst", pi.probs, P)
    best = np.inf
    for ell in range(H - 1):
        for s0 in good:
            v = P[ell, s0, 0].copy()
            for h in range(ell + 1, H):
                best = min(best, v[good].min())
                v = v @ M[h]
    return best


def target_of(inst, ds):
    return estimate_occupancy(ds, inst.mdp.num_states, inst.mdp.num_actions)


# ---------------------------------------------------------------- gap

def test_gap_examples(fig2, two_traj_data):
    assert imitation_gap(fig2, bc_fit(two_traj_data, 3, 2)).gap == pytest.approx(0.5)
    assert imitation_gap(fig2, fig2.expert).gap == 0.0
    blue = NonStationaryPolicy.deterministic(np.ones((2, 3), int), 2)
    rep = imitation_gap(fig2, blue)
    assert rep.gap == 2.0 and rep.expert_value == 2.0 and rep.learner_value == 0.0
    assert rep.per_step.sum() == rep.gap


# ---------------------------------------------------------------- epsilon

def test_epsilon_examples(fig2, two_traj_data):
    t = target_of(fig2, two_traj_data)
    pi, _ = tvail_lp(fig2.mdp, t)
    assert epsilon_of(fig2.mdp, pi, t) == 0.0
    assert epsilon_of(fig2.mdp, beta_policy(0.5), t) == pytest.approx(0.5)


# ---------------------------------------------------------------- c

def test_c_uniform_rbas_expert():
    inst = make_rbas(20, horizon=5)
    c = c_coefficient(inst, inst.expert)
    assert c == pytest.approx(1 / 19)
    assert c == pytest.approx(brute_c(inst, inst.expert))


def test_c_fig2_expert(fig2):
    assert c_coefficient(fig2, fig2.expert) == pytest.approx(0.5)


def test_c_h2_is_policy_independent():
    inst = make_rbas(5, horizon=2, kernel="random", rng_seed=4)
    rng = np.random.default_rng(0)
    vals = []
    for _ in range(4):
        p = rng.random((2, 5, 2)) + 0.05
        vals.append(c_coefficient(inst, NonStationaryPolicy(p / p.sum(-1, keepdims=True))))
    P = inst.mdp.dense_transition()[0]
    assert np.allclose(vals, P[:4, 0, :4].min())


@pytest.mark.parametrize("seed", range(5))
def test_c_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    inst = make_rbas(6, 4, horizon=5, kernel="random", rng_seed=seed)
    p = rng.random((5, 6, 2)) + 0.05
    pi = NonStationaryPolicy(p / p.sum(-1, keepdims=True))
    assert c_coefficient(inst, pi) == pytest.approx(brute_c(inst, pi), rel=1e-12)


def test_c_rejects_policies_outside_candidate_set(fig2):
    p = fig2.expert.probs.copy()
    p[1, :2] = (0.0, 1.0)
    with pytest.raises(AssumptionError):
        c_coefficient(fig2, NonStationaryPolicy(p))
    with pytest.raises(AssumptionError):
        c_coefficient(make_isolated_absorbing(3, 3), make_isolated_absorbing(3, 3).expert)


# ---------------------------------------------------------------- condition

def test_lhs_zero_for_matched_expert():
    inst = make_rbas(6, horizon=4)
    ds = collect(inst, 3, 2)
    t = target_of(inst, ds)
    dE = compute_occupancy(inst.mdp, inst.expert).dist[-1].sum(-1)
    p = inst.expert.probs.copy()
    for s in inst.good_states:
        q = min(1.0, t.dist[-1].sum(-1)[s] / dE[s])
        p[-1, s] = (q, 1 - q)
    assert approx_condition_lhs(inst, NonStationaryPolicy(p), t) == 0.0


def test_lhs_vanishes_at_lp_optimum():
    for S, H, N, seed in ((4, 3, 1, 0), (5, 4, 2, 1), (6, 3, 1, 2)):
        inst = make_rbas(S, horizon=H)
        t = target_of(inst, collect(inst, N, seed))
        pi, _ = tvail_lp(inst.mdp, t)
        assert approx_condition_lhs(inst, pi, t) <= 1e-6


def test_lhs_below_epsilon_for_ogd(fig2, two_traj_data):
    t = target_of(fig2, two_traj_data)
    pi, _ = tvail_ogd(fig2.mdp, t, T=2000)
    rep = approx_opt_report(fig2, pi, t)
    assert rep.lhs <= rep.epsilon + 1e-9
    assert rep.ratio == pytest.approx(rep.epsilon / rep.c_coeff)


_probs = st.lists(st.floats(0.05, 1.0), min_size=20, max_size=20)


@settings(max_examples=40, deadline=None)
@given(_probs, st.integers(0, 50))
def test_lhs_below_epsilon_fig2(vals, seed):
    from ail_lab.instances import make_fig2_example
    inst = make_fig2_example()
    p1 = np.array(vals[:6]).reshape(2, 3)
    pi = NonStationaryPolicy(np.stack([p1, 1 - p1], -1))
    t = target_of(inst, collect(inst, 2, seed))
    assert approx_condition_lhs(inst, pi, t) <= epsilon_of(inst.mdp, pi, t) + 1e-9


@settings(max_examples=25, deadline=None)
@given(_probs, st.integers(0, 50))
def test_lhs_below_epsilon_rbas(vals, seed):
    inst = make_rbas(6, 5, horizon=3)
    p1 = np.resize(np.array(vals), (3, 6))
    pi = NonStationaryPolicy(np.stack([p1, 1 - p1], -1))
    t = target_of(inst, collect(inst, 1 + seed % 3, seed))
    assert approx_condition_lhs(inst, pi, t) <= epsilon_of(inst.mdp, pi, t) + 1e-9


# ---------------------------------------------------------------- audit

def test_audit_expert_passes_everything(fig2, two_traj_data):
    rep = bound_audit(fig2, two_traj_data, fig2.expert)
    assert rep.passed and all(c.passed for c in rep.checks)


def test_audit_rbas_lp_policy():
    inst = make_rbas(20, horizon=200)
    ds = collect(inst, 1, 0)
    pi, _ = tvail_lp(inst.mdp, target_of(inst, ds))
    rep = bound_audit(inst, ds, pi)
    hf = rep.by_name("horizon_free")
    assert hf.bound == 1.0 and 0.0 <= hf.realized <= 1.0 and hf.passed
    assert rep.passed


def test_audit_isolated_worst_case_equality():
    inst = make_isolated_absorbing(100, 100)
    ds = collect(inst, 1, 0)
    t = target_of(inst, ds)
    pi = isolated_absorbing_solve(inst, t, "worst_case")
    rep = bound_audit(inst, ds, pi)
    assert rep.passed
    # worst case is half of 2(1 - 1/S) per step
    assert rep.by_name("horizon_cap").realized == pytest.approx(99.0)
    iso = rep.by_name("isolated_worst_case")
    assert iso.realized == pytest.approx(iso.bound, abs=1e-9)


def test_audit_approximate_branch_records_both_constants():
    inst = make_rbas(6, horizon=8)
    ds = collect(inst, 1, 3)
    t = target_of(inst, ds)
    pi, _ = tvail_ogd(inst.mdp, t, T=300)
    eps = epsilon_of(inst.mdp, pi, t)
    rep = bound_audit(inst, ds, pi, epsilon=eps)
    stated = rep.by_name("approx_horizon_free")
    proof = rep.by_name("approx_horizon_free_proof")
    assert stated.strict and not proof.strict
    assert stated.bound >= proof.bound and rep.passed


def test_audit_serializations(fig2, two_traj_data):
    rep = bound_audit(fig2, two_traj_data, bc_fit(two_traj_data, 3, 2), "bc")
    lines = rep.to_csv().strip().split("\r\n")
    assert lines[0] == "bound,value,realized,margin,passed,strict"
    assert len(lines) == len(rep.checks) + 1
    doc = json.loads(json.dumps(rep.to_dict()))
    assert doc["passed"] is True


def test_reduction_chain_independent_terms():
    inst = make_rbas(5, horizon=7)
    ds = collect(inst, 2, 1)
    for pi in (bc_fit(ds, 5, 2), tvail_lp(inst.mdp, target_of(inst, ds))[0]):
        rep = bound_audit(inst, ds, pi, "other")
        assert rep.by_name("reduction").passed


# ---------------------------------------------------------------- isolated theory

def test_worst_case_gap_equals_half_estimation_error_exactly():
    inst = make_isolated_absorbing(20, 10)
    for seed in range(10):
        ds = collect(inst, 5, seed)
        t = target_of(inst, ds)
        _, est = estimation_error(compute_occupancy(inst.mdp, inst.expert), t)
        gap = imitation_gap(inst, isolated_absorbing_solve(inst, t, "worst_case")).gap
        assert abs(gap - 0.5 * est) <= 1e-9


def test_uniform_tie_expectation_is_quarter_risk():
    S, H, N = 10, 3, 4
    inst = make_isolated_absorbing(S, H)
    gaps = []
    for seed in range(1000):
        t = target_of(inst, collect(inst, N, seed))
        pi = isolated_absorbing_solve(inst, t, "uniform_random", seed=seed + 10**6)
        gaps.append(imitation_gap(inst, pi).gap)
    gaps = np.array(gaps)
    analytic = 0.25 * H * expected_l1_risk(np.full(S, 1 / S), N)
    assert abs(gaps.mean() - analytic) <= 3 * gaps.std() / math.sqrt(len(gaps))


def test_quarter_formula_n1():
    assert 0.25 * 100 * expected_l1_risk(np.full(100, 0.01), 1) == pytest.approx(49.5)
