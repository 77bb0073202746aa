"""Closed-form optimal set of l1 matching on isolated-absorbing instances."""

from __future__ import annotations

import numpy as np

from ..errors import AssumptionError, ConfigError
from ..instances import LabeledInstance, validate_assumptions
from ..mdp import NonStationaryPolicy, OccupancyMeasure

TIE_RULES = ("uniform_random", "worst_case", "best_case")


def optimal_interval(inst: LabeledInstance, target):
    """Bounds ``[lo, 1]`` on pi_h(a1|s) that characterize every optimum.

    Since state marginals never move on these instances, each (h, s) is an
    independent one-dimensional problem: any a1 mass between d_hat/rho and 1
    is optimal on states the data under-covers, and only 1 is optimal on
    the others.
    """
    d_hat = target.dist if isinstance(target, OccupancyMeasure) else np.asarray(target)
    rho = inst.mdp.initial_dist
    cover = d_hat.sum(-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = np.where(rho > 0, cover / np.where(rho > 0, rho, 1.0), 1.0)
    return np.minimum(lo, 1.0)


def isolated_absorbing_solve(inst: LabeledInstance, target,
                             tie_rule: str = "uniform_random",
                             seed: int = 0) -> NonStationaryPolicy:
    if not validate_assumptions(inst).holds("isolated"):
        raise AssumptionError("instance is not isolated-absorbing")
    if tie_rule not in TIE_RULES:
        raise ConfigError(f"unknown tie rule {tie_rule!r}")
    lo = optimal_interval(inst, target)
    if tie_rule == "worst_case":
        p1 = lo
    elif tie_rule == "best_case":
        p1 = np.ones_like(lo)
    else:
        u = np.random.default_rng(seed).random(lo.shape)
        p1 = lo + u * (1.0 - lo)
    H, S, A = inst.mdp.shape
    a1 = inst.expert_action
    probs = np.repeat(((1.0 - p1) / (A - 1))[..., None], A, axis=-1)
    probs[..., a1] = p1
    return NonStationaryPolicy(probs)
