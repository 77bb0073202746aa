"""Occupancy matching as a game between a discriminator and a policy.

The policy player best-responds exactly by value iteration on the reward
``-c``; the discriminator runs online gradient descent on
``f_t(c) = sum c * (target - d_t)`` over its dual set. The returned policy
is the one whose occupancy is the average of the iterates' occupancies.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .. import _kernels as K
from ..errors import ConfigError
from ..mdp import (NonStationaryPolicy, OccupancyMeasure, TabularMDP,
                   compute_occupancy, policy_from_occupancy)

DIVERGENCES = {"tv": K.DIV_L1, "l1": K.DIV_L1, "l2": K.DIV_L2, "fem": K.DIV_L2,
               "linf": K.DIV_LINF, "gtal": K.DIV_LINF, "js": K.DIV_JS,
               "gail": K.DIV_JS}

# divergence -> (dual set, loss)
_VARIANTS = {"tv": (K.DUAL_BOX, K.DIV_L1), "fem": (K.DUAL_L2, K.DIV_L2),
             "gtal": (K.DUAL_L1, K.DIV_LINF), "gail": (K.DUAL_LOGIT, K.DIV_JS)}

GAIL_STEP = 0.1


def _target(target) -> np.ndarray:
    d = target.dist if isinstance(target, OccupancyMeasure) else np.asarray(target)
    return np.ascontiguousarray(d, dtype=np.float64)


def occupancy_loss(d, target, divergence: str = "tv") -> float:
    """Sum over steps of the per-step divergence between two occupancies."""
    try:
        kind = DIVERGENCES[divergence]
    except KeyError:
        raise ConfigError(f"unknown divergence {divergence!r}") from None
    return float(K.total_divergence(_target(d), _target(target), kind))


def matching_loss(mdp: TabularMDP, policy: NonStationaryPolicy, target,
                  divergence: str = "tv") -> float:
    return occupancy_loss(compute_occupancy(mdp, policy), target, divergence)


def adaptive_step(grad_norms, D: float) -> float:
    """``D / sqrt(sum ||g_i||^2)``; falls back to D while all gradients vanish."""
    g = np.asarray(grad_norms, dtype=np.float64)
    if g.size == 0:
        raise ValueError("at least one gradient is required")
    tot = float(np.sum(g * g))
    return D / math.sqrt(tot) if tot > 0 else D


def default_iterations(horizon: int) -> int:
    """Iteration budget used when a config leaves T unset."""
    return max(2000, 10 * horizon)


@dataclass
class GameTrace:
    loss: np.ndarray
    f_value: np.ndarray
    eta: np.ndarray
    grad_norm: np.ndarray
    mean_occupancy: np.ndarray
    discriminator: np.ndarray
    variant: str = "tv"

    @property
    def T(self) -> int:
        return len(self.loss)

    def best_fixed_value(self, target) -> float:
        """``min_c sum_t f_t(c)`` over the dual set, in closed form."""
        diff = (_target(target) - self.mean_occupancy).reshape(len(self.mean_occupancy), -1)
        if self.variant == "tv":
            dual = np.abs(diff).sum(1)
        elif self.variant == "fem":
            dual = np.sqrt((diff ** 2).sum(1))
        elif self.variant == "gtal":
            dual = np.abs(diff).max(1)
        else:
            raise ValueError("regret is defined for the linear games only")
        return -self.T * float(dual.sum())

    def regret(self, target) -> float:
        return float(np.sum(self.f_value)) - self.best_fixed_value(target)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["iter", "loss", "f_value", "eta"])
        for t in range(self.T):
            w.writerow([t + 1, f"{self.loss[t]:.6g}", f"{self.f_value[t]:.6g}",
                        f"{self.eta[t]:.6g}"])
        return buf.getvalue()


def _solve(mdp, target, variant, T, step_rule, step_const, seed, tie_break):
    d_hat = _target(target)
    if d_hat.shape != mdp.shape:
        raise ConfigError("target shape does not match the MDP")
    if T is None:
        T = default_iterations(mdp.horizon)
    if T < 1:
        raise ConfigError("T must be positive")
    if step_rule not in ("adaptive", "constant"):
        raise ConfigError(f"unknown step rule {step_rule!r}")
    if tie_break not in ("random", "lowest"):
        raise ConfigError(f"unknown tie rule {tie_break!r}")
    H, S, A = mdp.shape
    dual, div = _VARIANTS[variant]
    # sqrt(2) times the l2 radius of the dual set, as in the box rule
    D = math.sqrt(2 * H * S * A) if variant == "tv" else math.sqrt(2 * H)
    if step_const is None:
        step_const = D / (2 * math.sqrt(H) * math.sqrt(T))
    mode = K.TIE_RANDOM if tie_break == "random" else K.TIE_LOWEST
    dbar, losses, fvals, etas, gnorms, c = K.game(
        mdp.dynamics, mdp.step_kernel, mdp.initial_dist, d_hat, int(T),
        dual, div, step_rule == "adaptive", float(step_const), D, mode,
        np.uint64(seed & 0xFFFFFFFFFFFFFFFF), GAIL_STEP)
    policy = NonStationaryPolicy(policy_from_occupancy(dbar))
    return policy, GameTrace(losses, fvals, etas, gnorms, dbar, c, variant)


def tvail_ogd(mdp: TabularMDP, target, T: int | None = None,
              step_rule: str = "adaptive", seed: int = 0,
              step_const: float | None = None, tie_break: str = "random"):
    """Approximate the l1 matching optimum with the OGD game.

    With ``T=None`` the budget comes from :func:`default_iterations`.
    ``tie_break`` controls how the inner value iteration resolves exactly
    tied actions; ``"random"`` draws uniformly among maximizers from a
    generator seeded by ``seed``.
    """
    return _solve(mdp, target, "tv", T, step_rule, step_const, seed, tie_break)


def variant_game(mdp: TabularMDP, target, divergence: str, T: int | None = None,
                 seed: int = 0, step_rule: str = "adaptive",
                 step_const: float | None = None, tie_break: str = "random"):
    """FEM (l2 balls), GTAL (l1 balls) or GAIL (logistic logits) game."""
    if divergence not in ("fem", "gtal", "gail"):
        raise ConfigError(f"unknown variant {divergence!r}")
    return _solve(mdp, target, divergence, T, step_rule, step_const, seed,
                  tie_break)
