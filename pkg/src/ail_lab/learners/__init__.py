"""Imitation learners: BC, game-based and exact occupancy matching."""

from .bc import bc_fit, override_last_step
from .closed_form import isolated_absorbing_solve, optimal_interval
from .config import LearnerConfig, LearnerResult, run_learner
from .game import (GameTrace, adaptive_step, default_iterations, matching_loss,
                   occupancy_loss, tvail_ogd, variant_game)
from .lp import lp_optimum, solve_matching_lp, tvail_lp
from .simplex import simplex

__all__ = [
    "GameTrace", "LearnerConfig", "LearnerResult", "adaptive_step", "bc_fit",
    "default_iterations", "isolated_absorbing_solve", "lp_optimum",
    "matching_loss", "occupancy_loss", "optimal_interval", "override_last_step",
    "run_learner", "simplex", "solve_matching_lp", "tvail_lp", "tvail_ogd",
    "variant_game",
]
