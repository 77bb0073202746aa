"""Behavioral cloning by per-step empirical conditionals."""

import numpy as np

from ..expert import ExpertDataset, count_table
from ..mdp import NonStationaryPolicy


def bc_fit(dataset: ExpertDataset, num_states: int, num_actions: int) -> NonStationaryPolicy:
    """Empirical conditional on visited states, uniform on unvisited ones."""
    counts = count_table(dataset, num_states, num_actions).astype(np.float64)
    visits = counts.sum(-1, keepdims=True)
    probs = np.where(visits > 0, counts / np.maximum(visits, 1.0), 1.0 / num_actions)
    return NonStationaryPolicy(probs)


def override_last_step(policy: NonStationaryPolicy,
                       replacement: NonStationaryPolicy) -> NonStationaryPolicy:
    """Copy of ``policy`` whose final step is taken from ``replacement``."""
    probs = policy.probs.copy()
    probs[-1] = replacement.probs[-1]
    return NonStationaryPolicy(probs)
