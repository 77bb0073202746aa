"""Tabular laboratory for adversarial imitation learning."""

from .errors import (AssumptionError, ConfigError, InvalidSpecError, SolverError,
                     StructuralError)
from .mdp import (NonStationaryPolicy, OccupancyMeasure, TabularMDP, Trajectory,
                  best_response, compute_occupancy, policy_value, rollout)
from .theory import bound_audit, c_coefficient, epsilon_of, imitation_gap
from .bench import ExperimentConfig, reproduce_table, run_experiment

__version__ = "0.1.0"
