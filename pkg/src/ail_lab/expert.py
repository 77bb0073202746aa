"""Expert demonstrations with their empirical occupancies; l1-risk studies."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from .errors import StructuralError
from .mdp import OccupancyMeasure, Trajectory, sample_paths


@dataclass(frozen=True, eq=False)
class ExpertDataset:
    """N trajectories stored as an int array of shape (N, H, 2)."""

    paths: np.ndarray
    source_seed: int = 0

    def __post_init__(self):
        p = np.asarray(self.paths, dtype=np.int64)
        if p.ndim != 3 or p.shape[2] != 2 or p.shape[0] < 1 or p.shape[1] < 1:
            raise StructuralError("dataset must hold N >= 1 trajectories of (s, a) pairs")
        if np.any(p < 0):
            raise StructuralError("negative state or action index")
        object.__setattr__(self, "paths", p)

    @property
    def num_trajectories(self) -> int:
        return self.paths.shape[0]

    @property
    def horizon(self) -> int:
        return self.paths.shape[1]

    @property
    def trajectories(self) -> list[Trajectory]:
        return [Trajectory(p) for p in self.paths]

    @classmethod
    def from_trajectories(cls, trajs, seed: int = 0) -> "ExpertDataset":
        return cls(np.stack([np.asarray(getattr(t, "steps", t)) for t in trajs]), seed)

    def to_dict(self) -> dict:
        return {"horizon": self.horizon, "trajectories": self.paths.tolist(),
                "seed": self.source_seed}

    @classmethod
    def from_dict(cls, doc: dict) -> "ExpertDataset":
        try:
            paths = np.asarray(doc["trajectories"], dtype=np.int64)
        except (KeyError, ValueError) as exc:
            raise StructuralError(f"malformed dataset document: {exc}") from exc
        if paths.ndim != 3 or paths.shape[1] != int(doc.get("horizon", paths.shape[1])):
            raise StructuralError("trajectory lengths disagree with the horizon")
        return cls(paths, int(doc.get("seed", 0)))


def collect(inst, N: int, seed: int) -> ExpertDataset:
    """Roll out the instance's expert N times."""
    return ExpertDataset(sample_paths(inst.mdp, inst.expert, seed, N), seed)


def count_table(dataset: ExpertDataset, num_states: int, num_actions: int) -> np.ndarray:
    N, H, _ = dataset.paths.shape
    s, a = dataset.paths[..., 0], dataset.paths[..., 1]
    if s.max() >= num_states or a.max() >= num_actions:
        raise StructuralError("dataset indices exceed the state/action space")
    flat = (np.arange(H)[None, :] * num_states + s) * num_actions + a
    counts = np.bincount(flat.ravel(), minlength=H * num_states * num_actions)
    return counts.reshape(H, num_states, num_actions)


def estimate_occupancy(dataset: ExpertDataset, num_states: int,
                       num_actions: int) -> OccupancyMeasure:
    """Empirical per-step state-action frequencies."""
    counts = count_table(dataset, num_states, num_actions)
    return OccupancyMeasure(counts / dataset.num_trajectories)


def _dist(x):
    return x.dist if isinstance(x, OccupancyMeasure) else np.asarray(x, dtype=np.float64)


def estimation_error(true_occ, est) -> tuple[np.ndarray, float]:
    """Per-step l1 distances and their total."""
    a, b = _dist(true_occ), _dist(est)
    if a.shape != b.shape:
        raise StructuralError(f"occupancy shapes differ: {a.shape} vs {b.shape}")
    per_step = np.abs(a - b).reshape(a.shape[0], -1).sum(1)
    return per_step, math.fsum(per_step)


# ------------------------------------------------------------ risk studies

@dataclass
class MultinomialRiskReport:
    support_size: int
    sample_size: int
    replications: int
    mean_risk: float
    std_error: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def missing_mass_distribution(support: int) -> np.ndarray:
    """Atoms of mass 1/(|X|+1) plus one heavy atom holding the remainder."""
    q = np.full(support, 1.0 / (support + 1))
    q[-1] = 1.0 - (support - 1) / (support + 1)
    return q


def expected_l1_risk(q, N: int) -> float:
    """Exact E||Q - Q_hat||_1 for the empirical estimator with N samples."""
    q = np.asarray(q, dtype=np.float64)
    k = np.arange(N + 1)
    total = 0.0
    for qi in q:
        total += float(np.sum(binom.pmf(k, N, qi) * np.abs(k / N - qi)))
    return total


def l1_risk_study(support: int, N: int, distribution="missing_mass",
                  replications: int = 1000, seed: int = 0) -> MultinomialRiskReport:
    """Monte-Carlo estimate of the l1 risk of the empirical distribution."""
    if isinstance(distribution, str):
        if distribution == "missing_mass":
            q = missing_mass_distribution(support)
        elif distribution == "uniform":
            q = np.full(support, 1.0 / support)
        else:
            raise ValueError(f"unknown distribution {distribution!r}")
    else:
        q = np.asarray(distribution, dtype=np.float64)
        if q.shape != (support,):
            raise ValueError("distribution length must equal the support size")
    rng = np.random.default_rng(seed)
    risks = np.empty(replications)
    # chunk so memory stays bounded for large supports
    chunk = max(1, min(replications, 2_000_000 // max(support, 1)))
    for lo in range(0, replications, chunk):
        hi = min(replications, lo + chunk)
        counts = rng.multinomial(N, q, size=hi - lo)
        risks[lo:hi] = np.abs(counts / N - q).sum(1)
    mean = math.fsum(risks) / replications
    std = math.sqrt(math.fsum((risks - mean) ** 2) / max(replications - 1, 1))
    return MultinomialRiskReport(support, N, replications, mean,
                                 std / math.sqrt(replications))
