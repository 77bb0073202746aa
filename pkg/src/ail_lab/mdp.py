"""Finite-horizon tabular MDPs, policies, occupancies and rollouts."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _kernels as K
from .errors import StructuralError

PROB_TOL = 1e-12
OCC_TOL = 1e-9


def _as_float(x, name):
    arr = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    if not np.all(np.isfinite(arr)):
        raise StructuralError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class TabularMDP:
    """Episodic MDP ``(S, A, P, r, H, rho)``.

    ``transition`` holds K distinct kernels of shape (K, S, A, S) and
    ``step_kernel[h]`` names the kernel used at step h. Passing a dense
    (H, S, A, S) array leaves ``step_kernel`` as the identity map; passing a
    single (S, A, S) kernel makes the dynamics stationary. Sharing kernels
    keeps long-horizon instances small.
    """

    transition: np.ndarray
    reward: np.ndarray
    initial_dist: np.ndarray
    step_kernel: np.ndarray | None = None

    def __post_init__(self):
        P = _as_float(self.transition, "transition")
        r = _as_float(self.reward, "reward")
        rho = _as_float(self.initial_dist, "initial_dist")
        if r.ndim != 3:
            raise StructuralError("reward must have shape (H, S, A)")
        H, S, A = r.shape
        if P.ndim == 3:
            P = P[None]
            step = np.zeros(H, dtype=np.int64)
        elif P.ndim == 4:
            step = (np.arange(H, dtype=np.int64) if self.step_kernel is None
                    else np.asarray(self.step_kernel, dtype=np.int64))
        else:
            raise StructuralError("transition must be 3- or 4-dimensional")
        if P.shape[1:] != (S, A, S):
            raise StructuralError(
                f"transition shape {P.shape} does not match reward {r.shape}")
        if step.shape != (H,) or step.min() < 0 or step.max() >= P.shape[0]:
            raise StructuralError("step_kernel must map each step to a kernel")
        if rho.shape != (S,):
            raise StructuralError("initial_dist must have length |S|")
        if np.any(P < 0) or np.any(np.abs(P.sum(-1) - 1.0) > PROB_TOL):
            raise StructuralError("transition rows must be distributions")
        if np.any(rho < 0) or abs(rho.sum() - 1.0) > PROB_TOL:
            raise StructuralError("initial_dist must be a distribution")
        if np.any(r < 0) or np.any(r > 1):
            raise StructuralError("rewards must lie in [0, 1]")
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "initial_dist", rho)
        object.__setattr__(self, "step_kernel", step)

    @property
    def num_states(self) -> int:
        return self.reward.shape[1]

    @property
    def num_actions(self) -> int:
        return self.reward.shape[2]

    @property
    def horizon(self) -> int:
        return self.reward.shape[0]

    @property
    def shape(self):
        return self.reward.shape

    def kernel(self, h: int) -> np.ndarray:
        """Transition kernel P_h as an (S, A, S) array (0-indexed step)."""
        return self.transition[self.step_kernel[h]]

    def dense_transition(self) -> np.ndarray:
        return self.transition[self.step_kernel]

    @cached_property
    def dynamics(self):
        """Kernel tuple consumed by the numba routines (distinct rows or CSR)."""
        P = self.transition
        Kn, S, A, _ = P.shape
        flat = P.reshape(-1, S)
        nz = flat > 0
        uniq = [np.unique(P[k].reshape(S * A, S), axis=0, return_inverse=True)
                for k in range(Kn)]
        width = max(u.shape[0] for u, _ in uniq)
        # distinct rows win whenever they cost no more than the sparse rows
        if width * S <= nz.sum() / Kn or (S <= 64 and nz.mean() >= 0.25):
            U = np.zeros((Kn, width, S))
            rowmap = np.zeros((Kn, S * A), dtype=np.int64)
            for k, (u, inv) in enumerate(uniq):
                U[k, : u.shape[0]] = u
                rowmap[k] = inv.ravel()
            empty = np.zeros(1, dtype=np.int64)
            return (True, U, rowmap, empty, empty, np.zeros(1))
        indptr = np.zeros(flat.shape[0] + 1, dtype=np.int64)
        np.cumsum(nz.sum(1), out=indptr[1:])
        rows, cols = np.nonzero(nz)
        return (False, np.zeros((Kn, S * A, 0)), np.zeros((1, 1), dtype=np.int64),
                indptr, cols.astype(np.int64), flat[rows, cols].copy())

    def to_dict(self) -> dict:
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "horizon": self.horizon,
            "rho": self.initial_dist.tolist(),
            "transition": self.dense_transition().tolist(),
            "reward": self.reward.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TabularMDP":
        try:
            P = np.asarray(doc["transition"], dtype=np.float64)
            r = np.asarray(doc["reward"], dtype=np.float64)
            rho = np.asarray(doc["rho"], dtype=np.float64)
            dims = (int(doc["horizon"]), int(doc["num_states"]),
                    int(doc["num_actions"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise StructuralError(f"malformed MDP document: {exc}") from exc
        if r.shape != dims or P.shape != dims + (dims[1],):
            raise StructuralError("declared dimensions disagree with arrays")
        # collapse repeated kernels so long horizons stay compact
        uniq, step = _dedupe_kernels(P)
        return cls(uniq, r, rho, step)


def _dedupe_kernels(P):
    kernels, step, seen = [], [], {}
    for h in range(P.shape[0]):
        key = P[h].tobytes()
        if key not in seen:
            seen[key] = len(kernels)
            kernels.append(P[h])
        step.append(seen[key])
    return np.stack(kernels), np.asarray(step, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class NonStationaryPolicy:
    """Per-step action distributions ``probs[h, s, a] = pi_h(a|s)``."""

    probs: np.ndarray

    def __post_init__(self):
        p = _as_float(self.probs, "probs")
        if p.ndim != 3:
            raise StructuralError("policy probs must have shape (H, S, A)")
        if np.any(p < 0) or np.any(np.abs(p.sum(-1) - 1.0) > PROB_TOL):
            raise StructuralError("policy rows must be distributions")
        object.__setattr__(self, "probs", p)

    @classmethod
    def deterministic(cls, actions, num_actions: int) -> "NonStationaryPolicy":
        actions = np.asarray(actions, dtype=np.int64)
        probs = np.zeros(actions.shape + (num_actions,))
        np.put_along_axis(probs, actions[..., None], 1.0, axis=-1)
        return cls(probs)

    @classmethod
    def uniform(cls, H, S, A) -> "NonStationaryPolicy":
        return cls(np.full((H, S, A), 1.0 / A))

    @property
    def horizon(self) -> int:
        return self.probs.shape[0]

    def is_deterministic(self) -> bool:
        return bool(np.all((self.probs == 0) | (self.probs == 1)))

    def to_dict(self) -> dict:
        return {"probs": self.probs.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "NonStationaryPolicy":
        return cls(np.asarray(doc["probs"], dtype=np.float64))


@dataclass(frozen=True, eq=False)
class OccupancyMeasure:
    """State-action distributions ``dist[h, s, a] = d_h(s, a)``."""

    dist: np.ndarray

    def __post_init__(self):
        d = _as_float(self.dist, "dist")
        if d.ndim != 3:
            raise StructuralError("occupancy must have shape (H, S, A)")
        if np.any(d < -OCC_TOL) or np.any(
                np.abs(d.sum(axis=(1, 2)) - 1.0) > OCC_TOL):
            raise StructuralError("each occupancy step must be a distribution")
        object.__setattr__(self, "dist", d)

    @property
    def state_marginal(self) -> np.ndarray:
        return self.dist.sum(-1)

    def to_policy(self) -> NonStationaryPolicy:
        """Normalize per state; zero-mass states get the uniform policy."""
        return NonStationaryPolicy(policy_from_occupancy(self.dist))


def policy_from_occupancy(d: np.ndarray) -> np.ndarray:
    mass = d.sum(-1, keepdims=True)
    A = d.shape[-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(mass > 0, d / np.where(mass > 0, mass, 1.0), 1.0 / A)
    p = np.clip(p, 0.0, None)
    return p / p.sum(-1, keepdims=True)


@dataclass(frozen=True)
class Trajectory:
    """One episode as an (H, 2) array of (state, action) pairs."""

    steps: np.ndarray

    def __len__(self):
        return len(self.steps)


def _check(mdp: TabularMDP, policy: NonStationaryPolicy):
    if policy.probs.shape != mdp.shape:
        raise StructuralError(
            f"policy shape {policy.probs.shape} does not match MDP {mdp.shape}")


def compute_occupancy(mdp: TabularMDP, policy: NonStationaryPolicy) -> OccupancyMeasure:
    """Exact occupancies by the forward Bellman-flow recursion."""
    _check(mdp, policy)
    d = K.occupancy(mdp.dynamics, mdp.step_kernel, mdp.initial_dist,
                    policy.probs)
    return OccupancyMeasure(d)


def occupancy_value(mdp: TabularMDP, occ) -> float:
    d = occ.dist if isinstance(occ, OccupancyMeasure) else occ
    return float(np.sum(d * mdp.reward))


def policy_value(mdp: TabularMDP, policy: NonStationaryPolicy) -> float:
    """Value through the dual form ``sum_h <d_h, r_h>``."""
    return occupancy_value(mdp, compute_occupancy(mdp, policy))


def sample_paths(mdp: TabularMDP, policy: NonStationaryPolicy, rng_seed: int,
                 n: int) -> np.ndarray:
    """Vectorized rollouts; returns an int array of shape (n, H, 2)."""
    _check(mdp, policy)
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(rng_seed)
    H = mdp.horizon
    out = np.empty((n, H, 2), dtype=np.int64)
    s = _draw(rng, np.broadcast_to(mdp.initial_dist, (n, mdp.num_states)))
    for h in range(H):
        a = _draw(rng, policy.probs[h, s])
        out[:, h, 0] = s
        out[:, h, 1] = a
        if h + 1 < H:
            s = _draw(rng, mdp.kernel(h)[s, a])
    return out


def _draw(rng, rows):
    cdf = np.cumsum(rows, axis=-1)
    u = rng.random(rows.shape[0]) * cdf[:, -1]
    idx = (cdf <= u[:, None]).sum(-1)
    # guard against landing on a trailing zero-probability column
    return np.minimum(idx, rows.shape[1] - 1)


def rollout(mdp: TabularMDP, policy: NonStationaryPolicy, rng_seed: int,
            n: int) -> list[Trajectory]:
    return [Trajectory(p) for p in sample_paths(mdp, policy, rng_seed, n)]


def best_response(mdp: TabularMDP, reward_override=None, tie_break: str = "lowest",
                  seed: int = 0) -> NonStationaryPolicy:
    """Deterministic optimal policy by backward induction.

    Ties go to the smallest action index unless ``tie_break="random"``, which
    picks uniformly among maximizers with a seeded generator.
    """
    R = mdp.reward if reward_override is None else _as_float(reward_override,
                                                             "reward_override")
    if R.shape != mdp.shape:
        raise StructuralError("reward_override must have shape (H, S, A)")
    mode = {"lowest": K.TIE_LOWEST, "random": K.TIE_RANDOM}[tie_break]
    act, _, _ = K.value_iteration(mdp.dynamics, mdp.step_kernel, R, mode,
                                  np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    return NonStationaryPolicy.deterministic(act, mdp.num_actions)


def optimal_value(mdp: TabularMDP, reward_override=None) -> float:
    R = mdp.reward if reward_override is None else np.asarray(reward_override,
                                                              dtype=np.float64)
    _, V, _ = K.value_iteration(mdp.dynamics, mdp.step_kernel,
                                np.ascontiguousarray(R), K.TIE_LOWEST,
                                np.uint64(0))
    return float(V @ mdp.initial_dist)


def save_json(doc: dict, path) -> None:
    Path(path).write_text(json.dumps(doc))


def load_json(path) -> dict:
    return json.loads(Path(path).read_text())
