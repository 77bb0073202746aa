"""Instance families: RBAS and isolated-absorbing MDPs plus small witnesses."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpecError
from .mdp import NonStationaryPolicy, TabularMDP

KINDS = ("rbas", "isolated_absorbing", "offline_lower_bound", "fig2_example",
         "nonconvex_witness")


@dataclass
class InstanceSpec:
    kind: str
    num_states: int = 20
    num_actions: int = 2
    horizon: int = 10
    rng_seed: int = 0
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "num_states": self.num_states,
                "num_actions": self.num_actions, "horizon": self.horizon,
                "rng_seed": self.rng_seed, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, doc: dict) -> "InstanceSpec":
        known = {"kind", "num_states", "num_actions", "horizon", "rng_seed",
                 "params"}
        extra = {k: v for k, v in doc.items() if k not in known}
        params = {**doc.get("params", {}), **extra}
        try:
            return cls(kind=doc["kind"],
                       num_states=int(doc.get("num_states", 20)),
                       num_actions=int(doc.get("num_actions", 2)),
                       horizon=int(doc.get("horizon", 10)),
                       rng_seed=int(doc.get("rng_seed", 0)), params=params)
        except KeyError as exc:
            raise InvalidSpecError("instance spec needs a 'kind'") from exc


@dataclass(frozen=True, eq=False)
class LabeledInstance:
    """An MDP with its deterministic expert and the good/bad labelling."""

    mdp: TabularMDP
    expert: NonStationaryPolicy
    kind: str
    good_states: tuple
    bad_states: tuple
    expert_action: int = 0

    @property
    def metadata(self) -> dict:
        return {"kind": self.kind, "good_states": list(self.good_states),
                "bad_states": list(self.bad_states),
                "expert_action": self.expert_action}

    def to_dict(self) -> dict:
        doc = self.mdp.to_dict()
        doc["metadata"] = self.metadata
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "LabeledInstance":
        mdp = TabularMDP.from_dict(doc)
        meta = doc.get("metadata") or {}
        S, H = mdp.num_states, mdp.horizon
        a1 = int(meta.get("expert_action", 0))
        good = tuple(int(s) for s in meta.get("good_states", range(S)))
        bad = tuple(int(s) for s in meta.get("bad_states", ()))
        expert = NonStationaryPolicy.deterministic(np.full((H, S), a1),
                                                   mdp.num_actions)
        return cls(mdp, expert, meta.get("kind", "custom"), good, bad, a1)

    def with_mdp(self, mdp: TabularMDP) -> "LabeledInstance":
        expert = NonStationaryPolicy.deterministic(
            np.full((mdp.horizon, mdp.num_states), self.expert_action),
            mdp.num_actions)
        return LabeledInstance(mdp, expert, self.kind, self.good_states,
                               self.bad_states, self.expert_action)


def _expert(H, S, A, a1=0):
    return NonStationaryPolicy.deterministic(np.full((H, S), a1), A)


def _reward(H, S, A, good, a1=0):
    r = np.zeros((H, S, A))
    r[:, list(good), a1] = 1.0
    return r


def make_rbas(num_states: int = 20, num_good: int | None = None,
              horizon: int = 10, num_actions: int = 2, rho=None,
              kernel="uniform", rng_seed: int = 0) -> LabeledInstance:
    """RBAS instance: good states first, then bad absorbing states.

    The expert action 0 moves between good states according to ``kernel``:
    ``"uniform"`` (the default), ``"random"`` (a seeded Dirichlet draw,
    one kernel shared by all steps) or an explicit (G, G) row-stochastic
    matrix with positive entries. Every other action on a good state jumps
    uniformly into the bad set, and bad states only reach bad states.
    """
    if num_good is None:
        num_good = num_states - 1
    G, S, A, H = num_good, num_states, num_actions, horizon
    if G < 1 or G >= S:
        raise InvalidSpecError("rbas needs at least one good and one bad state")
    if A < 2 or H < 1:
        raise InvalidSpecError("rbas needs |A| >= 2 and H >= 1")
    good, bad = range(G), range(G, S)
    if isinstance(kernel, str):
        if kernel == "uniform":
            Q = np.full((G, G), 1.0 / G)
        elif kernel == "random":
            Q = np.random.default_rng(rng_seed).dirichlet(np.ones(G), size=G)
        else:
            raise InvalidSpecError(f"unknown rbas kernel {kernel!r}")
    else:
        Q = np.asarray(kernel, dtype=np.float64)
        if Q.shape != (G, G) or np.any(Q <= 0):
            raise InvalidSpecError("explicit kernel must be a positive (G, G) matrix")
    P = np.zeros((S, A, S))
    P[:G, 0, :G] = Q
    P[:G, 1:, G:] = 1.0 / (S - G)
    for b in bad:
        P[b, :, b] = 1.0
    if rho is None:
        rho = np.zeros(S)
        rho[:G] = 1.0 / G
    rho = np.asarray(rho, dtype=np.float64)
    if rho.shape != (S,) or np.any(rho[G:] != 0):
        raise InvalidSpecError("rbas initial distribution must live on good states")
    mdp = TabularMDP(P, _reward(H, S, A, good), rho)
    return LabeledInstance(mdp, _expert(H, S, A), "rbas", tuple(good), tuple(bad))


def make_fig2_example(horizon: int = 2) -> LabeledInstance:
    """Two good states, one bad state, uniform resets among good states."""
    inst = make_rbas(3, 2, horizon)
    return LabeledInstance(inst.mdp, inst.expert, "fig2_example",
                           inst.good_states, inst.bad_states)


def make_isolated_absorbing(num_states: int = 2, horizon: int = 1,
                            num_actions: int = 2, rho=None) -> LabeledInstance:
    """Every state is absorbing under every action; reward 1 only for a1."""
    S, A, H = num_states, num_actions, horizon
    if A < 2:
        raise InvalidSpecError("isolated_absorbing needs |A| >= 2")
    if S < 1 or H < 1:
        raise InvalidSpecError("isolated_absorbing needs |S|, H >= 1")
    P = np.zeros((S, A, S))
    P[np.arange(S), :, np.arange(S)] = 1.0
    rho = np.full(S, 1.0 / S) if rho is None else np.asarray(rho, dtype=np.float64)
    mdp = TabularMDP(P, _reward(H, S, A, range(S)), rho)
    return LabeledInstance(mdp, _expert(H, S, A), "isolated_absorbing",
                           tuple(range(S)), ())


def offline_lower_bound_rho(num_states: int, N: int) -> np.ndarray:
    S = num_states
    if S < 3 or N < 1:
        raise InvalidSpecError("offline lower bound needs |S| >= 3 and N >= 1")
    last = 1.0 - (S - 2) / (N + 1)
    if last < 0:
        raise InvalidSpecError(
            f"N={N} is too small for |S|={S}: the last good state's mass is negative")
    rho = np.zeros(S)
    rho[: S - 2] = 1.0 / (N + 1)
    rho[S - 2] = last
    return rho


def make_offline_lower_bound(num_states: int, horizon: int, N: int,
                             num_actions: int = 2) -> LabeledInstance:
    """RBAS instance whose expert action resets according to rho."""
    rho = offline_lower_bound_rho(num_states, N)
    G = num_states - 1
    Q = np.tile(rho[:G], (G, 1))
    inst = _rbas_with_rows(num_states, G, horizon, num_actions, rho, Q)
    return LabeledInstance(inst.mdp, inst.expert, "offline_lower_bound",
                           inst.good_states, inst.bad_states)


def _rbas_with_rows(S, G, H, A, rho, Q):
    # like make_rbas but allows zero entries in the reset kernel
    P = np.zeros((S, A, S))
    P[:G, 0, :G] = Q
    P[:G, 1:, G:] = 1.0 / (S - G)
    for b in range(G, S):
        P[b, :, b] = 1.0
    mdp = TabularMDP(P, _reward(H, S, A, range(G)), rho)
    return LabeledInstance(mdp, _expert(H, S, A), "rbas", tuple(range(G)),
                           tuple(range(G, S)))


def make_nonconvex_witness() -> LabeledInstance:
    """Five-state deterministic MDP with H=2 on which the loss is non-convex.

    Action 0 ("green") is the expert action. From s1, green leads to s2 and
    blue to s3; from s2, green leads to s4 and blue to s5. The three states
    reached at step 2 are absorbing. The only expert trajectory is (s1, green) -> (s2, green).
    """
    S, A, H = 5, 2, 2
    P = np.zeros((S, A, S))
    P[0, 0, 1] = P[0, 1, 2] = 1.0
    P[1, 0, 3] = P[1, 1, 4] = 1.0
    for s in (2, 3, 4):
        P[s, :, s] = 1.0
    rho = np.array([1.0, 0, 0, 0, 0])
    good = (0, 1, 3)
    mdp = TabularMDP(P, _reward(H, S, A, good), rho)
    return LabeledInstance(mdp, _expert(H, S, A), "nonconvex_witness", good,
                           (2, 4))


def nonconvex_witness_target() -> np.ndarray:
    d = np.zeros((2, 5, 2))
    d[0, 0, 0] = 1.0
    d[1, 1, 0] = 1.0
    return d


def nonconvex_policy(x: float, y: float) -> NonStationaryPolicy:
    """Policy with pi_1(green|s1) = x and pi_2(green|s2) = y (else uniform)."""
    p = np.full((2, 5, 2), 0.5)
    p[0, 0] = (x, 1 - x)
    p[1, 1] = (y, 1 - y)
    return NonStationaryPolicy(p)


def make_instance(spec: InstanceSpec) -> LabeledInstance:
    p = spec.params
    if spec.kind == "rbas":
        return make_rbas(spec.num_states, p.get("num_good"), spec.horizon,
                         spec.num_actions, p.get("rho"),
                         p.get("kernel", "uniform"), spec.rng_seed)
    if spec.kind == "isolated_absorbing":
        return make_isolated_absorbing(spec.num_states, spec.horizon,
                                       spec.num_actions, p.get("rho"))
    if spec.kind == "offline_lower_bound":
        if "N" not in p:
            raise InvalidSpecError("offline_lower_bound needs params.N")
        return make_offline_lower_bound(spec.num_states, spec.horizon,
                                        int(p["N"]), spec.num_actions)
    if spec.kind == "fig2_example":
        return make_fig2_example(spec.horizon)
    if spec.kind == "nonconvex_witness":
        return make_nonconvex_witness()
    raise InvalidSpecError(f"unknown instance kind {spec.kind!r}")


# ---------------------------------------------------------------- validation

@dataclass
class CheckResult:
    passed: bool
    witness: tuple | None = None

    def to_dict(self):
        return {"passed": self.passed,
                "witness": None if self.witness is None else list(self.witness)}


@dataclass
class AssumptionReport:
    rbas: dict
    isolated: dict

    def holds(self, which: str) -> bool:
        checks = {"rbas": self.rbas, "isolated": self.isolated}[which]
        return all(c.passed for c in checks.values())

    def to_dict(self):
        return {k: {n: c.to_dict() for n, c in getattr(self, k).items()}
                for k in ("rbas", "isolated")}


def _first(mask):
    idx = np.argwhere(mask)
    if len(idx) == 0:
        return CheckResult(True)
    return CheckResult(False, tuple(int(i) for i in idx[0]))


def _on_steps(mdp, mask):
    """First violation of a per-kernel mask (K, ...) reported with a step."""
    idx = np.argwhere(mask)
    if len(idx) == 0:
        return CheckResult(True)
    k, *rest = (int(i) for i in idx[0])
    h = int(np.flatnonzero(mdp.step_kernel == k)[0])
    return CheckResult(False, (h, *rest))


def validate_assumptions(inst: LabeledInstance) -> AssumptionReport:
    """Check both structural assumptions bullet by bullet.

    Witnesses are 0-indexed ``(h, s, a, s')`` tuples, or shorter tuples for
    bullets that do not involve a successor state.
    """
    mdp = inst.mdp
    H, S, A = mdp.shape
    used = np.unique(mdp.step_kernel)
    P = np.zeros_like(mdp.transition)
    P[used] = mdp.transition[used]
    unused = np.setdiff1d(np.arange(P.shape[0]), used)
    r = mdp.reward
    a1 = inst.expert_action
    good = np.zeros(S, bool)
    good[list(inst.good_states)] = True
    bad = np.zeros(S, bool)
    bad[list(inst.bad_states)] = True

    partition = _first(good == bad)
    if not good.any():
        partition = CheckResult(False, ())

    want_r = np.zeros_like(r)
    want_r[:, good, a1] = 1.0
    reward = _first(r != want_r)

    reach = (P[:, :, a1, :] <= 0) & good[None, :, None] & good[None, None, :]
    reach[unused] = False
    reachability = _on_steps(mdp, reach)
    if not reachability.passed:
        h, s, s2 = reachability.witness
        reachability = CheckResult(False, (h, s, a1, s2))

    other = np.ones(A, bool)
    other[a1] = False
    leak = ((P > 0) & good[None, :, None, None] & other[None, None, :, None]
            & good[None, None, None, :])
    nonexpert = _on_steps(mdp, leak)

    stay = P[:, bad][..., bad].sum(-1)
    absorb = np.abs(stay - 1.0) > 1e-12
    absorb[unused] = False
    bad_absorbing = _on_steps(mdp, absorb)
    if not bad_absorbing.passed:
        h, i, a = bad_absorbing.witness
        bad_absorbing = CheckResult(False, (h, int(np.flatnonzero(bad)[i]), a))

    rbas = {"partition": partition, "reward": reward,
            "reachability": reachability, "non_expert_to_bad": nonexpert,
            "bad_absorbing": bad_absorbing}

    loops = P[:, np.arange(S), :, np.arange(S)].transpose(1, 0, 2)  # (K, S, A)
    not_loop = loops != 1.0
    not_loop[unused] = False
    iso_want = np.zeros_like(r)
    iso_want[:, :, a1] = 1.0
    isolated = {"absorbing": _on_steps(mdp, not_loop),
                "reward": _first(r != iso_want)}
    return AssumptionReport(rbas, isolated)
