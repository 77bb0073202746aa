"""Learner configuration blocks and a single dispatch entry point."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from ..errors import ConfigError
from ..expert import ExpertDataset, estimate_occupancy
from ..instances import LabeledInstance
from .bc import bc_fit, override_last_step
from .closed_form import TIE_RULES, isolated_absorbing_solve
from .game import GameTrace, matching_loss, tvail_ogd, variant_game
from .lp import tvail_lp

ALGOS = ("bc", "tvail_ogd", "tvail_lp", "fem", "gtal", "gail", "iso_closed_form",
         "expert")


@dataclass
class LearnerConfig:
    algo: str
    T: int | None = None
    step_rule: str = "adaptive"
    step_const: float | None = None
    seed: int = 0
    tie_rule: str = "uniform_random"
    bc_last_step: bool = False
    name: str | None = None

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ConfigError(f"unknown algo {self.algo!r}; expected one of {ALGOS}")
        if self.step_rule not in ("adaptive", "constant"):
            raise ConfigError(f"unknown step_rule {self.step_rule!r}")
        if self.tie_rule not in TIE_RULES:
            raise ConfigError(f"unknown tie_rule {self.tie_rule!r}")
        if self.T is not None and int(self.T) < 1:
            raise ConfigError("T must be positive")

    @property
    def label(self) -> str:
        return self.name or self.algo

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "LearnerConfig":
        if not isinstance(doc, dict) or "algo" not in doc:
            raise ConfigError("learner config needs an 'algo' field")
        fields = set(cls.__dataclass_fields__)
        unknown = set(doc) - fields
        if unknown:
            raise ConfigError(f"unknown learner config fields: {sorted(unknown)}")
        return cls(**doc)


@dataclass
class LearnerResult:
    policy: object
    loss: float
    trace: GameTrace | None = None


def run_learner(inst: LabeledInstance, dataset: ExpertDataset,
                config: LearnerConfig, seed: int | None = None) -> LearnerResult:
    """Fit one learner; ``seed`` overrides the config's seed when given."""
    mdp = inst.mdp
    H, S, A = mdp.shape
    if dataset.horizon != H:
        raise ConfigError("dataset horizon differs from the instance horizon")
    seed = config.seed if seed is None else seed
    target = estimate_occupancy(dataset, S, A)
    trace = None
    algo = config.algo
    if algo == "bc":
        policy = bc_fit(dataset, S, A)
    elif algo == "expert":
        policy = inst.expert
    elif algo == "tvail_ogd":
        policy, trace = tvail_ogd(mdp, target, config.T, config.step_rule, seed,
                                  config.step_const)
    elif algo in ("fem", "gtal", "gail"):
        policy, trace = variant_game(mdp, target, algo, config.T, seed,
                                     config.step_rule, config.step_const)
    elif algo == "tvail_lp":
        policy, _ = tvail_lp(mdp, target)
    else:
        policy = isolated_absorbing_solve(inst, target, config.tie_rule, seed)
    if config.bc_last_step:
        policy = override_last_step(policy, bc_fit(dataset, S, A))
    return LearnerResult(policy, matching_loss(mdp, policy, target), trace)
