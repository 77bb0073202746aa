"""Imitation gaps, optimization error, the c coefficient and bound audits."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels as K
from .errors import AssumptionError, SolverError
from .expert import ExpertDataset, estimate_occupancy, estimation_error
from .instances import LabeledInstance, validate_assumptions
from .learners.game import occupancy_loss
from .learners.lp import lp_optimum
from .mdp import NonStationaryPolicy, OccupancyMeasure, compute_occupancy

BOUND_TOL = 1e-9


@dataclass
class GapReport:
    expert_value: float
    learner_value: float
    gap: float
    per_step: np.ndarray

    def to_dict(self):
        d = asdict(self)
        d["per_step"] = self.per_step.tolist()
        return d


def imitation_gap(inst: LabeledInstance, policy: NonStationaryPolicy) -> GapReport:
    """Exact ``V(expert) - V(policy)`` with its per-step decomposition."""
    r = inst.mdp.reward
    ve = (compute_occupancy(inst.mdp, inst.expert).dist * r).sum(axis=(1, 2))
    vl = (compute_occupancy(inst.mdp, policy).dist * r).sum(axis=(1, 2))
    return GapReport(math.fsum(ve), math.fsum(vl), math.fsum(ve - vl), ve - vl)


def _target(target):
    return target.dist if isinstance(target, OccupancyMeasure) else np.asarray(target)


def epsilon_of(mdp, policy: NonStationaryPolicy, target, optimum: float | None = None,
               backend: str = "auto") -> float:
    """Optimization error of ``policy`` for l1 matching, clamped at zero."""
    if optimum is None:
        optimum = lp_optimum(mdp, target, backend)
    eps = occupancy_loss(compute_occupancy(mdp, policy), target, "tv") - optimum
    if eps < -1e-6 * max(1.0, abs(optimum)):
        raise SolverError(f"policy beats the LP optimum by {-eps:.3g}")
    return max(eps, 0.0)


def _good_mask(inst):
    g = np.zeros(inst.mdp.num_states, bool)
    g[list(inst.good_states)] = True
    return g


def check_candidate_set(inst: LabeledInstance, policy: NonStationaryPolicy) -> None:
    """Every step must put positive expert-action mass on some good state."""
    good = list(inst.good_states)
    if not inst.bad_states:
        raise AssumptionError("the c coefficient needs an RBAS labelling")
    mass = policy.probs[:, good, inst.expert_action]
    bad_steps = np.flatnonzero(~(mass > 0).any(1))
    if len(bad_steps):
        raise AssumptionError(
            f"policy never plays the expert action on good states at step {bad_steps[0]}")


def c_coefficient(inst: LabeledInstance, policy: NonStationaryPolicy) -> float:
    """Minimum over l < h and good s, s' of P(s_h = s | s_l = s', a_l = a1).

    Bad states never lead back to good ones, so the chain is propagated on
    the good block only. Rows that repeat within a kernel are propagated once.
    """
    check_candidate_set(inst, policy)
    mdp = inst.mdp
    H = mdp.horizon
    if H < 2:
        raise AssumptionError("the c coefficient needs H >= 2")
    good = np.flatnonzero(_good_mask(inst))
    a1 = inst.expert_action
    # policy-induced good-to-good transitions at each step
    Pg = mdp.transition[:, good][:, :, :, good]  # (K, G, A, G)
    M = np.einsum("hga,hgaq->hgq", policy.probs[:, good, :], Pg[mdp.step_kernel])
    starts = {}
    for k in np.unique(mdp.step_kernel[: H - 1]):
        starts[k] = np.unique(Pg[k, :, a1, :], axis=0)
    best = np.inf
    for ell in range(H - 1):
        rows = starts[mdp.step_kernel[ell]]
        chain = np.ascontiguousarray(M[ell + 1 : H - 1])
        best = min(best, K.reach_min_from_rows(np.ascontiguousarray(rows), chain))
    return float(best)


def _last_step_terms(inst, policy, target, d_pi):
    good = np.flatnonzero(_good_mask(inst))
    a1 = inst.expert_action
    dE = compute_occupancy(inst.mdp, inst.expert).dist[-1].sum(-1)[good]
    dh = _target(target)[-1].sum(-1)[good]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(dE > 0, dh / np.where(dE > 0, dE, 1.0), 1.0)
    cap = np.minimum(1.0, ratio)
    p = policy.probs[-1, good, a1]
    in_set = p <= cap
    return float(np.sum((d_pi[-1].sum(-1)[good] * (cap - p))[in_set]))


def approx_condition_lhs(inst: LabeledInstance, policy: NonStationaryPolicy, target,
                         c: float | None = None) -> float:
    """Left side of the approximate optimality condition for RBAS instances."""
    if c is None:
        c = c_coefficient(inst, policy)
    H = inst.mdp.horizon
    good = np.flatnonzero(_good_mask(inst))
    a1 = inst.expert_action
    d = compute_occupancy(inst.mdp, policy).dist
    ds = d.sum(-1)[:, good]
    off = (ds * (1.0 - policy.probs[:, good, a1])).sum(1)
    weights = np.arange(H - 1, -1, -1, dtype=np.float64)
    first = math.fsum(weights * off)
    return c * (first + _last_step_terms(inst, policy, target, d))


@dataclass
class ApproxOptReport:
    epsilon: float
    c_coeff: float
    lhs: float
    ratio: float

    def to_dict(self):
        return asdict(self)


def approx_opt_report(inst: LabeledInstance, policy: NonStationaryPolicy, target,
                      optimum: float | None = None) -> ApproxOptReport:
    eps = epsilon_of(inst.mdp, policy, target, optimum)
    c = c_coefficient(inst, policy)
    lhs = approx_condition_lhs(inst, policy, target, c)
    return ApproxOptReport(eps, c, lhs, eps / c if c > 0 else math.inf)


# ------------------------------------------------------------ bound audit

@dataclass
class BoundCheck:
    name: str
    bound: float
    realized: float
    strict: bool = True

    @property
    def margin(self) -> float:
        return self.bound - self.realized

    @property
    def passed(self) -> bool:
        return self.realized <= self.bound + BOUND_TOL * max(1.0, abs(self.bound))

    def to_dict(self):
        return {"name": self.name, "bound": self.bound, "realized": self.realized,
                "margin": self.margin, "passed": self.passed, "strict": self.strict}


@dataclass
class AuditReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.strict)

    def by_name(self, name) -> BoundCheck:
        return next(c for c in self.checks if c.name == name)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["bound", "value", "realized", "margin", "passed", "strict"])
        for c in self.checks:
            w.writerow([c.name, f"{c.bound:.6g}", f"{c.realized:.6g}",
                        f"{c.margin:.6g}", int(c.passed), int(c.strict)])
        return buf.getvalue()

    def to_dict(self):
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}


def bound_audit(inst: LabeledInstance, dataset: ExpertDataset,
                policy: NonStationaryPolicy, learner: str = "tvail",
                epsilon: float | None = None, c: float | None = None) -> AuditReport:
    """Evaluate every bound that applies to (instance, dataset, policy).

    ``learner`` selects the learner-specific bounds: ``"tvail"`` for exact
    or approximate l1 matching outputs, ``"bc"`` for behavioral cloning and
    anything else for the learner-agnostic ones only. ``epsilon`` is the
    optimization error of an approximate matching output (0 means exact).
    """
    mdp = inst.mdp
    H, S, A = mdp.shape
    N = dataset.num_trajectories
    d_hat = estimate_occupancy(dataset, S, A).dist
    dE = compute_occupancy(mdp, inst.expert).dist
    d = compute_occupancy(mdp, policy).dist
    gap = imitation_gap(inst, policy).gap
    _, est = estimation_error(dE, d_hat)
    loss = occupancy_loss(d, d_hat, "tv")
    checks = [BoundCheck("horizon_cap", float(H), abs(gap)),
              BoundCheck("reduction", est + loss, abs(gap))]
    report = validate_assumptions(inst)
    if learner == "tvail":
        eps = 0.0 if epsilon is None else float(epsilon)
        # an eps-optimal matcher loses at most est + eps against the expert
        checks.append(BoundCheck("worst_case", min(float(H), 2 * est + eps), gap))
        if report.holds("rbas") and H >= 2:
            last = np.abs(dE[-1] - d_hat[-1]).sum()
            cap = min(1.0, 2 * last)
            if eps == 0.0:
                checks.append(BoundCheck("horizon_free", cap, gap))
                expect = min(1.0, 2 * math.sqrt((S - 1) / N))
                checks.append(BoundCheck("horizon_free_expected", expect, gap,
                                         strict=False))
            else:
                cc = c_coefficient(inst, policy) if c is None else c
                ratio = eps / cc if cc > 0 else math.inf
                checks.append(BoundCheck("approx_horizon_free", cap + 8 * ratio, gap))
                checks.append(BoundCheck("approx_horizon_free_proof",
                                         cap + 4 * ratio, gap, strict=False))
        if report.holds("isolated") and eps == 0.0:
            checks.append(BoundCheck("isolated_worst_case", 0.5 * est, gap))
    elif learner == "bc":
        checks.append(BoundCheck("bc_rate", min(float(H), S * H * H / N), abs(gap),
                                 strict=False))
    return AuditReport(checks)
