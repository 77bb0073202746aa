"""Experiment harness: seeded cells, a worker pool, aggregation and tables.

A cell is one (N, H) pair of an experiment. Every seed of a cell draws one
expert dataset that all learners of the experiment share, so learners are
compared on identical data. Seeds derive from the base seed as
``base_seed ^ splitmix(cell << 32 | i)``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import _kernels as K
from .errors import ConfigError
from .expert import collect, estimate_occupancy, estimation_error, expected_l1_risk
from .instances import InstanceSpec, make_instance
from .learners.config import LearnerConfig, run_learner
from .learners.lp import lp_optimum
from .mdp import compute_occupancy
from .theory import bound_audit, c_coefficient, epsilon_of, imitation_gap

RAW_COLUMNS = ("instance", "learner", "N", "H", "seed", "gap", "loss", "est_error",
               "wall_ms")
METRICS = ("eps_over_c", "audit")
_GAME_ALGOS = ("tvail_ogd", "fem", "gtal", "gail")
_MASK64 = (1 << 64) - 1


def derive_seed(base_seed: int, cell: int, i: int) -> int:
    _, z = K.splitmix_next(np.uint64(((cell << 32) | i) & _MASK64))
    return (int(base_seed) ^ int(z)) & 0x7FFFFFFFFFFFFFFF


def fmt(x) -> str:
    """RFC-4180 cell text with 6 significant digits for floats."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "nan" if math.isnan(x) else f"{float(x):.6g}"
    return str(x)


def write_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def worker_count() -> int:
    raw = os.environ.get("AIL_LAB_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"AIL_LAB_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ConfigError("AIL_LAB_THREADS must be non-negative")
    return n


# ---------------------------------------------------------------- config

@dataclass
class ExperimentConfig:
    instance: InstanceSpec
    N: list
    H: list
    learners: list
    num_seeds: int = 20
    base_seed: int = 0
    output: str | None = None
    metrics: list = field(default_factory=list)
    record_timing: bool = True
    name: str = "experiment"

    def __post_init__(self):
        if int(self.num_seeds) < 1:
            raise ConfigError("num_seeds must be at least 1")
        for key in ("N", "H", "learners"):
            if not getattr(self, key):
                raise ConfigError(f"{key} must be a nonempty list")
        if any(int(n) < 1 for n in self.N) or any(int(h) < 1 for h in self.H):
            raise ConfigError("N and H entries must be positive")
        bad = set(self.metrics) - set(METRICS)
        if bad:
            raise ConfigError(f"unknown metrics {sorted(bad)}")

    def to_dict(self) -> dict:
        return {"name": self.name, "instance": self.instance.to_dict(),
                "N": list(self.N), "H": list(self.H),
                "learners": [lc.to_dict() for lc in self.learners],
                "num_seeds": self.num_seeds, "base_seed": self.base_seed,
                "output": self.output, "metrics": list(self.metrics),
                "record_timing": self.record_timing}

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("experiment config must be a JSON object")
        try:
            learners = [lc if isinstance(lc, LearnerConfig) else LearnerConfig.from_dict(lc)
                        for lc in doc["learners"]]
            return cls(instance=InstanceSpec.from_dict(doc["instance"]),
                       N=[int(n) for n in doc["N"]], H=[int(h) for h in doc["H"]],
                       learners=learners, num_seeds=int(doc.get("num_seeds", 20)),
                       base_seed=int(doc.get("base_seed", 0)),
                       output=doc.get("output"), metrics=list(doc.get("metrics", [])),
                       record_timing=bool(doc.get("record_timing", True)),
                       name=str(doc.get("name", "experiment")))
        except KeyError as exc:
            raise ConfigError(f"experiment config is missing {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed experiment config: {exc}") from None


# ---------------------------------------------------------------- results

@dataclass
class RawResult:
    cell: int
    seed_index: int
    instance: str
    learner: str
    N: int
    H: int
    seed: int
    gap: float
    loss: float
    est_error: float
    wall_ms: float
    extras: dict = field(default_factory=dict)
    error: str | None = None

    def row(self, metrics) -> list:
        base = [self.instance, self.learner, self.N, self.H, self.seed, self.gap,
                self.loss, self.est_error, self.wall_ms]
        return base + [self.extras.get(m, float("nan")) for m in metrics] + [
            self.error or ""]


@dataclass
class AggregateRow:
    instance: str
    learner: str
    N: int
    H: int
    mean_gap: float
    std_gap: float
    mean_est_error: float
    mean_wall_ms: float
    num_seeds: int
    extras: dict = field(default_factory=dict)
    errors: int = 0

    HEADER = ("instance", "learner", "N", "H", "mean_gap", "std_gap",
              "mean_est_error", "mean_wall_ms", "num_seeds", "errors")

    def row(self, metrics) -> list:
        return [self.instance, self.learner, self.N, self.H, self.mean_gap,
                self.std_gap, self.mean_est_error, self.mean_wall_ms,
                self.num_seeds, self.errors] + [
                    self.extras.get(m, float("nan")) for m in metrics]

    def to_dict(self) -> dict:
        d = dict(zip(self.HEADER, self.row([])))
        d.update(self.extras)
        return d


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    raw: list
    rows: list

    def raw_csv(self) -> str:
        m = list(self.config.metrics)
        return write_csv(list(RAW_COLUMNS) + m + ["error"],
                         [r.row(m) for r in self.raw])

    def aggregate_csv(self) -> str:
        m = list(self.config.metrics)
        return write_csv(list(AggregateRow.HEADER) + [f"mean_{x}" for x in m],
                         [r.row(m) for r in self.rows])

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(),
                "aggregate": [r.to_dict() for r in self.rows],
                "raw": [dict(zip(RAW_COLUMNS, r.row([])[:9]), **r.extras,
                             error=r.error) for r in self.raw]}

    def row(self, learner: str, N: int, H: int) -> AggregateRow:
        for r in self.rows:
            if (r.learner, r.N, r.H) == (learner, N, H):
                return r
        raise KeyError((learner, N, H))

    def save(self, path: str) -> None:
        """Write ``<path>`` (aggregate CSV), ``<stem>.raw.csv`` and ``<stem>.json``."""
        stem = path[:-4] if path.endswith(".csv") else path
        with open(stem + ".csv", "w", newline="") as fh:
            fh.write(self.aggregate_csv())
        with open(stem + ".raw.csv", "w", newline="") as fh:
            fh.write(self.raw_csv())
        with open(stem + ".json", "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True,
                      default=_json_default)


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(type(x))


# ---------------------------------------------------------------- running

def _cells(config):
    return [(h, n) for h in config.H for n in config.N]


def _spec_for(config, H, N):
    spec = InstanceSpec.from_dict(config.instance.to_dict())
    spec.horizon = int(H)
    if spec.kind == "offline_lower_bound":
        spec.params = {**spec.params, "N": int(N)}
    return spec


def _unit(config, cell, i, H, N):
    """All learners on one seed of one cell."""
    seed = derive_seed(config.base_seed, cell, i)
    spec = _spec_for(config, H, N)
    inst = make_instance(spec)
    ds = collect(inst, N, seed)
    target = estimate_occupancy(ds, inst.mdp.num_states, inst.mdp.num_actions)
    dE = compute_occupancy(inst.mdp, inst.expert)
    _, est = estimation_error(dE, target)
    opt = None
    out = []
    for lc in config.learners:
        t0 = time.perf_counter()
        res = RawResult(cell, i, spec.kind, lc.label, N, H, seed, float("nan"),
                        float("nan"), est, 0.0)
        try:
            fit = run_learner(inst, ds, lc, seed=seed)
            res.gap = imitation_gap(inst, fit.policy).gap
            res.loss = fit.loss
            if config.record_timing:
                res.wall_ms = (time.perf_counter() - t0) * 1e3
            if config.metrics:
                eps = 0.0
                if lc.algo in _GAME_ALGOS:
                    if opt is None:
                        opt = lp_optimum(inst.mdp, target)
                    eps = epsilon_of(inst.mdp, fit.policy, target, opt)
                c = None
                if "eps_over_c" in config.metrics:
                    # c only scales the optimization error, so skip it when there is none
                    if eps > 0:
                        c = c_coefficient(inst, fit.policy)
                    res.extras["eps_over_c"] = (0.0 if c is None else
                                                eps / c if c > 0 else math.inf)
                if "audit" in config.metrics:
                    kind = ("tvail" if lc.algo in ("tvail_ogd", "tvail_lp")
                            or (lc.algo == "iso_closed_form"
                                and lc.tie_rule == "worst_case") else
                            "bc" if lc.algo == "bc" else "other")
                    rep = bound_audit(inst, ds, fit.policy, kind, eps, c)
                    res.extras["audit"] = float(rep.passed)
        except Exception as exc:  # recorded per cell; other cells go on
            res.error = f"{type(exc).__name__}: {exc}"
        out.append(res)
    return out


def run_experiment(config: ExperimentConfig, threads: int | None = None) -> ExperimentResult:
    """Run every (cell, seed) unit and aggregate per (learner, N, H)."""
    units = [(c, i, h, n) for c, (h, n) in enumerate(_cells(config))
             for i in range(config.num_seeds)]
    workers = worker_count() if threads is None else threads
    if workers <= 1 or len(units) == 1:
        chunks = [_unit(config, *u) for u in units]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(lambda u: _unit(config, *u), units))
    order = {lc.label: k for k, lc in enumerate(config.learners)}
    raw = sorted((r for ch in chunks for r in ch),
                 key=lambda r: (r.cell, order[r.learner], r.seed_index))
    rows = aggregate(raw, config.metrics)
    result = ExperimentResult(config, raw, rows)
    if config.output:
        result.save(config.output)
    return result


def aggregate(raw, metrics=()) -> list:
    groups = {}
    for r in raw:
        groups.setdefault((r.cell, r.learner), []).append(r)
    rows = []
    for (_, learner), rs in groups.items():
        ok = [r for r in rs if r.error is None]
        gaps = np.array([r.gap for r in ok])
        nan = float("nan")
        extras = {m: float(np.mean([r.extras[m] for r in ok])) if ok else nan
                  for m in metrics}
        rows.append(AggregateRow(
            rs[0].instance, learner, rs[0].N, rs[0].H,
            float(gaps.mean()) if ok else nan, float(gaps.std()) if ok else nan,
            float(np.mean([r.est_error for r in rs])),
            float(np.mean([r.wall_ms for r in ok])) if ok else nan,
            len(ok), extras, len(rs) - len(ok)))
    return rows


# ---------------------------------------------------------------- tables

TABLE_IDS = ("t3", "t4", "t7", "t8", "t9", "t10", "t11", "t12")


def reference_tables() -> dict:
    text = resources.files("ail_lab").joinpath("data/reference_tables.json").read_text()
    return json.loads(text)["tables"]


@dataclass
class Comparison:
    series: str
    N: int
    H: int
    reference: float
    reference_std: float
    reproduced: float
    tolerance: float

    @property
    def diff(self) -> float:
        return abs(self.reproduced - self.reference)

    @property
    def passed(self) -> bool:
        return bool(self.diff <= self.tolerance)

    def to_dict(self) -> dict:
        return {"series": self.series, "N": self.N, "H": self.H, "reference": self.reference,
                "reference_std": self.reference_std, "reproduced": self.reproduced,
                "diff": self.diff, "tolerance": self.tolerance, "passed": self.passed}


@dataclass
class TableReport:
    table_id: str
    comparisons: list
    experiment: ExperimentResult | None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.comparisons)

    def series(self, name) -> list:
        return [c for c in self.comparisons if c.series == name]

    def to_csv(self) -> str:
        """Wide layout: one ``reference`` and one ``reproduced`` row per series."""
        names = list(dict.fromkeys(c.series for c in self.comparisons))
        first = self.series(names[0])
        cols = [f"N={c.N};H={c.H}" for c in first]
        rows = []
        for name in names:
            tag = "" if len(names) == 1 else f"/{name}"
            cs = self.series(name)
            rows.append([f"reference{tag}"] + [c.reference for c in cs])
            rows.append([f"reproduced{tag}"] + [c.reproduced for c in cs])
        return write_csv(["row"] + cols, rows)

    def to_dict(self) -> dict:
        return {"table": self.table_id, "passed": self.passed,
                "comparisons": [c.to_dict() for c in self.comparisons],
                "aggregate": ([r.to_dict() for r in self.experiment.rows]
                              if self.experiment else [])}


def _learner_for(series, iterations):
    if series == "iso_closed_form":
        return LearnerConfig("iso_closed_form", tie_rule="uniform_random")
    if series in _GAME_ALGOS:
        return LearnerConfig(series, T=iterations)
    return LearnerConfig(series)


def table_experiment(table_id: str, num_seeds: int | None = None,
                     iterations: int | None = None, base_seed: int = 0,
                     horizons=None, record_timing: bool = True) -> ExperimentConfig:
    """Experiment config behind one table; ``horizons`` restricts the H axis."""
    spec = _table(table_id)
    learners, metrics = [], []
    for name in spec["series"]:
        if name == "analytic":
            continue
        if name == "est_error":
            learners.append(LearnerConfig("expert"))
        elif name == "eps_over_c":
            learners.append(LearnerConfig("tvail_ogd", T=iterations))
            metrics.append("eps_over_c")
        else:
            learners.append(_learner_for(name, iterations))
    if spec.get("analytic"):
        num_seeds = 1 if num_seeds is None else num_seeds
    H = [h for h in spec["H"] if horizons is None or h in horizons]
    if not H:
        raise ConfigError("no horizon of the table survives the filter")
    return ExperimentConfig(InstanceSpec.from_dict(spec["instance"]), list(spec["N"]),
                            H, learners, 20 if num_seeds is None else num_seeds,
                            base_seed, None, metrics, record_timing, table_id)


def _table(table_id):
    tables = reference_tables()
    if table_id not in tables:
        raise ConfigError(f"unknown table {table_id!r}; expected one of {TABLE_IDS}")
    return tables[table_id]


def analytic_isolated_gap(num_states: int, N: int, H: int) -> float:
    """Expected uniform-tie gap on the isolated instance with uniform rho."""
    rho = np.full(num_states, 1.0 / num_states)
    return 0.25 * H * expected_l1_risk(rho, N)


def reproduce_table(table_id: str, num_seeds: int | None = None,
                    iterations: int | None = None, base_seed: int = 0,
                    horizons=None, threads: int | None = None,
                    record_timing: bool = True) -> TableReport:
    spec = _table(table_id)
    config = table_experiment(table_id, num_seeds, iterations, base_seed, horizons,
                              record_timing)
    result = run_experiment(config, threads)
    comps = []
    for name, vals in spec["series"].items():
        for k, (h, n) in enumerate((h, n) for h in spec["H"] for n in spec["N"]):
            if h not in config.H:
                continue
            if name == "analytic":
                got = analytic_isolated_gap(spec["instance"]["num_states"], n, h)
            elif name == "est_error":
                got = result.row("expert", n, h).mean_est_error
            elif name == "eps_over_c":
                got = result.row("tvail_ogd", n, h).extras["eps_over_c"]
            else:
                got = result.row(name, n, h).mean_gap
            comps.append(Comparison(name, n, h, vals["mean"][k], vals["std"][k],
                                    got, vals["tol"][k]))
    return TableReport(table_id, comps, result)
