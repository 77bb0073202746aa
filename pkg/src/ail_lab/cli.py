"""Command-line interface.

Exit codes: 0 on success, 2 on configuration errors (including usage
errors), 3 when a reproduced table misses its tolerance.
"""

from __future__ import annotations

import argparse
import json
import sys

from .bench import ExperimentConfig, TABLE_IDS, reproduce_table, run_experiment, write_csv
from .errors import (AssumptionError, ConfigError, InvalidSpecError, SolverError,
                     StructuralError)
from .expert import ExpertDataset, collect, estimate_occupancy, l1_risk_study
from .instances import KINDS, InstanceSpec, LabeledInstance, make_instance
from .learners.config import LearnerConfig, run_learner
from .mdp import NonStationaryPolicy
from .theory import bound_audit, epsilon_of, imitation_gap

EXIT_OK, EXIT_CONFIG, EXIT_TOLERANCE = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None


def _emit(args, text: str):
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dump(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def _kv_csv(doc: dict) -> str:
    flat = {k: v for k, v in doc.items() if not isinstance(v, (list, dict))}
    return write_csv(list(flat), [list(flat.values())])


def _load_instance(path) -> LabeledInstance:
    return LabeledInstance.from_dict(_read_json(path))


def _load_policy(arg, inst) -> NonStationaryPolicy:
    if arg == "expert":
        return inst.expert
    return NonStationaryPolicy.from_dict(_read_json(arg))


# ---------------------------------------------------------------- commands

def cmd_gen_instance(args):
    doc = _read_json(args.config) if args.config else {}
    if args.kind:
        doc["kind"] = "fig2_example" if args.kind == "fig2" else args.kind
    for key in ("num_states", "num_actions", "horizon"):
        if getattr(args, key) is not None:
            doc[key] = getattr(args, key)
    if args.N is not None:
        doc.setdefault("params", {})["N"] = args.N
    if args.seed is not None:
        doc["rng_seed"] = args.seed
    if "kind" not in doc:
        raise ConfigError("gen-instance needs --kind or a config with 'kind'")
    if doc["kind"] == "fig2_example":
        doc.setdefault("horizon", 2)
    inst = make_instance(InstanceSpec.from_dict(doc))
    _emit(args, _dump(inst.to_dict()))


def cmd_collect(args):
    inst = _load_instance(args.mdp)
    ds = collect(inst, args.N, args.seed or 0)
    if args.format == "csv":
        rows = [[i, h, s, a] for i, p in enumerate(ds.paths) for h, (s, a) in enumerate(p)]
        _emit(args, write_csv(["trajectory", "step", "state", "action"], rows))
    else:
        _emit(args, _dump(ds.to_dict()))


def cmd_train(args):
    if not args.config:
        raise ConfigError("train needs --config")
    doc = _read_json(args.config)
    mdp_path = args.mdp or doc.pop("mdp", None)
    data_path = args.data or doc.pop("data", None)
    if not mdp_path or not data_path:
        raise ConfigError("train needs an instance (--mdp) and a dataset (--data)")
    config = LearnerConfig.from_dict(doc)
    inst = _load_instance(mdp_path)
    ds = ExpertDataset.from_dict(_read_json(data_path))
    res = run_learner(inst, ds, config, seed=args.seed)
    out = res.policy.to_dict()
    out["loss"] = res.loss
    _emit(args, _dump(out))
    if res.trace is not None and args.trace:
        with open(args.trace, "w", newline="") as fh:
            fh.write(res.trace.to_csv())


def cmd_eval(args):
    inst = _load_instance(args.mdp)
    rep = imitation_gap(inst, _load_policy(args.policy, inst)).to_dict()
    _emit(args, _kv_csv(rep) if args.format == "csv" else _dump(rep))


def cmd_reproduce(args):
    opts = _read_json(args.config) if args.config else {}
    seeds = args.seeds if args.seeds is not None else opts.get("num_seeds")
    iters = args.iterations if args.iterations is not None else opts.get("iterations")
    horizons = args.horizons or opts.get("horizons")
    report = reproduce_table(args.table, seeds, iters,
                             args.seed if args.seed is not None else opts.get("base_seed", 0),
                             horizons, record_timing=args.timing)
    _emit(args, report.to_csv() if args.format == "csv" else _dump(report.to_dict()))
    for c in report.comparisons:
        if not c.passed:
            print(f"{args.table} {c.series} N={c.N} H={c.H}: reproduced "
                  f"{c.reproduced:.4g}, reference {c.reference:.4g}, tolerance {c.tolerance:.3g}",
                  file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_TOLERANCE


def cmd_run(args):
    if not args.config:
        raise ConfigError("run needs --config")
    config = ExperimentConfig.from_dict(_read_json(args.config))
    if args.seeds is not None:
        config.num_seeds = args.seeds
    if args.seed is not None:
        config.base_seed = args.seed
    config.record_timing = args.timing
    res = run_experiment(config)
    _emit(args, res.aggregate_csv() if args.format == "csv" else _dump(res.to_dict()))


def cmd_risk_study(args):
    opts = _read_json(args.config) if args.config else {}
    support = args.support or opts.get("support")
    N = args.N or opts.get("N")
    if not support or not N:
        raise ConfigError("risk-study needs --support and --N")
    rep = l1_risk_study(int(support), int(N), args.distribution or opts.get(
        "distribution", "missing_mass"), args.replications or opts.get(
            "replications", 1000), args.seed if args.seed is not None else 0)
    doc = rep.to_dict()
    _emit(args, _kv_csv(doc) if args.format == "csv" else _dump(doc))


def cmd_audit(args):
    inst = _load_instance(args.mdp)
    ds = ExpertDataset.from_dict(_read_json(args.data))
    policy = _load_policy(args.policy, inst)
    eps = args.epsilon
    if eps is None and args.learner == "tvail":
        eps = epsilon_of(inst.mdp, policy, estimate_occupancy(
            ds, inst.mdp.num_states, inst.mdp.num_actions))
        # LP-level noise counts as exact
        eps = 0.0 if eps < 1e-7 else eps
    rep = bound_audit(inst, ds, policy, args.learner, eps)
    _emit(args, rep.to_csv() if args.format == "csv" else _dump(rep.to_dict()))


# ---------------------------------------------------------------- parser

def _common(parser, fmt="json"):
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help="base random seed")
    parser.add_argument("--out", help="output path (default: stdout)")
    parser.add_argument("--format", choices=("csv", "json"), default=fmt)
    return parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ail-lab", description="Tabular adversarial imitation lab.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = _common(sub.add_parser("gen-instance", help="build an instance"))
    g.add_argument("--kind", choices=KINDS + ("fig2",))
    g.add_argument("--num-states", dest="num_states", type=int)
    g.add_argument("--num-actions", dest="num_actions", type=int)
    g.add_argument("--horizon", type=int)
    g.add_argument("--N", type=int, help="dataset size for offline_lower_bound")
    g.set_defaults(fn=cmd_gen_instance)

    c = _common(sub.add_parser("collect", help="roll out the expert"))
    c.add_argument("--mdp", required=True)
    c.add_argument("--N", type=int, required=True)
    c.set_defaults(fn=cmd_collect)

    t = _common(sub.add_parser("train", help="fit one learner"))
    t.add_argument("--mdp")
    t.add_argument("--data")
    t.add_argument("--trace", help="write the game trace CSV here")
    t.set_defaults(fn=cmd_train)

    e = _common(sub.add_parser("eval", help="exact imitation gap"))
    e.add_argument("--mdp", required=True)
    e.add_argument("--policy", required=True, help="policy JSON or 'expert'")
    e.set_defaults(fn=cmd_eval)

    r = _common(sub.add_parser("reproduce", help="reproduce a table"), "csv")
    r.add_argument("table", choices=TABLE_IDS)
    r.add_argument("--seeds", type=int, help="seeds per cell (default 20)")
    r.add_argument("--iterations", type=int, help="game rounds (default by H)")
    r.add_argument("--horizons", type=int, nargs="+", help="restrict the H axis")
    r.add_argument("--timing", action="store_true",
                   help="record wall-clock times (output is then not byte-stable)")
    r.set_defaults(fn=cmd_reproduce)

    x = _common(sub.add_parser("run", help="run an experiment config"), "csv")
    x.add_argument("--seeds", type=int)
    x.add_argument("--timing", action="store_true")
    x.set_defaults(fn=cmd_run)

    k = _common(sub.add_parser("risk-study", help="l1 risk Monte Carlo"))
    k.add_argument("--support", type=int)
    k.add_argument("--N", type=int)
    k.add_argument("--distribution", choices=("missing_mass", "uniform"))
    k.add_argument("--replications", type=int)
    k.set_defaults(fn=cmd_risk_study)

    a = _common(sub.add_parser("audit-bounds", help="check the bounds"), "csv")
    a.add_argument("--mdp", required=True)
    a.add_argument("--data", required=True)
    a.add_argument("--policy", required=True)
    a.add_argument("--learner", choices=("tvail", "bc", "other"), default="tvail")
    a.add_argument("--epsilon", type=float,
                   help="optimization error (default: computed from the LP)")
    a.set_defaults(fn=cmd_audit)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        code = args.fn(args)
    except (ConfigError, InvalidSpecError, StructuralError, AssumptionError) as exc:
        print(f"ail-lab: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"ail-lab: solver failure: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"ail-lab: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
