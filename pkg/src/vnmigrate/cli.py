"""Command-line front end: ``vnmigrate {gen-net,gen-trace,simulate,opt}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import harness
from .config import DEFAULT_OPT_BUDGET, ConfigError, ExperimentConfig
from .offline import opt_schedule, opt_table, schedule_csv
from .policies import stat_center
from .substrate import (
    CONNECT_MODES,
    DEFAULT_BANDWIDTHS,
    T1_MBPS,
    access_cost_matrix,
    compose_pip_ring,
    derive_cost_parameters,
    generate_erdos_renyi,
    import_rocketfuel_weights,
    migration_cost_table,
    parse_network,
    serialize_network,
)
from .workload import gen_commuter, gen_time_zones, parse_trace, serialize_trace

log = logging.getLogger("vnmigrate")


class CliError(Exception):
    pass


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _latency(text: str):
    if text == "unit":
        return "unit"
    vals = _floats(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError("latency must be 'unit' or 'lo,hi'")
    return tuple(vals)


def _emit(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen_net(args) -> None:
    if args.rocketfuel:
        net = import_rocketfuel_weights(Path(args.rocketfuel).read_text(), args.bandwidths,
                                        seed=args.seed)
    else:
        if args.n is None and args.n_per_pip is None:
            raise CliError("gen-net needs --n (or --n-per-pip)")
        per_pip = args.n_per_pip
        if per_pip is None:
            if args.n % args.pips:
                raise CliError(f"--n {args.n} is not divisible by --pips {args.pips}")
            per_pip = args.n // args.pips
        seeds = np.random.SeedSequence(args.seed).generate_state(args.pips + 1, np.uint64)
        subnets = [generate_erdos_renyi(per_pip, args.p, args.bandwidths, args.latency,
                                        seed=int(seeds[k]), connect=args.connect)
                   for k in range(args.pips)]
        net = compose_pip_ring(subnets, args.inter_bw, args.inter_latency, int(seeds[-1]))
    path = Path(args.out) / args.file
    write_atomic(path, serialize_network(net))
    inter = sum(net.nodes[e.u].pip_id != net.nodes[e.v].pip_id for e in net.edges)
    _emit(args, f"wrote {path}: nodes={net.n} edges={len(net.edges)} "
                f"pips={len(net.pips)} inter_pip_edges={inter}")


def cmd_gen_trace(args) -> None:
    net = parse_network(Path(args.net).read_text())
    acc = access_cost_matrix(net, args.metric)
    if args.scenario == "time-zones":
        rpr = args.requests if args.requests is not None else max(1, round(net.n / 5))
        trace = gen_time_zones(net, args.rounds, args.p_hot, args.lam, rpr, args.seed)
    else:
        center = stat_center(net, acc) if args.center is None else args.center
        trace = gen_commuter(net, args.T, args.lam, args.rounds, center, args.seed, acc=acc)
    path = Path(args.out) / args.file
    write_atomic(path, serialize_trace(trace))
    _emit(args, f"wrote {path}: rounds={len(trace)} requests={trace.total_requests}")


def cmd_opt(args) -> None:
    net = parse_network(Path(args.net).read_text())
    trace = parse_trace(Path(args.trace).read_text())
    trace.validate_against(net)
    work = harness.opt_work(net.n, trace.total_requests)
    if work > args.budget:
        raise CliError(f"OPT needs n^2*sum|sigma| = {work} steps, above the budget of {args.budget}")
    cm = derive_cost_parameters(net, args.server_size, args.pi_over_beta, args.metric,
                                args.path_mode)
    acc = access_cost_matrix(net, cm.access_metric)
    mig = migration_cost_table(net, cm)
    v0 = stat_center(net, acc) if args.v0 is None else args.v0
    sched = opt_schedule(opt_table(net, trace, v0, acc, cm, mig))
    path = Path(args.out) / args.file
    write_atomic(path, schedule_csv(sched))
    _emit(args, f"wrote {path}: v0={v0} total={sched.total_cost!r} "
                f"access={sched.access_total!r} migration={sched.migration_total!r}")


PLOT_KINDS = {
    "ratio_vs_n.dat": lambda cfg: cfg.n * cfg.pips,
    "ratio_vs_lambda.dat": lambda cfg: cfg.lam,
    "ratio_vs_pi_over_beta.dat": lambda cfg: cfg.pi_over_beta,
}


def _plot_files(results) -> dict[str, str]:
    """Whitespace-column files, one row per experiment, one column per policy."""
    policies = list(results[0].config.policies)
    files = {}
    for name, xof in PLOT_KINDS.items():
        lines = ["# x " + " ".join(f"{p}_mean_ratio" for p in policies)]
        for res in results:
            cells = [res.aggregates[p].mean_ratio for p in policies]
            lines.append(" ".join([repr(xof(res.config))] +
                                  ["nan" if c is None else repr(c) for c in cells]))
        files[name] = "\n".join(lines) + "\n"
    # mean cumulative cost per round of the last experiment
    res = results[-1]
    lines = ["# round " + " ".join(policies)]
    curves = {}
    for p in policies:
        mine = [r.ledger.records for r in res.runs if r.policy == p]
        per_round = np.array([[rec.access_cost + rec.migration_cost for rec in recs] for recs in mine])
        curves[p] = np.cumsum(per_round, axis=1).mean(axis=0)
    for t in range(res.config.rounds):
        lines.append(" ".join([str(t)] + [repr(float(curves[p][t])) for p in policies]))
    files["cost_vs_round.dat"] = "\n".join(lines) + "\n"
    return files


def _write_experiment(out: Path, cfg: ExperimentConfig, res) -> None:
    write_atomic(out / "config.json", cfg.to_json())
    write_atomic(out / "per_round.csv", harness.per_round_csv(res))
    write_atomic(out / "summary.csv", harness.summary_csv(res))
    write_atomic(out / "aggregate.csv", harness.aggregate_csv(res))


def _parse_sweep(text: str):
    key, sep, values = text.partition("=")
    if not sep or not values:
        raise CliError(f"--sweep expects KEY=v1,v2,..., got {text!r}")
    try:
        vals = [json.loads(v) for v in values.split(",")]
    except json.JSONDecodeError:
        raise CliError(f"--sweep values must be JSON scalars: {values!r}") from None
    return key, vals


def cmd_simulate(args) -> None:
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg = cfg.replace(base_seed=args.seed)
    out = Path(args.out or cfg.output_dir or "results")
    variants = [(out, cfg)]
    if args.sweep:
        key, vals = _parse_sweep(args.sweep)
        variants = [(out / f"{key}={v}", ExperimentConfig.from_dict({**cfg.to_dict(), key: v}))
                    for v in vals]
    results = []
    for where, vcfg in variants:
        try:
            res = harness.run_experiment(vcfg, skip_opt=args.skip_opt)
        except harness.BudgetExceeded as exc:
            raise CliError(f"{exc} (use --skip-opt to run without OPT)") from None
        _write_experiment(where, vcfg, res)
        results.append(res)
        for agg in res.aggregates.values():
            ratio = "n/a" if agg.mean_ratio is None else f"{agg.mean_ratio:.4f}"
            _emit(args, f"{where}: {agg.policy:5s} mean_total={agg.mean_total:.4f} "
                        f"mean_ratio={ratio} unbounded={agg.unbounded_count}")
    if args.sweep:
        write_atomic(out / "config.json", cfg.to_json())
    if args.plot_data:
        for name, text in _plot_files(results).items():
            write_atomic(out / name, text)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="64-bit seed")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--quiet", action="store_true")

    ap = argparse.ArgumentParser(prog="vnmigrate",
                                 description="Online service migration on substrate networks.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-net", parents=[common], help="generate a substrate network")
    g.add_argument("--n", type=int, help="node count (total, split over --pips)")
    g.add_argument("--n-per-pip", type=int)
    g.add_argument("--p", type=float, default=0.01, help="edge probability")
    g.add_argument("--pips", type=int, default=1)
    g.add_argument("--bandwidths", type=_floats, default=list(DEFAULT_BANDWIDTHS))
    g.add_argument("--latency", type=_latency, default="unit", help="'unit' or 'lo,hi'")
    g.add_argument("--inter-bw", type=float, default=T1_MBPS)
    g.add_argument("--inter-latency", type=float, default=1.0)
    g.add_argument("--connect", choices=CONNECT_MODES, default="auto")
    g.add_argument("--rocketfuel", metavar="WEIGHTS", help="import a Rocketfuel weights file")
    g.add_argument("--file", default="network.txt")
    g.set_defaults(func=cmd_gen_net)

    t = sub.add_parser("gen-trace", parents=[common], help="generate a request trace")
    t.add_argument("--net", required=True)
    t.add_argument("--scenario", choices=("time-zones", "commuter"), required=True)
    t.add_argument("--rounds", type=int, default=200)
    t.add_argument("--p-hot", type=float, default=60.0)
    t.add_argument("--lam", type=float, default=10.0)
    t.add_argument("--requests", type=int, default=None, help="requests per round (default n/5)")
    t.add_argument("--T", type=int, default=4)
    t.add_argument("--center", type=int, default=None)
    t.add_argument("--metric", choices=("hops", "latency"), default="hops")
    t.add_argument("--file", default="trace.txt")
    t.set_defaults(func=cmd_gen_trace)

    s = sub.add_parser("simulate", parents=[common], help="run an experiment config")
    s.add_argument("config")
    s.add_argument("--plot-data", action="store_true")
    s.add_argument("--skip-opt", action="store_true")
    s.add_argument("--sweep", metavar="KEY=V1,V2,...")
    s.set_defaults(func=cmd_simulate)

    o = sub.add_parser("opt", parents=[common], help="compute the offline optimum")
    o.add_argument("--net", required=True)
    o.add_argument("--trace", required=True)
    o.add_argument("--v0", type=int, default=None)
    o.add_argument("--server-size", type=float, default=2048 * 8.0)
    o.add_argument("--pi-over-beta", type=float, default=3.0)
    o.add_argument("--metric", choices=("hops", "latency"), default="hops")
    o.add_argument("--path-mode", choices=("optimal", "shortest_latency"), default="optimal")
    o.add_argument("--budget", type=int, default=DEFAULT_OPT_BUDGET)
    o.add_argument("--file", default="schedule.csv")
    o.set_defaults(func=cmd_opt)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command != "simulate":
        if args.seed is None:
            args.seed = 0
        if args.out is None:
            args.out = "."
    try:
        args.func(args)
    except (CliError, ConfigError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {' '.join(str(exc).split())}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
