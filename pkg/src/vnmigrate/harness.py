"""Round-based game driver, cost ledgers, competitive ratios and experiments."""

from __future__ import annotations

import csv
import io
import logging
import math
import statistics
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import multiprovider, policies
from .config import ExperimentConfig
from .offline import opt_table
from .substrate import (
    AccessMatrix,
    CostModel,
    MigrationTable,
    SubstrateNetwork,
    access_cost_matrix,
    compose_pip_ring,
    derive_cost_parameters,
    generate_erdos_renyi,
    migration_cost_table,
    parse_network,
)
from .workload import RequestTrace, gen_commuter, gen_time_zones

log = logging.getLogger(__name__)

UNBOUNDED = math.inf
STEP = {**policies.STEP, **multiprovider.STEP}


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class RoundRecord:
    round_index: int
    location_before: int
    location_after: int
    access_cost: float
    migration_cost: float
    epoch_ended: bool = False
    large_epoch_ended: bool = False
    huge_epoch_ended: bool = False


@dataclass
class CostLedger:
    policy: str
    records: list[RoundRecord] = field(default_factory=list)

    @property
    def access_total(self) -> float:
        return sum(r.access_cost for r in self.records)

    @property
    def migration_total(self) -> float:
        return sum(r.migration_cost for r in self.records)

    @property
    def total(self) -> float:
        return self.access_total + self.migration_total

    @property
    def migrations(self) -> int:
        return sum(r.location_before != r.location_after for r in self.records)


def make_state(kind: str, net: SubstrateNetwork, v0: int, cm: CostModel, seed: int | None):
    if kind in policies.STEP:
        return policies.new_intra_state(kind, net.n, v0, seed)
    if kind in multiprovider.STEP:
        return multiprovider.new_multi_state(kind, net.pip_of, v0, cm, seed)
    raise ValueError(f"unknown policy {kind!r}")


def run_policy(
    net: SubstrateNetwork,
    trace: RequestTrace,
    policy_kind: str,
    v0: int,
    cm: CostModel,
    seed: int | None = 0,
    acc: AccessMatrix | None = None,
    mig: MigrationTable | None = None,
    charge_before_migration: bool = False,
    observer=None,
) -> CostLedger:
    """Play the trace against one policy.

    Per round the policy sees the requests, may migrate, and then pays
    access from its new location (or from its old one when
    ``charge_before_migration`` is set). ``observer(round, state, decision)``
    is called after every step.
    """
    if policy_kind not in STEP:
        raise ValueError(f"unknown policy {policy_kind!r}")
    if not 0 <= v0 < net.n:
        raise ValueError(f"v0 = {v0} is not a node of the network")
    trace.validate_against(net)
    acc = acc if acc is not None else access_cost_matrix(net, cm.access_metric)
    mig = mig if mig is not None else migration_cost_table(net, cm)
    step = STEP[policy_kind]
    state = make_state(policy_kind, net, v0, cm, seed)
    ledger = CostLedger(policy_kind)
    for rnd in trace.rounds:
        before = state.location
        decision = step(state, rnd.origins, acc, cm, mig)
        mass = acc.request_mass(rnd.origins)
        charged_at = before if charge_before_migration else decision.new_location
        ledger.records.append(RoundRecord(
            rnd.round_index, before, decision.new_location,
            float(mass[charged_at]), decision.migration_cost_paid,
            decision.epoch_ended, decision.large_epoch_ended, decision.huge_epoch_ended,
        ))
        if observer is not None:
            observer(rnd, state, decision)
    return ledger


def competitive_ratio(ledger_total: float, opt_total: float) -> float:
    """ALG / OPT; 1 when both are zero and ``UNBOUNDED`` when only OPT is."""
    if ledger_total < 0 or opt_total < 0:
        raise ValueError("costs must be nonnegative")
    if opt_total > 0:
        return ledger_total / opt_total
    return 1.0 if ledger_total == 0 else UNBOUNDED


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def derive_seed(seed: int, label: str) -> int:
    ss = np.random.SeedSequence([seed, zlib.crc32(label.encode())])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class RunResult:
    seed: int
    policy: str
    ledger: CostLedger
    opt_total: float | None
    ratio: float | None


@dataclass(frozen=True)
class PolicyAggregate:
    policy: str
    count: int
    mean_total: float
    stddev_total: float
    mean_ratio: float | None
    min_ratio: float | None
    max_ratio: float | None
    unbounded_count: int


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    runs: list[RunResult]
    opt_totals: dict[int, float | None]
    aggregates: dict[str, PolicyAggregate]


def _total_nodes(cfg: ExperimentConfig) -> int:
    return cfg.n * cfg.pips


def _requests_per_round(cfg: ExperimentConfig, n_total: int) -> int:
    if cfg.scenario == "commuter":
        return 2 ** (cfg.commuter_T // 2)
    if cfg.requests_per_round is not None:
        return cfg.requests_per_round
    return max(1, round(n_total / 5))


def opt_work(n: int, total_requests: int) -> int:
    return n * n * total_requests


def check_opt_budget(cfg: ExperimentConfig, n_total: int) -> None:
    work = opt_work(n_total, cfg.rounds * _requests_per_round(cfg, n_total))
    if work > cfg.opt_budget:
        raise BudgetExceeded(
            f"OPT needs n^2*sum|sigma| = {n_total}^2*{cfg.rounds * _requests_per_round(cfg, n_total)}"
            f" = {work} steps, above the budget of {cfg.opt_budget}")


def build_network(cfg: ExperimentConfig, seed: int) -> SubstrateNetwork:
    if cfg.network_file is not None:
        return parse_network(Path(cfg.network_file).read_text())
    subnets = [
        generate_erdos_renyi(cfg.n, cfg.p_conn, cfg.bandwidths, cfg.latency, pip_id=0,
                             seed=derive_seed(seed, f"net/{k}"), connect=cfg.connect)
        for k in range(cfg.pips)
    ]
    if cfg.pips == 1:
        return subnets[0]
    return compose_pip_ring(subnets, cfg.inter_bw, cfg.inter_latency, derive_seed(seed, "ring"))


def build_trace(cfg: ExperimentConfig, net: SubstrateNetwork, acc: AccessMatrix,
                seed: int) -> RequestTrace:
    tseed = derive_seed(seed, "trace")
    if cfg.scenario == "time_zones":
        return gen_time_zones(net, cfg.rounds, cfg.p_hot, cfg.lam,
                              _requests_per_round(cfg, net.n), tseed)
    center = cfg.commuter_center
    if center is None:
        center = policies.stat_center(net, acc)
    return gen_commuter(net, cfg.commuter_T, cfg.lam, cfg.rounds, center, tseed, acc=acc)


def cost_model_for(cfg: ExperimentConfig, net: SubstrateNetwork) -> CostModel:
    return derive_cost_parameters(net, cfg.server_size, cfg.pi_over_beta, cfg.access_metric,
                                  cfg.migration_path_mode, cfg.det_tau, cfg.pdet_tau_large)


def run_experiment(cfg: ExperimentConfig, skip_opt: bool = False) -> ExperimentResult:
    """Run every policy on ``cfg.repetitions`` independent instances.

    Repetition ``i`` uses seed ``base_seed + i`` for the network, the trace
    and the policies' coins. All policies in a repetition share one trace
    and one start node.
    """
    want_opt = cfg.opt and not skip_opt
    if want_opt and cfg.network_file is None:
        check_opt_budget(cfg, _total_nodes(cfg))
    runs: list[RunResult] = []
    opt_totals: dict[int, float | None] = {}
    for i in range(cfg.repetitions):
        seed = cfg.base_seed + i
        net = build_network(cfg, seed)
        if want_opt and cfg.network_file is not None:
            check_opt_budget(cfg, net.n)
        cm = cost_model_for(cfg, net)
        acc = access_cost_matrix(net, cm.access_metric)
        mig = migration_cost_table(net, cm)
        trace = build_trace(cfg, net, acc, seed)
        v0 = policies.stat_center(net, acc) if cfg.v0 is None else cfg.v0
        if v0 >= net.n:
            raise ValueError(f"v0 = {v0} is not a node of the network")
        opt_total = opt_table(net, trace, v0, acc, cm, mig).total if want_opt else None
        opt_totals[seed] = opt_total
        for kind in cfg.policies:
            ledger = run_policy(net, trace, kind, v0, cm, derive_seed(seed, "policy"), acc, mig,
                                cfg.charge_before_migration)
            ratio = competitive_ratio(ledger.total, opt_total) if opt_total is not None else None
            runs.append(RunResult(seed, kind, ledger, opt_total, ratio))
    return ExperimentResult(cfg, runs, opt_totals, aggregate(runs, cfg.policies))


def aggregate(runs: list[RunResult], order) -> dict[str, PolicyAggregate]:
    out = {}
    for kind in order:
        mine = [r for r in runs if r.policy == kind]
        totals = [r.ledger.total for r in mine]
        ratios = [r.ratio for r in mine if r.ratio is not None]
        finite = [x for x in ratios if math.isfinite(x)]
        unbounded = len(ratios) - len(finite)
        if unbounded:
            log.warning("%s: %d unbounded ratio(s) excluded from the mean", kind, unbounded)
        out[kind] = PolicyAggregate(
            kind, len(mine),
            statistics.fmean(totals),
            statistics.stdev(totals) if len(totals) > 1 else 0.0,
            statistics.fmean(finite) if finite else None,
            min(finite) if finite else None,
            max(finite) if finite else None,
            unbounded,
        )
    return out


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def _f(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "inf" if x == UNBOUNDED else repr(x)
    return str(x)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_f(x) for x in row])
    return buf.getvalue()


def per_round_csv(result: ExperimentResult) -> str:
    def rows():
        for run in result.runs:
            cum = 0.0
            for rec in run.ledger.records:
                cum += rec.access_cost + rec.migration_cost
                yield (run.seed, run.policy, rec.round_index, rec.location_before,
                       rec.location_after, rec.access_cost, rec.migration_cost, cum)
    return _csv(["seed", "policy", "round", "location_before", "location_after",
                 "access_cost", "migration_cost", "cumulative_cost"], rows())


def summary_csv(result: ExperimentResult) -> str:
    rows = ((r.policy, r.seed, r.ledger.access_total, r.ledger.migration_total,
             r.ledger.total, r.opt_total, r.ratio) for r in result.runs)
    return _csv(["policy", "seed", "total_access", "total_migration", "total",
                 "opt_total", "ratio"], rows)


def aggregate_csv(result: ExperimentResult) -> str:
    rows = ((a.policy, a.mean_total, a.stddev_total, a.mean_ratio, a.min_ratio, a.max_ratio,
             a.unbounded_count) for a in result.aggregates.values())
    return _csv(["policy", "mean_total", "stddev_total", "mean_ratio", "min_ratio",
                 "max_ratio", "unbounded_count"], rows)
