"""Offline optimum: dynamic program over (active round, server node)."""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass

import numpy as np

from .substrate import AccessMatrix, CostModel, MigrationTable, SubstrateNetwork
from .workload import RequestTrace

BRUTE_FORCE_LIMIT = 10**7


class InstanceTooLarge(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class OptTable:
    """``opt[i][v]``: cheapest cost of serving active rounds ``0..i`` with the
    server at ``v`` in round ``rounds[i]``. ``pred[i][v]`` is the location in
    the previous active round (``v0`` for the first)."""

    opt: np.ndarray
    pred: np.ndarray
    v0: int
    rounds: tuple[int, ...]
    masses: np.ndarray
    mig_cost: np.ndarray

    @property
    def total(self) -> float:
        return float(self.opt[-1].min()) if len(self.rounds) else 0.0


@dataclass(frozen=True)
class MigrationSchedule:
    rounds: tuple[int, ...]
    locations: tuple[int, ...]
    access_costs: tuple[float, ...]
    migration_costs: tuple[float, ...]
    total_cost: float

    @property
    def access_total(self) -> float:
        return float(sum(self.access_costs))

    @property
    def migration_total(self) -> float:
        return float(sum(self.migration_costs))


def _active_rounds(trace: RequestTrace, skip_empty: bool):
    return [r for r in trace.rounds if r.origins or not skip_empty]


def opt_table(net: SubstrateNetwork, trace: RequestTrace, v0: int, acc: AccessMatrix,
              cm: CostModel, mig: MigrationTable, skip_empty: bool | None = None) -> OptTable:
    """Fill the optimum table row by row.

    Rounds without requests are skipped by default under optimal migration
    paths: those costs obey the triangle inequality, so a migration can be
    postponed to the next round with requests at no extra cost. Fixed
    shortest-latency paths give no such guarantee and keep every round.
    """
    if skip_empty is None:
        skip_empty = cm.migration_path_mode == "optimal"
    if not 0 <= v0 < net.n:
        raise ValueError(f"v0 = {v0} is not a node of the network")
    active = _active_rounds(trace, skip_empty)
    n = net.n
    T = len(active)
    opt = np.zeros((T, n))
    pred = np.zeros((T, n), dtype=np.int64)
    masses = np.zeros((T, n))
    for i, r in enumerate(active):
        masses[i] = acc.request_mass(r.origins)
        if i == 0:
            opt[0] = mig.cost[v0] + masses[0]
            pred[0] = v0
            continue
        # rows: previous node v, cols: next node u; argmin picks the lowest v on ties
        cand = opt[i - 1][:, None] + mig.cost
        pred[i] = np.argmin(cand, axis=0)
        opt[i] = cand[pred[i], np.arange(n)] + masses[i]
    return OptTable(opt, pred, v0, tuple(r.round_index for r in active), masses, mig.cost)


def opt_schedule(table: OptTable) -> MigrationSchedule:
    """Backtrack from the cheapest final location (lowest id on ties)."""
    T = len(table.rounds)
    if T == 0:
        return MigrationSchedule((), (), (), (), 0.0)
    locs = [0] * T
    locs[-1] = int(np.argmin(table.opt[-1]))
    for i in range(T - 1, 0, -1):
        locs[i - 1] = int(table.pred[i][locs[i]])
    prev = [table.v0] + locs[:-1]
    access = tuple(float(table.masses[i][locs[i]]) for i in range(T))
    migration = tuple(float(table.mig_cost[p, u]) for p, u in zip(prev, locs))
    return MigrationSchedule(table.rounds, tuple(locs), access, migration, table.total)


def brute_force_opt(net: SubstrateNetwork, trace: RequestTrace, v0: int, acc: AccessMatrix,
                    cm: CostModel, mig: MigrationTable) -> MigrationSchedule:
    """Exhaustive search over every location sequence of the active rounds."""
    active = [r for r in trace.rounds if r.origins]
    n, T = net.n, len(active)
    if n ** T > BRUTE_FORCE_LIMIT:
        raise InstanceTooLarge(f"{n}^{T} schedules exceed the enumeration limit")
    if T == 0:
        return MigrationSchedule((), (), (), (), 0.0)
    access = [[sum(float(acc.dist[o, u]) for o in r.origins) for u in range(n)] for r in active]
    best, best_seq = None, None
    for seq in itertools.product(range(n), repeat=T):
        cost, prev = 0.0, v0
        for i, u in enumerate(seq):
            cost = cost + float(mig.cost[prev, u]) + access[i][u]
            prev = u
        if best is None or cost < best:
            best, best_seq = cost, seq
    prev = [v0] + list(best_seq[:-1])
    return MigrationSchedule(
        tuple(r.round_index for r in active), tuple(best_seq),
        tuple(access[i][u] for i, u in enumerate(best_seq)),
        tuple(float(mig.cost[p, u]) for p, u in zip(prev, best_seq)),
        best,
    )


def schedule_csv(schedule: MigrationSchedule) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["round", "location", "access_cost", "migration_cost"])
    for row in zip(schedule.rounds, schedule.locations, schedule.access_costs,
                   schedule.migration_costs):
        w.writerow([row[0], row[1], repr(row[2]), repr(row[3])])
    return buf.getvalue()
