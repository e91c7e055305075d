"""Single-provider online migration policies: STAT, RAND and DET.

Each policy is a mutable state object plus a step function with the same
shape, ``step(state, origins, acc, cm, mig) -> PolicyDecision``. A step
first folds the round's requests into the epoch counters, then decides
whether to migrate. Access costs are charged by the caller.

Counters are reset lazily: an epoch that ends in round t is marked on the
state and the counters are zeroed when round t+1 is stepped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .substrate import AccessMatrix, CostModel, MigrationTable, SubstrateNetwork


@dataclass(frozen=True)
class PolicyDecision:
    new_location: int
    migrated: bool = False
    migration_cost_paid: float = 0.0
    epoch_ended: bool = False
    large_epoch_ended: bool = False
    huge_epoch_ended: bool = False


@dataclass
class IntraPolicyState:
    kind: str
    location: int
    counters: np.ndarray
    epoch_weights: np.ndarray
    rng: np.random.Generator | None = None
    epoch_index: int = 0
    phase_index: int = 0
    pending_reset: bool = False
    last_active: np.ndarray | None = field(default=None, repr=False)


def new_intra_state(kind: str, n: int, location: int, seed: int | None = None) -> IntraPolicyState:
    if kind not in ("stat", "rand", "det"):
        raise ValueError(f"unknown single-provider policy {kind!r}")
    rng = np.random.default_rng(seed) if kind == "rand" else None
    return IntraPolicyState(kind, location, np.zeros(n), np.zeros(n, dtype=np.int64), rng)


def stat_center(net: SubstrateNetwork, acc: AccessMatrix) -> int:
    """Network center: node minimizing the worst-case access distance."""
    return int(np.argmin(acc.dist.max(axis=1)))


def gravity_center(acc: AccessMatrix, candidates, request_weights) -> int:
    """Candidate minimizing the weighted distance sum to the requests; lowest id wins ties.

    ``candidates`` is an iterable of node ids or a boolean mask;
    ``request_weights`` is a per-node multiplicity vector.
    """
    cand = np.asarray(candidates)
    if cand.dtype == bool:
        cand = np.flatnonzero(cand)
    cand = np.unique(cand)
    if cand.size == 0:
        raise ValueError("gravity center of an empty candidate set")
    w = np.asarray(request_weights, dtype=float)
    scores = w @ acc.dist[:, cand]
    return int(cand[np.argmin(scores)])


def _begin_round(state: IntraPolicyState, origins, acc: AccessMatrix) -> None:
    if state.pending_reset:
        state.counters[:] = 0.0
        state.epoch_weights[:] = 0
        state.epoch_index += 1
        state.phase_index += 1
        state.pending_reset = False
    if len(origins):
        state.counters += acc.request_mass(origins)
        np.add.at(state.epoch_weights, np.asarray(origins, dtype=np.int64), 1)


def _move(state, target: int, mig: MigrationTable) -> PolicyDecision:
    cost = float(mig.cost[state.location, target])
    state.location = target
    state.phase_index += 1
    return PolicyDecision(target, True, cost)


def _end_epoch(state) -> PolicyDecision:
    state.pending_reset = True
    return PolicyDecision(state.location, epoch_ended=True)


def stat_step(state: IntraPolicyState, origins, acc: AccessMatrix, cm: CostModel,
              mig: MigrationTable) -> PolicyDecision:
    return PolicyDecision(state.location)


def rand_step(state: IntraPolicyState, origins, acc: AccessMatrix, cm: CostModel,
              mig: MigrationTable) -> PolicyDecision:
    """Move to a uniformly random node still below the threshold once the
    current node's counter reaches it; with no such node the epoch ends."""
    _begin_round(state, origins, acc)
    thr = cm.threshold
    if state.counters[state.location] < thr:
        return PolicyDecision(state.location)
    below = np.flatnonzero(state.counters < thr)
    if below.size == 0:
        return _end_epoch(state)
    return _move(state, int(state.rng.choice(below)), mig)


def det_step(state: IntraPolicyState, origins, acc: AccessMatrix, cm: CostModel,
             mig: MigrationTable) -> PolicyDecision:
    """Move to the gravity center of the active nodes (counter < tau * threshold)
    once the current node's counter reaches the threshold. The epoch ends as
    soon as no active node is left."""
    _begin_round(state, origins, acc)
    thr = cm.threshold
    active = state.counters < cm.det_tau * thr
    state.last_active = active
    if not active.any():
        return _end_epoch(state)
    if state.counters[state.location] < thr:
        return PolicyDecision(state.location)
    return _move(state, gravity_center(acc, active, state.epoch_weights), mig)


STEP = {"stat": stat_step, "rand": rand_step, "det": det_step}
