"""Multi-provider policies PRAND and PDET.

Time is split into small, large and huge epochs. Inside a small epoch the
server only moves within its current PIP, following RAND (PRAND) or DET
(PDET) with trigger ``beta``. A large epoch is a fixed number of small
epochs; at its end whole PIPs (PRAND) or single nodes (PDET) whose
large-epoch counter crossed the transit scale are deactivated until the
huge epoch ends, and the server may cross provider boundaries.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .policies import PolicyDecision, gravity_center
from .substrate import AccessMatrix, CostModel, MigrationTable

log = logging.getLogger(__name__)

PDET_SMALL_EPOCH_FACTOR = 40


def small_epochs_per_large(kind: str, cm: CostModel) -> int:
    base = max(1, math.ceil(cm.pi / cm.beta))
    return base if kind == "prand" else PDET_SMALL_EPOCH_FACTOR * base


@dataclass
class MultiPolicyState:
    kind: str
    location: int
    pip_of: np.ndarray
    counters: np.ndarray
    counters_large: np.ndarray
    small_weights: np.ndarray
    huge_weights: np.ndarray
    rng: np.random.Generator
    small_epochs_per_large: int
    small_epochs_done: int = 0
    active_pips: set = field(default_factory=set)
    active_nodes_huge: np.ndarray | None = None
    large_epoch_index: int = 0
    huge_epoch_index: int = 0
    pending_small: bool = False
    pending_large: bool = False
    pending_huge: bool = False
    # PIPs / nodes deactivated at the last large-epoch boundary, for auditing
    last_deactivated: tuple = ()

    @property
    def current_pip_mask(self) -> np.ndarray:
        return self.pip_of == self.pip_of[self.location]


def new_multi_state(kind: str, pip_of, location: int, cm: CostModel,
                    seed: int | None = None) -> MultiPolicyState:
    if kind not in ("prand", "pdet"):
        raise ValueError(f"unknown multi-provider policy {kind!r}")
    if cm.pi < cm.beta:
        log.warning("pi (%g) < beta (%g): multi-provider machinery runs anyway", cm.pi, cm.beta)
    pip_of = np.asarray(pip_of, dtype=np.int64)
    n = pip_of.size
    return MultiPolicyState(
        kind=kind,
        location=location,
        pip_of=pip_of,
        counters=np.zeros(n),
        counters_large=np.zeros(n),
        small_weights=np.zeros(n, dtype=np.int64),
        huge_weights=np.zeros(n, dtype=np.int64),
        rng=np.random.default_rng(seed),
        small_epochs_per_large=small_epochs_per_large(kind, cm),
        active_pips=set(np.unique(pip_of).tolist()),
        active_nodes_huge=np.ones(n, dtype=bool),
    )


def _begin_round(state: MultiPolicyState, origins, acc: AccessMatrix) -> None:
    # every counter is zeroed at small-epoch starts, so counter <= counterLarge holds
    if state.pending_small:
        state.counters[:] = 0.0
        state.small_weights[:] = 0
        state.pending_small = False
    if state.pending_large:
        state.counters_large[:] = 0.0
        state.large_epoch_index += 1
        state.pending_large = False
    if state.pending_huge:
        state.active_pips = set(np.unique(state.pip_of).tolist())
        state.active_nodes_huge[:] = True
        state.huge_weights[:] = 0
        state.huge_epoch_index += 1
        state.pending_huge = False
    if len(origins):
        mass = acc.request_mass(origins)
        state.counters += mass
        state.counters_large += mass
        idx = np.asarray(origins, dtype=np.int64)
        np.add.at(state.small_weights, idx, 1)
        np.add.at(state.huge_weights, idx, 1)


def _migrate(state, target: int, mig: MigrationTable, **flags) -> PolicyDecision:
    if target == state.location:
        return PolicyDecision(state.location, **flags)
    cost = float(mig.cost[state.location, target])
    state.location = target
    return PolicyDecision(target, True, cost, **flags)


def _close_small_epoch(state: MultiPolicyState, acc: AccessMatrix, mig: MigrationTable,
                       cm: CostModel) -> PolicyDecision:
    state.pending_small = True
    state.small_epochs_done += 1
    if state.small_epochs_done < state.small_epochs_per_large:
        return PolicyDecision(state.location, epoch_ended=True)
    state.small_epochs_done = 0
    state.pending_large = True
    if state.kind == "prand":
        return _prand_large_boundary(state, mig, cm)
    return _pdet_large_boundary(state, acc, mig, cm)


def _prand_large_boundary(state, mig, cm) -> PolicyDecision:
    dead = []
    for pip in sorted(state.active_pips):
        if np.all(state.counters_large[state.pip_of == pip] >= cm.pi):
            dead.append(pip)
    state.active_pips.difference_update(dead)
    state.last_deactivated = tuple(dead)
    flags = {"epoch_ended": True, "large_epoch_ended": True}
    if not state.active_pips:
        state.pending_huge = True
        return PolicyDecision(state.location, huge_epoch_ended=True, **flags)
    pip = int(state.rng.choice(sorted(state.active_pips)))
    target = int(state.rng.choice(np.flatnonzero(state.pip_of == pip)))
    return _migrate(state, target, mig, **flags)


def _pdet_large_boundary(state, acc, mig, cm) -> PolicyDecision:
    dead = state.active_nodes_huge & (state.counters_large >= cm.pdet_tau_large * cm.pi)
    state.active_nodes_huge &= ~dead
    state.last_deactivated = tuple(np.flatnonzero(dead).tolist())
    flags = {"epoch_ended": True, "large_epoch_ended": True}
    if not state.active_nodes_huge.any():
        state.pending_huge = True
        return PolicyDecision(state.location, huge_epoch_ended=True, **flags)
    target = gravity_center(acc, state.active_nodes_huge, state.huge_weights)
    return _migrate(state, target, mig, **flags)


def prand_step(state: MultiPolicyState, origins, acc: AccessMatrix, cm: CostModel,
               mig: MigrationTable) -> PolicyDecision:
    _begin_round(state, origins, acc)
    if state.counters[state.location] < cm.beta:
        return PolicyDecision(state.location)
    below = np.flatnonzero(state.current_pip_mask & (state.counters < cm.beta))
    if below.size == 0:
        return _close_small_epoch(state, acc, mig, cm)
    return _migrate(state, int(state.rng.choice(below)), mig)


def pdet_step(state: MultiPolicyState, origins, acc: AccessMatrix, cm: CostModel,
              mig: MigrationTable) -> PolicyDecision:
    _begin_round(state, origins, acc)
    # nodes deactivated for the huge epoch are never destinations, even inside the PIP
    active = (state.current_pip_mask & state.active_nodes_huge
              & (state.counters < cm.det_tau * cm.beta))
    if not active.any():
        return _close_small_epoch(state, acc, mig, cm)
    if state.counters[state.location] < cm.beta:
        return PolicyDecision(state.location)
    return _migrate(state, gravity_center(acc, active, state.small_weights), mig)


STEP = {"prand": prand_step, "pdet": pdet_step}
