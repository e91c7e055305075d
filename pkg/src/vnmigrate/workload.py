"""Request traces: the Time-Zones and Commuter scenarios plus a text format."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .substrate import AccessMatrix, SubstrateNetwork, access_cost_matrix

SCENARIOS = ("time_zones", "commuter")


class TraceFormatError(ValueError):
    def __init__(self, message: str, lineno: int | None = None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


@dataclass(frozen=True)
class RequestRound:
    round_index: int
    origins: tuple[int, ...] = ()


@dataclass(frozen=True)
class RequestTrace:
    rounds: tuple[RequestRound, ...]
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "rounds", tuple(self.rounds))
        for i, r in enumerate(self.rounds):
            if r.round_index != i:
                raise TraceFormatError(f"round indices must be consecutive from 0; got {r.round_index} at position {i}")

    def __len__(self):
        return len(self.rounds)

    def __iter__(self):
        return iter(self.rounds)

    def validate_against(self, net: SubstrateNetwork) -> None:
        for r in self.rounds:
            for o in r.origins:
                if not 0 <= o < net.n:
                    raise ValueError(f"round {r.round_index}: origin {o} is not a node of the network")

    @property
    def total_requests(self) -> int:
        return sum(len(r.origins) for r in self.rounds)


def _half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _duration(rng, mean: float) -> int:
    return max(1, _half_up(rng.exponential(mean)))


def gen_time_zones(
    net: SubstrateNetwork,
    rounds: int,
    p_hot: float,
    lam: float,
    requests_per_round: int,
    seed: int = 0,
) -> RequestTrace:
    """Hotspot traffic with uniform background.

    A hotspot node drawn uniformly at random emits ``p_hot`` percent of each
    round's requests (rounded half up) and stays for an exponentially
    distributed number of rounds with mean ``lam`` (at least one). The other
    requests come from independent uniform nodes.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if not 0 <= p_hot <= 100:
        raise ValueError("p_hot must be a percentage in [0, 100]")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if requests_per_round < 1:
        raise ValueError("requests_per_round must be >= 1")
    rng = np.random.default_rng(seed)
    n = net.n
    n_hot = _half_up(p_hot / 100 * requests_per_round)
    hotspot = int(rng.integers(n))
    left = _duration(rng, lam)
    out = []
    for t in range(rounds):
        if left == 0:
            hotspot = int(rng.integers(n))
            left = _duration(rng, lam)
        background = rng.integers(0, n, size=requests_per_round - n_hot)
        out.append(RequestRound(t, (hotspot,) * n_hot + tuple(int(x) for x in background)))
        left -= 1
    meta = {"scenario": "time_zones", "seed": seed, "rounds": rounds, "p_hot": p_hot,
            "lambda": lam, "requests_per_round": requests_per_round,
            "network": net.fingerprint()}
    return RequestTrace(tuple(out), meta)


def commuter_access_points(acc: AccessMatrix, center: int, count: int) -> list[int]:
    """The center followed by the ``count - 1`` nodes nearest to it (lowest id on ties)."""
    order = sorted((v for v in range(acc.n) if v != center), key=lambda v: (acc.dist[center, v], v))
    return [center] + order[: count - 1]


def gen_commuter(
    net: SubstrateNetwork,
    T: int,
    lam: float,
    rounds: int,
    center: int,
    seed: int = 0,
    acc: AccessMatrix | None = None,
) -> RequestTrace:
    """Static-load commuter traffic around ``center``.

    Every round carries ``2**(T/2)`` requests. Phase ``i`` spreads them over
    ``2**i`` access points; the phase index walks 0, 1, ..., T/2, ..., 1, 0, ...
    and each phase lasts an exponentially distributed number of rounds with
    mean ``lam`` (at least one).
    """
    if T < 2 or T % 2:
        raise ValueError("T must be an even integer >= 2")
    half = T // 2
    total = 2 ** half
    if total > net.n:
        raise ValueError(f"2^(T/2) = {total} exceeds the network size {net.n}")
    if not 0 <= center < net.n:
        raise ValueError(f"center {center} is not a node of the network")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if acc is None:
        acc = access_cost_matrix(net, "hops")
    rng = np.random.default_rng(seed)
    ranking = commuter_access_points(acc, center, total)

    phase, step = 0, 1
    left = _duration(rng, lam)
    out = []
    for t in range(rounds):
        if left == 0:
            if not 0 <= phase + step <= half:
                step = -step
            phase += step
            left = _duration(rng, lam)
        p = 2 ** phase
        per_ap, extra = divmod(total, p)
        origins = [center] * extra
        for ap in ranking[:p]:
            origins += [ap] * per_ap
        out.append(RequestRound(t, tuple(sorted(origins))))
        left -= 1
    meta = {"scenario": "commuter", "seed": seed, "rounds": rounds, "T": T,
            "lambda": lam, "center": center, "network": net.fingerprint()}
    return RequestTrace(tuple(out), meta)


def serialize_trace(trace: RequestTrace) -> str:
    meta = dict(trace.meta)
    head = ["# trace v1", f"scenario={meta.pop('scenario', 'unknown')}",
            f"seed={meta.pop('seed', 0)}"]
    head += [f"{k}={v}" for k, v in meta.items()]
    lines = [" ".join(head)]
    for r in trace.rounds:
        lines.append(" ".join(str(x) for x in (r.round_index, *r.origins)))
    return "\n".join(lines) + "\n"


def _parse_header(line: str) -> dict:
    meta = {}
    for tok in line[1:].split()[2:]:
        key, sep, value = tok.partition("=")
        if sep:
            meta[key] = value
    return meta


def parse_trace(text: str) -> RequestTrace:
    meta: dict = {}
    rounds = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line[1:].split()[:2] == ["trace", "v1"]:
                meta = _parse_header(line)
            continue
        try:
            idx, *origins = (int(tok) for tok in line.split())
        except ValueError:
            raise TraceFormatError(f"non-integer field in {line!r}", lineno) from None
        if idx != len(rounds):
            raise TraceFormatError(f"expected round {len(rounds)}, got {idx}", lineno)
        if any(o < 0 for o in origins):
            raise TraceFormatError("negative node id", lineno)
        rounds.append(RequestRound(idx, tuple(origins)))
    return RequestTrace(tuple(rounds), meta)
