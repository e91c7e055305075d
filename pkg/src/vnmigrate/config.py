"""Experiment configuration: a flat JSON object with validated fields."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .substrate import ACCESS_METRICS, CONNECT_MODES, DEFAULT_BANDWIDTHS, MIGRATION_PATH_MODES
from .workload import SCENARIOS

POLICY_KINDS = ("stat", "rand", "det", "prand", "pdet")
DEFAULT_OPT_BUDGET = 10**9


class ConfigError(ValueError):
    def __init__(self, key: str, reason: str):
        super().__init__(f"config key {key!r}: {reason}")
        self.key = key


@dataclass(frozen=True)
class ExperimentConfig:
    # network source: a file, or Erdos-Renyi providers joined in a ring
    network_file: str | None = None
    n: int = 20
    p_conn: float = 0.2
    pips: int = 1
    bandwidths: tuple = DEFAULT_BANDWIDTHS
    latency: object = "unit"
    inter_bw: float = 1.544
    inter_latency: float = 1.0
    connect: str = "resample"
    # scenario
    scenario: str = "time_zones"
    rounds: int = 200
    p_hot: float = 60.0
    lam: float = 10.0
    requests_per_round: int | None = None
    commuter_T: int = 4
    commuter_center: int | None = None
    # costs
    server_size: float = 2048 * 8.0
    pi_over_beta: float = 3.0
    det_tau: float = 1 / 3
    pdet_tau_large: float = 1 / 40
    access_metric: str = "hops"
    migration_path_mode: str = "optimal"
    # run
    policies: tuple = ("stat", "rand", "det")
    repetitions: int = 10
    base_seed: int = 0
    v0: int | None = None
    charge_before_migration: bool = False
    opt: bool = True
    opt_budget: int = DEFAULT_OPT_BUDGET
    output_dir: str | None = None

    def __post_init__(self):
        for key in ("bandwidths", "policies"):
            if not isinstance(getattr(self, key), (list, tuple)):
                raise ConfigError(key, "expected a list")
        object.__setattr__(self, "bandwidths", tuple(self.bandwidths))
        object.__setattr__(self, "policies", tuple(self.policies))
        if isinstance(self.latency, list):
            object.__setattr__(self, "latency", tuple(self.latency))
        self._validate()

    def _validate(self):
        def check(key, ok, reason):
            if not ok:
                raise ConfigError(key, reason)

        _check_types(self)
        check("n", self.n >= 1, "must be >= 1")
        check("p_conn", 0 < self.p_conn <= 1, "must be in (0, 1]")
        check("pips", self.pips >= 1, "must be >= 1")
        check("bandwidths", len(self.bandwidths) > 0 and all(b > 0 for b in self.bandwidths),
              "must be a nonempty list of positive numbers")
        check("latency", self.latency == "unit" or (
            isinstance(self.latency, tuple) and len(self.latency) == 2
            and 0 <= self.latency[0] <= self.latency[1]), "must be 'unit' or [lo, hi]")
        check("inter_bw", self.inter_bw > 0, "must be positive")
        check("inter_latency", self.inter_latency >= 0, "must be nonnegative")
        check("connect", self.connect in CONNECT_MODES, f"must be one of {CONNECT_MODES}")
        check("scenario", self.scenario in SCENARIOS, f"must be one of {SCENARIOS}")
        check("rounds", self.rounds >= 1, "must be >= 1")
        check("p_hot", 0 <= self.p_hot <= 100, "must be in [0, 100]")
        check("lam", self.lam > 0, "must be positive")
        check("requests_per_round", self.requests_per_round is None or self.requests_per_round >= 1,
              "must be >= 1")
        check("commuter_T", self.commuter_T >= 2 and self.commuter_T % 2 == 0,
              "must be an even integer >= 2")
        check("server_size", self.server_size > 0, "must be positive")
        check("pi_over_beta", self.pi_over_beta >= 0, "must be nonnegative")
        check("det_tau", 0 < self.det_tau < 1, "must be in (0, 1)")
        check("pdet_tau_large", 0 < self.pdet_tau_large < 1, "must be in (0, 1)")
        check("access_metric", self.access_metric in ACCESS_METRICS, f"must be one of {ACCESS_METRICS}")
        check("migration_path_mode", self.migration_path_mode in MIGRATION_PATH_MODES,
              f"must be one of {MIGRATION_PATH_MODES}")
        check("policies", len(self.policies) > 0 and all(p in POLICY_KINDS for p in self.policies),
              f"must be a nonempty list drawn from {POLICY_KINDS}")
        check("policies", len(set(self.policies)) == len(self.policies), "duplicate policy")
        check("repetitions", self.repetitions >= 1, "must be >= 1")
        check("base_seed", 0 <= self.base_seed < 2**64, "must be a nonnegative 64-bit seed")
        check("v0", self.v0 is None or self.v0 >= 0, "must be a node id")
        check("opt_budget", self.opt_budget >= 0, "must be nonnegative")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown key")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("<root>", f"invalid JSON ({exc})") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


_NUM = (int, float)
_TYPES = {
    "network_file": (str, type(None)),
    "n": int, "p_conn": _NUM, "pips": int, "inter_bw": _NUM, "inter_latency": _NUM,
    "connect": str, "scenario": str, "rounds": int, "p_hot": _NUM, "lam": _NUM,
    "requests_per_round": (int, type(None)), "commuter_T": int,
    "commuter_center": (int, type(None)), "server_size": _NUM, "pi_over_beta": _NUM,
    "det_tau": _NUM, "pdet_tau_large": _NUM, "access_metric": str,
    "migration_path_mode": str, "repetitions": int, "base_seed": int,
    "v0": (int, type(None)), "charge_before_migration": bool, "opt": bool,
    "opt_budget": _NUM, "output_dir": (str, type(None)),
}


def _check_types(cfg: ExperimentConfig) -> None:
    for key, types in _TYPES.items():
        value = getattr(cfg, key)
        # bool is an int subclass; only accept it where asked for
        if isinstance(value, bool) and types is not bool:
            raise ConfigError(key, f"expected {_type_name(types)}, got a boolean")
        if not isinstance(value, types):
            raise ConfigError(key, f"expected {_type_name(types)}, got {type(value).__name__}")
    if not all(isinstance(b, _NUM) and not isinstance(b, bool) for b in cfg.bandwidths):
        raise ConfigError("bandwidths", "expected numbers")
    if not all(isinstance(p, str) for p in cfg.policies):
        raise ConfigError("policies", "expected policy names")


def _type_name(types) -> str:
    if isinstance(types, tuple):
        return " or ".join("null" if t is type(None) else t.__name__ for t in types)
    return types.__name__
