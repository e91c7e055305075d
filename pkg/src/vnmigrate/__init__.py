"""Online virtual-service migration on substrate networks.

Online policies (STAT, RAND, DET, PRAND, PDET), the optimal offline
dynamic program, workload generators and a trace-driven harness for
measuring empirical competitive ratios.
"""

from .harness import CostLedger, competitive_ratio, run_experiment, run_policy
from .offline import brute_force_opt, opt_schedule, opt_table
from .policies import gravity_center, stat_center
from .substrate import (
    CostModel,
    SubstrateNetwork,
    access_cost_matrix,
    derive_cost_parameters,
    generate_erdos_renyi,
    migration_cost_table,
    parse_network,
)
from .workload import RequestRound, RequestTrace, gen_commuter, gen_time_zones

__version__ = "0.1.0"

__all__ = [
    "CostLedger", "competitive_ratio", "run_experiment", "run_policy",
    "brute_force_opt", "opt_schedule", "opt_table",
    "gravity_center", "stat_center",
    "CostModel", "SubstrateNetwork", "access_cost_matrix", "derive_cost_parameters",
    "generate_erdos_renyi", "migration_cost_table", "parse_network",
    "RequestRound", "RequestTrace", "gen_commuter", "gen_time_zones",
]
