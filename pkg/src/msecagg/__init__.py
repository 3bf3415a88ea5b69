"""Multi-server secure aggregation toolkit.

Given a two-hop aggregation instance (servers with disjoint user pools,
a monotone family of protected input sets, a monotone family of colluding
user sets) the package derives the combinatorial security parameters,
classifies the key-rate regime, solves the exact key-allocation LP where
one arises, constructs finite-field key schemes achieving the regime's
rate, simulates the protocol, and verifies zero leakage exactly through
rank arithmetic over the joint source.
"""

from .combinatorics import SecurityAnalysis, Witness, analyze, classify_pair
from .gf import FMatrix, PrimeField, rank, smallest_prime_at_least, stack_rank
from .lp import LpProblem, LpSolution, build_lp, solve_lp
from .model import (
    Instance,
    SetSystem,
    Topology,
    UserId,
    closure_of,
    instance_to_json,
    load_instance,
    validate_instance,
)
from .protocol import adversary_view, check_correctness, run_protocol
from .rates import RateReport, Regime, classify_regime, key_rate_bounds
from .schemes import (
    KeyScheme,
    build_case1,
    build_case2,
    build_case3,
    build_scheme,
    build_theorem2,
    check_scheme,
)
from .security import LinearView, conditional_mi_rank, entropy_oracle, verify_all

__version__ = "0.1.0"

__all__ = [
    "Instance",
    "KeyScheme",
    "FMatrix",
    "LinearView",
    "LpProblem",
    "LpSolution",
    "PrimeField",
    "RateReport",
    "Regime",
    "SecurityAnalysis",
    "SetSystem",
    "Topology",
    "UserId",
    "Witness",
    "adversary_view",
    "analyze",
    "build_case1",
    "build_case2",
    "build_case3",
    "build_lp",
    "build_scheme",
    "build_theorem2",
    "check_correctness",
    "check_scheme",
    "classify_pair",
    "classify_regime",
    "closure_of",
    "conditional_mi_rank",
    "entropy_oracle",
    "instance_to_json",
    "key_rate_bounds",
    "load_instance",
    "rank",
    "run_protocol",
    "smallest_prime_at_least",
    "solve_lp",
    "stack_rank",
    "validate_instance",
    "verify_all",
]
