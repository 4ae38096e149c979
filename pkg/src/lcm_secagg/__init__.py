"""Lagrange Coding with Mask: multi-server secure aggregation under straggling links."""

from .bounds import BoundSet, bound_set, lower_bounds
from .errors import (DecodeUnderdetermined, DegenerateNodes, DimensionError, InfeasibleParams,
                     InfeasibleResiliency, PlanInfeasible, ThresholdExceeded,
                     TooLargeToEnumerate)
from .ffield import DEFAULT_PRIME, PrimeField
from .network import FailureTable, make_groups, pattern_space
from .params import Params, validate_params
from .privacy import mi_client_oracle, mi_server_oracle, ub_invertibility_sweep
from .protocol import LoadReport, plan_downlink, plan_loads, run_round

__all__ = [
    "BoundSet", "DEFAULT_PRIME", "DecodeUnderdetermined", "DegenerateNodes", "DimensionError",
    "FailureTable", "InfeasibleParams", "InfeasibleResiliency", "LoadReport", "Params",
    "PlanInfeasible", "PrimeField", "ThresholdExceeded", "TooLargeToEnumerate", "bound_set",
    "lower_bounds", "make_groups", "mi_client_oracle", "mi_server_oracle", "pattern_space",
    "plan_downlink", "plan_loads", "run_round", "ub_invertibility_sweep", "validate_params",
]
