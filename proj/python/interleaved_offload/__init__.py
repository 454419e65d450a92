"""Python bindings for the interleaved optimizer-offload library."""

from ._ioff import (
    InfeasibleConfiguration,
    InvalidArgument,
    SchedulingError,
    SystemProfile,
    ValidationError,
    catalog_names,
    estimate_update_time,
    execute_matches_oracle,
    fast_assignments,
    optimal_stride,
    parse_scenario,
    profile,
    run_cli,
    simulate,
)

__all__ = [
    "InfeasibleConfiguration",
    "InvalidArgument",
    "SchedulingError",
    "SystemProfile",
    "ValidationError",
    "catalog_names",
    "estimate_update_time",
    "execute_matches_oracle",
    "fast_assignments",
    "optimal_stride",
    "parse_scenario",
    "profile",
    "run_cli",
    "simulate",
]
