"""Track-assignment detailed routing with attention and GA pair sequencing."""

from ._attnroute import (
    OPEN_WEIGHT,
    WIRELENGTH_WEIGHT,
    DataError,
    InvalidOrder,
    Policy,
    Problem,
    ProblemError,
    RoutingInstance,
    build_instance,
    ga_sequence,
    generate_problem,
    greedy_order,
    load_policy,
    load_problem,
    oracle_order,
    paired_ttest,
    parse_problem,
    pearson,
    random_order,
    route,
    validate_problem,
)

__all__ = [
    "OPEN_WEIGHT",
    "WIRELENGTH_WEIGHT",
    "DataError",
    "InvalidOrder",
    "Policy",
    "Problem",
    "ProblemError",
    "RoutingInstance",
    "build_instance",
    "ga_sequence",
    "generate_problem",
    "greedy_order",
    "load_policy",
    "load_problem",
    "oracle_order",
    "paired_ttest",
    "parse_problem",
    "pearson",
    "random_order",
    "route",
    "validate_problem",
]
