"""Raw-randomness distributions and entropy rates of PBS-based QRNG models."""

from truerand.models.common import (
    OUTCOMES,
    EntropyReport,
    poisson,
    poisson_pmf,
    poisson_tail,
    resolve_n_max,
)
from truerand.models.detailed import (
    DetailedModel,
    DetailedModelParams,
    PxSolution,
    arrival_time_rate,
    conditional_row_detailed,
    entropy_report_detailed,
    guessing_probability_detailed,
    solve_px,
    threshold_weights,
)
from truerand.models.simple import (
    ConditionalTable,
    SimpleModelParams,
    conditional_row_simple,
    conditional_table_simple,
    entropy_report_simple,
    joint_simple,
    raw_distribution_simple,
)

__all__ = [
    "OUTCOMES",
    "ConditionalTable",
    "DetailedModel",
    "DetailedModelParams",
    "EntropyReport",
    "PxSolution",
    "SimpleModelParams",
    "arrival_time_rate",
    "conditional_row_detailed",
    "conditional_row_simple",
    "conditional_table_simple",
    "entropy_report_detailed",
    "entropy_report_simple",
    "guessing_probability_detailed",
    "joint_simple",
    "poisson",
    "poisson_pmf",
    "poisson_tail",
    "raw_distribution_simple",
    "resolve_n_max",
    "solve_px",
    "threshold_weights",
]
