"""FDR-based distributed detection under Byzantine data falsification."""

__version__ = "0.1.0"

from .bh import bh_count, count_identical, fdr_realization
from .config import Scenario, parse_config
from .errors import DegenerateModelError, ParameterError
from .fusion import GlobalDetector, design_global_threshold, global_pd, optimize_gamma, roc
from .pmf import (
    CountPmf,
    pmf_g0_exact,
    pmf_g1_asymptotic,
    pmf_g1_exact,
    pmf_g1_numerical,
    solve_vstar,
)
from .scene import TargetModel, apply_byzantine, p_value

__all__ = [
    "CountPmf",
    "DegenerateModelError",
    "GlobalDetector",
    "ParameterError",
    "Scenario",
    "TargetModel",
    "apply_byzantine",
    "bh_count",
    "count_identical",
    "design_global_threshold",
    "fdr_realization",
    "global_pd",
    "optimize_gamma",
    "p_value",
    "parse_config",
    "pmf_g0_exact",
    "pmf_g1_asymptotic",
    "pmf_g1_exact",
    "pmf_g1_numerical",
    "roc",
    "solve_vstar",
]
