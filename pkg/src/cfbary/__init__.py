"""Counterfactually fair post-processing of regression scores.

Scores are aligned, interval by interval of a latent proxy ``v``, to the
1D Wasserstein barycenter of the group-conditional score laws.
"""
__version__ = "0.1.0"

from cfbary._backend import BACKEND  # noqa: E402
from cfbary.ot1d import (  # noqa: E402
    ContractError,
    EmpiricalDist,
    QuantileTable,
    barycenter_quantiles,
    cdf_eval,
    quantile_eval,
    transport_to_barycenter,
    w2_squared,
    w2_squared_bruteforce,
)
from cfbary.partition import Dataset, IngestionError, Partition, Record  # noqa: E402
from cfbary.postprocess import (  # noqa: E402
    FairModel,
    FitConfig,
    FitError,
    compute_delta_star,
    empirical_unfairness_bb,
    estimate_lcdf,
    fit,
    predict,
    select_l_star,
)

__all__ = [
    "BACKEND",
    "ContractError",
    "Dataset",
    "EmpiricalDist",
    "FairModel",
    "FitConfig",
    "FitError",
    "IngestionError",
    "Partition",
    "QuantileTable",
    "Record",
    "barycenter_quantiles",
    "cdf_eval",
    "compute_delta_star",
    "empirical_unfairness_bb",
    "estimate_lcdf",
    "fit",
    "predict",
    "quantile_eval",
    "select_l_star",
    "transport_to_barycenter",
    "w2_squared",
    "w2_squared_bruteforce",
]
