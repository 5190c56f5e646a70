"""Robust approximate nearest-neighbor search.

Indexes that answer nearest-neighbor queries while ignoring the k worst
coordinates (or a cost-weighted set of them), built on top of plain ANN
structures over random coordinate-sampling projections, plus a
data-sensitive LSH for the Hamming cube.
"""

__version__ = "0.1.0"

from .core import (
    LightHeavyParams,
    NormParams,
    ParameterError,
    is_heavy,
    is_light,
    remove_coords,
    robust_nn_bruteforce,
    tail,
    truncated_norm,
)
from .projections import Projection, SamplingConfig, apply, sample_projection, sample_weighted_projection
from .base_ann import AnnBackendSpec, ann_query, build_backend
from .robust_index import RobustIndex, RobustIndexConfig, build_robust_index, query_robust
from .budgeted_index import (
    BudgetedConfig,
    BudgetedIndex,
    CostVector,
    admissible_distance_approx,
    admissible_distance_exact,
    build_budgeted_index,
    query_budgeted,
    trunc_weighted,
)
from .ds_lsh import DsLshConfig, DsLshIndex, build_ds_lsh, density_parameter, query_ds_lsh
from .evaluation import bicriterion_report, gen_planted, lemma_suite

__all__ = [
    "AnnBackendSpec",
    "BudgetedConfig",
    "BudgetedIndex",
    "CostVector",
    "DsLshConfig",
    "DsLshIndex",
    "LightHeavyParams",
    "NormParams",
    "ParameterError",
    "Projection",
    "RobustIndex",
    "RobustIndexConfig",
    "SamplingConfig",
    "admissible_distance_approx",
    "admissible_distance_exact",
    "ann_query",
    "apply",
    "bicriterion_report",
    "build_backend",
    "build_budgeted_index",
    "build_ds_lsh",
    "build_robust_index",
    "density_parameter",
    "gen_planted",
    "is_heavy",
    "is_light",
    "lemma_suite",
    "query_budgeted",
    "query_ds_lsh",
    "query_robust",
    "remove_coords",
    "robust_nn_bruteforce",
    "sample_projection",
    "sample_weighted_projection",
    "tail",
    "trunc_weighted",
    "truncated_norm",
]
