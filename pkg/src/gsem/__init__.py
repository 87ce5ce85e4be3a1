"""Geometric self-expressive models (GSEM) for drug repositioning.

Learns a sparse, non-negative disease self-representation ``C`` with
``X ~ X C`` whose columns are smoothed over a disease similarity graph.
"""

from .core import (
    AssociationMatrix,
    FitOptions,
    Hyperparameters,
    SimilarityGraph,
    build_graph,
    dirichlet_energy,
    empty_graph,
    gradient,
    kkt_residual,
    objective,
)
from .evaluation import EvalReport, FoldPlan, aupr, cross_validate, grid_search, make_folds
from .interpret import DiseaseClassMap, analyze, cosine_rows, rank_sum_test, symmetrize
from .solver import FitResult, NumericalError, fit, predict_scores

__version__ = "0.1.0"

__all__ = [
    "AssociationMatrix",
    "DiseaseClassMap",
    "EvalReport",
    "FitOptions",
    "FitResult",
    "FoldPlan",
    "Hyperparameters",
    "NumericalError",
    "SimilarityGraph",
    "analyze",
    "aupr",
    "build_graph",
    "cosine_rows",
    "cross_validate",
    "dirichlet_energy",
    "empty_graph",
    "fit",
    "gradient",
    "grid_search",
    "kkt_residual",
    "make_folds",
    "objective",
    "predict_scores",
    "rank_sum_test",
    "symmetrize",
]
