"""Coupled matrix factorization with non-IID attribute couplings."""

from .coupling import (
    NeighborGraph,
    SimilarityKind,
    build_neighbor_graph,
    coupled_similarity,
    inter_attribute_similarity,
    intra_attribute_similarity,
    rating_similarity,
    similarity_source,
    simple_attribute_similarity,
)
from .evaluation import EvalReport, emit_comparison, mae, rmse, run_cv_experiment
from .factorization import FactorModel, TrainConfig, TrainTrace, gradients, objective_value, predict_rating, train
from .ingest import (
    AttributeTable,
    FoldAssignment,
    RatingDataset,
    discretize_numeric,
    kfold_split,
    parse_bookcrossing,
    parse_movielens,
)
from .neighborhood import predict_ibcf, predict_ubcf

__all__ = [
    "AttributeTable",
    "EvalReport",
    "FactorModel",
    "FoldAssignment",
    "NeighborGraph",
    "RatingDataset",
    "SimilarityKind",
    "TrainConfig",
    "TrainTrace",
    "build_neighbor_graph",
    "coupled_similarity",
    "discretize_numeric",
    "emit_comparison",
    "gradients",
    "inter_attribute_similarity",
    "intra_attribute_similarity",
    "kfold_split",
    "mae",
    "objective_value",
    "parse_bookcrossing",
    "parse_movielens",
    "predict_ibcf",
    "predict_rating",
    "predict_ubcf",
    "rating_similarity",
    "rmse",
    "run_cv_experiment",
    "similarity_source",
    "simple_attribute_similarity",
    "train",
]

__version__ = "0.1.0"
