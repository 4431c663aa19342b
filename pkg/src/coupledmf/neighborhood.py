"""Memory-based user-based and item-based collaborative filtering.

Both predictors read neighbor lists built from co-rated Pearson correlation
with raw (unnormalized, positive) weights and fall back to simpler
estimates whenever no neighbor carries information.
"""

from __future__ import annotations

import numpy as np

from .coupling import NeighborGraph
from .ingest import RatingDataset


class _RatingIndex:
    def __init__(self, ds: RatingDataset):
        self.ds = ds
        self.lookup = {(u, i): r for u, i, r in ds.entries()}
        self.user_mean = ds.user_means()
        self.item_mean = ds.item_means()
        self.r_m = ds.global_mean


def _clamp(ds, value):
    return min(max(value, ds.scale_min), ds.scale_max)


def _index(ds, index):
    if index is None:
        return _RatingIndex(ds)
    return index


def predict_ubcf(ds: RatingDataset, user_graph: NeighborGraph, u: int, i: int, index=None) -> float:
    """Mean-centered weighted deviation of the neighbors of ``u`` that rated ``i``."""
    idx = _index(ds, index)
    mean_u = idx.user_mean[u]
    if np.isnan(mean_u):
        return _clamp(ds, idx.r_m)
    num = den = 0.0
    for v, w in zip(*(a.tolist() for a in user_graph.neighbors[u])):
        r = idx.lookup.get((v, i))
        if r is not None:
            num += w * (r - idx.user_mean[v])
            den += abs(w)
    if den == 0:
        return _clamp(ds, mean_u)
    return _clamp(ds, mean_u + num / den)


def predict_ibcf(ds: RatingDataset, item_graph: NeighborGraph, u: int, i: int, index=None) -> float:
    """Weighted mean of the ratings ``u`` gave to the neighbors of ``i``."""
    idx = _index(ds, index)
    num = den = 0.0
    for j, w in zip(*(a.tolist() for a in item_graph.neighbors[i])):
        r = idx.lookup.get((u, j))
        if r is not None:
            num += w * r
            den += abs(w)
    if den > 0:
        return _clamp(ds, num / den)
    if not np.isnan(idx.item_mean[i]):
        return _clamp(ds, idx.item_mean[i])
    return _clamp(ds, idx.r_m)


def predict_many(kind: str, ds: RatingDataset, graph: NeighborGraph, users, items) -> np.ndarray:
    """Vector of UBCF (``kind='UBCF'``) or IBCF predictions for test pairs."""
    index = _RatingIndex(ds)
    fn = {"UBCF": predict_ubcf, "IBCF": predict_ibcf}[kind]
    return np.array([fn(ds, graph, int(u), int(i), index) for u, i in zip(users, items)], dtype=np.float64)
