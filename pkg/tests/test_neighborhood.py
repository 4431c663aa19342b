import numpy as np
import pytest

from coupledmf.coupling import NeighborGraph, build_neighbor_graph, similarity_source
from coupledmf.ingest import RatingDataset
from coupledmf.neighborhood import predict_ibcf, predict_many, predict_ubcf


def _graph(n, lists):
    full = [lists.get(e, ([], [])) for e in range(n)]
    return NeighborGraph(n, tuple(full), normalized=False)


def _ds(entries, n_users, n_items):
    u, i, r = zip(*entries)
    return RatingDataset(n_users, n_items, u, i, r, 1.0, 5.0)


class TestUserBased:
    def test_single_neighbor_offset_transfer(self):
        ds = _ds([(0, 1, 3.0), (1, 0, 4.0), (1, 2, 1.0), (1, 3, 1.0)], 2, 4)
        graph = _graph(2, {0: ([1], [1.0])})
        assert predict_ubcf(ds, graph, 0, 0) == 5.0

    def test_neighbors_at_their_means(self):
        ds = _ds([(0, 1, 2.0), (0, 2, 4.0), (1, 0, 3.0), (1, 1, 3.0), (2, 0, 3.0), (2, 1, 1.0), (2, 2, 5.0)], 3, 3)
        graph = _graph(3, {0: ([1, 2], [0.8, 0.3])})
        assert predict_ubcf(ds, graph, 0, 0) == 3.0

    def test_no_neighbor_rated_item(self):
        ds = _ds([(0, 1, 2.0), (0, 2, 5.0), (1, 1, 3.0)], 2, 3)
        graph = _graph(2, {0: ([1], [1.0])})
        assert predict_ubcf(ds, graph, 0, 0) == 3.5

    def test_user_without_ratings_falls_back_to_global_mean(self):
        ds = _ds([(0, 0, 2.0), (0, 1, 4.0)], 2, 2)
        assert predict_ubcf(ds, _graph(2, {}), 1, 0) == 3.0

    def test_negative_weights_use_absolute_denominator(self):
        ds = _ds([(0, 1, 3.0), (1, 0, 4.0), (1, 1, 2.0), (2, 0, 1.0), (2, 1, 3.0)], 3, 2)
        graph = NeighborGraph(3, (([1, 2], [0.5, -0.5]), ([], []), ([], [])), normalized=False, signed=True)
        # deviations +1 and -1, weights +0.5 and -0.5
        assert predict_ubcf(ds, graph, 0, 0) == 4.0

    def test_clamped(self):
        ds = _ds([(0, 1, 5.0), (1, 0, 5.0), (1, 2, 1.0)], 2, 3)
        graph = _graph(2, {0: ([1], [1.0])})
        assert predict_ubcf(ds, graph, 0, 0) == 5.0


class TestItemBased:
    def test_constant_ratings(self):
        ds = _ds([(0, 1, 4.0), (0, 2, 4.0), (1, 0, 2.0)], 2, 3)
        graph = _graph(3, {0: ([1, 2], [0.7, 0.2])})
        assert predict_ibcf(ds, graph, 0, 0) == 4.0

    def test_item_mean_fallback(self):
        ds = _ds([(1, 0, 3.0), (2, 0, 3.4), (0, 1, 5.0)], 3, 3)
        graph = _graph(3, {0: ([2], [1.0])})
        assert predict_ibcf(ds, graph, 0, 0) == pytest.approx(3.2)

    def test_global_mean_fallback(self):
        ds = _ds([(0, 1, 2.0), (1, 1, 4.0)], 2, 3)
        assert predict_ibcf(ds, _graph(3, {}), 0, 2) == 3.0

    def test_weighted_mean(self):
        ds = _ds([(0, 1, 2.0), (0, 2, 5.0)], 1, 3)
        graph = _graph(3, {0: ([1, 2], [0.5, 0.25])})
        assert predict_ibcf(ds, graph, 0, 0) == 3.0


def test_predictions_on_scale_and_deterministic(small_world):
    ds, _, _ = small_world
    users, items = np.meshgrid(np.arange(ds.n_users), np.arange(ds.n_items), indexing="ij")
    for kind, axis in (("UBCF", "user"), ("IBCF", "item")):
        graph = build_neighbor_graph(similarity_source("rating-pearson", ds=ds, axis=axis), k=5, normalize=False)
        pred = predict_many(kind, ds, graph, users.ravel(), items.ravel())
        assert pred.min() >= ds.scale_min and pred.max() <= ds.scale_max
        assert np.array_equal(pred, predict_many(kind, ds, graph, users.ravel(), items.ravel()))
