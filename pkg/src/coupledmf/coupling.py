"""Coupled attribute similarity, baseline similarities and top-K neighbor graphs.

The coupled similarity of two entities sums, over attributes ``k``, the
product of an intra-attribute term (driven by how often each value occurs)
and an inter-attribute term (overlap of the two values' co-occurrence
distributions on every other attribute):

    intra_k(x, y) = |g(x)| |g(y)| / (|g(x)| + |g(y)| + |g(x)| |g(y)|)
    inter_k(x, y) = 1/(J-1) * sum_{j != k} sum_w min(P_j(w | x), P_j(w | y))

where ``g(v)`` is the set of entities taking value ``v`` on attribute ``k``.
With a single attribute the inter term is defined as 1.

Scalar functions (``intra_attribute_similarity`` ...) are direct readings of
the definitions.  The ``*Source`` classes compute whole rows of the entity
similarity matrix blockwise and feed :func:`build_neighbor_graph`, which keeps
only the top-K entries per row so the full n x n matrix is never stored.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DomainError
from .ingest import AttributeTable, RatingDataset

logger = logging.getLogger(__name__)

DEFAULT_K = 50
ROW_BUDGET = 1 << 24  # similarity values held per block


class SimilarityKind(str, enum.Enum):
    COUPLED = "coupled"
    PEARSON = "pearson"
    COSINE = "cosine"
    JACCARD = "jaccard"
    RATING_PEARSON = "rating-pearson"


# --------------------------------------------------------------------------
# Scalar definitions


def _group_size(table: AttributeTable, attr: int, value: int) -> int:
    size = int(np.count_nonzero(table.cells[:, attr] == value))
    if size == 0:
        name = table.attribute_names[attr]
        raise DomainError(f"value-id {value} does not occur in attribute {name!r}")
    return size


def intra_attribute_similarity(table: AttributeTable, attr: int, x: int, y: int) -> float:
    gx = _group_size(table, attr, x)
    gy = _group_size(table, attr, y)
    return (gx * gy) / (gx + gy + gx * gy)


def inter_attribute_similarity(table: AttributeTable, attr: int, x: int, y: int) -> float:
    _group_size(table, attr, x)
    _group_size(table, attr, y)
    n_attr = table.n_attributes
    if n_attr == 1:
        return 1.0
    col = table.cells[:, attr]
    total = 0.0
    for j in range(n_attr):
        if j == attr:
            continue
        px = np.bincount(table.cells[col == x, j], minlength=len(table.vocab[j]))
        py = np.bincount(table.cells[col == y, j], minlength=len(table.vocab[j]))
        px = px / px.sum()
        py = py / py.sum()
        shared = (px > 0) & (py > 0)
        total += np.minimum(px[shared], py[shared]).sum()
    return total / (n_attr - 1)


def coupled_similarity(table: AttributeTable, i: int, j: int) -> float:
    """Coupled similarity of entities ``i`` and ``j``; works for user and item tables alike."""
    n = table.n_entities
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"entity index out of range for {n} entities")
    total = 0.0
    for k in range(table.n_attributes):
        x, y = int(table.cells[i, k]), int(table.cells[j, k])
        total += intra_attribute_similarity(table, k, x, y) * inter_attribute_similarity(table, k, x, y)
    return total


def simple_attribute_similarity(kind, table: AttributeTable, i: int, j: int) -> float:
    """Pearson, cosine or Jaccard similarity of two one-hot encoded attribute rows.

    The encoding spans the attribute values that occur in the table, so a
    table where every attribute is constant gives constant vectors and a
    Pearson similarity of 0.
    """
    kind = SimilarityKind(kind)
    onehot = table.one_hot(occurring_only=True)
    a, b = onehot[i], onehot[j]
    if kind is SimilarityKind.COSINE:
        norm = np.linalg.norm(a) * np.linalg.norm(b)
        return float(a @ b / norm) if norm else 0.0
    if kind is SimilarityKind.JACCARD:
        union = np.count_nonzero((a > 0) | (b > 0))
        return np.count_nonzero((a > 0) & (b > 0)) / union if union else 0.0
    if kind is SimilarityKind.PEARSON:
        return _pearson(a, b)
    raise ConfigError(f"{kind.value} is not an attribute similarity")


def _pearson(a, b) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt((a @ a) * (b @ b))
    if denom == 0:
        return 0.0
    return float(np.clip(a @ b / denom, -1.0, 1.0))


def rating_similarity(ds: RatingDataset, axis: str, i: int, j: int) -> float:
    """Pearson correlation of two users' (or items') ratings on co-rated entries.

    Fewer than two co-rated entries or zero variance gives 0.
    """
    if axis == "user":
        own, other = ds.users, ds.items
    elif axis == "item":
        own, other = ds.items, ds.users
    else:
        raise ConfigError(f"axis must be 'user' or 'item', got {axis!r}")
    ri = dict(zip(other[own == i].tolist(), ds.ratings[own == i].tolist()))
    rj = dict(zip(other[own == j].tolist(), ds.ratings[own == j].tolist()))
    common = sorted(ri.keys() & rj.keys())
    if len(common) < 2:
        return 0.0
    return _pearson(np.array([ri[c] for c in common]), np.array([rj[c] for c in common]))


# --------------------------------------------------------------------------
# Blockwise row sources


class _ProfileSource:
    """Row source whose rows depend only on the entity's attribute profile."""

    def __init__(self, table: AttributeTable):
        self.table = table
        self.n_entities = table.n_entities
        if table.n_entities:
            _, first, inverse = np.unique(table.cells, axis=0, return_index=True, return_inverse=True)
            order = np.argsort(first, kind="stable")
            rank = np.empty_like(order)
            rank[order] = np.arange(len(order))
            self.profile_of = rank[inverse.ravel()]
        else:
            self.profile_of = np.zeros(0, dtype=np.int64)

    def rows(self, index) -> np.ndarray:
        raise NotImplementedError


class CoupledSource(_ProfileSource):
    """Rows of the coupled similarity matrix of an attribute table."""

    kind = SimilarityKind.COUPLED

    def __init__(self, table: AttributeTable, cache_limit: int = 4096, budget: int = 1 << 22):
        super().__init__(table)
        self.budget = budget
        self.cache_limit = cache_limit
        self._freq = [table.frequencies(k).astype(np.float64) for k in range(table.n_attributes)]
        self._cond = {}
        self._cache = {}

    def _conditional(self, k: int, j: int) -> sp.csr_matrix:
        """P(value of attr j | value of attr k) as a |V_k| x |V_j| sparse matrix."""
        key = (k, j)
        if key not in self._cond:
            t = self.table
            counts = sp.csr_matrix(
                (np.ones(t.n_entities), (t.cells[:, k], t.cells[:, j])),
                shape=(len(t.vocab[k]), len(t.vocab[j])),
            )
            counts.sum_duplicates()
            counts.sort_indices()
            rowsum = np.asarray(counts.sum(axis=1)).ravel()
            counts.data /= np.repeat(rowsum, np.diff(counts.indptr))
            self._cond[key] = counts
        return self._cond[key]

    def _intra_rows(self, k, xs):
        f = self._freq[k]
        fx = f[xs][:, None]
        num = fx * f[None, :]
        den = fx + f[None, :] + num
        return np.divide(num, den, out=np.zeros_like(num), where=den > 0)

    def _inter_rows(self, k, xs):
        n_attr = self.table.n_attributes
        out = np.zeros((len(xs), len(self._freq[k])))
        if n_attr == 1:
            out[:] = 1.0
            return out
        for j in range(n_attr):
            if j != k:
                cond = self._conditional(k, j)
                out += _sum_of_minima(cond[xs].toarray(), cond, self.budget)
        return out / (n_attr - 1)

    def value_rows(self, k: int, xs) -> np.ndarray:
        """``intra_k * inter_k`` between the value-ids ``xs`` and every value of ``k``."""
        xs = np.asarray(xs, dtype=np.int64)
        if len(self._freq[k]) <= self.cache_limit:
            if k not in self._cache:
                allv = np.arange(len(self._freq[k]))
                self._cache[k] = self._intra_rows(k, allv) * self._inter_rows(k, allv)
            return self._cache[k][xs]
        return self._intra_rows(k, xs) * self._inter_rows(k, xs)

    def rows(self, index) -> np.ndarray:
        index = np.asarray(index, dtype=np.int64)
        cells = self.table.cells
        out = np.zeros((len(index), self.n_entities))
        for k in range(self.table.n_attributes):
            xs, local = np.unique(cells[index, k], return_inverse=True)
            vals = self.value_rows(k, xs)
            out += vals[local.ravel()][:, cells[:, k]]
        return out


def _sum_of_minima(cx: np.ndarray, cond: sp.csr_matrix, budget: int) -> np.ndarray:
    """``out[a, y] = sum_w min(cx[a, w], cond[y, w])`` over the stored entries of ``cond``."""
    b = cx.shape[0]
    n_rows = cond.shape[0]
    out = np.zeros((b, n_rows))
    indptr, cols, data = cond.indptr, cond.indices, cond.data
    step = max(1, budget // max(b, 1))
    r0 = 0
    while r0 < n_rows:
        r1 = int(np.searchsorted(indptr, indptr[r0] + step, side="right")) - 1
        r1 = min(max(r1, r0 + 1), n_rows)
        lo, hi = indptr[r0], indptr[r1]
        if hi > lo:
            nonempty = r0 + np.flatnonzero(np.diff(indptr[r0:r1 + 1]))
            mins = np.minimum(cx[:, cols[lo:hi]], data[lo:hi])
            out[:, nonempty] = np.add.reduceat(mins, indptr[nonempty] - lo, axis=1)
        r0 = r1
    return out


class AttributeSource(_ProfileSource):
    """Rows of Pearson / cosine / Jaccard similarity over one-hot attribute rows."""

    def __init__(self, table: AttributeTable, kind):
        super().__init__(table)
        self.kind = SimilarityKind(kind)
        if self.kind not in (SimilarityKind.PEARSON, SimilarityKind.COSINE, SimilarityKind.JACCARD):
            raise ConfigError(f"{self.kind.value} is not an attribute similarity")
        self.n_attr = table.n_attributes
        self.width = sum(int(np.count_nonzero(table.frequencies(k))) for k in range(self.n_attr))

    def rows(self, index) -> np.ndarray:
        index = np.asarray(index, dtype=np.int64)
        cells = self.table.cells
        shared = np.zeros((len(index), self.n_entities))
        for k in range(self.n_attr):
            shared += cells[index, k][:, None] == cells[None, :, k]
        J, D = self.n_attr, self.width
        if J == 0:
            return shared
        if self.kind is SimilarityKind.COSINE:
            return shared / J
        if self.kind is SimilarityKind.JACCARD:
            return shared / (2 * J - shared)
        denom = J * D - J * J
        if denom == 0:
            return np.zeros_like(shared)
        return (D * shared - J * J) / denom


class RatingPearsonSource:
    """Rows of co-rated Pearson correlation between users (or items)."""

    profile_of = None
    kind = SimilarityKind.RATING_PEARSON

    def __init__(self, ds: RatingDataset, axis: str):
        if axis == "user":
            own, other, n_own, n_other = ds.users, ds.items, ds.n_users, ds.n_items
        elif axis == "item":
            own, other, n_own, n_other = ds.items, ds.users, ds.n_items, ds.n_users
        else:
            raise ConfigError(f"axis must be 'user' or 'item', got {axis!r}")
        self.n_entities = n_own
        r = ds.ratings
        self._val = sp.csr_matrix((r, (own, other)), shape=(n_own, n_other))
        self._sq = sp.csr_matrix((r * r, (own, other)), shape=(n_own, n_other))
        self._ind = sp.csr_matrix((np.ones_like(r), (own, other)), shape=(n_own, n_other))
        self._valT = self._val.T.tocsr()
        self._sqT = self._sq.T.tocsr()
        self._indT = self._ind.T.tocsr()

    def rows(self, index) -> np.ndarray:
        index = np.asarray(index, dtype=np.int64)
        val, sq, ind = self._val[index], self._sq[index], self._ind[index]
        n = (ind @ self._indT).toarray()
        sx = (val @ self._indT).toarray()
        sy = (ind @ self._valT).toarray()
        sxx = (sq @ self._indT).toarray()
        syy = (ind @ self._sqT).toarray()
        sxy = (val @ self._valT).toarray()
        vx = n * sxx - sx * sx
        vy = n * syy - sy * sy
        num = n * sxy - sx * sy
        tiny_x = vx <= 1e-12 * np.maximum(n * sxx, 1.0)
        tiny_y = vy <= 1e-12 * np.maximum(n * syy, 1.0)
        ok = (n >= 2) & ~tiny_x & ~tiny_y
        out = np.zeros_like(num)
        out[ok] = num[ok] / np.sqrt(vx[ok] * vy[ok])
        return np.clip(out, -1.0, 1.0)


class FunctionSource:
    """Adapts a pairwise ``sim(i, j)`` callable to the row-source interface."""

    profile_of = None
    kind = None

    def __init__(self, sim, n_entities: int):
        self.sim = sim
        self.n_entities = n_entities

    def rows(self, index) -> np.ndarray:
        return np.array([[self.sim(int(i), j) for j in range(self.n_entities)] for i in index], dtype=np.float64)


def similarity_source(kind, table: AttributeTable = None, ds: RatingDataset = None, axis: str = None):
    """Row source for ``kind``; attribute kinds need ``table``, rating kinds ``ds`` and ``axis``."""
    kind = SimilarityKind(kind)
    if kind is SimilarityKind.RATING_PEARSON:
        if ds is None or axis is None:
            raise ConfigError("rating similarity needs a dataset and an axis")
        return RatingPearsonSource(ds, axis)
    if table is None:
        raise ConfigError(f"{kind.value} similarity needs an attribute table")
    if kind is SimilarityKind.COUPLED:
        return CoupledSource(table)
    return AttributeSource(table, kind)


def similarity_matrix(source) -> np.ndarray:
    """Dense matrix of a source; only sensible for small entity counts."""
    return source.rows(np.arange(source.n_entities))


# --------------------------------------------------------------------------
# Neighbor graphs


@dataclass(frozen=True, eq=False)
class NeighborGraph:
    """Per-entity neighbor lists ``(indices, weights)``, strongest first."""

    n_entities: int
    neighbors: tuple
    normalized: bool = True
    signed: bool = False
    kind: str = None

    def __post_init__(self):
        if len(self.neighbors) != self.n_entities:
            raise ValueError("one neighbor list per entity required")
        lists = []
        for e, (idx, w) in enumerate(self.neighbors):
            idx = np.asarray(idx, dtype=np.int64)
            w = np.asarray(w, dtype=np.float64)
            idx.setflags(write=False)
            w.setflags(write=False)
            if idx.shape != w.shape:
                raise ValueError(f"entity {e}: index/weight length mismatch")
            if np.any(idx == e):
                raise ValueError(f"entity {e}: self-loop")
            if len(idx) and (idx.min() < 0 or idx.max() >= self.n_entities):
                raise ValueError(f"entity {e}: neighbor index out of range")
            if not self.signed and np.any(w < 0):
                raise ValueError(f"entity {e}: negative weight")
            if len(idx) > 1:
                dw, di = np.diff(w), np.diff(idx)
                if np.any((dw > 0) | ((dw == 0) & (di <= 0))):
                    raise ValueError(f"entity {e}: neighbors not in descending-weight order")
            if self.normalized and len(w) and abs(w.sum() - 1.0) > 1e-12:
                raise ValueError(f"entity {e}: weights sum to {w.sum()!r}, expected 1")
            lists.append((idx, w))
        object.__setattr__(self, "neighbors", tuple(lists))

    def __eq__(self, other):
        if not isinstance(other, NeighborGraph):
            return NotImplemented
        return (
            self.n_entities == other.n_entities
            and self.normalized == other.normalized
            and all(
                np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
                for a, b in zip(self.neighbors, other.neighbors)
            )
        )

    __hash__ = None

    def lengths(self) -> np.ndarray:
        return np.array([len(idx) for idx, _ in self.neighbors], dtype=np.int64)

    def to_sparse(self) -> sp.csr_matrix:
        """``W[e, v]`` = weight of ``v`` in the list of ``e``."""
        lengths = self.lengths()
        indptr = np.concatenate([[0], np.cumsum(lengths)])
        if lengths.sum():
            indices = np.concatenate([idx for idx, _ in self.neighbors])
            data = np.concatenate([w for _, w in self.neighbors])
        else:
            indices = np.zeros(0, dtype=np.int64)
            data = np.zeros(0)
        return sp.csr_matrix((data, indices, indptr), shape=(self.n_entities, self.n_entities))

    def write(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for e, (idx, w) in enumerate(self.neighbors):
                pairs = ",".join(f"{i}:{x:.12g}" for i, x in zip(idx.tolist(), w.tolist()))
                fh.write(f"{e}\t{pairs}\n")

    @classmethod
    def read(cls, path, normalized: bool = True) -> "NeighborGraph":
        """Load a graph file; normalized lists are re-normalized after 12-digit rounding."""
        lists = []
        for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            head, _, body = line.partition("\t")
            if int(head) != line_no - 1:
                raise ValueError(f"{path}:{line_no}: entity index {head} out of sequence")
            pairs = [p.split(":") for p in body.split(",") if p]
            idx = np.array([int(a) for a, _ in pairs], dtype=np.int64)
            w = np.array([float(b) for _, b in pairs])
            if normalized and len(w):
                w = w / w.sum()
            lists.append((idx, w))
        signed = any(np.any(w < 0) for _, w in lists)
        return cls(len(lists), tuple(lists), normalized, signed)


def _top_k(row: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest entries; ties go to the smaller index."""
    n = len(row)
    if k >= n:
        idx = np.arange(n)
    else:
        threshold = np.partition(row, n - k)[n - k]
        above = np.flatnonzero(row > threshold)
        ties = np.flatnonzero(row == threshold)[: k - len(above)]
        idx = np.concatenate([above, ties])
    return idx[np.lexsort((idx, -row[idx]))]


def build_neighbor_graph(source, n_entities: int = None, k: int = DEFAULT_K,
                         keep_nonpositive: bool = False, normalize: bool = True,
                         block_size: int = None) -> NeighborGraph:
    """Top-``k`` neighbors of every entity under ``source``, self excluded.

    ``source`` is a row source (see :func:`similarity_source`) or a plain
    ``sim(i, j)`` callable, in which case ``n_entities`` is required.
    Non-positive similarities are dropped unless ``keep_nonpositive``; with
    ``normalize`` each list is divided by its sum.  Rows are computed
    ``block_size`` at a time, by default as many as fit in about 128 MB.
    """
    if k < 1:
        raise ConfigError(f"neighborhood size must be >= 1, got {k}")
    if callable(source) and not hasattr(source, "rows"):
        if n_entities is None:
            raise ConfigError("n_entities is required for a pairwise similarity callable")
        source = FunctionSource(source, n_entities)
    n = source.n_entities if n_entities is None else n_entities
    if n != source.n_entities:
        raise ConfigError(f"source has {source.n_entities} entities, expected {n}")

    profile_of = getattr(source, "profile_of", None)
    if profile_of is None:
        reps = np.arange(n)
        members = [[e] for e in range(n)]
    else:
        order = np.argsort(profile_of, kind="stable")
        bounds = np.flatnonzero(np.diff(profile_of[order])) + 1
        groups = np.split(order, bounds) if n else []
        members = [g.tolist() for g in groups]
        reps = np.array([g[0] for g in groups], dtype=np.int64)

    if block_size is None:
        block_size = max(1, min(256, ROW_BUDGET // max(n, 1)))
    lists = [None] * n
    for b0 in range(0, len(reps), block_size):
        block = reps[b0:b0 + block_size]
        rows = source.rows(block)
        if not np.all(np.isfinite(rows)):
            raise ValueError("similarity source produced non-finite values")
        for r, row in enumerate(rows):
            cand = _top_k(row, min(k + 1, n))
            for e in members[b0 + r]:
                sel = cand[cand != e][:k]
                w = row[sel]
                if not keep_nonpositive:
                    keep = w > 0
                    sel, w = sel[keep], w[keep]
                if normalize and len(w):
                    total = w.sum()
                    if total > 0:
                        w = w / total
                        # division can merge weights one ulp apart; restore the index tie-break
                        order = np.lexsort((sel, -w))
                        sel, w = sel[order], w[order]
                    else:
                        sel, w = sel[:0], w[:0]
                lists[e] = (sel, w)
    kind = getattr(source, "kind", None)
    graph = NeighborGraph(n, tuple(lists), normalize, keep_nonpositive, None if kind is None else SimilarityKind(kind).value)
    lengths = graph.lengths()
    if n:
        logger.info("neighbor graph: %d entities, list length min %d / max %d / mean %.2f",
                    n, lengths.min(), lengths.max(), lengths.mean())
    return graph
