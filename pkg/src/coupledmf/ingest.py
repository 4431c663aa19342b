"""Dataset types, raw-dump parsers, discretization and k-fold splitting.

Two raw formats are understood:

* MovieLens-1M (``ratings.dat``, ``users.dat``, ``movies.dat``), ``::``-delimited.
* Book-Crossing (``BX-Users.csv``, ``BX-Books.csv``, ``BX-Book-Ratings.csv``),
  ``;``-delimited CSV with double-quoted fields in ISO-8859-1.

Both parsers return a :class:`RatingDataset` plus one :class:`AttributeTable`
for users and one for items.  Entities listed in the attribute files are kept
even when they never rate / are never rated.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DecodeError, IntegrityError, ParseError

logger = logging.getLogger(__name__)

MISSING = "<NA>"
MISSING_BIN = -1

BX_AGE_EDGES = tuple(range(0, 101, 10))
BX_YEAR_EDGES = tuple(range(1900, 2011, 10))


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RatingDataset:
    """Observed ratings as parallel ``users``/``items``/``ratings`` arrays.

    Entries keep their file order (after keep-last deduplication), which
    :meth:`head` relies on.
    """

    n_users: int
    n_items: int
    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    scale_min: float
    scale_max: float
    user_ids: tuple = ()
    item_ids: tuple = ()
    name: str = ""
    meta: dict = field(default_factory=dict)
    global_mean: float = field(init=False)

    def __post_init__(self):
        users = _frozen(self.users, np.int64)
        items = _frozen(self.items, np.int64)
        ratings = _frozen(self.ratings, np.float64)
        if not (users.shape == items.shape == ratings.shape) or users.ndim != 1:
            raise ValueError("users, items and ratings must be 1-d arrays of equal length")
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "ratings", ratings)
        object.__setattr__(self, "user_ids", tuple(self.user_ids) or tuple(str(u) for u in range(self.n_users)))
        object.__setattr__(self, "item_ids", tuple(self.item_ids) or tuple(str(i) for i in range(self.n_items)))
        if len(self.user_ids) != self.n_users or len(self.item_ids) != self.n_items:
            raise ValueError("id maps must match n_users / n_items")
        if len(users):
            if users.min() < 0 or users.max() >= self.n_users:
                raise ValueError("user index out of range")
            if items.min() < 0 or items.max() >= self.n_items:
                raise ValueError("item index out of range")
            if ratings.min() < self.scale_min or ratings.max() > self.scale_max:
                raise ValueError("rating outside the declared scale")
            keys = users * self.n_items + items
            if len(np.unique(keys)) != len(keys):
                raise ValueError("duplicate (user, item) entry")
        mean = math.fsum(ratings.tolist()) / len(ratings) if len(ratings) else float("nan")
        object.__setattr__(self, "global_mean", mean)

    def __len__(self):
        return len(self.ratings)

    def __eq__(self, other):
        if not isinstance(other, RatingDataset):
            return NotImplemented
        return (
            self.n_users == other.n_users
            and self.n_items == other.n_items
            and np.array_equal(self.users, other.users)
            and np.array_equal(self.items, other.items)
            and np.array_equal(self.ratings, other.ratings)
            and self.scale_min == other.scale_min
            and self.scale_max == other.scale_max
            and self.user_ids == other.user_ids
            and self.item_ids == other.item_ids
        )

    __hash__ = None

    def entries(self):
        """Yield ``(user_idx, item_idx, rating)`` tuples in stored order."""
        return zip(self.users.tolist(), self.items.tolist(), self.ratings.tolist())

    def subset(self, index, name=None) -> "RatingDataset":
        """Dataset restricted to the selected entries; entity maps unchanged."""
        index = np.asarray(index)
        return RatingDataset(
            n_users=self.n_users,
            n_items=self.n_items,
            users=self.users[index],
            items=self.items[index],
            ratings=self.ratings[index],
            scale_min=self.scale_min,
            scale_max=self.scale_max,
            user_ids=self.user_ids,
            item_ids=self.item_ids,
            name=self.name if name is None else name,
            meta=dict(self.meta),
        )

    def head(self, n: int) -> "RatingDataset":
        """First ``n`` entries in file order."""
        return self.subset(np.arange(min(n, len(self))))

    def user_means(self) -> np.ndarray:
        """Per-user mean rating (NaN for users without entries)."""
        return _grouped_mean(self.users, self.ratings, self.n_users)

    def item_means(self) -> np.ndarray:
        return _grouped_mean(self.items, self.ratings, self.n_items)


def _grouped_mean(index, values, n):
    sums = np.bincount(index, weights=values, minlength=n)
    counts = np.bincount(index, minlength=n)
    with np.errstate(invalid="ignore", divide="ignore"):
        return sums / counts


@dataclass(frozen=True, eq=False)
class AttributeTable:
    """Categorical attributes of one entity class.

    ``cells[e, k]`` is the value-id of entity ``e`` on attribute ``k``.
    Value-id 0 is always the missing sentinel; the remaining ids follow the
    sorted order of the value strings so tables are reproducible.
    """

    attribute_names: tuple
    cells: np.ndarray
    vocab: tuple
    entity_ids: tuple = ()

    def __post_init__(self):
        cells = _frozen(self.cells, np.int64)
        if cells.ndim != 2 or cells.shape[1] != len(self.attribute_names):
            raise ValueError("cells must be n_entities x n_attributes")
        vocab = tuple(tuple(v) for v in self.vocab)
        if len(vocab) != cells.shape[1]:
            raise ValueError("one vocabulary per attribute required")
        for k, v in enumerate(vocab):
            if not v or v[0] != MISSING:
                raise ValueError(f"attribute {k}: vocab must start with the missing sentinel")
            if len(set(v)) != len(v):
                raise ValueError(f"attribute {k}: vocab has duplicate values")
            if len(cells) and (cells[:, k].min() < 0 or cells[:, k].max() >= len(v)):
                raise ValueError(f"attribute {k}: value-id outside vocab")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "vocab", vocab)
        object.__setattr__(self, "attribute_names", tuple(self.attribute_names))
        ids = tuple(self.entity_ids) or tuple(str(e) for e in range(len(cells)))
        if len(ids) != len(cells):
            raise ValueError("entity_ids must match the number of rows")
        object.__setattr__(self, "entity_ids", ids)

    @classmethod
    def from_rows(cls, names: Sequence[str], rows: Iterable[Sequence], entity_ids=()) -> "AttributeTable":
        """Build a table from rows of value strings (``None`` means missing)."""
        rows = [[MISSING if v is None or v == "" else str(v) for v in row] for row in rows]
        names = tuple(names)
        for r, row in enumerate(rows):
            if len(row) != len(names):
                raise ValueError(f"row {r} has {len(row)} values, expected {len(names)}")
        vocab = []
        cells = np.zeros((len(rows), len(names)), dtype=np.int64)
        for k in range(len(names)):
            values = sorted({row[k] for row in rows} - {MISSING})
            v = (MISSING, *values)
            lookup = {s: i for i, s in enumerate(v)}
            for r, row in enumerate(rows):
                cells[r, k] = lookup[row[k]]
            vocab.append(v)
        return cls(names, cells, tuple(vocab), tuple(entity_ids))

    def __eq__(self, other):
        if not isinstance(other, AttributeTable):
            return NotImplemented
        return (
            self.attribute_names == other.attribute_names
            and self.vocab == other.vocab
            and self.entity_ids == other.entity_ids
            and np.array_equal(self.cells, other.cells)
        )

    __hash__ = None

    @property
    def n_entities(self) -> int:
        return self.cells.shape[0]

    @property
    def n_attributes(self) -> int:
        return self.cells.shape[1]

    @property
    def missing_ids(self) -> tuple:
        return (0,) * self.n_attributes

    def value(self, entity: int, attr: int) -> str:
        return self.vocab[attr][self.cells[entity, attr]]

    def value_id(self, attr: int, value: str) -> int:
        try:
            return self.vocab[attr].index(value)
        except ValueError:
            raise KeyError(f"{value!r} not in vocabulary of {self.attribute_names[attr]!r}") from None

    def row(self, entity: int) -> tuple:
        return tuple(self.value(entity, k) for k in range(self.n_attributes))

    def frequencies(self, attr: int) -> np.ndarray:
        """Number of entities taking each value-id of ``attr``."""
        return np.bincount(self.cells[:, attr], minlength=len(self.vocab[attr]))

    def one_hot(self, occurring_only: bool = False) -> np.ndarray:
        """Entities as 0/1 vectors over the concatenated vocabularies.

        With ``occurring_only`` the columns of values no entity takes are dropped.
        """
        offsets = np.cumsum([0] + [len(v) for v in self.vocab])
        out = np.zeros((self.n_entities, offsets[-1]))
        rows = np.arange(self.n_entities)
        for k in range(self.n_attributes):
            out[rows, offsets[k] + self.cells[:, k]] = 1.0
        if occurring_only:
            out = out[:, out.any(axis=0)]
        return out


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    n_folds: int
    fold_of: np.ndarray
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "fold_of", _frozen(self.fold_of, np.int64))

    def __eq__(self, other):
        if not isinstance(other, FoldAssignment):
            return NotImplemented
        return (
            self.n_folds == other.n_folds
            and self.seed == other.seed
            and np.array_equal(self.fold_of, other.fold_of)
        )

    __hash__ = None

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != fold)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold_of, minlength=self.n_folds)

    @property
    def digest(self) -> str:
        h = hashlib.sha1(self.fold_of.astype("<i8").tobytes())
        return f"{self.n_folds}:{self.seed}:{h.hexdigest()[:16]}"


def kfold_split(ds: RatingDataset, k: int = 5, seed: int = 0) -> FoldAssignment:
    """Balanced random partition of the entries of ``ds`` into ``k`` folds."""
    n = len(ds)
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    if n == 0:
        raise ConfigError("cannot split an empty dataset")
    if k > n:
        raise ConfigError(f"k={k} exceeds the number of entries ({n})")
    perm = np.random.default_rng(seed).permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[perm] = np.arange(n) % k
    return FoldAssignment(k, fold_of, seed)


def discretize_numeric(column: Sequence, edges: Sequence[float]) -> np.ndarray:
    """Map each value to the index of the half-open bin ``[edges[b], edges[b+1])``.

    Absent values (``None``/NaN) and values outside every bin map to
    :data:`MISSING_BIN`.
    """
    edges = np.asarray(edges, dtype=np.float64)
    if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise ConfigError("bin edges must be strictly increasing with at least two edges")
    values = np.array([np.nan if v is None else float(v) for v in column], dtype=np.float64)
    out = np.searchsorted(edges, values, side="right") - 1
    bad = np.isnan(values) | (out < 0) | (out >= len(edges) - 1)
    out[bad] = MISSING_BIN
    return out.astype(np.int64)


def bin_label(edges: Sequence[float], b: int):
    if b == MISSING_BIN:
        return None
    return f"[{edges[b]:g},{edges[b + 1]:g})"


# --------------------------------------------------------------------------
# MovieLens-1M


def _read_text(path: Path, encoding: str) -> str:
    raw = path.read_bytes()
    try:
        return raw.decode(encoding)
    except UnicodeDecodeError as exc:
        raise DecodeError(path, exc.start, exc.reason) from None


def _dat_lines(path: Path, n_fields: int, encoding="iso-8859-1"):
    for line_no, line in enumerate(_read_text(path, encoding).splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("::")
        if len(fields) != n_fields:
            raise ParseError(path, line_no, f"expected {n_fields} '::'-separated fields, got {len(fields)}")
        yield line_no, fields


def _index(ids, path, what):
    lookup = {}
    for i, eid in enumerate(ids):
        if eid in lookup:
            raise IntegrityError(f"{path}: duplicate {what} id {eid!r}")
        lookup[eid] = i
    return lookup


def parse_movielens(directory) -> tuple[RatingDataset, AttributeTable, AttributeTable]:
    """Parse a MovieLens-1M directory.

    User attributes are gender, age code, occupation code and zip code; the
    item attribute is the full pipe-joined genre string taken as one value.
    """
    directory = Path(directory)
    user_rows, user_ids = [], []
    for _, (uid, gender, age, occupation, zipcode) in _dat_lines(directory / "users.dat", 5):
        user_ids.append(uid)
        user_rows.append((gender, age, occupation, zipcode))
    item_rows, item_ids = [], []
    for _, (mid, _title, genres) in _dat_lines(directory / "movies.dat", 3):
        item_ids.append(mid)
        item_rows.append((genres,))
    users = AttributeTable.from_rows(("gender", "age", "occupation", "zipcode"), user_rows, user_ids)
    items = AttributeTable.from_rows(("genre",), item_rows, item_ids)

    ratings_path = directory / "ratings.dat"
    u_index = _index(user_ids, directory / "users.dat", "user")
    i_index = _index(item_ids, directory / "movies.dat", "movie")
    seen = {}
    for line_no, (uid, mid, value, _ts) in _dat_lines(ratings_path, 4):
        try:
            rating = float(value)
        except ValueError:
            raise ParseError(ratings_path, line_no, f"rating {value!r} is not a number") from None
        if not 1.0 <= rating <= 5.0:
            raise ParseError(ratings_path, line_no, f"rating {rating} outside [1, 5]")
        if uid not in u_index:
            raise IntegrityError(f"{ratings_path}:{line_no}: unknown user id {uid!r}")
        if mid not in i_index:
            raise IntegrityError(f"{ratings_path}:{line_no}: unknown movie id {mid!r}")
        key = (u_index[uid], i_index[mid])
        seen.pop(key, None)
        seen[key] = rating
    ds = _dataset_from(seen, user_ids, item_ids, 1.0, 5.0, "movielens")
    logger.info("movielens: %d users, %d items, %d ratings", ds.n_users, ds.n_items, len(ds))
    return ds, users, items


def _dataset_from(entries: dict, user_ids, item_ids, lo, hi, name, meta=None):
    keys = list(entries)
    return RatingDataset(
        n_users=len(user_ids),
        n_items=len(item_ids),
        users=[k[0] for k in keys],
        items=[k[1] for k in keys],
        ratings=list(entries.values()),
        scale_min=lo,
        scale_max=hi,
        user_ids=tuple(user_ids),
        item_ids=tuple(item_ids),
        name=name,
        meta=meta or {},
    )


def write_movielens(directory, ds: RatingDataset, users: AttributeTable, items: AttributeTable):
    """Write tables back in MovieLens-1M line format (timestamps and titles are not kept)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    def cell(table, e, k):
        v = table.value(e, k)
        return "" if v == MISSING else v

    with open(directory / "users.dat", "w", encoding="iso-8859-1", newline="\n") as fh:
        for e, uid in enumerate(users.entity_ids):
            fh.write("::".join([uid] + [cell(users, e, k) for k in range(4)]) + "\n")
    with open(directory / "movies.dat", "w", encoding="iso-8859-1", newline="\n") as fh:
        for e, mid in enumerate(items.entity_ids):
            fh.write(f"{mid}::{mid}::{cell(items, e, 0)}\n")
    with open(directory / "ratings.dat", "w", encoding="iso-8859-1", newline="\n") as fh:
        for u, i, r in ds.entries():
            fh.write(f"{ds.user_ids[u]}::{ds.item_ids[i]}::{r:g}::0\n")


# --------------------------------------------------------------------------
# Book-Crossing


def _csv_rows(path: Path, encoding: str):
    text = _read_text(path, encoding)
    reader = csv.reader(io.StringIO(text, newline=""), delimiter=";", quotechar='"', doublequote=True)
    header = next(reader, None)
    if header is None:
        return
    for row in reader:
        if not row:
            continue
        yield reader.line_num, row


def _parse_number(text):
    try:
        v = float(text)
    except (TypeError, ValueError):
        return None
    return v if math.isfinite(v) else None


def parse_bookcrossing(directory, encoding: str = "iso-8859-1") -> tuple[RatingDataset, AttributeTable, AttributeTable]:
    """Parse a Book-Crossing directory, keeping explicit ratings on known ISBNs.

    The public dump has no gender column, so users are described by decade
    age bin and the country taken from the last comma-separated component of
    ``Location``.  Filter counts are stored in ``ds.meta`` and logged.
    """
    directory = Path(directory)
    users_path = directory / "BX-Users.csv"
    books_path = directory / "BX-Books.csv"
    ratings_path = directory / "BX-Book-Ratings.csv"

    user_ids, ages, countries = [], [], []
    for line_no, row in _csv_rows(users_path, encoding):
        if len(row) < 3:
            raise ParseError(users_path, line_no, f"expected 3 fields, got {len(row)}")
        location = ";".join(row[1:-1])
        user_ids.append(row[0])
        ages.append(_parse_number(row[-1]))
        country = location.rsplit(",", 1)[-1].strip().lower()
        countries.append(country or None)
    age_bins = discretize_numeric(ages, BX_AGE_EDGES)
    users = AttributeTable.from_rows(
        ("age", "country"),
        ((bin_label(BX_AGE_EDGES, b), c) for b, c in zip(age_bins, countries)),
        user_ids,
    )

    item_ids, authors, years, publishers = [], [], [], []
    for line_no, row in _csv_rows(books_path, encoding):
        if len(row) < 5:
            raise ParseError(books_path, line_no, f"expected at least 5 fields, got {len(row)}")
        item_ids.append(row[0])
        authors.append(_clean(row[2]))
        years.append(_parse_number(row[3]))
        publishers.append(_clean(row[4]))
    year_bins = discretize_numeric(years, BX_YEAR_EDGES)
    items = AttributeTable.from_rows(
        ("book_author", "year_of_publication", "publisher"),
        ((a, bin_label(BX_YEAR_EDGES, b), p) for a, b, p in zip(authors, year_bins, publishers)),
        item_ids,
    )

    u_index = _index(user_ids, users_path, "user")
    i_index = _index(item_ids, books_path, "ISBN")
    raw = implicit = invalid_isbn = unknown_user = 0
    seen = {}
    for line_no, row in _csv_rows(ratings_path, encoding):
        if len(row) != 3:
            raise ParseError(ratings_path, line_no, f"expected 3 fields, got {len(row)}")
        raw += 1
        uid, isbn, value = row
        rating = _parse_number(value)
        if rating is None or not 0 <= rating <= 10:
            raise ParseError(ratings_path, line_no, f"rating {value!r} is not in 0..10")
        if rating == 0:
            implicit += 1
            continue
        if isbn not in i_index:
            invalid_isbn += 1
            continue
        if uid not in u_index:
            unknown_user += 1
            continue
        key = (u_index[uid], i_index[isbn])
        seen.pop(key, None)
        seen[key] = rating
    meta = {
        "raw_ratings": raw,
        "implicit_dropped": implicit,
        "invalid_isbn_dropped": invalid_isbn,
        "unknown_user_dropped": unknown_user,
        "user_attribute_substitution": "gender unavailable; using age bin and location country",
    }
    ds = _dataset_from(seen, user_ids, item_ids, 1.0, 10.0, "bookcrossing", meta)
    logger.info(
        "bookcrossing: raw ratings %d, retained %d (implicit %d, invalid ISBN %d, unknown user %d)",
        raw, len(ds), implicit, invalid_isbn, unknown_user,
    )
    logger.info("bookcrossing: user gender not available, substituted location country")
    return ds, users, items


def _clean(text):
    text = " ".join(text.split())
    return text or None


# --------------------------------------------------------------------------
# Canonical tab-separated interchange


def _tsv_value(text: str) -> str:
    return " ".join(str(text).replace("\t", " ").splitlines())


def _write_table(path: Path, table: AttributeTable):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(["id", *table.attribute_names]) + "\n")
        for e, eid in enumerate(table.entity_ids):
            fh.write("\t".join(_tsv_value(v) for v in (eid, *table.row(e))) + "\n")


def _read_table(path: Path) -> AttributeTable:
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ParseError(path, 1, "missing header")
    header = lines[0].split("\t")
    ids, rows = [], []
    for line_no, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) != len(header):
            raise ParseError(path, line_no, f"expected {len(header)} fields, got {len(fields)}")
        ids.append(fields[0])
        rows.append([None if v == MISSING else v for v in fields[1:]])
    return AttributeTable.from_rows(header[1:], rows, ids)


def write_prepared(directory, ds: RatingDataset, users: AttributeTable, items: AttributeTable):
    """Write the canonical interchange files used between CLI stages."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "dataset.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("key\tvalue\n")
        fh.write(f"name\t{ds.name}\n")
        fh.write(f"scale_min\t{ds.scale_min!r}\n")
        fh.write(f"scale_max\t{ds.scale_max!r}\n")
        for key in sorted(ds.meta):
            fh.write(f"meta.{key}\t{_tsv_value(ds.meta[key])}\n")
    with open(directory / "ratings.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("user_id\titem_id\trating\n")
        for u, i, r in ds.entries():
            fh.write(f"{_tsv_value(ds.user_ids[u])}\t{_tsv_value(ds.item_ids[i])}\t{r!r}\n")
    _write_table(directory / "users.tsv", users)
    _write_table(directory / "items.tsv", items)


def read_prepared(directory) -> tuple[RatingDataset, AttributeTable, AttributeTable]:
    directory = Path(directory)
    info = {}
    path = directory / "dataset.tsv"
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines()[1:], start=2):
        key, sep, value = line.partition("\t")
        if not sep:
            raise ParseError(path, line_no, "expected key<TAB>value")
        info[key] = value
    users = _read_table(directory / "users.tsv")
    items = _read_table(directory / "items.tsv")
    u_index = _index(users.entity_ids, directory / "users.tsv", "user")
    i_index = _index(items.entity_ids, directory / "items.tsv", "item")
    entries = {}
    path = directory / "ratings.tsv"
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines()[1:], start=2):
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError(path, line_no, f"expected 3 fields, got {len(fields)}")
        uid, iid, value = fields
        if uid not in u_index or iid not in i_index:
            raise IntegrityError(f"{path}:{line_no}: unknown entity in rating")
        try:
            entries[(u_index[uid], i_index[iid])] = float(value)
        except ValueError:
            raise ParseError(path, line_no, f"rating {value!r} is not a number") from None
    meta = {k[5:]: v for k, v in info.items() if k.startswith("meta.")}
    ds = _dataset_from(
        entries, users.entity_ids, items.entity_ids,
        float(info["scale_min"]), float(info["scale_max"]), info.get("name", ""), meta,
    )
    return ds, users, items
