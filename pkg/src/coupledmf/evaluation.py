"""Cross-validated MAE/RMSE experiments and comparison tables."""

from __future__ import annotations

import csv
import io
import logging
import math
import statistics
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import neighborhood
from .coupling import DEFAULT_K, NeighborGraph, build_neighbor_graph, similarity_source
from .errors import ConfigError, TrainingFailure
from .factorization import GRAPH_KIND, TrainConfig, train
from .ingest import AttributeTable, FoldAssignment, RatingDataset

logger = logging.getLogger(__name__)

MF_METHODS = ("CMF", "PMF", "RSVD", "ISMF", "PSMF", "CSMF", "JSMF")
CF_METHODS = ("UBCF", "IBCF")
METHODS = MF_METHODS + CF_METHODS + ("MEAN",)
CSV_HEADER = ("dataset", "method", "d", "fold", "mae", "rmse")


def _check_lengths(pred, truth):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise ValueError(f"prediction/truth length mismatch: {pred.shape} vs {truth.shape}")
    if len(pred) == 0:
        raise ValueError("metrics need at least one prediction")
    return pred, truth


def mae(pred, truth) -> float:
    pred, truth = _check_lengths(pred, truth)
    return float(np.mean(np.abs(pred - truth)))


def rmse(pred, truth) -> float:
    pred, truth = _check_lengths(pred, truth)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


@dataclass
class EvalReport:
    dataset: str
    method: str
    d: int | None
    fold_mae: list
    fold_rmse: list
    config: dict = field(default_factory=dict)
    folds_digest: str | None = None
    traces: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if len(self.fold_mae) != len(self.fold_rmse):
            raise ValueError("per-fold MAE and RMSE lists differ in length")
        for f, (a, r) in enumerate(zip(self.fold_mae, self.fold_rmse)):
            if a > r * (1 + 1e-12):
                raise ValueError(f"fold {f}: MAE {a} exceeds RMSE {r}")

    @property
    def n_folds(self) -> int:
        return len(self.fold_mae)

    @property
    def mean_mae(self) -> float:
        return statistics.fmean(self.fold_mae)

    @property
    def mean_rmse(self) -> float:
        return statistics.fmean(self.fold_rmse)

    @property
    def std_mae(self) -> float:
        return statistics.stdev(self.fold_mae) if self.n_folds > 1 else 0.0

    @property
    def std_rmse(self) -> float:
        return statistics.stdev(self.fold_rmse) if self.n_folds > 1 else 0.0

    def traces_monotone(self) -> bool:
        return all(t.is_non_increasing() for t in self.traces)

    def csv_rows(self):
        d = "" if self.d is None else self.d
        for f, (a, r) in enumerate(zip(self.fold_mae, self.fold_rmse)):
            yield (self.dataset, self.method, d, f, repr(float(a)), repr(float(r)))


class GraphCache:
    """Attribute-similarity graphs, built once per dataset and optionally stored on disk."""

    def __init__(self, user_table: AttributeTable, item_table: AttributeTable, k: int = DEFAULT_K,
                 directory=None):
        self.user_table = user_table
        self.item_table = item_table
        self.k = k
        self.directory = Path(directory) if directory else None
        self._graphs = {}

    def get(self, entities: str, kind: str) -> NeighborGraph:
        key = (entities, kind)
        if key not in self._graphs:
            path = None
            if self.directory is not None:
                path = self.directory / f"{entities}-{kind}-k{self.k}.tsv"
            if path is not None and path.exists():
                graph = NeighborGraph.read(path)
            else:
                table = self.user_table if entities == "users" else self.item_table
                graph = build_neighbor_graph(similarity_source(kind, table=table), k=self.k)
                if path is not None:
                    path.parent.mkdir(parents=True, exist_ok=True)
                    graph.write(path)
            self._graphs[key] = graph
        return self._graphs[key]


def _rating_graph(train_ds, axis, k, normalize):
    return build_neighbor_graph(similarity_source("rating-pearson", ds=train_ds, axis=axis), k=k, normalize=normalize)


def _predict_fold(method, train_ds, test_ds, user_table, item_table, cfg, k, cache):
    if method == "MEAN":
        pred = np.full(len(test_ds), train_ds.global_mean)
        return np.clip(pred, train_ds.scale_min, train_ds.scale_max), None
    if method in CF_METHODS:
        axis = "user" if method == "UBCF" else "item"
        graph = _rating_graph(train_ds, axis, k, normalize=False)
        return neighborhood.predict_many(method, train_ds, graph, test_ds.users, test_ds.items), None
    tcfg = replace(cfg, variant=method)
    kind = GRAPH_KIND[method]
    user_graph = item_graph = None
    if kind == "rating-pearson":
        user_graph = _rating_graph(train_ds, "user", k, normalize=True) if tcfg.alpha else None
        item_graph = _rating_graph(train_ds, "item", k, normalize=True) if tcfg.beta else None
    elif kind is not None:
        user_graph = cache.get("users", kind) if tcfg.alpha else None
        item_graph = cache.get("items", kind) if tcfg.beta else None
    model, trace = train(train_ds, user_graph, item_graph, tcfg)
    if not trace.is_non_increasing():
        raise TrainingFailure("recorded objective increased", trace)
    return model.predict(test_ds.users, test_ds.items, clamp=True), trace


def run_cv_experiment(ds: RatingDataset, user_table: AttributeTable, item_table: AttributeTable,
                      method: str, cfg: TrainConfig, folds: FoldAssignment, *, k: int = DEFAULT_K,
                      cache: GraphCache = None) -> EvalReport:
    """Train on each fold's complement, score clamped predictions on the fold.

    Rating-based neighbor graphs are rebuilt from each fold's training part;
    attribute graphs come from ``cache`` (built on demand if omitted).
    """
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
    if len(folds.fold_of) != len(ds):
        raise ConfigError("fold assignment does not match the dataset")
    if cache is None:
        cache = GraphCache(user_table, item_table, k)
    fold_mae, fold_rmse, traces = [], [], []
    for f in range(folds.n_folds):
        train_ds = ds.subset(folds.train_indices(f))
        test_ds = ds.subset(folds.test_indices(f))
        try:
            pred, trace = _predict_fold(method, train_ds, test_ds, user_table, item_table, cfg, k, cache)
        except TrainingFailure as exc:
            raise TrainingFailure(str(exc), exc.trace, fold=f) from exc
        if trace is not None:
            traces.append(trace)
        fold_mae.append(mae(pred, test_ds.ratings))
        fold_rmse.append(rmse(pred, test_ds.ratings))
        logger.info("%s %s fold %d: MAE %.4f RMSE %.4f", ds.name, method, f, fold_mae[-1], fold_rmse[-1])
    echo = asdict(replace(cfg, variant=method)) if method in MF_METHODS else {}
    echo["k"] = k
    return EvalReport(
        dataset=ds.name,
        method=method,
        d=cfg.d if method in MF_METHODS else None,
        fold_mae=fold_mae,
        fold_rmse=fold_rmse,
        config=echo,
        folds_digest=folds.digest,
        traces=traces,
    )


# --------------------------------------------------------------------------
# Report files and tables


def write_reports_csv(reports, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for report in reports:
            writer.writerows(report.csv_rows())


def read_reports_csv(path) -> list:
    grouped = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ConfigError(f"{path}: expected header {','.join(CSV_HEADER)}")
        for row in reader:
            d = int(row["d"]) if row["d"] else None
            key = (row["dataset"], row["method"], d)
            grouped.setdefault(key, []).append((int(row["fold"]), float(row["mae"]), float(row["rmse"])))
    reports = []
    for (dataset, method, d), rows in grouped.items():
        rows.sort()
        reports.append(EvalReport(dataset, method, d, [r[1] for r in rows], [r[2] for r in rows]))
    return reports


def summary_table(reports) -> str:
    lines = [f"{'dataset':<14}{'method':<8}{'d':>5}  {'MAE':>17}  {'RMSE':>17}"]
    for r in reports:
        d = "-" if r.d is None else str(r.d)
        lines.append(
            f"{r.dataset:<14}{r.method:<8}{d:>5}  {r.mean_mae:.4f} +/- {r.std_mae:.4f}  {r.mean_rmse:.4f} +/- {r.std_rmse:.4f}"
        )
    return "\n".join(lines) + "\n"


def improvement(baseline: float, target: float) -> float:
    """Percentage by which ``target`` improves on ``baseline``, relative to ``target``."""
    if target == 0:
        return math.inf if baseline != target else 0.0
    return (baseline - target) / target * 100.0


@dataclass
class Comparison:
    text: str
    csv: str

    def __str__(self):
        return self.text


def emit_comparison(reports, baselines, target: str) -> Comparison:
    """Side-by-side mean MAE/RMSE of ``baselines`` against ``target`` with improvement percentages.

    One block of rows per latent dimension of the target.  A baseline is
    matched on the same dimension, or on its dimension-free report (memory
    based methods).
    """
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to compare")
    if len({r.dataset for r in reports}) != 1:
        raise ValueError("reports come from different datasets")
    if len({r.n_folds for r in reports}) != 1:
        raise ValueError("reports use different numbers of folds")
    digests = {r.folds_digest for r in reports if r.folds_digest is not None}
    if len(digests) > 1:
        raise ValueError("reports were produced on different fold assignments")
    by_key = {(r.method, r.d): r for r in reports}
    targets = sorted((r for r in reports if r.method == target), key=lambda r: -1 if r.d is None else -r.d)
    if not targets:
        raise ValueError(f"no report for target method {target!r}")
    dataset = reports[0].dataset

    header = ["Dim", "Metric", *(f"{b} (Improve)" for b in baselines), target]
    table = [header]
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["dataset", "d", "metric", "method", "value", "improve_pct"])
    for t in targets:
        dim = "-" if t.d is None else f"{t.d}D"
        for metric in ("MAE", "RMSE"):
            tv = t.mean_mae if metric == "MAE" else t.mean_rmse
            row = [dim, metric]
            for b in baselines:
                rep = by_key.get((b, t.d)) or by_key.get((b, None))
                if rep is None:
                    raise ValueError(f"no report for baseline {b!r} at d={t.d}")
                bv = rep.mean_mae if metric == "MAE" else rep.mean_rmse
                pct = improvement(bv, tv)
                row.append(f"{bv!r} ({pct:.2f}%)")
                writer.writerow([dataset, "" if t.d is None else t.d, metric, b, repr(bv), f"{pct:.2f}"])
            row.append(f"**{tv!r}**")
            writer.writerow([dataset, "" if t.d is None else t.d, metric, target, repr(tv), ""])
            table.append(row)
    widths = [max(len(r[c]) for r in table) for c in range(len(header))]
    text = "\n".join("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in table)
    return Comparison(f"{dataset}\n{text}\n", out.getvalue())
