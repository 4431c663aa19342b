"""Command-line pipeline: prepare -> couple -> train / evaluate -> compare.

Stages exchange plain-text files so expensive neighbor graphs can be reused
across method and dimension sweeps.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .coupling import DEFAULT_K, NeighborGraph, SimilarityKind, build_neighbor_graph, similarity_source
from .errors import ConfigError, CoupledMFError, TrainingFailure
from .evaluation import (
    METHODS,
    MF_METHODS,
    GraphCache,
    emit_comparison,
    read_reports_csv,
    run_cv_experiment,
    summary_table,
    write_reports_csv,
)
from .factorization import GRAPH_KIND, TrainConfig, train
from .ingest import kfold_split, parse_bookcrossing, parse_movielens, read_prepared, write_prepared

logger = logging.getLogger("coupledmf")

OUTPUT_ENV = "COUPLEDMF_OUTPUT"


@dataclass
class RunConfig:
    data: str = ""
    output: str = ""
    dims: tuple = (10,)
    lam: float = 0.05
    alpha: float = 0.0
    beta: float = 0.0
    learning_rate: float = 0.005
    max_epochs: int = 200
    convergence_tol: float = 1e-5
    seed: int = 0
    k: int = DEFAULT_K
    methods: tuple = ("CMF",)
    n_folds: int = 5
    max_ratings: int = 0
    graph_dir: str = ""

    def train_config(self, d: int, variant: str = "CMF") -> TrainConfig:
        return TrainConfig(
            d=d, lam=self.lam, alpha=self.alpha, beta=self.beta, learning_rate=self.learning_rate,
            max_epochs=self.max_epochs, convergence_tol=self.convergence_tol, seed=self.seed, variant=variant,
        )


def _ints(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _methods(text):
    methods = tuple(v.strip().upper() for v in text.split(",") if v.strip())
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}")
    return methods


_KEYS = {
    "data": ("data", str),
    "output": ("output", str),
    "d": ("dims", _ints),
    "dims": ("dims", _ints),
    "lambda": ("lam", float),
    "alpha": ("alpha", float),
    "beta": ("beta", float),
    "learning_rate": ("learning_rate", float),
    "max_epochs": ("max_epochs", int),
    "convergence_tol": ("convergence_tol", float),
    "seed": ("seed", int),
    "k": ("k", int),
    "methods": ("methods", _methods),
    "n_folds": ("n_folds", int),
    "max_ratings": ("max_ratings", int),
    "graph_dir": ("graph_dir", str),
}


def load_config(path) -> RunConfig:
    """Read ``key = value`` lines (``#`` starts a comment); unknown keys are rejected."""
    cfg = RunConfig()
    path = Path(path)
    for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (s.strip() for s in line.partition("="))
        if not sep:
            raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
        if key not in _KEYS:
            raise ConfigError(f"{path}:{line_no}: unknown key {key!r}")
        attr, parse = _KEYS[key]
        try:
            setattr(cfg, attr, parse(value))
        except ValueError as exc:
            raise ConfigError(f"{path}:{line_no}: bad value for {key}: {exc}") from None
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig):
    if not cfg.dims:
        raise ConfigError("at least one latent dimension is required")
    for d in cfg.dims:
        cfg.train_config(d)
    if cfg.k < 1:
        raise ConfigError(f"k must be >= 1, got {cfg.k}")
    if cfg.n_folds < 2:
        raise ConfigError(f"n_folds must be >= 2, got {cfg.n_folds}")
    if cfg.max_ratings < 0:
        raise ConfigError("max_ratings must be >= 0")


def _output_dir(flag):
    return Path(flag or os.environ.get(OUTPUT_ENV) or ".")


def _load_data(data_dir, max_ratings=0):
    if not data_dir:
        raise ConfigError("no prepared data directory given (--data or 'data =' in the config)")
    ds, users, items = read_prepared(data_dir)
    if max_ratings:
        ds = ds.head(max_ratings)
    return ds, users, items


def cmd_prepare(args):
    parser = {"movielens": parse_movielens, "bookcrossing": parse_bookcrossing}[args.dataset]
    ds, users, items = parser(args.input)
    if len(ds) == 0:
        raise ConfigError(f"{args.input}: no usable ratings")
    out = _output_dir(args.out)
    write_prepared(out, ds, users, items)
    extra = "".join(f" {k}={v}" for k, v in ds.meta.items() if isinstance(v, int))
    print(f"{ds.name}: users={ds.n_users} items={ds.n_items} ratings={len(ds)}{extra}")
    return 0


def cmd_couple(args):
    if args.k < 1:
        raise ConfigError(f"--k must be >= 1, got {args.k}")
    ds, users, items = _load_data(args.data)
    kind = SimilarityKind(args.kind)
    if kind is SimilarityKind.RATING_PEARSON:
        source = similarity_source(kind, ds=ds, axis="user" if args.entities == "users" else "item")
    else:
        source = similarity_source(kind, table=users if args.entities == "users" else items)
    graph = build_neighbor_graph(source, k=args.k, normalize=not args.raw)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    graph.write(out)
    lengths = graph.lengths()
    print(f"{args.entities} {kind.value} k={args.k}: min={lengths.min()} max={lengths.max()} "
          f"mean={lengths.mean():.2f} -> {out}")
    return 0


def _config_for(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.data:
        cfg.data = args.data
    return cfg


def cmd_train(args):
    cfg = _config_for(args)
    ds, users, items = _load_data(cfg.data, cfg.max_ratings)
    tcfg = cfg.train_config(cfg.dims[0], args.method.upper())
    kind = GRAPH_KIND[tcfg.variant]
    user_graph = item_graph = None
    if kind is not None:
        def graph(entities, path, weight):
            if not weight:
                return None
            if path:
                return NeighborGraph.read(path)
            if kind == "rating-pearson":
                src = similarity_source(kind, ds=ds, axis="user" if entities == "users" else "item")
            else:
                src = similarity_source(kind, table=users if entities == "users" else items)
            return build_neighbor_graph(src, k=cfg.k)

        user_graph = graph("users", args.user_graph, tcfg.alpha)
        item_graph = graph("items", args.item_graph, tcfg.beta)
    out = Path(args.out) if args.out else _output_dir(cfg.output) / f"model-{tcfg.variant}-d{tcfg.d}.tsv"
    out.parent.mkdir(parents=True, exist_ok=True)
    trace_path = out.with_suffix(".trace.tsv")
    try:
        model, trace = train(ds, user_graph, item_graph, tcfg)
    except TrainingFailure as exc:
        if exc.trace is not None:
            exc.trace.write(trace_path, timings=False)
        print(f"training failed: {exc}; trace: {trace_path}", file=sys.stderr)
        return 2
    model.write(out)
    trace.write(trace_path, timings=False)
    print(f"{tcfg.variant} d={tcfg.d}: {len(trace)} epochs, objective {trace.objective[-1] if len(trace) else trace.initial_objective:.6g} -> {out}")
    return 0


def cmd_evaluate(args):
    cfg = _config_for(args)
    if args.methods:
        cfg.methods = _methods(args.methods)
    ds, users, items = _load_data(cfg.data, cfg.max_ratings)
    folds = kfold_split(ds, cfg.n_folds, cfg.seed)
    out_dir = _output_dir(args.out or cfg.output)
    cache = GraphCache(users, items, cfg.k, cfg.graph_dir or None)
    reports = []
    for method in cfg.methods:
        dims = cfg.dims if method in MF_METHODS else cfg.dims[:1]
        for d in dims:
            try:
                reports.append(run_cv_experiment(ds, users, items, method, cfg.train_config(d), folds,
                                                 k=cfg.k, cache=cache))
            except TrainingFailure as exc:
                out_dir.mkdir(parents=True, exist_ok=True)
                trace_path = out_dir / f"failed-{method}-d{d}.trace.tsv"
                if exc.trace is not None:
                    exc.trace.write(trace_path, timings=False)
                print(f"{method} d={d} failed: {exc}; trace: {trace_path}", file=sys.stderr)
                return 2
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = Path(args.out_csv) if args.out_csv else out_dir / "results.csv"
    write_reports_csv(reports, csv_path)
    text = summary_table(reports)
    (out_dir / "summary.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_compare(args):
    reports = []
    for path in args.reports:
        reports.extend(read_reports_csv(path))
    baselines = [b.strip().upper() for b in args.baselines.split(",") if b.strip()]
    table = emit_comparison(reports, baselines, args.target.upper())
    sys.stdout.write(table.text)
    if args.out_csv:
        Path(args.out_csv).write_text(table.csv, encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coupledmf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="parse a raw dataset into interchange files")
    p.add_argument("--dataset", choices=("movielens", "bookcrossing"), required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("couple", help="build a top-K neighbor graph")
    p.add_argument("--data", required=True, help="prepared data directory")
    p.add_argument("--entities", choices=("users", "items"), required=True)
    p.add_argument("--kind", choices=[k.value for k in SimilarityKind], default="coupled")
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--raw", action="store_true", help="keep unnormalized weights")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_couple)

    p = sub.add_parser("train", help="train one factorization model")
    p.add_argument("--config")
    p.add_argument("--data")
    p.add_argument("--method", default="CMF")
    p.add_argument("--user-graph")
    p.add_argument("--item-graph")
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="k-fold cross-validated comparison of methods")
    p.add_argument("--config")
    p.add_argument("--data")
    p.add_argument("--methods", help="comma-separated, e.g. CMF,PMF,RSVD,ISMF,UBCF,IBCF,PSMF,CSMF,JSMF")
    p.add_argument("--out", help="output directory")
    p.add_argument("--out-csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="comparison table from evaluation CSVs")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--target", default="CMF")
    p.add_argument("--baselines", default="PMF,ISMF,RSVD")
    p.add_argument("--out-csv")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except (CoupledMFError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
