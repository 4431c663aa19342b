"""Coupling-regularized matrix factorization trained by full-batch gradient descent.

Objective for a model ``R_hat = r_m + P Q^T`` with user graph weights ``W_U``
and item graph weights ``W_I`` (row ``e`` holds the neighbor weights of ``e``):

    L = 1/2 sum_K (R - R_hat)^2 + lam/2 (|P|_F^2 + |Q|_F^2)
        + alpha/2 |(I - W_U) P|_F^2 + beta/2 |(I - W_I) Q|_F^2

so ``dL/dP = E Q + lam P + alpha (I - W_U)^T (I - W_U) P`` where ``E`` is the
sparse residual matrix; the transpose term is the reverse-neighborhood sum.
All MF-family baselines are parameterizations of this one trainer.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, NumericError, TrainingFailure
from .ingest import RatingDataset

logger = logging.getLogger(__name__)

VARIANTS = ("CMF", "PMF", "RSVD", "ISMF", "PSMF", "CSMF", "JSMF")

# similarity kind each variant expects for its user/item graphs
GRAPH_KIND = {
    "CMF": "coupled",
    "ISMF": "rating-pearson",
    "PSMF": "pearson",
    "CSMF": "cosine",
    "JSMF": "jaccard",
    "PMF": None,
    "RSVD": None,
}

INIT_SCALE = 0.05
MIN_STEP = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    d: int = 10
    lam: float = 0.05
    alpha: float = 0.0
    beta: float = 0.0
    learning_rate: float = 0.005
    max_epochs: int = 200
    convergence_tol: float = 1e-5
    seed: int = 0
    variant: str = "CMF"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {', '.join(VARIANTS)}")
        if not (isinstance(self.d, int) and self.d >= 1):
            raise ConfigError(f"d must be a positive integer, got {self.d!r}")
        for name in ("lam", "alpha", "beta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be finite and >= 0, got {v!r}")
        if not (math.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate!r}")
        if not (math.isfinite(self.convergence_tol) and self.convergence_tol > 0):
            raise ConfigError(f"convergence_tol must be > 0, got {self.convergence_tol!r}")
        if not (isinstance(self.max_epochs, int) and self.max_epochs >= 0):
            raise ConfigError(f"max_epochs must be a non-negative integer, got {self.max_epochs!r}")

    @property
    def uses_graphs(self) -> bool:
        return GRAPH_KIND[self.variant] is not None

    def effective(self) -> "TrainConfig":
        """Config with the coupling weights zeroed for graph-free variants."""
        if self.uses_graphs:
            return self
        return replace(self, alpha=0.0, beta=0.0)


@dataclass
class TrainTrace:
    objective: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)
    step_size: list = field(default_factory=list)
    initial_objective: float = float("nan")
    stop_reason: str = ""

    def __len__(self):
        return len(self.objective)

    def is_non_increasing(self) -> bool:
        seq = [self.initial_objective, *self.objective]
        return all(b <= a for a, b in zip(seq, seq[1:]))

    def write(self, path, timings: bool = True):
        """Tab-separated trace; ``timings=False`` drops wall-clock times for reproducible files."""
        cols = ["objective", "grad_norm", "step_size"] + (["wall_time"] if timings else [])
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\t".join(["epoch", *cols]) + "\n")
            fh.write(f"0\t{self.initial_objective!r}" + "\t" * (len(cols) - 1) + "\n")
            for e in range(len(self)):
                row = [self.objective[e], self.grad_norm[e], self.step_size[e]]
                if timings:
                    row.append(self.wall_time[e])
                fh.write(f"{e + 1}\t" + "\t".join(repr(float(v)) for v in row) + "\n")
            fh.write(f"# stop_reason={self.stop_reason}\n")


@dataclass(eq=False)
class FactorModel:
    P: np.ndarray
    Q: np.ndarray
    r_m: float
    scale_min: float = -math.inf
    scale_max: float = math.inf
    variant: str = "CMF"
    config: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.P.shape[1]

    @property
    def n_users(self) -> int:
        return self.P.shape[0]

    @property
    def n_items(self) -> int:
        return self.Q.shape[0]

    def predict(self, users, items, clamp: bool = True) -> np.ndarray:
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        if len(users) and (users.min() < 0 or users.max() >= self.n_users):
            raise IndexError("user index out of range")
        if len(items) and (items.min() < 0 or items.max() >= self.n_items):
            raise IndexError("item index out of range")
        pred = self.r_m + np.einsum("ij,ij->i", self.P[users], self.Q[items])
        if clamp:
            pred = np.clip(pred, self.scale_min, self.scale_max)
        return pred

    def write(self, path):
        """Plain-text dump; values use 17 significant digits so loading is bit-exact."""
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"n\t{self.n_users}\n")
            fh.write(f"m\t{self.n_items}\n")
            fh.write(f"d\t{self.d}\n")
            fh.write(f"r_m\t{self.r_m:.17g}\n")
            fh.write(f"scale_min\t{self.scale_min:.17g}\n")
            fh.write(f"scale_max\t{self.scale_max:.17g}\n")
            fh.write(f"variant\t{self.variant}\n")
            fh.write(f"config\t{json.dumps(self.config, sort_keys=True)}\n")
            for row in np.vstack([self.P, self.Q]):
                fh.write("\t".join(f"{v:.17g}" for v in row) + "\n")

    @classmethod
    def read(cls, path) -> "FactorModel":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        head = dict(line.split("\t", 1) for line in lines[:8])
        n, m, d = int(head["n"]), int(head["m"]), int(head["d"])
        body = np.array([[float(v) for v in line.split("\t")] for line in lines[8:8 + n + m]]).reshape(n + m, d)
        return cls(
            P=body[:n].copy(), Q=body[n:].copy(), r_m=float(head["r_m"]),
            scale_min=float(head["scale_min"]), scale_max=float(head["scale_max"]),
            variant=head["variant"], config=json.loads(head["config"]),
        )


def predict_rating(model: FactorModel, u: int, i: int, clamp: bool = False) -> float:
    if not (0 <= u < model.n_users and 0 <= i < model.n_items):
        raise IndexError(f"({u}, {i}) outside a {model.n_users} x {model.n_items} model")
    raw = model.r_m + float(model.P[u] @ model.Q[i])
    return min(max(raw, model.scale_min), model.scale_max) if clamp else raw


# --------------------------------------------------------------------------
# Objective and gradients


class _Problem:
    """Sparsity pattern and graph operators shared by objective and gradient."""

    def __init__(self, ds: RatingDataset, r_m: float, lam, alpha, beta, user_graph=None, item_graph=None):
        self.users, self.items, self.ratings = ds.users, ds.items, ds.ratings
        self.shape = (ds.n_users, ds.n_items)
        self.r_m, self.lam, self.alpha, self.beta = r_m, lam, alpha, beta
        order = np.lexsort((ds.items, ds.users))
        self.order = order
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(ds.users, minlength=ds.n_users))])
        self.indices = ds.items[order]
        self.W_U = self.W_UT = self.W_I = self.W_IT = None
        if alpha:
            if user_graph is None:
                raise ConfigError("alpha > 0 requires a user neighbor graph")
            if user_graph.n_entities != ds.n_users:
                raise ConfigError("user graph size does not match the dataset")
            self.W_U = user_graph.to_sparse()
            self.W_UT = self.W_U.T.tocsr()
        if beta:
            if item_graph is None:
                raise ConfigError("beta > 0 requires an item neighbor graph")
            if item_graph.n_entities != ds.n_items:
                raise ConfigError("item graph size does not match the dataset")
            self.W_I = item_graph.to_sparse()
            self.W_IT = self.W_I.T.tocsr()

    def residuals(self, P, Q):
        return self.r_m + np.einsum("ij,ij->i", P[self.users], Q[self.items]) - self.ratings

    def objective(self, P, Q) -> float:
        # overflow shows up as a non-finite value, which the step rule rejects
        with np.errstate(over="ignore", invalid="ignore"):
            e = self.residuals(P, Q)
            value = 0.5 * (e @ e) + 0.5 * self.lam * (np.sum(P * P) + np.sum(Q * Q))
            if self.alpha:
                dev = P - self.W_U @ P
                value += 0.5 * self.alpha * np.sum(dev * dev)
            if self.beta:
                dev = Q - self.W_I @ Q
                value += 0.5 * self.beta * np.sum(dev * dev)
        return float(value)

    def gradients(self, P, Q):
        e = self.residuals(P, Q)
        E = sp.csr_matrix((e[self.order], self.indices, self.indptr), shape=self.shape)
        gP = E @ Q + self.lam * P
        gQ = E.T @ P + self.lam * Q
        if self.alpha:
            dev = P - self.W_U @ P
            gP += self.alpha * (dev - self.W_UT @ dev)
        if self.beta:
            dev = Q - self.W_I @ Q
            gQ += self.beta * (dev - self.W_IT @ dev)
        return gP, gQ


def _check_finite(model):
    if not (np.all(np.isfinite(model.P)) and np.all(np.isfinite(model.Q)) and math.isfinite(model.r_m)):
        raise NumericError("model contains non-finite entries")


def objective_value(model: FactorModel, ds: RatingDataset, user_graph, item_graph, cfg: TrainConfig) -> float:
    """Regularized squared error plus the two neighborhood-coupling penalties."""
    _check_finite(model)
    cfg = cfg.effective()
    prob = _Problem(ds, model.r_m, cfg.lam, cfg.alpha, cfg.beta, user_graph, item_graph)
    return prob.objective(model.P, model.Q)


def gradients(model: FactorModel, ds: RatingDataset, user_graph, item_graph, cfg: TrainConfig):
    """Full-batch analytic gradients ``(dL/dP, dL/dQ)`` of :func:`objective_value`."""
    _check_finite(model)
    cfg = cfg.effective()
    prob = _Problem(ds, model.r_m, cfg.lam, cfg.alpha, cfg.beta, user_graph, item_graph)
    return prob.gradients(model.P, model.Q)


# --------------------------------------------------------------------------
# Training


def init_factors(n_users: int, n_items: int, d: int, seed: int):
    rng = np.random.default_rng(seed)
    P = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(n_users, d))
    Q = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(n_items, d))
    return P, Q


def _offset(ds: RatingDataset, variant: str) -> float:
    # RSVD reconstructs raw ratings; every other variant centers on the training mean
    return 0.0 if variant == "RSVD" else ds.global_mean


def _check_graph(graph, expected, variant, which):
    if graph is not None and graph.kind is not None and expected is not None and graph.kind != expected:
        raise ConfigError(f"{variant} expects {expected} {which} graphs, got {graph.kind}")


def train(ds: RatingDataset, user_graph=None, item_graph=None, cfg: TrainConfig = TrainConfig(),
          callback=None, init=None):
    """Fit ``P`` and ``Q`` by gradient descent with step halving.

    A step that would raise the objective (or make it non-finite) is retried
    with half the learning rate, so the recorded objective never increases.
    Training stops on relative improvement below ``convergence_tol``, after
    ``max_epochs``, or when the step size falls below 1e-12.  ``callback`` is
    called as ``callback(epoch, P, Q)`` after every accepted update.
    """
    if len(ds) == 0:
        raise ConfigError("cannot train on an empty dataset")
    cfg = cfg.effective()
    expected = GRAPH_KIND[cfg.variant]
    _check_graph(user_graph, expected, cfg.variant, "user")
    _check_graph(item_graph, expected, cfg.variant, "item")
    r_m = _offset(ds, cfg.variant)
    prob = _Problem(ds, r_m, cfg.lam, cfg.alpha, cfg.beta,
                    user_graph if cfg.alpha else None, item_graph if cfg.beta else None)
    P, Q = init if init is not None else init_factors(ds.n_users, ds.n_items, cfg.d, cfg.seed)
    P, Q = P.copy(), Q.copy()

    trace = TrainTrace()
    L = prob.objective(P, Q)
    trace.initial_objective = L
    eta = cfg.learning_rate
    start = time.perf_counter()
    trace.stop_reason = "max_epochs"
    for epoch in range(cfg.max_epochs):
        gP, gQ = prob.gradients(P, Q)
        gnorm = math.sqrt(float(np.sum(gP * gP) + np.sum(gQ * gQ)))
        while True:
            P_new = P - eta * gP
            Q_new = Q - eta * gQ
            L_new = prob.objective(P_new, Q_new)
            if math.isfinite(L_new) and L_new <= L:
                break
            eta /= 2
            if eta < MIN_STEP:
                break
        if eta < MIN_STEP:
            if not math.isfinite(L_new):
                raise TrainingFailure(f"objective diverged at epoch {epoch + 1}", trace)
            trace.stop_reason = "step_exhausted"
            break
        P, Q = P_new, Q_new
        trace.objective.append(L_new)
        trace.grad_norm.append(gnorm)
        trace.step_size.append(eta)
        trace.wall_time.append(time.perf_counter() - start)
        if callback is not None:
            callback(epoch, P, Q)
        improvement = abs(L - L_new) / max(L, 1.0)
        L = L_new
        if improvement < cfg.convergence_tol:
            trace.stop_reason = "converged"
            break
    logger.debug("%s: %d epochs, L=%.6g, stop=%s", cfg.variant, len(trace), L, trace.stop_reason)
    model = FactorModel(P, Q, r_m, ds.scale_min, ds.scale_max, cfg.variant, asdict(cfg))
    return model, trace


def train_regularized_mf(ds: RatingDataset, cfg: TrainConfig, callback=None):
    """Plain L2-regularized MF with the same step rule, without any coupling code.

    Serves as the reference the coupled trainer must reproduce exactly when
    both coupling weights are zero.
    """
    r_m = 0.0 if cfg.variant == "RSVD" else ds.global_mean
    u, i, r = ds.users, ds.items, ds.ratings
    order = np.lexsort((i, u))
    indptr = np.concatenate([[0], np.cumsum(np.bincount(u, minlength=ds.n_users))])
    cols = i[order]

    def loss(P, Q):
        with np.errstate(over="ignore", invalid="ignore"):
            e = r_m + np.einsum("ij,ij->i", P[u], Q[i]) - r
            return float(0.5 * (e @ e) + 0.5 * cfg.lam * (np.sum(P * P) + np.sum(Q * Q)))

    def grad(P, Q):
        e = r_m + np.einsum("ij,ij->i", P[u], Q[i]) - r
        E = sp.csr_matrix((e[order], cols, indptr), shape=(ds.n_users, ds.n_items))
        return E @ Q + cfg.lam * P, E.T @ P + cfg.lam * Q

    P, Q = init_factors(ds.n_users, ds.n_items, cfg.d, cfg.seed)
    L = loss(P, Q)
    eta = cfg.learning_rate
    for epoch in range(cfg.max_epochs):
        gP, gQ = grad(P, Q)
        while True:
            P_new, Q_new = P - eta * gP, Q - eta * gQ
            L_new = loss(P_new, Q_new)
            if math.isfinite(L_new) and L_new <= L:
                break
            eta /= 2
            if eta < MIN_STEP:
                break
        if eta < MIN_STEP:
            if not math.isfinite(L_new):
                raise TrainingFailure(f"objective diverged at epoch {epoch + 1}")
            break
        P, Q = P_new, Q_new
        if callback is not None:
            callback(epoch, P, Q)
        done = abs(L - L_new) / max(L, 1.0) < cfg.convergence_tol
        L = L_new
        if done:
            break
    return FactorModel(P, Q, r_m, ds.scale_min, ds.scale_max, cfg.variant, asdict(cfg))
