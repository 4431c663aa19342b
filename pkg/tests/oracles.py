"""Independent reference computations used by the test-suite.

Nothing here imports the package's numerical code: coupled similarity is
enumerated with exact fractions over raw value strings and the objective is
summed with plain loops.
"""

from fractions import Fraction

import numpy as np


def group(rows, attr, value):
    return {e for e, row in enumerate(rows) if row[attr] == value}


def brute_intra(rows, attr, x, y):
    gx, gy = len(group(rows, attr, x)), len(group(rows, attr, y))
    return Fraction(gx * gy, gx + gy + gx * gy)


def brute_conditional(rows, j, k, w, x):
    gx = group(rows, k, x)
    return Fraction(len(group(rows, j, w) & gx), len(gx))


def brute_inter(rows, attr, x, y):
    n_attr = len(rows[0])
    if n_attr == 1:
        return Fraction(1)
    total = Fraction(0)
    for j in range(n_attr):
        if j == attr:
            continue
        with_x = {rows[e][j] for e in group(rows, attr, x)}
        with_y = {rows[e][j] for e in group(rows, attr, y)}
        for w in with_x & with_y:
            total += min(brute_conditional(rows, j, attr, w, x), brute_conditional(rows, j, attr, w, y))
    return total / (n_attr - 1)


def brute_coupled(rows, i, j):
    """Exact coupled similarity of rows ``i`` and ``j`` of a list of value tuples."""
    return sum(
        (brute_intra(rows, k, rows[i][k], rows[j][k]) * brute_inter(rows, k, rows[i][k], rows[j][k])
         for k in range(len(rows[0]))),
        Fraction(0),
    )


def brute_coupled_matrix(rows):
    n = len(rows)
    return [[brute_coupled(rows, i, j) for j in range(n)] for i in range(n)]


def naive_objective(P, Q, r_m, entries, lam, alpha, beta, user_lists, item_lists):
    """Term-by-term loop evaluation of the coupled MF objective.

    ``user_lists[u]`` is a list of ``(v, weight)`` pairs; same for items.
    """
    n, d = len(P), len(P[0])
    m = len(Q)
    loss = 0.0
    for u, i, r in entries:
        pred = r_m + sum(P[u][f] * Q[i][f] for f in range(d))
        loss += 0.5 * (r - pred) ** 2
    for u in range(n):
        loss += 0.5 * lam * sum(P[u][f] ** 2 for f in range(d))
    for i in range(m):
        loss += 0.5 * lam * sum(Q[i][f] ** 2 for f in range(d))
    for u in range(n):
        for f in range(d):
            diff = P[u][f] - sum(w * P[v][f] for v, w in user_lists[u])
            loss += 0.5 * alpha * diff ** 2
    for i in range(m):
        for f in range(d):
            diff = Q[i][f] - sum(w * Q[j][f] for j, w in item_lists[i])
            loss += 0.5 * beta * diff ** 2
    return loss


def central_differences(fn, P, Q, h=1e-6):
    """Central finite-difference gradient of ``fn(P, Q)`` for every entry."""
    gP = np.zeros_like(P)
    gQ = np.zeros_like(Q)
    for mat, grad in ((P, gP), (Q, gQ)):
        for idx in np.ndindex(mat.shape):
            keep = mat[idx]
            mat[idx] = keep + h
            up = fn(P, Q)
            mat[idx] = keep - h
            down = fn(P, Q)
            mat[idx] = keep
            grad[idx] = (up - down) / (2 * h)
    return gP, gQ


def max_relative_error(analytic, numeric, floor=1e-8):
    """Largest ``|a - f| / max(|a|, |f|)`` over entries whose magnitude exceeds ``floor``."""
    a = np.asarray(analytic).ravel()
    f = np.asarray(numeric).ravel()
    scale = np.maximum(np.abs(a), np.abs(f))
    mask = scale > floor
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(a[mask] - f[mask]) / scale[mask]))


def graph_lists(graph):
    return [list(zip(idx.tolist(), w.tolist())) for idx, w in graph.neighbors]
