"""Synthetic rating data whose latent structure follows categorical attributes.

Each user/item belongs to a hidden group; its latent vector is the group
centroid plus noise, and its attributes are noisy functions of the group.
Attribute-based neighborhoods are therefore informative about the factors.
"""

from __future__ import annotations

import numpy as np

from .ingest import AttributeTable, RatingDataset


def _attributes(rng, groups, n_groups, prefix, n_attrs, purity):
    rows = []
    for g in groups:
        row = []
        for a in range(n_attrs):
            # every attribute echoes the group with probability ``purity``
            value = g if rng.random() < purity else rng.integers(n_groups + 2)
            row.append(f"{prefix}{a}_{value}")
        rows.append(row)
    return rows


def make_synthetic(n_users=20, n_items=20, rank=2, density=0.5, n_groups=3, noise=0.25,
                   purity=0.85, seed=0, scale=(1.0, 5.0), integer=True):
    """Return ``(ratings, user_table, item_table)`` drawn from a rank-``rank`` model."""
    rng = np.random.default_rng(seed)
    lo, hi = scale
    mid = (lo + hi) / 2
    centers_u = rng.normal(0, 1.0, size=(n_groups, rank))
    centers_i = rng.normal(0, 1.0, size=(n_groups, rank))
    gu = rng.integers(n_groups, size=n_users)
    gi = rng.integers(n_groups, size=n_items)
    P = centers_u[gu] + 0.2 * rng.normal(size=(n_users, rank))
    Q = centers_i[gi] + 0.2 * rng.normal(size=(n_items, rank))
    truth = mid + P @ Q.T

    mask = rng.random((n_users, n_items)) < density
    # every user and item gets at least one rating
    mask[np.arange(n_users), rng.integers(n_items, size=n_users)] = True
    mask[rng.integers(n_users, size=n_items), np.arange(n_items)] = True
    users, items = np.nonzero(mask)
    values = truth[users, items] + noise * rng.normal(size=len(users))
    if integer:
        values = np.round(values)
    values = np.clip(values, lo, hi)

    user_table = AttributeTable.from_rows(
        ("a0", "a1", "a2"), _attributes(rng, gu, n_groups, "u", 3, purity), [f"U{u}" for u in range(n_users)]
    )
    item_table = AttributeTable.from_rows(
        ("b0", "b1"), _attributes(rng, gi, n_groups, "i", 2, purity), [f"I{i}" for i in range(n_items)]
    )
    ds = RatingDataset(
        n_users=n_users, n_items=n_items, users=users, items=items, ratings=values,
        scale_min=lo, scale_max=hi, user_ids=user_table.entity_ids, item_ids=item_table.entity_ids,
        name="synthetic",
    )
    return ds, user_table, item_table
