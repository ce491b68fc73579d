"""Synthetic planted-community dataset for end-to-end checks.

Users are split into equal communities, each owning a disjoint block of
items. A user rates items inside their own block with fixed probability
(score 5, so everything survives binarization) and trusts other members
of their community. Latent models must separate the blocks; popularity
ranking cannot.
"""

from __future__ import annotations

import numpy as np

from .dataset import Dataset, RawRating, RawTrust, binarize_and_filter


def make_block_raw(n_users: int = 200, n_items: int = 300, n_communities: int = 4,
                   block_items: int = 60, p_rate: float = 0.3,
                   p_trust: float = 0.1, seed: int = 0
                   ) -> tuple[list[RawRating], list[RawTrust]]:
    """Raw records with planted block structure, in external-id form."""
    if n_communities * block_items > n_items:
        raise ValueError("item blocks exceed the item count")
    if n_users % n_communities != 0:
        raise ValueError("n_users must divide evenly into communities")
    rng = np.random.default_rng(seed)
    per_comm = n_users // n_communities
    ratings: list[RawRating] = []
    trusts: list[RawTrust] = []
    for u in range(n_users):
        comm = u // per_comm
        block = np.arange(comm * block_items, (comm + 1) * block_items)
        rated = block[rng.random(block_items) < p_rate]
        for i in rated.tolist():
            ratings.append(RawRating(str(u), str(i), 5))
        members = np.arange(comm * per_comm, (comm + 1) * per_comm)
        trusted = members[rng.random(per_comm) < p_trust]
        for v in trusted.tolist():
            if v != u:
                trusts.append(RawTrust(str(u), str(v)))
    return ratings, trusts


def make_block_dataset(min_count: int = 5, **kw) -> Dataset:
    ratings, trusts = make_block_raw(**kw)
    return binarize_and_filter(ratings, trusts, min_count=min_count)


def write_raw_files(ratings: list[RawRating], trusts: list[RawTrust],
                    ratings_path, trusts_path) -> None:
    with open(ratings_path, "w", encoding="utf-8") as fh:
        for r in ratings:
            fh.write(f"{r.user} {r.item} {r.score}\n")
    with open(trusts_path, "w", encoding="utf-8") as fh:
        for t in trusts:
            fh.write(f"{t.truster} {t.trustee}\n")
