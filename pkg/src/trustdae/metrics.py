"""Ranking evaluation: precision/AP/NDCG kernels, degree buckets, fold CIs.

Relevance is binary, so the 2^rel - 1 numerator of the DCG gain reduces
to rel itself. Users whose test set is empty are excluded from every
mean. The per-list kernels run in rank order with plain Python floats so
an independent transcription of the formulas reproduces them exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .sparse import SparseInteractions


class RankedList(NamedTuple):
    user: int
    items: np.ndarray


def rank_top_n(scores: np.ndarray, train_positives, n: int) -> np.ndarray:
    """Top-n items by score over the complement of the training positives.

    Ties break toward the smaller item index; the list is shorter than n
    only when fewer than n candidate items exist.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    scores = np.asarray(scores, dtype=np.float64)
    train_positives = np.asarray(train_positives, dtype=np.int64)
    masked = scores.copy()
    masked[train_positives] = -np.inf
    order = np.argsort(-masked, kind="stable")
    n_candidates = len(scores) - len(train_positives)
    return order[:min(n, n_candidates)]


def average_precision(items: np.ndarray, test_positives, n: int) -> float:
    """AP@n: precision at each hit rank, averaged over min(n, #test items)."""
    test = set(int(i) for i in test_positives)
    if not test:
        raise ValueError("test_positives must be nonempty")
    hits = 0
    total = 0.0
    for rank, item in enumerate(items[:n].tolist(), start=1):
        if item in test:
            hits += 1
            total += hits / rank
    return total / min(n, len(test))


def ndcg(items: np.ndarray, test_positives, n: int) -> float:
    """NDCG@n with binary gains; the ideal list has min(n, #test) hits on top."""
    test = set(int(i) for i in test_positives)
    if not test:
        raise ValueError("test_positives must be nonempty")
    dcg = 0.0
    for rank, item in enumerate(items[:n].tolist(), start=1):
        if item in test:
            dcg += 1.0 / math.log2(rank + 1)
    ideal = 0.0
    for rank in range(1, min(n, len(test)) + 1):
        ideal += 1.0 / math.log2(rank + 1)
    return dcg / ideal


@dataclass
class FoldMetrics:
    """Per-user metric values for one train/test materialization."""

    top_n: int
    users: np.ndarray
    train_counts: np.ndarray
    ap: np.ndarray
    ndcg: np.ndarray

    @property
    def map_at_n(self) -> float:
        return float(self.ap.mean()) if len(self.ap) else 0.0

    @property
    def ndcg_at_n(self) -> float:
        return float(self.ndcg.mean()) if len(self.ndcg) else 0.0


@dataclass
class BucketStats:
    label: str
    n_users: int
    map_at_n: float
    ndcg_at_n: float


@dataclass
class MetricsReport:
    """Cross-fold aggregate: means with 95% half-widths over fold values."""

    top_n: int
    map_mean: float
    map_ci95: float
    ndcg_mean: float
    ndcg_ci95: float
    fold_map: list[float]
    fold_ndcg: list[float]
    buckets: list[BucketStats] | None = None

    def csv_rows(self) -> list[str]:
        rows = ["metric,cutoff,bucket,mean,ci95"]
        rows.append(f"map,{self.top_n},all,{self.map_mean!r},{self.map_ci95!r}")
        rows.append(f"ndcg,{self.top_n},all,{self.ndcg_mean!r},{self.ndcg_ci95!r}")
        for b in self.buckets or []:
            rows.append(f"map,{self.top_n},{b.label},{b.map_at_n!r},")
            rows.append(f"ndcg,{self.top_n},{b.label},{b.ndcg_at_n!r},")
        return rows

    def table(self) -> str:
        lines = [f"{'metric':<10}{'bucket':<14}{'mean':>12}{'ci95':>12}",
                 f"{'map@' + str(self.top_n):<10}{'all':<14}{self.map_mean:>12.4f}{self.map_ci95:>12.4f}",
                 f"{'ndcg@' + str(self.top_n):<10}{'all':<14}{self.ndcg_mean:>12.4f}{self.ndcg_ci95:>12.4f}"]
        for b in self.buckets or []:
            lines.append(f"{'map@' + str(self.top_n):<10}{b.label:<14}{b.map_at_n:>12.4f}{'-':>12}")
        return "\n".join(lines)


def evaluate_fold(score_fn: Callable[[int], np.ndarray], train: SparseInteractions,
                  test: SparseInteractions, top_n: int) -> FoldMetrics:
    """Rank every evaluable user with `score_fn` and collect AP/NDCG."""
    users, counts, aps, ndcgs = [], [], [], []
    for u in range(train.n):
        test_row = test.row(u, "rating")
        if len(test_row) == 0:
            continue
        train_row = train.row(u, "rating")
        ranked = rank_top_n(score_fn(u), train_row, top_n)
        users.append(u)
        counts.append(len(train_row))
        aps.append(average_precision(ranked, test_row, top_n))
        ndcgs.append(ndcg(ranked, test_row, top_n))
    return FoldMetrics(top_n=top_n, users=np.array(users, dtype=np.int64),
                       train_counts=np.array(counts, dtype=np.int64),
                       ap=np.array(aps), ndcg=np.array(ndcgs))


def bucket_by_degree(folds: list[FoldMetrics], edges: list[int]) -> list[BucketStats]:
    """Pool user-fold evaluations into training-count buckets.

    Edges [a, b, c] define buckets [a,b), [b,c), [c,inf); empty buckets
    are omitted rather than reported as zero.
    """
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError("bucket edges must be strictly increasing")
    counts = np.concatenate([f.train_counts for f in folds])
    ap = np.concatenate([f.ap for f in folds])
    nd = np.concatenate([f.ndcg for f in folds])
    out = []
    bounds = list(zip(edges, edges[1:] + [None]))
    for lo, hi in bounds:
        mask = counts >= lo if hi is None else (counts >= lo) & (counts < hi)
        if not mask.any():
            continue
        label = f"[{lo},inf)" if hi is None else f"[{lo},{hi})"
        out.append(BucketStats(label=label, n_users=int(mask.sum()),
                               map_at_n=float(ap[mask].mean()),
                               ndcg_at_n=float(nd[mask].mean())))
    return out


def ci95_half_width(values: list[float]) -> float:
    """1.96 * sample std / sqrt(#folds); zero when only one fold."""
    if len(values) < 2:
        return 0.0
    return float(1.96 * np.std(values, ddof=1) / math.sqrt(len(values)))


def aggregate_folds(folds: list[FoldMetrics],
                    bucket_edges: list[int] | None = None) -> MetricsReport:
    fold_map = [f.map_at_n for f in folds]
    fold_ndcg = [f.ndcg_at_n for f in folds]
    buckets = bucket_by_degree(folds, bucket_edges) if bucket_edges else None
    return MetricsReport(top_n=folds[0].top_n,
                         map_mean=float(np.mean(fold_map)),
                         map_ci95=ci95_half_width(fold_map),
                         ndcg_mean=float(np.mean(fold_ndcg)),
                         ndcg_ci95=ci95_half_width(fold_ndcg),
                         fold_map=fold_map, fold_ndcg=fold_ndcg,
                         buckets=buckets)
