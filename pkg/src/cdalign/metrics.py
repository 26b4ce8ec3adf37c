"""Scoring: multiclass accuracy, CMC retrieval curves, split statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import UNLABELED
from .exceptions import DimensionMismatch, EmptyPopulation


def accuracy(predicted, truth):
    """Exact-match fraction; the unknown class counts as one class."""
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape or predicted.ndim != 1:
        raise DimensionMismatch("predicted and truth must be equal-length vectors")
    if predicted.size == 0:
        raise EmptyPopulation("cannot score an empty label vector")
    if np.any(truth == UNLABELED):
        raise ValueError("truth contains unlabeled entries")
    return float(np.mean(predicted == truth))


@dataclass(frozen=True)
class CmcCurve:
    """Cumulative match rate per rank, 1-based; skipped queries counted."""

    rates: np.ndarray
    n_queries: int
    n_skipped: int

    def __post_init__(self):
        r = np.asarray(self.rates, dtype=np.float64)
        if r.ndim != 1 or r.size == 0:
            raise DimensionMismatch("rates must be a non-empty vector")
        if np.any(np.diff(r) < 0) or r[-1] > 1.0 + 1e-12:
            raise ValueError("rates must be non-decreasing and end <= 1")
        object.__setattr__(self, "rates", r)

    @property
    def max_rank(self):
        return int(self.rates.shape[0])

    def rate(self, rank):
        if not 1 <= rank <= self.max_rank:
            raise ValueError(f"rank must be in [1, {self.max_rank}]")
        return float(self.rates[rank - 1])

    def to_rows(self):
        return [(r + 1, float(self.rates[r])) for r in range(self.max_rank)]


def cmc(query_features, query_ids, gallery_features, gallery_ids,
        max_rank=None):
    """Rank queries against the gallery by ascending Euclidean distance.

    rate(r) is the fraction of evaluated queries whose first correct match
    appears at rank <= r; exact distance ties resolve to the lower gallery
    index. Queries whose id never occurs in the gallery are skipped and
    reported in ``n_skipped`` rather than counted in the denominator.
    Features are compared as given: apply any learned transform first.
    """
    qx = np.asarray(query_features, dtype=np.float64)
    gx = np.asarray(gallery_features, dtype=np.float64)
    qid = np.asarray(query_ids)
    gid = np.asarray(gallery_ids)
    if gx.ndim != 2 or gx.shape[0] == 0:
        raise EmptyPopulation("gallery must contain at least one sample")
    if qx.ndim != 2 or qx.shape[1] != gx.shape[1]:
        raise DimensionMismatch("query and gallery widths differ")
    if qid.shape[0] != qx.shape[0] or gid.shape[0] != gx.shape[0]:
        raise DimensionMismatch("id vectors must match their feature matrices")
    n_gallery = gx.shape[0]
    if max_rank is None:
        max_rank = n_gallery
    if not 1 <= max_rank <= n_gallery:
        raise ValueError(f"max_rank must be in [1, {n_gallery}]")

    matchable = np.isin(qid, gid)
    n_skipped = int((~matchable).sum())
    n_eval = int(matchable.sum())
    if n_eval == 0:
        return CmcCurve(rates=np.zeros(max_rank), n_queries=0,
                        n_skipped=n_skipped)

    d2 = (np.sum(qx[matchable] ** 2, axis=1)[:, None]
          + np.sum(gx ** 2, axis=1)[None, :]
          - 2.0 * qx[matchable] @ gx.T)
    order = np.argsort(d2, axis=1, kind="stable")
    correct = gid[order] == qid[matchable][:, None]
    first_hit = np.argmax(correct, axis=1)  # each row has a hit by construction
    hist = np.bincount(first_hit, minlength=n_gallery)
    rates = np.cumsum(hist)[:max_rank] / n_eval
    return CmcCurve(rates=rates, n_queries=n_eval, n_skipped=n_skipped)


def mean_and_std(values):
    """Mean and sample standard deviation (n-1 denominator; 0.0 when n=1)."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise EmptyPopulation("need at least one value")
    std = 0.0 if v.size == 1 else float(np.std(v, ddof=1))
    return float(v.mean()), std


def format_mean_std(mean, std):
    """Render an accuracy cell in percent, e.g. ``77.1 ± 1.35``."""
    return f"{mean:.1f} ± {std:.2f}"
