"""Entropy-gated pseudo-labeling of the unlabeled pool.

A fitted classifier scores every unlabeled sample of both domains in the
shared space. The outlier threshold is the mean prediction entropy, pooled
over both domains, recomputed from scratch on every call; samples at or
above it are excluded from the working labels instead of pseudo-labeled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import EXCLUDED, DomainDataset, TransformPair, WorkingLabels, transform
from .exceptions import ContractViolation, DimensionMismatch


def entropy(probs, validate=True):
    """Shannon entropy in nats of each probability row; 0*log(0) counts as 0.

    Accepts a single distribution (1-d) or a stack of rows (2-d).
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim not in (1, 2):
        raise DimensionMismatch(f"expected 1-d or 2-d probabilities, got {p.ndim}-d")
    if validate:
        if np.any(p < 0):
            raise ValueError("probabilities must be non-negative")
        sums = p.sum(axis=-1)
        if np.any(np.abs(sums - 1.0) > 1e-6):
            raise ValueError("probability rows must sum to 1 within 1e-6")
    plogp = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    h = -plogp.sum(axis=-1)
    return float(h) if p.ndim == 1 else h


@dataclass(frozen=True)
class PseudoLabelReport:
    """Per-sample pseudo-labeling outcome for one round, both domains pooled.

    Arrays are aligned: entry i describes the sample at ``index[i]`` inside
    the domain named by ``domain[i]``. ``outlier`` marks samples excluded from
    the working labels. ``guard_applied`` records that every sample hit the
    threshold and the lowest-entropy half was retained instead.
    """

    domain: np.ndarray
    index: np.ndarray
    predicted: np.ndarray
    proba: np.ndarray
    entropies: np.ndarray
    classes: np.ndarray
    threshold: float
    outlier: np.ndarray
    guard_applied: bool

    def __post_init__(self):
        n = self.index.shape[0]
        for name in ("domain", "predicted", "entropies", "outlier"):
            if getattr(self, name).shape[0] != n:
                raise DimensionMismatch(f"{name} length does not match index")
        if self.proba.shape != (n, self.classes.shape[0]):
            raise DimensionMismatch("proba shape does not match classes")

    @property
    def n(self):
        return int(self.index.shape[0])

    def domain_mask(self, domain_id):
        return self.domain == domain_id

    def accepted_mask(self):
        return ~self.outlier


def flag_outliers(entropies):
    """Apply the mean-entropy rule: (threshold, outlier mask, guard flag).

    threshold = mean of the entropies; outlier iff entropy >= threshold.
    When that flags everything, the ceil(n/2) lowest-entropy samples (ties
    to the lower index) are retained instead and the guard flag is set.
    """
    ent = np.asarray(entropies, dtype=np.float64)
    if ent.ndim != 1:
        raise DimensionMismatch("entropies must be 1-d")
    n = ent.shape[0]
    if n == 0:
        return 0.0, np.empty(0, dtype=bool), False
    threshold = float(ent.mean())
    outlier = ent >= threshold
    guard = bool(outlier.all())
    if guard:
        keep = math.ceil(n / 2)
        retained = np.argsort(ent, kind="stable")[:keep]
        outlier = np.ones(n, dtype=bool)
        outlier[retained] = False
    return threshold, outlier, guard


def _pick(classifier, features):
    probs = np.asarray(classifier.predict_proba(features), dtype=np.float64)
    classes = np.asarray(classifier.classes())
    if probs.shape != (features.shape[0], classes.size):
        raise ContractViolation("classifier returned a misshaped probability matrix")
    predicted = classes[np.argmax(probs, axis=1)]
    return probs, classes, predicted


def assign(classifier, a: DomainDataset, b: DomainDataset,
           transforms: TransformPair) -> PseudoLabelReport:
    """Score both unlabeled pools in the shared space and flag outliers.

    The threshold is the pooled mean entropy; a sample is an outlier iff
    its entropy is >= the threshold. If that flags every sample, the
    ceil(n/2) lowest-entropy samples (ties to the lower pooled position)
    are retained so the round cannot go label-starved.
    """
    parts = []
    for ds, w in ((a, transforms.w_a), (b, transforms.w_b)):
        idx = ds.unlabeled_indices
        parts.append((ds.domain_id, idx, transform(ds.features[idx], w)))

    domain = np.concatenate([np.repeat(did, idx.size) for did, idx, _ in parts])
    index = np.concatenate([idx for _, idx, _ in parts]).astype(np.int64)
    n = index.shape[0]
    if n == 0:
        classes = np.asarray(classifier.classes())
        return PseudoLabelReport(
            domain=domain.astype(object), index=index,
            predicted=np.empty(0, dtype=np.int64),
            proba=np.empty((0, classes.size)), entropies=np.empty(0),
            classes=classes, threshold=0.0,
            outlier=np.empty(0, dtype=bool), guard_applied=False)

    pooled = np.vstack([feats for _, _, feats in parts])
    probs, classes, predicted = _pick(classifier, pooled)
    ent = entropy(probs)
    threshold, outlier, guard = flag_outliers(ent)
    return PseudoLabelReport(
        domain=domain.astype(object), index=index, predicted=predicted,
        proba=probs, entropies=ent, classes=classes, threshold=threshold,
        outlier=outlier, guard_applied=guard)


def apply_report(a: DomainDataset, b: DomainDataset,
                 report: PseudoLabelReport):
    """Merge given labels with the report into per-domain working labels.

    Given labels are copied verbatim; unlabeled samples take their pseudo
    label, or the excluded sentinel when flagged as outliers. Every
    unlabeled sample must be covered by the report exactly once.
    """
    out = []
    for ds in (a, b):
        mask = report.domain_mask(ds.domain_id)
        idx = report.index[mask]
        if not np.array_equal(np.sort(idx), ds.unlabeled_indices):
            raise ContractViolation(
                f"report does not cover domain {ds.domain_id!r} exactly")
        labels = ds.labels.copy()
        labels[idx] = np.where(report.outlier[mask], EXCLUDED,
                               report.predicted[mask])
        out.append(WorkingLabels(labels=labels, pseudo=ds.unlabeled_mask.copy()))
    return tuple(out)
