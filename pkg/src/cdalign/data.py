"""Two-domain data model: feature matrices with tagged per-sample label states.

A sample's label state is carried inline in an integer vector. Class ids are
non-negative; the aggregate unknown class and the bookkeeping states use
negative sentinels so that a single array describes the whole domain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatch, EmptyPopulation

# Label sentinels. Known classes are ids >= 0. "Unknown" is itself a class
# (one aggregate for everything outside the known set), not missing data.
UNKNOWN = -1
UNLABELED = -2
EXCLUDED = -3


def _as_float_matrix(x, name):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-d, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise DimensionMismatch(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def _as_label_vector(x, n, name, allowed_min):
    arr = np.asarray(x)
    if arr.ndim != 1 or arr.shape[0] != n:
        raise DimensionMismatch(f"{name} must have shape ({n},), got {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.floor(arr)):
            raise ValueError(f"{name} must be integral")
    arr = arr.astype(np.int64)
    if arr.size and arr.min() < allowed_min:
        raise ValueError(f"{name} contains sentinel below {allowed_min}: {arr.min()}")
    return arr


@dataclass(frozen=True)
class DomainDataset:
    """One domain: an (n, d) feature matrix plus a per-sample label vector.

    labels[i] is a class id >= 0, UNKNOWN, or UNLABELED. The labeled part of the
    domain is everything not UNLABELED; unknown-labeled samples count as labeled.
    """

    domain_id: str
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        feats = _as_float_matrix(self.features, "features")
        labs = _as_label_vector(self.labels, feats.shape[0], "labels", UNLABELED)
        feats.setflags(write=False)
        labs.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labs)
        if not isinstance(self.domain_id, str) or not self.domain_id:
            raise ValueError("domain_id must be a non-empty string")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def labeled_mask(self) -> np.ndarray:
        return self.labels != UNLABELED

    @property
    def unlabeled_mask(self) -> np.ndarray:
        return self.labels == UNLABELED

    @property
    def labeled_indices(self) -> np.ndarray:
        return np.flatnonzero(self.labeled_mask)

    @property
    def unlabeled_indices(self) -> np.ndarray:
        return np.flatnonzero(self.unlabeled_mask)

    @property
    def n_labeled(self) -> int:
        return int(self.labeled_mask.sum())

    def label_classes(self) -> np.ndarray:
        """Sorted distinct labels of the labeled part (UNKNOWN first if present)."""
        return np.unique(self.labels[self.labeled_mask])

    def known_classes(self) -> np.ndarray:
        cls = self.label_classes()
        return cls[cls >= 0]


@dataclass(frozen=True)
class WorkingLabels:
    """Effective labels for one domain during one refinement iteration.

    labels[i] is a class id >= 0, UNKNOWN, or EXCLUDED (an unlabeled sample whose
    pseudo-label was rejected this round; it takes part in nothing). pseudo[i]
    marks labels assigned this round rather than given.
    """

    labels: np.ndarray
    pseudo: np.ndarray

    def __post_init__(self):
        labs = np.asarray(self.labels)
        labs = _as_label_vector(labs, labs.shape[0] if labs.ndim == 1 else -1,
                                "working labels", EXCLUDED)
        if labs.size and (labs == UNLABELED).any():
            raise ValueError("working labels must resolve every sample; "
                             "found UNLABELED entries")
        ps = np.asarray(self.pseudo, dtype=bool)
        if ps.shape != labs.shape:
            raise DimensionMismatch("pseudo mask shape must match labels")
        labs.setflags(write=False)
        ps.setflags(write=False)
        object.__setattr__(self, "labels", labs)
        object.__setattr__(self, "pseudo", ps)

    @classmethod
    def from_given(cls, dataset: DomainDataset) -> "WorkingLabels":
        """Given labels only; every unlabeled sample is excluded."""
        labs = dataset.labels.copy()
        labs[labs == UNLABELED] = EXCLUDED
        return cls(labels=labs, pseudo=dataset.unlabeled_mask.copy())

    @property
    def active_mask(self) -> np.ndarray:
        return self.labels != EXCLUDED

    @property
    def known_mask(self) -> np.ndarray:
        return self.labels >= 0

    @property
    def unknown_mask(self) -> np.ndarray:
        return self.labels == UNKNOWN

    @property
    def n_excluded(self) -> int:
        return int((self.labels == EXCLUDED).sum())

    def active_classes(self) -> np.ndarray:
        return np.unique(self.labels[self.active_mask])


@dataclass(frozen=True)
class TransformPair:
    """The learned pair of square feature maps, one per domain."""

    w_a: np.ndarray
    w_b: np.ndarray

    def __post_init__(self):
        wa = _as_float_matrix(self.w_a, "w_a")
        wb = _as_float_matrix(self.w_b, "w_b")
        for name, w in (("w_a", wa), ("w_b", wb)):
            if w.shape[0] != w.shape[1]:
                raise DimensionMismatch(f"{name} must be square, got {w.shape}")
        if wa.shape != wb.shape:
            raise DimensionMismatch(
                f"transform shapes differ: {wa.shape} vs {wb.shape}")
        object.__setattr__(self, "w_a", wa)
        object.__setattr__(self, "w_b", wb)

    @classmethod
    def identity(cls, d: int) -> "TransformPair":
        return cls(np.eye(d), np.eye(d))

    @property
    def d(self) -> int:
        return self.w_a.shape[0]

    def for_domain(self, which: str) -> np.ndarray:
        if which == "a":
            return self.w_a
        if which == "b":
            return self.w_b
        raise ValueError(f"domain must be 'a' or 'b', got {which!r}")


def transform(features: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Map row-vector features through a square transform: X @ W."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim == 1:
        feats = feats[None, :]
    if feats.ndim != 2:
        raise DimensionMismatch(f"features must be 1-d or 2-d, got {feats.ndim}-d")
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise DimensionMismatch(f"transform must be square, got shape {w.shape}")
    if feats.shape[1] != w.shape[0]:
        raise DimensionMismatch(
            f"feature dimension {feats.shape[1]} does not match transform "
            f"dimension {w.shape[0]}")
    return feats @ w


def class_centers(dataset: DomainDataset, working: WorkingLabels,
                  classes=None) -> dict:
    """Per-class mean of the active working-labeled samples, in original space.

    Returns {class id: (d,) center}. With classes=None, covers every class that
    has at least one active member (UNKNOWN included). Naming a class with no
    active member raises EmptyPopulation instead of yielding NaN.
    """
    if working.labels.shape[0] != dataset.n:
        raise DimensionMismatch("working labels do not match dataset size")
    labs = working.labels
    active = working.active_mask
    present = np.unique(labs[active])
    if classes is None:
        wanted = present
    else:
        wanted = np.asarray(list(classes), dtype=np.int64)
        missing = np.setdiff1d(wanted, present)
        if missing.size:
            raise EmptyPopulation(
                f"domain {dataset.domain_id!r} has no active samples for "
                f"class(es) {missing.tolist()}")
    centers = {}
    for c in wanted:
        members = active & (labs == c)
        centers[int(c)] = dataset.features[members].mean(axis=0)
    return centers


def check_domain_pair(a: DomainDataset, b: DomainDataset) -> int:
    """Validate that two domains are alignable; returns the shared dimension."""
    if a.d != b.d:
        raise DimensionMismatch(
            f"feature dimensions differ: {a.d} (domain {a.domain_id!r}) vs "
            f"{b.d} (domain {b.domain_id!r})")
    return a.d
