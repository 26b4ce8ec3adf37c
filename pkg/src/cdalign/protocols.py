"""Seeded labeling protocols and the synthetic two-domain generator.

Each sampler takes fully labeled input (or generates it) and returns the
partially labeled domain pair handed to the pipeline plus the held-back
ground truth for scoring. Protocol counts are satisfied exactly or the
sampler raises a ProtocolInfeasible error naming the shortfall.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .data import UNKNOWN, UNLABELED, DomainDataset
from .exceptions import ProtocolInfeasible


def _check_label_budget(per_domain, shared, n_known, context):
    if not 0 < shared <= per_domain <= n_known:
        raise ProtocolInfeasible(
            f"{context}: need 0 < shared ({shared}) <= per-domain labeled "
            f"classes ({per_domain}) <= known classes ({n_known})")
    if 2 * per_domain - shared > n_known:
        raise ProtocolInfeasible(
            f"{context}: two labeled sets of {per_domain} classes overlapping "
            f"in {shared} need {2 * per_domain - shared} known classes, "
            f"only {n_known} available")


def _select_label_classes(rng, known, per_domain, shared):
    """Pick each domain's labeled known classes with an exact overlap."""
    known = np.asarray(known)
    both = rng.choice(known, size=shared, replace=False)
    rest = np.setdiff1d(known, both)
    only_a = rng.choice(rest, size=per_domain - shared, replace=False)
    rest = np.setdiff1d(rest, only_a)
    only_b = rng.choice(rest, size=per_domain - shared, replace=False)
    return np.sort(np.concatenate([both, only_a])), \
        np.sort(np.concatenate([both, only_b]))


def _label_domain(rng, truth, classes, per_class, n_unknown, context):
    """Build the partial label vector: sampled known + unknown labels."""
    labels = np.full(truth.shape[0], UNLABELED, dtype=np.int64)
    for c in classes:
        pool = np.flatnonzero(truth == c)
        if pool.size < per_class:
            raise ProtocolInfeasible(
                f"{context}: class {c} has {pool.size} samples, "
                f"needs {per_class}")
        picked = rng.choice(pool, size=per_class, replace=False)
        labels[picked] = c
    if n_unknown > 0:
        pool = np.flatnonzero(truth == UNKNOWN)
        if pool.size < n_unknown:
            raise ProtocolInfeasible(
                f"{context}: {pool.size} unknown-class samples available, "
                f"needs {n_unknown}")
        picked = rng.choice(pool, size=n_unknown, replace=False)
        labels[picked] = UNKNOWN
    return labels


def _full_truth(dataset, known):
    return np.where(np.isin(dataset.labels, known), dataset.labels, UNKNOWN)


def _check_fully_labeled(dataset, context):
    if np.any(dataset.labels < 0):
        raise ProtocolInfeasible(
            f"{context}: input domain {dataset.domain_id!r} must be fully "
            "labeled with non-negative class ids")


@dataclass(frozen=True)
class OfficeProtocolSpec:
    """Open-set object-recognition labeling counts."""

    n_known: int = 15
    labeled_known_per_domain: int = 10
    shared_labeled: int = 5
    labeled_per_class: int = 3
    labeled_unknown: int = 9
    repeats: int = 5
    seed: int = 0

    def __post_init__(self):
        for name in ("n_known", "labeled_known_per_domain", "shared_labeled",
                     "labeled_per_class", "labeled_unknown", "repeats"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        _check_label_budget(self.labeled_known_per_domain, self.shared_labeled,
                            self.n_known, "office protocol")


def apply_office_protocol(full_a: DomainDataset, full_b: DomainDataset,
                          spec: OfficeProtocolSpec):
    """Select known classes, merge the rest into unknown, sample labels.

    Returns the partially labeled pair and per-domain ground truth (full
    label vectors with non-known classes merged into the unknown class).
    """
    _check_fully_labeled(full_a, "office protocol")
    _check_fully_labeled(full_b, "office protocol")
    common = np.intersect1d(full_a.label_classes(), full_b.label_classes())
    if common.size < spec.n_known + 1:
        raise ProtocolInfeasible(
            f"office protocol: need at least {spec.n_known + 1} classes "
            f"present in both domains, got {common.size}")
    rng = np.random.default_rng(spec.seed)
    known = np.sort(rng.choice(common, size=spec.n_known, replace=False))
    classes_a, classes_b = _select_label_classes(
        rng, known, spec.labeled_known_per_domain, spec.shared_labeled)

    out = []
    truth = {}
    for ds, classes in ((full_a, classes_a), (full_b, classes_b)):
        t = _full_truth(ds, known)
        labels = _label_domain(rng, t, classes, spec.labeled_per_class,
                               spec.labeled_unknown,
                               f"office protocol, domain {ds.domain_id!r}")
        out.append(DomainDataset(domain_id=ds.domain_id,
                                 features=ds.features, labels=labels))
        truth[ds.domain_id] = t
    return out[0], out[1], truth


@dataclass(frozen=True)
class ReidProtocolSpec:
    """Cross-view re-identification labeling fractions of N shared ids."""

    labeled_fraction: Fraction = Fraction(2, 3)
    shared_fraction: Fraction = Fraction(1, 3)
    labeled_per_class: int = 1
    unknown_fraction: Fraction = Fraction(1, 4)
    seed: int = 0

    def __post_init__(self):
        for name in ("labeled_fraction", "shared_fraction", "unknown_fraction"):
            f = Fraction(getattr(self, name))
            object.__setattr__(self, name, f)
            if not 0 <= f <= 1:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.shared_fraction > self.labeled_fraction:
            raise ValueError("shared_fraction cannot exceed labeled_fraction")
        if self.labeled_per_class < 1:
            raise ValueError("labeled_per_class must be >= 1")

    def counts(self, n_shared):
        """Exact floored counts (labeled known, shared, labeled unknown)."""
        return (math.floor(self.labeled_fraction * n_shared),
                math.floor(self.shared_fraction * n_shared),
                math.floor(self.unknown_fraction * n_shared))


def apply_reid_protocol(view_a: DomainDataset, view_b: DomainDataset,
                        spec: ReidProtocolSpec):
    """Shared identities become the known classes; view-private ones are
    merged into the unknown class. Label counts follow the floored
    fractions of N = number of shared identities.
    """
    _check_fully_labeled(view_a, "re-id protocol")
    _check_fully_labeled(view_b, "re-id protocol")
    known = np.intersect1d(view_a.label_classes(), view_b.label_classes())
    n = int(known.size)
    if n == 0:
        raise ProtocolInfeasible(
            "re-id protocol: the two views share no identities")
    per_domain, shared, n_unknown = spec.counts(n)
    _check_label_budget(per_domain, shared, n, "re-id protocol")

    rng = np.random.default_rng(spec.seed)
    classes_a, classes_b = _select_label_classes(rng, known, per_domain, shared)
    out = []
    truth = {}
    for ds, classes in ((view_a, classes_a), (view_b, classes_b)):
        t = _full_truth(ds, known)
        labels = _label_domain(rng, t, classes, spec.labeled_per_class,
                               n_unknown,
                               f"re-id protocol, view {ds.domain_id!r}")
        out.append(DomainDataset(domain_id=ds.domain_id,
                                 features=ds.features, labels=labels))
        truth[ds.domain_id] = t
    return out[0], out[1], truth


@dataclass(frozen=True)
class SyntheticSpec:
    """Two-domain Gaussian-cluster generator with a controlled shift.

    Class centers are drawn at ``center_scale`` spread and then pushed
    ``center_offset`` along one seeded direction, placing the whole cluster
    field far from the origin the way non-negative deep-network embeddings
    sit far from zero. Domain B draws from the same class distributions as
    domain A and is then pushed through a rotation (``angle_deg`` in each
    consecutive coordinate plane) plus a translation of ``shift_sigma``
    standard deviations along a seeded random direction. Rotating an
    off-origin field displaces every class center in a class-dependent way,
    so the shift genuinely degrades a shared classifier yet stays exactly
    correctable by one linear transform per domain. Each domain additionally
    owns ``n_private_unknown`` clusters of unknown-class samples; their
    centers sit ``unknown_offset`` standard deviations away from a known
    class center, so unknown samples are confusable with known ones rather
    than trivially separable. The labeling fields mirror the
    object-recognition protocol at small scale; the two labeled class sets
    overlap in only ``shared_labeled`` classes, so most classes are labeled
    on one side only and cross-domain label transfer is load-bearing.
    """

    d: int = 16
    n_known: int = 8
    n_private_unknown: int = 2
    n_per_class: int = 40
    center_scale: float = 1.0
    center_offset: float = 16.0
    sigma: float = 0.5
    unknown_offset: float = 3.0
    angle_deg: float = 30.0
    shift_sigma: float = 2.0
    labeled_known_per_domain: int = 5
    shared_labeled: int = 2
    labeled_per_class: int = 5
    labeled_unknown: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("d must be >= 2")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if self.unknown_offset <= 0:
            raise ValueError("unknown_offset must be > 0")
        if self.center_offset < 0:
            raise ValueError("center_offset must be >= 0")
        for name in ("n_known", "n_private_unknown", "n_per_class",
                     "labeled_known_per_domain", "shared_labeled",
                     "labeled_per_class", "labeled_unknown"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        _check_label_budget(self.labeled_known_per_domain, self.shared_labeled,
                            self.n_known, "synthetic spec")
        if self.labeled_per_class > self.n_per_class:
            raise ValueError("labeled_per_class cannot exceed n_per_class")
        if self.labeled_unknown > self.n_private_unknown * self.n_per_class:
            raise ValueError("labeled_unknown exceeds the unknown sample count")


def rotation_matrix(d, angle_deg):
    """Rotation by the same angle in each consecutive coordinate plane."""
    theta = math.radians(angle_deg)
    c, s = math.cos(theta), math.sin(theta)
    r = np.eye(d)
    for i in range(0, d - 1, 2):
        r[i, i] = c
        r[i, i + 1] = -s
        r[i + 1, i] = s
        r[i + 1, i + 1] = c
    return r


def generate_synthetic(spec: SyntheticSpec):
    """Draw the domain pair, apply the shift to B, then sample labels."""
    rng = np.random.default_rng(spec.seed)
    d, k, p, m = spec.d, spec.n_known, spec.n_private_unknown, spec.n_per_class
    known_centers = spec.center_scale * rng.standard_normal((k, d))
    base_direction = rng.standard_normal(d)
    base_direction /= np.linalg.norm(base_direction)
    known_centers = known_centers + spec.center_offset * base_direction

    def place_unknowns():
        anchors = rng.integers(0, k, size=p)
        dirs = rng.standard_normal((p, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        return known_centers[anchors] + spec.unknown_offset * spec.sigma * dirs

    unknown_centers = {"A": place_unknowns(), "B": place_unknowns()}
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    rot = rotation_matrix(d, spec.angle_deg)
    shift = spec.shift_sigma * spec.sigma * direction

    datasets = []
    truth = {}
    for domain_id in ("A", "B"):
        blocks = [known_centers[c] + spec.sigma * rng.standard_normal((m, d))
                  for c in range(k)]
        blocks += [center + spec.sigma * rng.standard_normal((m, d))
                   for center in unknown_centers[domain_id]]
        feats = np.vstack(blocks)
        t = np.concatenate([np.repeat(np.arange(k), m),
                            np.full(p * m, UNKNOWN)])
        if domain_id == "B":
            feats = feats @ rot.T + shift
        datasets.append((domain_id, feats, t))
        truth[domain_id] = t

    labeling_rng = np.random.default_rng(spec.seed + 1)
    classes_a, classes_b = _select_label_classes(
        labeling_rng, np.arange(k), spec.labeled_known_per_domain,
        spec.shared_labeled)
    out = []
    for (domain_id, feats, t), classes in zip(datasets,
                                              (classes_a, classes_b)):
        labels = _label_domain(labeling_rng, t, classes,
                               spec.labeled_per_class, spec.labeled_unknown,
                               f"synthetic, domain {domain_id!r}")
        out.append(DomainDataset(domain_id=domain_id, features=feats,
                                 labels=labels))
    return out[0], out[1], truth
