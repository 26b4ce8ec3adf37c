"""Shared builders and oracles for the test suite."""

import numpy as np

from cdalign.data import EXCLUDED, UNKNOWN, UNLABELED, DomainDataset, TransformPair, WorkingLabels


def make_domain(domain_id, features, labels):
    return DomainDataset(domain_id, np.asarray(features, dtype=float),
                         np.asarray(labels, dtype=np.int64))


def working(labels, pseudo=None):
    labels = np.asarray(labels, dtype=np.int64)
    if pseudo is None:
        pseudo = np.zeros(labels.shape, dtype=bool)
    return WorkingLabels(labels=labels, pseudo=np.asarray(pseudo, dtype=bool))


def numeric_gradient(fn, w, step=1e-5):
    """Central finite differences of a scalar function of one matrix."""
    g = np.zeros_like(w)
    for i in range(w.shape[0]):
        for j in range(w.shape[1]):
            bump = np.zeros_like(w)
            bump[i, j] = step
            g[i, j] = (fn(w + bump) - fn(w - bump)) / (2.0 * step)
    return g


def relative_error(analytic, numeric):
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if denom == 0.0:
        return 0.0
    return np.linalg.norm(analytic - numeric) / denom


def random_pair_instance(seed, d=6, n=15, n_classes=3, scale=1.0):
    """A random two-domain working-labeled instance for gradient checks.

    Guarantees: every class 0..n_classes-1 present in both domains (so the
    conditional term is live), at least two unknown-labeled samples per
    domain, a few excluded samples, and non-identity transforms.
    """
    rng = np.random.default_rng(seed)

    def one_side(domain_id):
        feats = rng.normal(scale=scale, size=(n, d))
        labels = np.empty(n, dtype=np.int64)
        labels[:n_classes] = np.arange(n_classes)  # one guaranteed member each
        rest = rng.integers(0, n_classes + 2, size=n - n_classes)
        labels[n_classes:] = np.where(rest < n_classes, rest, UNKNOWN)
        labels[n - 1] = UNKNOWN  # at least two unknowns
        labels[n - 2] = UNKNOWN
        excluded = rng.random(n) < 0.15
        excluded[:n_classes] = False
        excluded[n - 2:] = False
        excluded[n_classes] = True  # at least one excluded sample per domain
        labels[excluded] = EXCLUDED
        pseudo = rng.random(n) < 0.5
        pseudo[excluded] = True
        ds_labels = labels.copy()
        ds_labels[excluded] = UNLABELED  # dataset view: these were never labeled
        return make_domain(domain_id, feats, ds_labels), working(labels, pseudo)

    a, wa = one_side("A")
    b, wb = one_side("B")
    t = TransformPair(np.eye(d) + 0.1 * rng.normal(size=(d, d)),
                      np.eye(d) + 0.1 * rng.normal(size=(d, d)))
    return a, b, wa, wb, t
