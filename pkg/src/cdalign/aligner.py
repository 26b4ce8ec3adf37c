"""Alternating alignment of two partially labeled domains.

Each outer round fits a classifier on the pooled transformed labeled samples,
pseudo-labels both unlabeled pools with entropy-gated outlier rejection, and
refits the transform pair on the merged working labels. Every refit restarts
from the identity pair: the working labels fully determine the round's
objective, and restarting keeps one round's solution from quietly steering
the next through its initialization. Rounds repeat until consecutive
pseudo-label assignments
agree on at least ``agreement_threshold`` of the pooled unlabeled samples or
``max_outer`` rounds have run. The final classifier is refit on the labeled
samples only; every unlabeled sample then receives a class, the unknown
class included, with no rejection.

``max_outer=0`` skips alignment entirely: transforms stay at identity and
classification happens in the original space. That configuration is the
no-adaptation baseline used as a reference point in the experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import pseudolabel
from .classifiers import fit_linear, fit_soft_knn
from .data import DomainDataset, TransformPair, check_domain_pair, transform
from .exceptions import EmptyPopulation
from .losses import Hyperparams
from .solver import SolverSettings, SolverTrace, minimize


@dataclass(frozen=True)
class IterationRecord:
    """One outer round: the assignment stats and the solver outcome.

    ``agreement`` is the fraction of pooled unlabeled samples whose predicted
    class matches the previous round (NaN on the first round). ``trace`` is
    None on a round that stopped at the agreement check before solving.
    """

    iteration: int
    agreement: float
    threshold: float
    n_outliers: int
    guard_applied: bool
    stopped: bool
    trace: Optional[SolverTrace] = field(repr=False, default=None)

    @property
    def final_loss(self):
        return None if self.trace is None else self.trace.final.breakdown.total


@dataclass(frozen=True)
class PredictionResult:
    """Final classification of every unlabeled sample, pooled A-then-B."""

    domain: np.ndarray
    index: np.ndarray
    predicted: np.ndarray
    proba: np.ndarray
    classes: np.ndarray

    @property
    def n(self):
        return int(self.index.shape[0])

    def for_domain(self, domain_id):
        mask = self.domain == domain_id
        return self.index[mask], self.predicted[mask]


def assignment_agreement(previous, current):
    """Fraction of positions where the two assignments name the same class.

    An empty pool counts as full agreement; a missing previous assignment
    gives NaN so the first round can never trigger the stop rule.
    """
    if previous is None:
        return float("nan")
    if current.shape[0] == 0:
        return 1.0
    if previous.shape[0] != current.shape[0]:
        raise ValueError("assignments cover different sample counts")
    return float(np.mean(previous == current))


class CollaborativeAligner(BaseEstimator):
    """Joint transform learning and cross-domain pseudo-label exchange.

    Parameters mirror the loss weights and solver settings; ``classifier``
    selects the base model ("linear" or "soft_knn"). All state produced by
    ``fit`` lands in trailing-underscore attributes.
    """

    def __init__(self, lambda_m=10.0, lambda_g=1.0, lambda_u=0.1,
                 lambda_r=0.01, margin=1.0, conditional=True,
                 classifier="linear", classifier_l2=1e-3, knn_k=5,
                 knn_temperature=1.0, max_outer=10, agreement_threshold=0.99,
                 initial_step=1e-2, shrink=0.5, sufficient_decrease=1e-4,
                 max_steps=100, grad_tol=None, refresh_period=10,
                 max_halvings=60):
        self.lambda_m = lambda_m
        self.lambda_g = lambda_g
        self.lambda_u = lambda_u
        self.lambda_r = lambda_r
        self.margin = margin
        self.conditional = conditional
        self.classifier = classifier
        self.classifier_l2 = classifier_l2
        self.knn_k = knn_k
        self.knn_temperature = knn_temperature
        self.max_outer = max_outer
        self.agreement_threshold = agreement_threshold
        self.initial_step = initial_step
        self.shrink = shrink
        self.sufficient_decrease = sufficient_decrease
        self.max_steps = max_steps
        self.grad_tol = grad_tol
        self.refresh_period = refresh_period
        self.max_halvings = max_halvings

    def _hyperparams(self):
        return Hyperparams(lambda_m=self.lambda_m, lambda_g=self.lambda_g,
                           lambda_u=self.lambda_u, lambda_r=self.lambda_r,
                           margin=self.margin, conditional=self.conditional)

    def _settings(self):
        return SolverSettings(initial_step=self.initial_step,
                              shrink=self.shrink,
                              sufficient_decrease=self.sufficient_decrease,
                              max_steps=self.max_steps,
                              grad_tol=self.grad_tol,
                              refresh_period=self.refresh_period,
                              max_halvings=self.max_halvings)

    def _fit_classifier(self, a, b, t):
        xs, ys = [], []
        for ds, w in ((a, t.w_a), (b, t.w_b)):
            idx = ds.labeled_indices
            xs.append(transform(ds.features[idx], w))
            ys.append(ds.labels[idx])
        x = np.vstack(xs)
        y = np.concatenate(ys)
        if y.size == 0:
            raise EmptyPopulation("no labeled samples in either domain")
        if self.classifier == "linear":
            return fit_linear(x, y, l2_weight=self.classifier_l2)
        if self.classifier == "soft_knn":
            return fit_soft_knn(x, y, k=self.knn_k,
                                temperature=self.knn_temperature)
        raise ValueError(f"unknown classifier {self.classifier!r}")

    def fit(self, a: DomainDataset, b: DomainDataset):
        d = check_domain_pair(a, b)
        if self.max_outer < 0:
            raise ValueError("max_outer must be >= 0")
        if not 0.0 < self.agreement_threshold <= 1.0:
            raise ValueError("agreement_threshold must be in (0, 1]")
        h = self._hyperparams()
        settings = self._settings()

        t = TransformPair.identity(d)
        history = []
        previous = None
        converged = False
        n_rounds = 0
        for outer in range(1, self.max_outer + 1):
            try:
                clf = self._fit_classifier(a, b, t)
                report = pseudolabel.assign(clf, a, b, t)
                agreement = assignment_agreement(previous, report.predicted)
                previous = report.predicted
                if not math.isnan(agreement) \
                        and agreement >= self.agreement_threshold:
                    converged = True
                    history.append(IterationRecord(
                        iteration=outer, agreement=agreement,
                        threshold=report.threshold,
                        n_outliers=int(report.outlier.sum()),
                        guard_applied=report.guard_applied, stopped=True))
                    break
                working_a, working_b = pseudolabel.apply_report(a, b, report)
                t, trace = minimize(a, b, working_a, working_b,
                                    TransformPair.identity(d), h, settings)
                n_rounds = outer
                history.append(IterationRecord(
                    iteration=outer, agreement=agreement,
                    threshold=report.threshold,
                    n_outliers=int(report.outlier.sum()),
                    guard_applied=report.guard_applied, stopped=False,
                    trace=trace))
            except Exception as exc:
                # abort contract: the failing round's number and every
                # completed round's record ride along on the exception
                exc.pipeline_round = outer
                exc.pipeline_history = tuple(history)
                raise

        self.domain_ids_ = (a.domain_id, b.domain_id)
        self.transforms_ = t
        self.history_ = tuple(history)
        self.n_iter_ = n_rounds
        self.converged_ = converged
        self.classifier_ = self._fit_classifier(a, b, t)
        self.result_ = self._final_predictions(a, b, t)
        return self

    def _final_predictions(self, a, b, t):
        parts = []
        for ds, w in ((a, t.w_a), (b, t.w_b)):
            idx = ds.unlabeled_indices
            parts.append((ds.domain_id, idx, transform(ds.features[idx], w)))
        domain = np.concatenate(
            [np.repeat(did, idx.size) for did, idx, _ in parts]).astype(object)
        index = np.concatenate([idx for _, idx, _ in parts]).astype(np.int64)
        classes = np.asarray(self.classifier_.classes())
        if index.size == 0:
            return PredictionResult(domain=domain, index=index,
                                    predicted=np.empty(0, dtype=np.int64),
                                    proba=np.empty((0, classes.size)),
                                    classes=classes)
        pooled = np.vstack([feats for _, _, feats in parts])
        proba = self.classifier_.predict_proba(pooled)
        predicted = classes[np.argmax(proba, axis=1)]
        return PredictionResult(domain=domain, index=index,
                                predicted=predicted, proba=proba,
                                classes=classes)

    def _check_fitted(self):
        if not hasattr(self, "transforms_"):
            raise NotFittedError("aligner is not fitted; call fit first")

    def _transform_for(self, domain):
        self._check_fitted()
        if domain == self.domain_ids_[0]:
            return self.transforms_.w_a
        if domain == self.domain_ids_[1]:
            return self.transforms_.w_b
        raise ValueError(
            f"unknown domain {domain!r}; fitted on {self.domain_ids_}")

    def transform(self, features, domain):
        return transform(np.asarray(features, dtype=np.float64),
                         self._transform_for(domain))

    def predict_proba(self, features, domain):
        return self.classifier_.predict_proba(self.transform(features, domain))

    def predict(self, features, domain):
        proba = self.predict_proba(features, domain)
        return np.asarray(self.classifier_.classes())[np.argmax(proba, axis=1)]


def labeled_only_baseline(a: DomainDataset, b: DomainDataset,
                          **params) -> CollaborativeAligner:
    """The no-adaptation reference: same classifier, identity transforms."""
    params = dict(params, max_outer=0)
    return CollaborativeAligner(**params).fit(a, b)
