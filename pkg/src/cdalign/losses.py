"""Alignment objective: component losses, neighbor assignment, analytic gradients.

The objective couples two square feature maps (one per domain):

    total = conditional + lambda_m * marginal + lambda_g * aggregation
          + lambda_u * separation + lambda_r * regularization

where conditional/marginal align class-conditional and overall centers of the
known-class populations, aggregation pulls every labeled class (unknown
included) toward its own center, separation is a hinge margin pushing each
known sample closer to its class center than to its nearest unknown-labeled
sample in either domain, and regularization anchors both maps to the identity
(the quadratic terms alone are annihilated by the zero map).

All features are row vectors; a map is applied as X @ W. Every quadratic
``||X W - Y V||_F^2`` contributes ``2 X^T (X W - Y V)`` to the gradient in W
and ``-2 Y^T (X W - Y V)`` to the gradient in V.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import UNKNOWN, DomainDataset, TransformPair, WorkingLabels, check_domain_pair
from .exceptions import DimensionMismatch, EmptyPopulation


@dataclass(frozen=True)
class Hyperparams:
    """Objective weights. margin sets the scale of the separation hinge;
    conditional=False drops the class-conditional term entirely (ablation)."""

    lambda_m: float = 10.0
    lambda_g: float = 1.0
    lambda_u: float = 0.1
    lambda_r: float = 0.01
    margin: float = 1.0
    conditional: bool = True

    def __post_init__(self):
        for name in ("lambda_m", "lambda_g", "lambda_u", "lambda_r"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.margin < 0:
            raise ValueError("margin must be non-negative")


@dataclass(frozen=True)
class LossBreakdown:
    """Raw component values plus the weighted total."""

    conditional: float
    marginal: float
    aggregation: float
    separation: float
    regularization: float
    total: float


@dataclass(frozen=True)
class NeighborAssignment:
    """Nearest active unknown-labeled sample for each active known-class sample.

    Arrays with suffix ``_a``/``_b`` are aligned with the active known-class
    rows of that domain in increasing sample order. ``side`` is 0 when the
    chosen unknown lives in domain A, 1 when it lives in domain B; ``idx``
    indexes into the chosen domain. All arrays are empty when a domain has no
    known samples or no active unknown sample exists anywhere.
    """

    known_idx_a: np.ndarray
    anchor_side_a: np.ndarray
    anchor_idx_a: np.ndarray
    known_idx_b: np.ndarray
    anchor_side_b: np.ndarray
    anchor_idx_b: np.ndarray

    @property
    def n_pairs(self) -> int:
        return self.known_idx_a.size + self.known_idx_b.size


def combine(conditional, marginal, aggregation, separation, regularization,
            h: Hyperparams) -> float:
    """Weighted total. The conditional term carries unit weight by definition."""
    return (conditional
            + h.lambda_m * marginal
            + h.lambda_g * aggregation
            + h.lambda_u * separation
            + h.lambda_r * regularization)


def identity_regularizer(t: TransformPair) -> float:
    eye = np.eye(t.d)
    return 0.5 * (np.sum((t.w_a - eye) ** 2) + np.sum((t.w_b - eye) ** 2))


class _Side:
    """Precomputed index structure for one working-labeled domain."""

    def __init__(self, dataset: DomainDataset, working: WorkingLabels):
        if working.labels.shape[0] != dataset.n:
            raise DimensionMismatch(
                f"working labels for domain {dataset.domain_id!r} have length "
                f"{working.labels.shape[0]}, dataset has {dataset.n} samples")
        self.dataset = dataset
        self.working = working
        feats = dataset.features
        labs = working.labels

        self.known_rows = np.flatnonzero(working.known_mask)
        self.known_feats = feats[self.known_rows]
        self.known_labels = labs[self.known_rows]
        self.unknown_rows = np.flatnonzero(working.unknown_mask)
        self.unknown_feats = feats[self.unknown_rows]

        # Per-class centers over active samples, unknown class included.
        self.centers = {}
        self.agg_matrix = np.zeros((dataset.d, dataset.d))
        for c in np.unique(labs[working.active_mask]):
            members = feats[labs == c]
            center = members.mean(axis=0)
            self.centers[int(c)] = center
            centered = members - center
            self.agg_matrix += (centered.T @ centered) / members.shape[0]

        # Known samples centered on their own class center, for the hinge.
        if self.known_rows.size:
            own_centers = np.stack([self.centers[int(c)] for c in self.known_labels])
            self.centered_known = self.known_feats - own_centers
            self.known_mean = self.known_feats.mean(axis=0)
        else:
            self.centered_known = np.zeros((0, dataset.d))
            self.known_mean = None

    def known_classes(self):
        return sorted(c for c in self.centers if c >= 0)


class LossProblem:
    """The objective over one fixed pair of working-labeled domains.

    Construction does all per-class indexing once; evaluations afterwards are
    d x d algebra plus one pass over the hinge pairs, which keeps the line
    search cheap.
    """

    def __init__(self, a: DomainDataset, b: DomainDataset,
                 working_a: WorkingLabels, working_b: WorkingLabels,
                 h: Hyperparams, warn_no_shared: bool = True):
        self.d = check_domain_pair(a, b)
        self.h = h
        self.sides = (_Side(a, working_a), _Side(b, working_b))
        sa, sb = self.sides

        shared = sorted(set(sa.known_classes()) & set(sb.known_classes()))
        self.shared_classes = shared
        if shared:
            self.shared_centers_a = np.stack([sa.centers[c] for c in shared])
            self.shared_centers_b = np.stack([sb.centers[c] for c in shared])
        else:
            self.shared_centers_a = np.zeros((0, self.d))
            self.shared_centers_b = np.zeros((0, self.d))
            if h.conditional and warn_no_shared:
                warnings.warn(
                    "no class is labeled in both domains; the conditional "
                    "alignment term is 0", RuntimeWarning, stacklevel=2)

    # -- component values ---------------------------------------------------

    def marginal_means(self):
        for side in self.sides:
            if side.known_mean is None:
                raise EmptyPopulation(
                    f"domain {side.dataset.domain_id!r} has no active "
                    "known-class sample; marginal alignment is undefined")
        return self.sides[0].known_mean, self.sides[1].known_mean

    def marginal(self, t: TransformPair) -> float:
        p_a, p_b = self.marginal_means()
        r = p_a @ t.w_a - p_b @ t.w_b
        return 0.5 * float(r @ r)

    def conditional(self, t: TransformPair) -> float:
        r = self.shared_centers_a @ t.w_a - self.shared_centers_b @ t.w_b
        return 0.5 * float(np.sum(r * r))

    def aggregation(self, t: TransformPair) -> float:
        ga = np.sum(t.w_a * (self.sides[0].agg_matrix @ t.w_a))
        gb = np.sum(t.w_b * (self.sides[1].agg_matrix @ t.w_b))
        return 0.5 * float(ga + gb)

    def assign_neighbors(self, t: TransformPair) -> NeighborAssignment:
        """Nearest unknown anchor per known sample, searched over both domains.

        Distance is squared Euclidean between mapped features. Exact ties go
        to the lowest (domain, sample index), domain A ordered before B.
        """
        sa, sb = self.sides
        pool_side = np.concatenate([np.zeros(sa.unknown_rows.size, dtype=np.int64),
                                    np.ones(sb.unknown_rows.size, dtype=np.int64)])
        pool_idx = np.concatenate([sa.unknown_rows, sb.unknown_rows])
        pool_mapped = np.vstack([sa.unknown_feats @ t.w_a,
                                 sb.unknown_feats @ t.w_b])

        def per_domain(side, w):
            if side.known_rows.size == 0 or pool_idx.size == 0:
                empty = np.zeros(0, dtype=np.int64)
                return empty, empty, empty
            mapped = side.known_feats @ w
            d2 = (np.sum(mapped ** 2, axis=1)[:, None]
                  + np.sum(pool_mapped ** 2, axis=1)[None, :]
                  - 2.0 * mapped @ pool_mapped.T)
            pick = np.argmin(d2, axis=1)  # first minimum = lowest (domain, idx)
            return side.known_rows.copy(), pool_side[pick], pool_idx[pick]

        ka, sa_side, sa_idx = per_domain(sa, t.w_a)
        kb, sb_side, sb_idx = per_domain(sb, t.w_b)
        return NeighborAssignment(ka, sa_side, sa_idx, kb, sb_side, sb_idx)

    def hinge_arguments(self, t: TransformPair, neighbors: NeighborAssignment):
        """Per-pair margin + f_c - f_u for each domain, aligned with known rows."""
        out = []
        for which, side in enumerate(self.sides):
            known_idx = (neighbors.known_idx_a, neighbors.known_idx_b)[which]
            anchor_side = (neighbors.anchor_side_a, neighbors.anchor_side_b)[which]
            anchor_idx = (neighbors.anchor_idx_a, neighbors.anchor_idx_b)[which]
            if known_idx.size == 0:
                out.append(np.zeros(0))
                continue
            if not np.array_equal(known_idx, side.known_rows):
                raise DimensionMismatch(
                    "neighbor assignment does not match the active known rows; "
                    "it was built for different working labels")
            w = (t.w_a, t.w_b)[which]
            f_c = np.sum((side.centered_known @ w) ** 2, axis=1)
            anchor_mapped = np.empty((known_idx.size, self.d))
            for s in (0, 1):
                rows = anchor_side == s
                if rows.any():
                    feats = self.sides[s].dataset.features[anchor_idx[rows]]
                    anchor_mapped[rows] = feats @ (t.w_a, t.w_b)[s]
            f_u = np.sum((side.known_feats @ w - anchor_mapped) ** 2, axis=1)
            out.append(self.h.margin + f_c - f_u)
        return out

    def separation(self, t: TransformPair, neighbors: NeighborAssignment) -> float:
        args = self.hinge_arguments(t, neighbors)
        return 0.5 * float(sum(np.sum(np.maximum(arg, 0.0)) for arg in args))

    def active_set(self, t: TransformPair, neighbors: NeighborAssignment):
        """Strictly violating pairs; a pair exactly at the kink is inactive."""
        return tuple(arg > 0.0 for arg in self.hinge_arguments(t, neighbors))

    def value(self, t: TransformPair,
              neighbors: NeighborAssignment | None = None) -> LossBreakdown:
        if neighbors is None:
            neighbors = self.assign_neighbors(t)
        cond = self.conditional(t) if self.h.conditional else 0.0
        marg = self.marginal(t)
        agg = self.aggregation(t)
        sep = self.separation(t, neighbors)
        reg = identity_regularizer(t)
        return LossBreakdown(cond, marg, agg, sep, reg,
                             combine(cond, marg, agg, sep, reg, self.h))

    # -- gradients ----------------------------------------------------------

    def component_gradients(self, t: TransformPair,
                            neighbors: NeighborAssignment | None = None,
                            active=None) -> dict:
        """Unweighted gradient of each component, as {name: (g_a, g_b)}.

        The separation gradient treats the hinge active set as fixed: by
        default it is taken at t itself (strict violations; exactly-at-kink
        pairs contribute 0), or pass the masks captured at an earlier point.
        """
        if neighbors is None:
            neighbors = self.assign_neighbors(t)
        if active is None:
            active = self.active_set(t, neighbors)
        d = self.d
        sa, sb = self.sides
        out = {}

        p_a, p_b = self.marginal_means()
        r = p_a @ t.w_a - p_b @ t.w_b
        out["marginal"] = (np.outer(p_a, r), -np.outer(p_b, r))

        if self.shared_centers_a.shape[0]:
            rc = self.shared_centers_a @ t.w_a - self.shared_centers_b @ t.w_b
            out["conditional"] = (self.shared_centers_a.T @ rc,
                                  -self.shared_centers_b.T @ rc)
        else:
            out["conditional"] = (np.zeros((d, d)), np.zeros((d, d)))

        out["aggregation"] = (sa.agg_matrix @ t.w_a, sb.agg_matrix @ t.w_b)

        g_sep = [np.zeros((d, d)), np.zeros((d, d))]
        for which, side in enumerate(self.sides):
            mask = active[which]
            if mask.size == 0 or not mask.any():
                continue
            w = (t.w_a, t.w_b)[which]
            anchor_side = (neighbors.anchor_side_a, neighbors.anchor_side_b)[which]
            anchor_idx = (neighbors.anchor_idx_a, neighbors.anchor_idx_b)[which]
            x = side.known_feats[mask]
            x_cent = side.centered_known[mask]
            a_side = anchor_side[mask]
            a_idx = anchor_idx[mask]
            a_feats = np.empty((x.shape[0], d))
            a_mapped = np.empty((x.shape[0], d))
            for s in (0, 1):
                rows = a_side == s
                if rows.any():
                    a_feats[rows] = self.sides[s].dataset.features[a_idx[rows]]
                    a_mapped[rows] = a_feats[rows] @ (t.w_a, t.w_b)[s]
            r_u = x @ w - a_mapped
            # d(1/2 sum f_c)/dW_D and the -f_u part for the sample's own map
            g_sep[which] += x_cent.T @ (x_cent @ w) - x.T @ r_u
            # +f_u part credited to whichever map the anchor went through
            for s in (0, 1):
                rows = a_side == s
                if rows.any():
                    g_sep[s] += a_feats[rows].T @ r_u[rows]
        out["separation"] = (g_sep[0], g_sep[1])

        eye = np.eye(d)
        out["regularization"] = (t.w_a - eye, t.w_b - eye)
        return out

    def gradients(self, t: TransformPair,
                  neighbors: NeighborAssignment | None = None,
                  active=None):
        """Weighted total gradient (g_a, g_b)."""
        parts = self.component_gradients(t, neighbors, active)
        h = self.h
        weights = {"conditional": 1.0 if h.conditional else 0.0,
                   "marginal": h.lambda_m, "aggregation": h.lambda_g,
                   "separation": h.lambda_u, "regularization": h.lambda_r}
        g_a = np.zeros((self.d, self.d))
        g_b = np.zeros((self.d, self.d))
        for name, (pa, pb) in parts.items():
            g_a += weights[name] * pa
            g_b += weights[name] * pb
        return g_a, g_b


# -- module-level op surface (fresh problem per call; fine at test scale) ----

def marginal_means(a, b, working_a, working_b):
    """Means of the active known-class samples of each domain (original space)."""
    return LossProblem(a, b, working_a, working_b, Hyperparams(),
                       warn_no_shared=False).marginal_means()


def dist_marginal(a, b, working_a, working_b, t) -> float:
    return LossProblem(a, b, working_a, working_b, Hyperparams(),
                       warn_no_shared=False).marginal(t)


def dist_conditional(a, b, working_a, working_b, t) -> float:
    problem = LossProblem(a, b, working_a, working_b, Hyperparams())
    return problem.conditional(t)


def aggregation(a, b, working_a, working_b, t) -> float:
    return LossProblem(a, b, working_a, working_b, Hyperparams(),
                       warn_no_shared=False).aggregation(t)


def assign_neighbors(a, b, working_a, working_b, t) -> NeighborAssignment:
    return LossProblem(a, b, working_a, working_b, Hyperparams(),
                       warn_no_shared=False).assign_neighbors(t)


def unknown_separation(a, b, working_a, working_b, t, neighbors=None,
                       margin: float = 1.0) -> float:
    problem = LossProblem(a, b, working_a, working_b,
                          Hyperparams(margin=margin), warn_no_shared=False)
    if neighbors is None:
        neighbors = problem.assign_neighbors(t)
    return problem.separation(t, neighbors)


def total_loss(a, b, working_a, working_b, t, h: Hyperparams,
               neighbors=None) -> LossBreakdown:
    problem = LossProblem(a, b, working_a, working_b, h)
    return problem.value(t, neighbors)


def gradient(a, b, working_a, working_b, t, h: Hyperparams,
             neighbors=None, active=None):
    problem = LossProblem(a, b, working_a, working_b, h, warn_no_shared=False)
    return problem.gradients(t, neighbors, active)


def component_gradients(a, b, working_a, working_b, t, h: Hyperparams,
                        neighbors=None, active=None) -> dict:
    problem = LossProblem(a, b, working_a, working_b, h, warn_no_shared=False)
    return problem.component_gradients(t, neighbors, active)
