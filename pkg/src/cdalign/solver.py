"""Joint gradient descent over the transform pair, with backtracking line search.

Plain descent is deliberate: the hinge's active set changes discontinuously,
so curvature estimates go stale. Neighbors and the active set are captured
every ``refresh_period`` accepted steps and held fixed in between; the
objective may jump once at each refresh, which the trace records.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .data import DomainDataset, TransformPair, WorkingLabels
from .exceptions import ContractViolation
from .losses import Hyperparams, LossBreakdown, LossProblem

TRACE_COLUMNS = ("step", "f", "dist_C", "dist_M", "G", "U", "reg",
                 "grad_norm", "step_size")


@dataclass(frozen=True)
class SolverSettings:
    initial_step: float = 1e-2
    shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    max_steps: int = 100
    grad_tol: float | None = None  # None resolves to 1e-6 * d
    refresh_period: int = 10
    max_halvings: int = 60

    def __post_init__(self):
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink must lie in (0, 1)")
        if self.initial_step <= 0 or self.sufficient_decrease <= 0:
            raise ValueError("initial_step and sufficient_decrease must be > 0")
        if self.grad_tol is not None and self.grad_tol <= 0:
            raise ValueError("grad_tol must be > 0")
        if self.max_steps < 0 or self.refresh_period < 1 or self.max_halvings < 1:
            raise ValueError("step budgets must be positive")

    def resolve_grad_tol(self, d: int) -> float:
        return self.grad_tol if self.grad_tol is not None else 1e-6 * d


@dataclass(frozen=True)
class TraceRow:
    step: int
    breakdown: LossBreakdown
    grad_norm: float
    step_size: float
    refresh: bool  # True when this row was evaluated under a fresh assignment


@dataclass
class SolverTrace:
    rows: list[TraceRow] = field(default_factory=list)

    @property
    def final(self) -> TraceRow:
        return self.rows[-1]

    @property
    def n_accepted(self) -> int:
        return sum(1 for r in self.rows if r.step_size > 0.0)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRACE_COLUMNS)
            for r in self.rows:
                bd = r.breakdown
                writer.writerow([r.step] + [f"{v:.17g}" for v in (
                    bd.total, bd.conditional, bd.marginal, bd.aggregation,
                    bd.separation, bd.regularization, r.grad_norm, r.step_size)])


def _check_breakdown_finite(bd: LossBreakdown):
    for name in ("conditional", "marginal", "aggregation", "separation",
                 "regularization", "total"):
        if not np.isfinite(getattr(bd, name)):
            raise ContractViolation(f"loss term {name!r} is non-finite")


def _check_gradient_finite(problem, t, neighbors, active):
    parts = problem.component_gradients(t, neighbors, active)
    for name, (ga, gb) in parts.items():
        if not (np.all(np.isfinite(ga)) and np.all(np.isfinite(gb))):
            raise ContractViolation(f"gradient of term {name!r} is non-finite")


def minimize(a: DomainDataset, b: DomainDataset,
             working_a: WorkingLabels, working_b: WorkingLabels,
             init: TransformPair, h: Hyperparams,
             settings: SolverSettings = SolverSettings()):
    """Descend the alignment objective from ``init``; returns (pair, trace).

    Stops at the gradient tolerance or the step budget. Within one neighbor
    epoch every accepted step satisfies the Armijo sufficient-decrease
    inequality, so f is monotone there; a one-time jump may occur at each
    refresh and once more for the final reporting row, which re-evaluates
    under a fresh assignment.
    """
    problem = LossProblem(a, b, working_a, working_b, h)
    t = init
    tol = settings.resolve_grad_tol(problem.d)

    neighbors = problem.assign_neighbors(t)
    active = problem.active_set(t, neighbors)
    bd = problem.value(t, neighbors)
    _check_breakdown_finite(bd)

    def grad_and_norm():
        g_a, g_b = problem.gradients(t, neighbors, active)
        if not (np.all(np.isfinite(g_a)) and np.all(np.isfinite(g_b))):
            _check_gradient_finite(problem, t, neighbors, active)
        norm = float(np.sqrt(np.sum(g_a ** 2) + np.sum(g_b ** 2)))
        return g_a, g_b, norm

    g_a, g_b, gnorm = grad_and_norm()
    trace = SolverTrace([TraceRow(0, bd, gnorm, 0.0, True)])
    steps_in_epoch = 0

    step = 0
    while step < settings.max_steps:
        step += 1
        refreshed = False
        if steps_in_epoch >= settings.refresh_period:
            neighbors = problem.assign_neighbors(t)
            active = problem.active_set(t, neighbors)
            bd = problem.value(t, neighbors)
            _check_breakdown_finite(bd)
            g_a, g_b, gnorm = grad_and_norm()
            steps_in_epoch = 0
            refreshed = True

        if gnorm <= tol:
            break

        f0 = bd.total
        alpha = settings.initial_step
        accepted = None
        for _ in range(settings.max_halvings):
            cand = TransformPair(t.w_a - alpha * g_a, t.w_b - alpha * g_b)
            bd_new = problem.value(cand, neighbors)
            if bd_new.total <= f0 - settings.sufficient_decrease * alpha * gnorm ** 2:
                accepted = (cand, bd_new, alpha)
                break
            alpha *= settings.shrink

        if accepted is None:
            if steps_in_epoch > 0:
                # the frozen active set may have gone stale; refresh and retry
                steps_in_epoch = settings.refresh_period
                step -= 1
                continue
            break  # fresh assignment and still no decrease: numerical floor

        t, bd, alpha = accepted
        _check_breakdown_finite(bd)
        if bd.total > f0:
            raise ContractViolation(
                "accepted line-search step increased the objective")
        g_a, g_b, gnorm = grad_and_norm()
        steps_in_epoch += 1
        trace.rows.append(TraceRow(step, bd, gnorm, alpha, refreshed))

    # reporting row under a fresh assignment
    neighbors = problem.assign_neighbors(t)
    active = problem.active_set(t, neighbors)
    bd = problem.value(t, neighbors)
    _check_breakdown_finite(bd)
    _, _, gnorm = grad_and_norm()
    trace.rows.append(TraceRow(trace.rows[-1].step + 1, bd, gnorm, 0.0, True))
    return t, trace
