"""Command-line front end: run, synth, eval, ablate, gradcheck.

The config file is the source of truth; flags override single values on
top of it. Every subcommand exits 0 only when all requested outputs were
written and no component raised.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace

import numpy as np

from . import io
from .data import EXCLUDED, UNKNOWN, UNLABELED, DomainDataset, TransformPair, WorkingLabels
from .exceptions import FeatureFileError
from .experiment import (ABLATION_VARIANTS, ExperimentConfig, load_config,
                         run_ablation, run_experiment, write_outputs)
from .losses import Hyperparams, LossProblem, identity_regularizer
from .metrics import accuracy, format_mean_std
from .protocols import generate_synthetic


def _load_or_default_config(args):
    config = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "repeats", None) is not None:
        config = replace(config, repeats=args.repeats)
    return config


def _render_table(header, rows):
    cells = [list(map(str, header))] + [list(map(str, r)) for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    lines = []
    for row in cells:
        lines.append("  ".join(cell.ljust(w)
                               for cell, w in zip(row, widths)).rstrip())
    return "\n".join(lines)


def _percent_cell(mean, std):
    return format_mean_std(100.0 * mean, 100.0 * std)


# -- run ---------------------------------------------------------------------

def _cmd_run(args):
    config = _load_or_default_config(args)
    result = run_experiment(config, jobs=args.jobs)
    paths = write_outputs(result, args.out_dir)
    if not args.quiet:
        summary = result.summary
        print(f"protocol {config.protocol}, {summary['repeats']} repeat(s), "
              f"{summary['converged_repeats']} converged")
        if "accuracy_mean" in summary:
            print(_render_table(
                ("method", "accuracy (%)"),
                [("aligned", _percent_cell(summary["accuracy_mean"],
                                           summary["accuracy_std"])),
                 ("no adaptation",
                  _percent_cell(summary["baseline_accuracy_mean"],
                                summary["baseline_accuracy_std"]))]))
        for path in paths:
            print(f"wrote {path}")
    return 0


# -- synth -------------------------------------------------------------------

def _cmd_synth(args):
    config = _load_or_default_config(args)
    spec = replace(config.synthetic, seed=args.seed if args.seed is not None
                   else config.synthetic.seed)
    a, b, truth = generate_synthetic(spec)
    io.save_features(args.out, a, b)
    written = [args.out]
    if args.truth:
        full_a = DomainDataset(a.domain_id, a.features, truth[a.domain_id])
        full_b = DomainDataset(b.domain_id, b.features, truth[b.domain_id])
        io.save_features(args.truth, full_a, full_b)
        written.append(args.truth)
    if not args.quiet:
        print(f"domains of {a.n} and {b.n} samples, {a.d} features, "
              f"{a.n_labeled} and {b.n_labeled} labeled")
        for path in written:
            print(f"wrote {path}")
    return 0


# -- eval --------------------------------------------------------------------

def _load_predictions(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:4] != ["id", "domain", "index",
                                            "predicted"]:
            raise FeatureFileError(
                "predictions header must start with id,domain,index,predicted",
                line=1)
        for line, row in enumerate(reader, start=2):
            if len(row) < 4:
                raise FeatureFileError("short row", line=line)
            try:
                index = int(row[2])
            except ValueError:
                raise FeatureFileError(
                    f"index is not an integer: {row[2]!r}", line=line) from None
            rows.append((row[1], index, io.decode_label(row[3], line=line)))
    return rows


def _cmd_eval(args):
    rows = _load_predictions(args.predictions)
    truth_a, truth_b = io.load_features(args.truth)
    truth = {truth_a.domain_id: truth_a, truth_b.domain_id: truth_b}
    predicted = np.empty(len(rows), dtype=np.int64)
    actual = np.empty(len(rows), dtype=np.int64)
    for i, (domain, index, label) in enumerate(rows):
        if domain not in truth:
            raise FeatureFileError(f"predictions name domain {domain!r}, "
                                   f"truth file has {sorted(truth)}")
        ds = truth[domain]
        if not 0 <= index < ds.n:
            raise FeatureFileError(
                f"index {index} out of range for domain {domain!r} "
                f"({ds.n} samples)")
        value = ds.labels[index]
        if value == UNLABELED:
            raise FeatureFileError(
                f"truth file leaves domain {domain!r} index {index} unlabeled")
        predicted[i] = label
        actual[i] = value
    score = accuracy(predicted, actual)
    print(f"accuracy {score:.4f} over {len(rows)} samples")
    return 0


# -- ablate ------------------------------------------------------------------

def _cmd_ablate(args):
    config = _load_or_default_config(args)
    ablation = run_ablation(config, jobs=args.jobs)
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, "ablation_manifest.json")
    io.save_manifest(path, ablation.manifest)
    if not args.quiet:
        rows = []
        for name, _ in ABLATION_VARIANTS:
            summary = ablation.results[name].summary
            cell = (_percent_cell(summary["accuracy_mean"],
                                  summary["accuracy_std"])
                    if "accuracy_mean" in summary else "n/a")
            rows.append((name, cell))
        print(_render_table(("variant", "accuracy (%)"), rows))
        print(f"wrote {path}")
    return 0


# -- gradcheck ---------------------------------------------------------------

def _gradcheck_instance(d, n, seed):
    """Random two-domain instance with every label state represented."""
    rng = np.random.default_rng(seed)
    n_classes = 3

    def side(domain_id):
        feats = rng.normal(size=(n, d))
        working = np.empty(n, dtype=np.int64)
        working[:n_classes] = np.arange(n_classes)  # one member guaranteed
        working[n_classes:n_classes + 2] = UNKNOWN
        rest = rng.integers(0, n_classes + 2, size=n - n_classes - 2)
        working[n_classes + 2:] = np.where(rest < n_classes, rest, UNKNOWN)
        excluded = rng.random(n) < 0.1
        excluded[:n_classes + 2] = False
        working[excluded] = EXCLUDED
        given = working.copy()
        given[excluded] = UNLABELED
        pseudo = rng.random(n) < 0.5
        pseudo[excluded] = True
        return (DomainDataset(domain_id, feats, given),
                WorkingLabels(labels=working, pseudo=pseudo))

    a, wa = side("A")
    b, wb = side("B")
    t = TransformPair(np.eye(d) + 0.1 * rng.normal(size=(d, d)),
                      np.eye(d) + 0.1 * rng.normal(size=(d, d)))
    return a, b, wa, wb, t


def _numeric_pair_gradient(fn, t, step):
    """Central differences of fn(TransformPair) in every matrix entry."""
    grads = []
    mats = (t.w_a, t.w_b)
    for which in range(2):
        g = np.zeros_like(mats[which])
        for i in range(g.shape[0]):
            for j in range(g.shape[1]):
                bumped = [m.copy() for m in mats]
                bumped[which][i, j] += step
                up = fn(TransformPair(*bumped))
                bumped = [m.copy() for m in mats]
                bumped[which][i, j] -= step
                down = fn(TransformPair(*bumped))
                g[i, j] = (up - down) / (2.0 * step)
        grads.append(g)
    return tuple(grads)


def _relative_error(analytic, numeric):
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / denom)


def gradient_check(d=6, n=30, seed=7, step=1e-5):
    """Max relative error of each objective term's analytic gradient.

    The separation term's neighbor assignment and hinge active set are
    frozen at the evaluation point, matching the piecewise region the
    analytic gradient is defined on.
    """
    if not 2 <= d <= 16:
        raise ValueError("d must be in [2, 16] for finite differences")
    if not 6 <= n <= 100:
        raise ValueError("n must be in [6, 100] for finite differences")
    a, b, wa, wb, t = _gradcheck_instance(d, n, seed)
    problem = LossProblem(a, b, wa, wb, Hyperparams(), warn_no_shared=False)
    neighbors = problem.assign_neighbors(t)
    active = problem.active_set(t, neighbors)
    analytic = problem.component_gradients(t, neighbors, active)
    value_fns = {
        "conditional": problem.conditional,
        "marginal": problem.marginal,
        "aggregation": problem.aggregation,
        "separation": lambda t2: problem.separation(t2, neighbors),
        "regularization": identity_regularizer,
    }
    errors = {}
    for name, fn in value_fns.items():
        numeric = _numeric_pair_gradient(fn, t, step)
        errors[name] = max(_relative_error(analytic[name][0], numeric[0]),
                           _relative_error(analytic[name][1], numeric[1]))
    return errors


def _cmd_gradcheck(args):
    errors = gradient_check(d=args.d, n=args.n, seed=args.seed,
                            step=args.step)
    rows = [(name, f"{err:.3e}") for name, err in errors.items()]
    print(_render_table(("component", "max rel error"), rows))
    worst = max(errors.values())
    ok = worst <= args.tolerance
    print(f"gradcheck {'PASS' if ok else 'FAIL'} "
          f"(worst {worst:.3e}, tolerance {args.tolerance:g})")
    return 0 if ok else 1


# -- parser ------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="cdalign",
        description="Collaborative alignment of two partially labeled "
                    "domains with unknown-class rejection.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, jobs=False, out_dir=False, repeats=False):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--quiet", action="store_true",
                       help="suppress progress output")
        if repeats:
            p.add_argument("--repeats", type=int,
                           help="override the number of repeated splits")
        if out_dir:
            p.add_argument("--out-dir", default="cdalign_output",
                           help="directory for manifests and tables")
        if jobs:
            p.add_argument("--jobs", type=int, default=1,
                           help="worker processes for repeats")

    p_run = sub.add_parser("run", help="run the full pipeline with repeats")
    common(p_run, jobs=True, out_dir=True, repeats=True)
    p_run.set_defaults(func=_cmd_run)

    p_synth = sub.add_parser("synth", help="write a synthetic feature table")
    common(p_synth)
    p_synth.add_argument("--out", default="synthetic.csv",
                         help="output feature table")
    p_synth.add_argument("--truth",
                         help="also write the fully labeled table here")
    p_synth.set_defaults(func=_cmd_synth)

    p_eval = sub.add_parser("eval", help="score a predictions table")
    p_eval.add_argument("predictions", help="results CSV from a run")
    p_eval.add_argument("truth", help="fully labeled feature table")
    p_eval.set_defaults(func=_cmd_eval)

    p_ablate = sub.add_parser(
        "ablate", help="compare the full objective against term removals")
    common(p_ablate, jobs=True, out_dir=True, repeats=True)
    p_ablate.set_defaults(func=_cmd_ablate)

    p_grad = sub.add_parser(
        "gradcheck", help="finite-difference check of the loss gradients")
    p_grad.add_argument("--d", type=int, default=6)
    p_grad.add_argument("--n", type=int, default=30)
    p_grad.add_argument("--seed", type=int, default=7)
    p_grad.add_argument("--step", type=float, default=1e-5)
    p_grad.add_argument("--tolerance", type=float, default=1e-5)
    p_grad.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # the contract is a diagnostic plus exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
