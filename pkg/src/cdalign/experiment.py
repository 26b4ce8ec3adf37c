"""Config-driven experiment runner: repeated splits, summaries, ablations.

A run is fully described by an ExperimentConfig. Repeat r derives its
labeling seed as ``seed + r``, so repeats are independent draws of the
protocol while the whole run stays reproducible from the config alone.
Repeats may execute in parallel worker processes; outputs are merged by
repeat index, so the manifest bytes do not depend on how the work was
scheduled.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from typing import Optional

import numpy as np

from . import io, metrics
from .aligner import CollaborativeAligner, labeled_only_baseline
from .exceptions import ConfigError
from .losses import Hyperparams
from .protocols import (OfficeProtocolSpec, ReidProtocolSpec, SyntheticSpec,
                        apply_office_protocol, apply_reid_protocol,
                        generate_synthetic)
from .solver import SolverSettings

PROTOCOLS = ("synthetic", "office", "reid", "presplit")

# variant name -> hyperparameter override removing one objective term
ABLATION_VARIANTS = (
    ("full", {}),
    ("no_conditional", {"conditional": False}),
    ("no_marginal", {"lambda_m": 0.0}),
    ("no_aggregation", {"lambda_g": 0.0}),
    ("no_separation", {"lambda_u": 0.0}),
)


@dataclass(frozen=True)
class PipelineSettings:
    """Outer-loop knobs: base classifier choice and stopping rule."""

    classifier: str = "linear"
    classifier_l2: float = 1e-3
    knn_k: int = 5
    knn_temperature: float = 1.0
    max_outer: int = 10
    agreement_threshold: float = 0.99

    def __post_init__(self):
        if self.classifier not in ("linear", "soft_knn"):
            raise ValueError(
                f"classifier must be 'linear' or 'soft_knn', "
                f"got {self.classifier!r}")
        if self.classifier_l2 < 0:
            raise ValueError("classifier_l2 must be >= 0")
        if self.knn_k < 1:
            raise ValueError("knn_k must be >= 1")
        if self.knn_temperature <= 0:
            raise ValueError("knn_temperature must be > 0")
        if self.max_outer < 0:
            raise ValueError("max_outer must be >= 0")
        if not 0.0 < self.agreement_threshold <= 1.0:
            raise ValueError("agreement_threshold must be in (0, 1]")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs: data source, protocol, weights, budgets.

    ``features`` names the input table for the file-based protocols and is
    read relative to the working directory. The synthetic protocol ignores
    it and generates its own data.
    """

    protocol: str = "synthetic"
    features: Optional[str] = None
    seed: int = 0
    repeats: int = 5
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    office: OfficeProtocolSpec = field(default_factory=OfficeProtocolSpec)
    reid: ReidProtocolSpec = field(default_factory=ReidProtocolSpec)
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    solver: SolverSettings = field(default_factory=SolverSettings)
    pipeline: PipelineSettings = field(default_factory=PipelineSettings)

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigError(
                f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.protocol != "synthetic" and not self.features:
            raise ConfigError(
                f"protocol {self.protocol!r} needs a 'features' file path")


# -- config (de)serialization ------------------------------------------------

_SECTIONS = (("synthetic", SyntheticSpec), ("office", OfficeProtocolSpec),
             ("reid", ReidProtocolSpec), ("hyperparams", Hyperparams),
             ("solver", SolverSettings), ("pipeline", PipelineSettings))


def _coerce(name, value, default):
    """Accept a JSON value for a field whose default models its type."""
    if default is None:  # optional float, null allowed
        if value is None:
            return None
        default = 0.0
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{name}: expected true/false, got {value!r}")
    if isinstance(default, int):
        if isinstance(value, bool):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        if isinstance(value, int):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
        raise ConfigError(f"{name}: expected an integer, got {value!r}")
    if isinstance(default, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise ConfigError(f"{name}: expected a number, got {value!r}")
    if isinstance(default, Fraction):
        if isinstance(value, str) or (isinstance(value, int)
                                      and not isinstance(value, bool)):
            return value  # the spec dataclass converts and validates
        raise ConfigError(f"{name}: expected a fraction string like '2/3', "
                          f"got {value!r}")
    if isinstance(default, str):
        if isinstance(value, str):
            return value
        raise ConfigError(f"{name}: expected a string, got {value!r}")
    raise ConfigError(f"{name}: unsupported field type")


def _build_section(cls, data, section):
    if not isinstance(data, dict):
        raise ConfigError(f"{section}: expected a mapping, got {data!r}")
    reference = cls()
    names = [f.name for f in fields(cls)]
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"{section}: unknown key(s) {unknown}")
    kwargs = {key: _coerce(f"{section}.{key}", value,
                           getattr(reference, key))
              for key, value in data.items()}
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{section}: {exc}") from None


def config_from_dict(data) -> ExperimentConfig:
    """Strict construction: unknown keys anywhere are rejected."""
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be a mapping, got {data!r}")
    known = {"protocol", "features", "seed", "repeats"} \
        | {name for name, _ in _SECTIONS}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"config: unknown key(s) {unknown}")
    kwargs = {}
    if "protocol" in data:
        kwargs["protocol"] = _coerce("protocol", data["protocol"], "synthetic")
    if "features" in data:
        feat = data["features"]
        if feat is not None and not isinstance(feat, str):
            raise ConfigError(f"features: expected a path string, got {feat!r}")
        kwargs["features"] = feat
    if "seed" in data:
        kwargs["seed"] = _coerce("seed", data["seed"], 0)
    if "repeats" in data:
        kwargs["repeats"] = _coerce("repeats", data["repeats"], 1)
    for name, cls in _SECTIONS:
        if name in data:
            kwargs[name] = _build_section(cls, data[name], name)
    return ExperimentConfig(**kwargs)


def _section_to_dict(obj):
    out = {}
    for f in fields(obj):
        value = getattr(obj, f.name)
        if isinstance(value, Fraction):
            value = str(value)
        out[f.name] = value
    return out


def config_to_dict(config: ExperimentConfig) -> dict:
    """Fully resolved mapping: every field explicit, defaults included."""
    out = {"protocol": config.protocol, "features": config.features,
           "seed": config.seed, "repeats": config.repeats}
    for name, _ in _SECTIONS:
        out[name] = _section_to_dict(getattr(config, name))
    return out


def load_config(path) -> ExperimentConfig:
    return config_from_dict(io.load_json(path))


def save_config(path, config: ExperimentConfig):
    io.save_json(path, config_to_dict(config))


# -- single repeat -----------------------------------------------------------

def _aligner_kwargs(config):
    h, s, p = config.hyperparams, config.solver, config.pipeline
    return dict(
        lambda_m=h.lambda_m, lambda_g=h.lambda_g, lambda_u=h.lambda_u,
        lambda_r=h.lambda_r, margin=h.margin, conditional=h.conditional,
        classifier=p.classifier, classifier_l2=p.classifier_l2,
        knn_k=p.knn_k, knn_temperature=p.knn_temperature,
        max_outer=p.max_outer, agreement_threshold=p.agreement_threshold,
        initial_step=s.initial_step, shrink=s.shrink,
        sufficient_decrease=s.sufficient_decrease, max_steps=s.max_steps,
        grad_tol=s.grad_tol, refresh_period=s.refresh_period,
        max_halvings=s.max_halvings)


def _repeat_data(config, repeat):
    seed = config.seed + repeat
    if config.protocol == "synthetic":
        spec = replace(config.synthetic, seed=seed)
        a, b, truth = generate_synthetic(spec)
        return a, b, truth, io.default_ids(a, b)
    full_a, full_b, ids = io.load_features_with_ids(config.features)
    if config.protocol == "presplit":
        return full_a, full_b, None, ids
    if config.protocol == "office":
        spec = replace(config.office, seed=seed)
        a, b, truth = apply_office_protocol(full_a, full_b, spec)
    else:
        spec = replace(config.reid, seed=seed)
        a, b, truth = apply_reid_protocol(full_a, full_b, spec)
    return a, b, truth, ids


def _pooled_accuracy(model, a, b, truth):
    pred, true = [], []
    for ds in (a, b):
        idx, p = model.result_.for_domain(ds.domain_id)
        pred.append(p)
        true.append(truth[ds.domain_id][idx])
    pred = np.concatenate(pred)
    if pred.size == 0:
        return None
    return metrics.accuracy(pred, np.concatenate(true))


def _none_if_nan(value):
    if value is None:
        return None
    value = float(value)
    return None if math.isnan(value) else value


@dataclass(frozen=True)
class RepeatOutcome:
    """One repeat's fitted pipeline plus everything needed to report it."""

    repeat: int
    seed: int
    data_a: object
    data_b: object
    ids: dict
    truth: Optional[dict]
    model: CollaborativeAligner
    accuracy: Optional[float]
    baseline_accuracy: Optional[float]

    def iteration_rows(self):
        pool = self.model.result_.n
        rows = []
        for rec in self.model.history_:
            rows.append({
                "iteration": rec.iteration,
                "agreement": _none_if_nan(rec.agreement),
                "entropy_threshold": _none_if_nan(rec.threshold),
                "outliers": int(rec.n_outliers),
                "outlier_fraction": rec.n_outliers / pool if pool else 0.0,
                "guard_applied": bool(rec.guard_applied),
                "stopped": bool(rec.stopped),
                "loss": _none_if_nan(rec.final_loss),
            })
        return rows

    def manifest_row(self):
        return {
            "repeat": self.repeat,
            "seed": self.seed,
            "converged": bool(self.model.converged_),
            "n_iterations": int(self.model.n_iter_),
            "n_unlabeled": int(self.model.result_.n),
            "accuracy": _none_if_nan(self.accuracy),
            "baseline_accuracy": _none_if_nan(self.baseline_accuracy),
            "iterations": self.iteration_rows(),
        }


def run_repeat(config: ExperimentConfig, repeat: int) -> RepeatOutcome:
    """Draw the repeat's split, fit the aligner and the reference, score."""
    if repeat < 0:
        raise ValueError("repeat index must be >= 0")
    a, b, truth, ids = _repeat_data(config, repeat)
    kwargs = _aligner_kwargs(config)
    model = CollaborativeAligner(**kwargs).fit(a, b)
    baseline = labeled_only_baseline(a, b, **kwargs)
    accuracy = baseline_accuracy = None
    if truth is not None:
        accuracy = _pooled_accuracy(model, a, b, truth)
        baseline_accuracy = _pooled_accuracy(baseline, a, b, truth)
    return RepeatOutcome(repeat=repeat, seed=config.seed + repeat,
                         data_a=a, data_b=b, ids=ids, truth=truth,
                         model=model, accuracy=accuracy,
                         baseline_accuracy=baseline_accuracy)


# -- whole experiments -------------------------------------------------------

@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    outcomes: tuple
    manifest: dict

    @property
    def summary(self):
        return self.manifest["summary"]


def _repeat_task(payload):
    config, repeat = payload
    return run_repeat(config, repeat)


def _summarize(outcomes):
    summary = {
        "repeats": len(outcomes),
        "converged_repeats": sum(o.model.converged_ for o in outcomes),
    }
    accs = [o.accuracy for o in outcomes]
    if all(v is not None for v in accs):
        mean, std = metrics.mean_and_std(accs)
        base_mean, base_std = metrics.mean_and_std(
            [o.baseline_accuracy for o in outcomes])
        summary.update(accuracy_mean=mean, accuracy_std=std,
                       baseline_accuracy_mean=base_mean,
                       baseline_accuracy_std=base_std,
                       gain_mean=mean - base_mean)
    return summary


def build_manifest(config, outcomes, kind="experiment"):
    artifacts = {}
    if config.features:
        artifacts = {"features_path": config.features,
                     "features_sha256": io.file_sha256(config.features)}
    return {"format_version": 1,
            "kind": kind,
            "config": config_to_dict(config),
            "artifacts": artifacts,
            "summary": _summarize(outcomes),
            "repeats": [o.manifest_row() for o in outcomes]}


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    """Run every repeat, optionally across processes, and merge by index."""
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    payloads = [(config, r) for r in range(config.repeats)]
    if jobs > 1 and config.repeats > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_repeat_task, payloads))
    else:
        outcomes = [run_repeat(config, r) for r in range(config.repeats)]
    outcomes.sort(key=lambda o: o.repeat)
    return ExperimentResult(config=config, outcomes=tuple(outcomes),
                            manifest=build_manifest(config, outcomes))


def write_outputs(result: ExperimentResult, out_dir) -> list:
    """Manifest plus per-repeat result and split tables. Returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []

    def emit(name, writer):
        path = os.path.join(out_dir, name)
        writer(path)
        paths.append(path)

    emit("manifest.json", lambda p: io.save_manifest(p, result.manifest))
    for o in result.outcomes:
        emit(f"results_r{o.repeat}.csv",
             lambda p, o=o: io.save_results(p, o.model.result_, ids=o.ids))
        emit(f"split_r{o.repeat}.csv",
             lambda p, o=o: io.save_split(p, o.data_a, o.data_b, ids=o.ids))
    return paths


@dataclass(frozen=True)
class AblationResult:
    config: ExperimentConfig
    results: dict
    manifest: dict


def run_ablation(config: ExperimentConfig, jobs: int = 1) -> AblationResult:
    """Full objective plus each single-term removal, same splits throughout."""
    results = {}
    for name, override in ABLATION_VARIANTS:
        variant = replace(config,
                          hyperparams=replace(config.hyperparams, **override))
        results[name] = run_experiment(variant, jobs=jobs)
    variants = {}
    for name, override in ABLATION_VARIANTS:
        res = results[name]
        variants[name] = {"overrides": dict(override),
                          "summary": res.manifest["summary"],
                          "repeats": res.manifest["repeats"]}
    manifest = {"format_version": 1,
                "kind": "ablation",
                "config": config_to_dict(config),
                "variants": variants}
    return AblationResult(config=config, results=results, manifest=manifest)
