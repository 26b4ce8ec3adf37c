"""Collaborative alignment of two partially labeled feature domains.

Two domains, each with a handful of labeled samples and a pool of
unlabeled ones, learn one square linear map apiece into a shared space.
The domains take turns pseudo-labeling each other's unlabeled pool with
an entropy gate against unreliable assignments, refit the maps against a
joint objective (class-conditional and marginal mean matching, within-
class compactness, hinge separation of known samples from their nearest
unknowns), and stop once consecutive pseudo-label rounds agree. Samples
outside the known classes are handled as one aggregate unknown class
throughout, so the final labeling covers every sample.
"""

from .aligner import (CollaborativeAligner, IterationRecord,
                      PredictionResult, assignment_agreement,
                      labeled_only_baseline)
from .classifiers import (SoftKnnClassifier, SoftmaxClassifier, fit_linear,
                          fit_soft_knn)
from .data import (EXCLUDED, UNKNOWN, UNLABELED, DomainDataset,
                   TransformPair, WorkingLabels, transform)
from .exceptions import (ConfigError, ContractViolation, DegenerateLabels,
                         DimensionMismatch, EmptyPopulation,
                         FeatureFileError, ProtocolInfeasible)
from .experiment import (AblationResult, ExperimentConfig, ExperimentResult,
                         PipelineSettings, RepeatOutcome, config_from_dict,
                         config_to_dict, load_config, run_ablation,
                         run_experiment, run_repeat, save_config,
                         write_outputs)
from .losses import (Hyperparams, LossBreakdown, LossProblem, gradient,
                     total_loss)
from .metrics import CmcCurve, accuracy, cmc, format_mean_std, mean_and_std
from .protocols import (OfficeProtocolSpec, ReidProtocolSpec, SyntheticSpec,
                        apply_office_protocol, apply_reid_protocol,
                        generate_synthetic, rotation_matrix)
from .pseudolabel import (PseudoLabelReport, apply_report, assign, entropy,
                          flag_outliers)
from .solver import SolverSettings, SolverTrace, minimize

__version__ = "0.1.0"

__all__ = [
    "AblationResult", "CmcCurve", "CollaborativeAligner", "ConfigError",
    "ContractViolation", "DegenerateLabels", "DimensionMismatch",
    "DomainDataset", "EmptyPopulation", "EXCLUDED", "ExperimentConfig",
    "ExperimentResult", "FeatureFileError", "Hyperparams",
    "IterationRecord", "LossBreakdown", "LossProblem", "OfficeProtocolSpec",
    "PipelineSettings", "PredictionResult", "ProtocolInfeasible",
    "PseudoLabelReport", "ReidProtocolSpec", "RepeatOutcome",
    "SoftKnnClassifier", "SoftmaxClassifier", "SolverSettings",
    "SolverTrace", "SyntheticSpec", "TransformPair", "UNKNOWN", "UNLABELED",
    "WorkingLabels", "accuracy", "apply_office_protocol",
    "apply_reid_protocol", "apply_report", "assign", "assignment_agreement",
    "cmc", "config_from_dict", "config_to_dict", "entropy", "fit_linear",
    "fit_soft_knn", "flag_outliers", "format_mean_std",
    "generate_synthetic", "gradient", "labeled_only_baseline",
    "load_config", "mean_and_std", "minimize", "rotation_matrix",
    "run_ablation", "run_experiment", "run_repeat", "save_config",
    "total_loss", "transform", "write_outputs",
]
