"""Error types shared across the package."""


class DimensionMismatch(ValueError):
    """Feature/transform shapes are incompatible."""


class EmptyPopulation(ValueError):
    """An operation needed at least one sample from a class or set that has none."""


class DegenerateLabels(ValueError):
    """A classifier was asked to fit a training set with fewer than two classes."""


class ContractViolation(RuntimeError):
    """An internal invariant failed (e.g. an accepted line-search step increased f)."""


class ProtocolInfeasible(ValueError):
    """A labeling protocol cannot be realized on the given data (counts too small)."""


class FeatureFileError(ValueError):
    """A feature/config file failed to parse. Carries the 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(ValueError):
    """An experiment config has unknown keys or out-of-range values."""
