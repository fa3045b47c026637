"""Exception types shared across the toolkit."""


class UrasimError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(UrasimError, ValueError):
    """Array shapes or grid sizes are inconsistent."""


class ParameterError(UrasimError, ValueError):
    """An argument violates a documented precondition."""


class ResourceLimitError(UrasimError, ValueError):
    """A requested size exceeds the configured complexity guard."""


class NumericalCollapseError(UrasimError, ArithmeticError):
    """An iterate became non-finite or degenerate beyond repair."""


class ClusteringError(UrasimError, ValueError):
    """The clustering decoder received an impossible or empty instance."""


class MetricError(UrasimError, ValueError):
    """A requested metric is undefined for the given inputs."""
