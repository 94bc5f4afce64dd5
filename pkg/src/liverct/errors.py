"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: configuration/contract/parse problems
are validation errors (exit 1), state/divergence problems are runtime
faults (exit 2).
"""


class ConfigurationError(ValueError):
    """A layer, architecture, or run configuration is inconsistent."""


class ContractError(ValueError):
    """A documented precondition was violated by the caller."""


class StateError(RuntimeError):
    """An operation was invoked in the wrong order (e.g. backward before forward)."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


class FormatError(ValueError):
    """A binary container failed to parse; message carries the byte offset."""
