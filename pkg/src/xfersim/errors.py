"""Exception types shared across the package.

Configuration problems (bad specs, bad arguments) are ValueError subclasses;
numerical failures detected mid-computation derive from NumericalError so the
CLI can map them to a distinct exit code.
"""


class UnequalMassError(ValueError):
    """W1 requested between measures whose masses differ beyond tolerance."""


class EmptyMeasureError(ValueError):
    """An operation that needs positive mass received a zero-mass measure."""


class ConfigError(ValueError):
    """A scenario or solver setting violates a declared invariant."""


class NumericalError(RuntimeError):
    """Base class for runtime numerical failures."""


class CapacityError(NumericalError):
    """Exact product would exceed the atom budget; compress the inputs first."""


class DegenerateMassError(NumericalError):
    """Total mass fell below the viability floor during a computation."""


class WindowTooLargeError(NumericalError):
    """Picard iteration failed to contract even at the smallest window."""
