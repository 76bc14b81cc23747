"""Domain exceptions shared across the package."""


class BeamLabError(Exception):
    """Base class for all beamlab-specific errors."""


class TerminalContextError(BeamLabError):
    """An operation that requires a non-terminal context received a terminal one."""


class NonTerminalContextError(BeamLabError):
    """An operation that requires a terminal context received a non-terminal one."""


class CapExceededError(BeamLabError):
    """The requested exhaustive computation exceeds the enumeration cap."""


class CoverageError(BeamLabError):
    """An oracle table does not cover the states required by the operation."""


class InvalidTrajectoryError(BeamLabError):
    """A trajectory is inconsistent with the MDP it claims to belong to."""
