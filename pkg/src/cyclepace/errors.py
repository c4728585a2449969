"""Exception hierarchy.

Input problems derive from :class:`InputError` (also a ``ValueError``) so the
CLI can map whole families of failures onto exit codes.
"""


class CyclepaceError(Exception):
    pass


class InputError(CyclepaceError, ValueError):
    """Bad or incomplete user input (exit code 2)."""


class GPXParseError(InputError):
    pass


class GPXSchemaError(InputError):
    pass


class InsufficientDataError(InputError):
    pass


class DegenerateGeometryError(InputError):
    pass


class MMPParseError(InputError):
    pass


class UnsustainablePowerError(InputError):
    """A power at or above the rider's P_max was requested."""


class SearchSpaceTooLarge(InputError):
    pass


class NumericalError(CyclepaceError):
    """Internal numerical failure (exit code 3)."""


class FitError(NumericalError):
    def __init__(self, message, best=None, rms=None):
        super().__init__(message)
        self.best = best
        self.rms = rms


class InfeasibleCourseError(CyclepaceError):
    """Every rollout failed to finish (exit code 1)."""
