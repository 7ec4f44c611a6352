"""Exception hierarchy.

Every error carries the CLI exit code of its family so the command line
front end can map failures without a lookup table.
"""

from __future__ import annotations


class TomoEDError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class InputError(TomoEDError):
    """Malformed or inconsistent input (exit code 1)."""

    exit_code = 1


class SolverError(TomoEDError):
    """Numerical solver did not reach its tolerance (exit code 2)."""

    exit_code = 2


class IdentifiabilityError(TomoEDError):
    """The information matrix is singular or too ill-conditioned (exit code 3)."""

    exit_code = 3


# numerics
class RankDeficient(InputError):
    pass


class NotHermitian(InputError):
    pass


class DimensionMismatch(InputError):
    pass


# qmodel
class InvalidState(InputError):
    pass


class InvalidPovm(InputError):
    pass


class InvalidMixer(InputError):
    pass


class InvalidKraus(InputError):
    pass


class InfeasiblePoint(InputError):
    pass


class BadBasis(InputError):
    pass


class NotPSD(InputError):
    pass


# estimator
class SolverMaxIter(SolverError):
    pass


class ZeroProbabilityOutcome(InputError):
    """Counts were observed for an outcome the model cannot produce."""


class SingularNormalEquations(SolverError):
    pass


class InfeasibleTraceCap(InputError):
    pass


class EmptyGrid(InputError):
    pass


# fisher / oed
class ZeroProbability(InputError):
    """A Fisher weight 1/p diverges."""


class NotIdentifiable(IdentifiabilityError):
    def __init__(self, message: str, null_directions=None):
        super().__init__(message)
        self.null_directions = null_directions


class TruncationNotIdentifiable(NotIdentifiable):
    pass


class AllZero(InputError):
    pass


class CertificateFailed(SolverError):
    pass


class NotNormalized(InputError):
    pass


# fidelity
class NotUnitary(InputError):
    pass


# simlab
class InfeasibleTruth(InputError):
    pass


# cli
class UnknownExample(InputError):
    pass


class ParseError(InputError):
    pass
