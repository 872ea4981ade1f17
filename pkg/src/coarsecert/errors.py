"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes, so each class corresponds to one
outcome category rather than to one call site.
"""

from __future__ import annotations


class CoarseCertError(Exception):
    """Base class for all library errors."""


class DomainError(CoarseCertError, ValueError):
    """An argument is outside the mathematical domain of the operation."""


class ResourceError(CoarseCertError):
    """A requested enumeration would exceed the configured element budget."""


class UnderCoverageError(CoarseCertError):
    """A window or materialized domain is too small for the requested sup.

    Raised instead of silently truncating: a sup over a truncated set is not
    an upper bound and must never be reported as one.
    """


class NotPositiveTypeError(CoarseCertError):
    """A kernel's Gram matrix has an eigenvalue below ``-psd_tol``."""

    def __init__(self, message: str, eigenvalue: float, witness, sample=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue
        self.witness = witness
        self.sample = sample


class DecayContractError(CoarseCertError):
    """A certificate level fails its required deficiency decay."""


class BoundViolationError(CoarseCertError):
    """A measured quantity violates a proven bound."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report
