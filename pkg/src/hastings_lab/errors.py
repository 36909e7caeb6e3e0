"""Exception hierarchy shared by every module.

Each class name matches the failure it reports, so callers can catch the
narrow case (``NotGapped``) or the whole family (``HastingsLabError``).
"""

from __future__ import annotations

from dataclasses import dataclass


class HastingsLabError(Exception):
    """Base class for all library errors."""


# geometry
class EmptyRegion(HastingsLabError):
    pass


class FullVolume(HastingsLabError):
    pass


class GeometryOverflow(HastingsLabError):
    pass


class BadGeometry(HastingsLabError):
    pass


# operator algebra
class SupportNotContained(HastingsLabError):
    pass


class DimensionMismatch(HastingsLabError):
    pass


class DegenerateCut(HastingsLabError):
    pass


class DimensionCap(HastingsLabError):
    pass


# models and spectra
class UnknownModel(HastingsLabError):
    pass


class BadCoupling(HastingsLabError):
    pass


class NotGapped(HastingsLabError):
    pass


class NotHermitian(HastingsLabError):
    pass


# bounds and pipeline
class RangeViolation(HastingsLabError):
    pass


class QuadratureUnstable(HastingsLabError):
    pass


class DefectTooLarge(HastingsLabError):
    pass


# entropy
class ZeroTrace(HastingsLabError):
    pass


class SupportMismatch(HastingsLabError):
    pass


class BadConstants(HastingsLabError):
    pass


# command line
class ConfigInvalid(HastingsLabError):
    pass


class AssertionFailed(HastingsLabError):
    pass


class BoundaryEigenvalue(UserWarning):
    """An eigenvalue sits within 1e-12 of a spectral window edge."""


class NormAccuracy(UserWarning):
    """Lanczos reached only a relaxed tolerance on a clustered spectrum."""


@dataclass(frozen=True)
class PreconditionNotMet:
    """Returned (not raised) when a check's hypotheses fail on the given input."""

    reason: str

    def __bool__(self) -> bool:
        return False
