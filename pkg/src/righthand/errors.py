"""Exception hierarchy.

Every error raised by the package derives from :class:`RighthandError`.
Two families exist because the command line maps them to different exit
codes: :class:`DomainError` (bad input, violated precondition; exit 2) and
:class:`NumericalFailure` (the computation could not be carried out to the
requested accuracy; exit 3).
"""


class RighthandError(Exception):
    exit_code = 1


class DomainError(RighthandError, ValueError):
    exit_code = 2


class NumericalFailure(RighthandError, ArithmeticError):
    exit_code = 3


# geometry
class PoleCollision(DomainError):
    pass


class AntipodalPoints(DomainError):
    pass


class InvalidCurve(DomainError):
    pass


class MixedAmbient(DomainError):
    pass


# fields
class NoPrimitiveAvailable(DomainError):
    pass


class UnknownField(DomainError):
    pass


# flow
class StepUnderflow(NumericalFailure):
    pass


class EmbeddingFailure(NumericalFailure):
    pass


# linking
class NearSingular(NumericalFailure):
    pass


class CurvesIntersect(DomainError):
    pass


class DegenerateProjection(NumericalFailure):
    pass


# asymptotic
class OrbitsNotDisjoint(DomainError):
    pass


class NoRecurrence(NumericalFailure):
    pass


# contact
class EmptyMeasureFamily(DomainError):
    pass


class NonTransverse(DomainError):
    pass


# ulam_lp
class ResolutionTooLarge(DomainError):
    pass


class Infeasible(NumericalFailure):
    pass


# cli
class MalformedConfig(DomainError):
    pass


class UnknownKey(DomainError):
    pass


class OutOfRangeParameter(DomainError):
    pass
