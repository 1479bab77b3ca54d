"""Numerical experiments on linking and contact-type conditions for flows on S^3."""

__version__ = "0.1.0"

from .errors import DomainError, NumericalFailure, RighthandError  # noqa: E402
from .fields import ANTIHOPF, HOPF, FieldSpec, parse_field  # noqa: E402
from .geometry import Polyline  # noqa: E402
from .linking import LinkingResult, crossing_number, linking_integral  # noqa: E402

__all__ = [
    "ANTIHOPF", "HOPF", "DomainError", "FieldSpec", "LinkingResult", "NumericalFailure",
    "Polyline", "RighthandError", "crossing_number", "linking_integral", "parse_field",
]
