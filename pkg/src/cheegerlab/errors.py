"""Exception hierarchy.

Every error carries enough context to be serialised into a machine-readable
record by the CLI: the error kind, the module that raised it, an optional
point description and an optional residual.
"""

from __future__ import annotations

from typing import Any


class GeometryError(Exception):
    kind = "GeometryError"
    module = "cheegerlab"

    def __init__(self, message: str, *, point: Any = None, residual: float | None = None):
        super().__init__(message)
        self.point = point
        self.residual = residual

    def record(self) -> dict:
        point = self.point
        if point is not None and not isinstance(point, (str, int, float, list)):
            point = repr(point)
        return {
            "error": self.kind,
            "module": self.module,
            "message": str(self),
            "point": point,
            "residual": self.residual,
        }


class StencilEscape(GeometryError):
    """A finite-difference stencil point left the chart domain."""

    kind = "StencilEscape"
    module = "smoothcalc"


class ChartExhausted(GeometryError):
    kind = "ChartExhausted"
    module = "riemann"


class SingularMetric(GeometryError):
    kind = "SingularMetric"
    module = "riemann"


class DegeneratePlane(GeometryError):
    kind = "DegeneratePlane"
    module = "riemann"


class RankInstability(GeometryError):
    """Singular values too close to the rank cutoff to decide the rank."""

    kind = "RankInstability"
    module = "smoothcalc"


class SamplerFailure(GeometryError):
    kind = "SamplerFailure"
    module = "groupoids"


class ConstraintViolation(GeometryError):
    kind = "ConstraintViolation"
    module = "groupoids"


class NotTangent(GeometryError):
    """A vector of the ambient product is not tangent to a fibered product."""

    kind = "NotTangent"
    module = "groupoids"


class HypothesisViolated(GeometryError):
    kind = "HypothesisViolated"
    module = "cheeger"


class NonInvertible(GeometryError):
    kind = "NonInvertible"
    module = "cheeger"


class PathMismatch(GeometryError):
    """Fast and general deformation paths disagree beyond tolerance."""

    kind = "PathMismatch"
    module = "cheeger"


class UnknownScenario(GeometryError):
    kind = "UnknownScenario"
    module = "scenarios"
