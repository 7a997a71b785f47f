"""Exception hierarchy. Every error carries a stable machine-readable code."""

from __future__ import annotations


class SrbLabError(Exception):
    code = "SRBLAB_ERROR"

    def __init__(self, message: str = "", **context):
        super().__init__(message)
        self.context = context

    def to_dict(self) -> dict:
        return {"code": self.code, "message": str(self), "context": _jsonable(self.context)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (str, int, float, bool)) or obj is None:
        return obj
    try:
        return float(obj)
    except (TypeError, ValueError):
        return repr(obj)


class TailTruncated(SrbLabError):
    code = "TAIL_TRUNCATED"


class OutOfDomain(SrbLabError):
    code = "OUT_OF_DOMAIN"


class OutOfImage(SrbLabError):
    code = "OUT_OF_IMAGE"


class ContractionViolated(SrbLabError):
    code = "CONTRACTION_VIOLATED"


class NotConverged(SrbLabError):
    code = "NOT_CONVERGED"

    def __init__(self, message: str = "", diagnostics=None, **context):
        super().__init__(message, **context)
        self.diagnostics = diagnostics


class EmptyCylinder(SrbLabError):
    code = "EMPTY_CYLINDER"


class DegenerateCylinder(SrbLabError):
    code = "DEGENERATE_CYLINDER"


class InsufficientPast(SrbLabError):
    code = "INSUFFICIENT_PAST"


class MassLeak(SrbLabError):
    code = "MASS_LEAK"


class AllSeedsEscaped(SrbLabError):
    code = "ALL_SEEDS_ESCAPED"


class ConeEscape(SrbLabError):
    code = "CONE_ESCAPE"


class UnderSampled(SrbLabError):
    code = "UNDER_SAMPLED"


class StripsOverlap(SrbLabError):
    code = "STRIPS_OVERLAP"


class ConfigInvalid(SrbLabError):
    code = "CONFIG_INVALID"


class InvalidBranch(SrbLabError):
    code = "INVALID_BRANCH"
