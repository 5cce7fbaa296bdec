"""Exception hierarchy shared by every module."""


class RicciLabError(Exception):
    """Base class; ``severity`` is the CLI exit code it maps to."""

    severity = 3


class NonPositiveDefinite(RicciLabError, ValueError):
    pass


class NonSymmetricMetric(RicciLabError, ValueError):
    pass


class OutOfChart(RicciLabError, ValueError):
    pass


class BeyondExtinction(RicciLabError, ValueError):
    pass


class UnsupportedBrackets(RicciLabError, ValueError):
    pass


class NonPositiveTau(RicciLabError, ValueError):
    pass


class CflViolation(RicciLabError):
    pass


class BlowUp(RicciLabError):
    """Curvature exceeded the configured ceiling."""

    def __init__(self, msg, t=None, max_abs_R=None):
        super().__init__(msg)
        self.t = t
        self.max_abs_R = max_abs_R


class NonConvergence(RicciLabError):
    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


class NotMaximal(RicciLabError):
    pass


class UnsupportedReduction(RicciLabError):
    pass


class GridMismatch(RicciLabError, ValueError):
    pass


class NotCompatible(RicciLabError):
    def __init__(self, msg, mass=None):
        super().__init__(msg)
        self.mass = mass


class EigenSolveFailure(RicciLabError):
    pass


class TauOutOfRange(RicciLabError, ValueError):
    pass


class ShootingDiverged(RicciLabError):
    pass


class NonMinimizing(RicciLabError):
    pass


class SlabOutOfRange(RicciLabError, ValueError):
    pass


class InitialNormalizationViolated(RicciLabError, ValueError):
    pass


class NegativeRicci(RicciLabError, ValueError):
    pass


class NonPositiveInitialR(RicciLabError, ValueError):
    pass


class SchemaError(RicciLabError):
    severity = 1

    def __init__(self, msg, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        super().__init__(f"{msg} ({', '.join(where)})" if where else msg)
        self.line = line
        self.field = field


class RangeError(SchemaError):
    pass
