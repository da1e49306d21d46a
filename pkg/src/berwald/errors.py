"""Exception hierarchy shared by all modules."""


class BerwaldError(Exception):
    """Base class for every error raised by the toolkit."""


class SingularEvaluation(BerwaldError):
    """The fundamental tensor is undefined at the requested (x, v)."""


class SingularArgument(SingularEvaluation):
    """A denominator of the scalar factor vanishes (the singular locus)."""


class NonRealValue(SingularEvaluation):
    """log or sqrt of an argument outside its real domain."""


class NonFinite(BerwaldError):
    """A computation produced NaN or an infinity."""


class BoundViolation(SingularEvaluation):
    """1 + phi <= 0, which would flip the signature."""


class DegenerateMetric(BerwaldError):
    """|det g| fell below the non-degeneracy threshold."""


class SingularJacobian(BerwaldError):
    """A chart map has a (numerically) vanishing Jacobian determinant."""


class CrossCheckFailed(BerwaldError):
    """Two independent derivative paths disagree beyond tolerance."""


class ParseError(BerwaldError):
    """Malformed scalar-factor source text."""

    def __init__(self, message, offset, expected=()):
        self.offset = offset
        self.expected = tuple(sorted(expected))
        detail = f"{message} at offset {offset}"
        if self.expected:
            detail += f" (expected one of: {', '.join(self.expected)})"
        super().__init__(detail)


class UnknownIdentifier(ParseError):
    """An identifier that is neither a declared variable nor a function."""


class InsufficientSamples(BerwaldError):
    pass


class NotBerwald(BerwaldError):
    """Curvature was requested for a tensor without a passing Berwald certificate."""


class DivergentSeries(BerwaldError):
    pass


class IntegrationError(BerwaldError):
    """Base for geodesic integration failures; carries the failure location."""

    def __init__(self, message, t=None, x=None, v=None):
        self.t = t
        self.x = None if x is None else [float(c) for c in x]
        self.v = None if v is None else [float(c) for c in v]
        super().__init__(message)

    def location(self):
        return {"t": self.t, "x": self.x, "v": self.v}


class LeftChart(IntegrationError):
    pass


class SingularHit(IntegrationError):
    pass


class StepUnderflow(IntegrationError):
    pass


class NotTimelike(BerwaldError):
    pass


class NotAutoparallel(BerwaldError):
    pass


class NewtonDivergence(BerwaldError):
    def __init__(self, message, last_iterate=None):
        self.last_iterate = last_iterate
        super().__init__(message)


class ConfigError(BerwaldError):
    pass
