"""Exception types shared across the package."""


class CuspwindError(Exception):
    """Base class for all errors raised by cuspwind."""


# hyperbolic
class PoleAtInput(CuspwindError):
    """The image of a boundary point is the point at infinity."""


class NotInUpperHalfPlane(CuspwindError):
    pass


class AffineGenerator(CuspwindError):
    """A matrix with c = 0 fixes infinity, which the groups here must not do."""


class NotParabolic(CuspwindError):
    pass


# group
class SpecError(CuspwindError):
    """A group specification breaks one of its structural invariants."""


class PingPongViolation(CuspwindError):
    pass


class TangencyViolation(CuspwindError):
    pass


class DepthTooLarge(CuspwindError):
    pass


# boundary
class NotInPartition(CuspwindError):
    pass


class NotInD(CuspwindError):
    pass


class OrbitEscaped(CuspwindError):
    pass


# patterson
class NonConvergentFit(CuspwindError):
    pass


class ExclusionUndefined(CuspwindError):
    pass


class DeltaOutOfRange(CuspwindError):
    pass


class InsufficientTailMass(CuspwindError):
    pass


# evt
class SamplerExhausted(CuspwindError):
    pass


class FitDiverged(CuspwindError):
    pass


class InsufficientMass(CuspwindError):
    pass


# gauss
class Terminated(CuspwindError):
    """A rational input ran out of continued fraction digits."""

    def __init__(self, digits):
        super().__init__(f"expansion terminated after {len(digits)} digits")
        self.digits = tuple(digits)


# cli
class ParseError(CuspwindError):
    pass
