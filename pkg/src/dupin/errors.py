"""Exception hierarchy for the dupin package."""


class DupinError(Exception):
    """Base class for all package errors."""


class AxisOutOfRange(DupinError):
    pass


class GridTooSmall(DupinError):
    pass


class GridMismatch(DupinError):
    pass


class NotSymmetric(DupinError):
    pass


class DegenerateCloud(DupinError):
    pass


class ZeroLame(DupinError):
    pass


class NotParallel(DupinError):
    pass


class BlowUp(DupinError):
    pass


class LameVanishes(DupinError):
    pass


class FrameDrift(DupinError):
    pass


class PhiVanishes(DupinError):
    pass


class DegenerateD(DupinError):
    pass


class PhiFZero(DupinError):
    pass


class RankZero(DupinError):
    pass


class NotCanonical(DupinError):
    pass


class LambdaZero(DupinError):
    pass


class ThroughOrigin(DupinError):
    pass


class DegenerateOffset(DupinError):
    pass


class NotSubstantial(DupinError):
    pass


class NotOnQuadric(DupinError):
    pass


class FocalDegeneracy(DupinError):
    pass


class AxisIncidence(DupinError):
    pass


class DimensionMismatch(DupinError):
    pass


class TooFewNodes(DupinError):
    pass


class NotProper(DupinError):
    pass


class RankDeficient(DupinError):
    pass


class UnsupportedGrid(DupinError):
    pass


class UnsupportedSlice(DupinError):
    pass


class ParseError(DupinError):
    pass


class StepFailure(DupinError):
    def __init__(self, step_index, message, residuals=None):
        super().__init__(f"step {step_index}: {message}")
        self.step_index = step_index
        self.residuals = residuals or {}
