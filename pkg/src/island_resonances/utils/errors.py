class IslandResonanceError(Exception):
    """Base class for every error raised by the package."""


class NoConvergence(IslandResonanceError):
    pass


class WrongSignature(IslandResonanceError):
    pass


class SingleComponent(IslandResonanceError):
    pass


class FillInfeasible(IslandResonanceError):
    pass


class NoRoot(IslandResonanceError):
    pass


class RegionUndefined(IslandResonanceError):
    pass


class GridTooCoarse(IslandResonanceError):
    pass


class NotHermitian(IslandResonanceError):
    pass


class WindowUncovered(IslandResonanceError):
    pass


class SingularDenominator(IslandResonanceError):
    pass


class RefinementCapExceeded(IslandResonanceError):
    pass


class NoHypothesisSamples(IslandResonanceError):
    pass


class ConfigValidationError(IslandResonanceError, ValueError):
    pass


class CorruptEntry(IslandResonanceError):
    pass


class StageError(IslandResonanceError):
    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


class UpperHalfPlaneResonance(IslandResonanceError):
    def __init__(self, values):
        values = [complex(v) for v in values]
        super().__init__(f"{len(values)} dilation-stable eigenvalues in the upper half-plane: {values}")
        self.values = values
