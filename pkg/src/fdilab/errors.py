"""Exception hierarchy shared by all fdilab modules."""


class FdiLabError(Exception):
    """Base class for every error raised by fdilab."""


class NonHermitianInput(FdiLabError, ValueError):
    pass


class GridAsymmetric(FdiLabError, ValueError):
    pass


class GridMismatch(FdiLabError, ValueError):
    pass


class AliasingRisk(FdiLabError, ValueError):
    pass


class BroadeningTooNarrow(FdiLabError, ValueError):
    pass


class MixingNotPositive(FdiLabError, ValueError):
    pass


class DampingVanishes(FdiLabError, ValueError):
    pass


class NotDamping(FdiLabError, ValueError):
    """The damping kernel is not positive definite where it has to be."""


class NoTransitionNearOmega(FdiLabError, ValueError):
    pass


class OffGrid(FdiLabError, ValueError):
    pass


class KernelWindowTooShort(FdiLabError, ValueError):
    pass


class SpectrumNotPositive(FdiLabError, ValueError):
    pass


class Unstable(FdiLabError, RuntimeError):
    """Raised when a Langevin integration blows up."""


class SpecError(FdiLabError, ValueError):
    """Malformed or inconsistent experiment specification."""
