"""Exception types raised by the solvers and the pipeline."""


class CharfrontError(Exception):
    """Base class for all package errors."""


class NonConvergence(CharfrontError):
    def __init__(self, cell, residual):
        self.cell = cell
        self.residual = residual
        super().__init__(f"fixed point did not converge at node {cell} (residual {residual:.3e})")


class NonFinite(CharfrontError):
    def __init__(self, cell):
        self.cell = cell
        super().__init__(f"non-finite value at node {cell}")


class IncompatibleCorner(CharfrontError):
    pass


class SourceNotVanishing(CharfrontError):
    pass


class OutOfDomain(CharfrontError):
    pass


class SingularRegion(CharfrontError):
    pass


class ZeroEnergy(CharfrontError):
    pass


class InsufficientWindow(CharfrontError):
    pass


class NonPositive(CharfrontError):
    pass


class BlowupDetected(CharfrontError):
    pass


class ConfigError(CharfrontError):
    pass
