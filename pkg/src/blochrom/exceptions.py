"""Exception hierarchy."""


class BlochROMError(Exception):
    """Base class for all package errors."""


class NonFiniteInput(BlochROMError, ValueError):
    pass


class NotHermitian(BlochROMError, ValueError):
    pass


class MassNotSPD(BlochROMError, ValueError):
    pass


class Degenerate(BlochROMError):
    """Vector already lies in the span of the basis."""


class ExponentOverflow(BlochROMError, ValueError):
    """Congruence produced a phase exponent outside {-1, 0, 1}."""


class RootScanExhausted(BlochROMError):
    pass


class EigenvectorDefect(BlochROMError):
    pass


class ParseError(BlochROMError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class UnpairedBoundaryNode(BlochROMError, ValueError):
    def __init__(self, coords):
        self.coords = coords
        super().__init__(f"boundary nodes without a periodic partner: {coords}")


class DegenerateTriangle(BlochROMError, ValueError):
    pass


class FitRangeEmpty(BlochROMError, ValueError):
    pass


class Stagnation(BlochROMError):
    """Greedy enrichment selected a vector already in the span.

    The partially built basis and history are attached as ``basis`` and
    ``history``.
    """

    def __init__(self, message, basis=None, history=None):
        super().__init__(message)
        self.basis = basis
        self.history = history


class IndicatorCollapse(BlochROMError):
    pass


class ZeroLipschitz(BlochROMError):
    pass


class NoClosureFound(BlochROMError):
    pass


class ClusterBoundaryDegenerate(BlochROMError):
    pass
