"""Exception types raised by the laboratory."""


class BmoLabError(Exception):
    """Base class for all library errors."""


class TreeError(BmoLabError, ValueError):
    """Malformed event tree or invalid node reference."""


class MartingaleViolation(BmoLabError):
    """A process required to be a martingale fails the one-step mean test."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class NonpositiveExponential(BmoLabError):
    """1 + dR <= 0 on some edge, so the stochastic exponential is not positive."""

    def __init__(self, message, edge=None):
        super().__init__(message)
        self.edge = edge


class ArbitrageDetected(BmoLabError):
    """One-step arbitrage: increments of S at a node do not take both signs."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class InnerSolverDiverged(BmoLabError):
    """Safeguarded Newton did not reach the gradient tolerance."""


class LineSearchStalled(BmoLabError):
    """Backtracking line search could not make progress."""


class CertificateNotFound(BmoLabError):
    """No exponent p in (1, 2] satisfied the L^p certificate condition."""


class SpecError(BmoLabError):
    """Input specification file is malformed or violates an invariant."""
