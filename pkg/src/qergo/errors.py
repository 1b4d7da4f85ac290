"""Exception types raised across the package."""


class QergoError(Exception):
    """Base class for all package errors."""


class GraphError(QergoError, ValueError):
    pass


class DisconnectedGraph(GraphError):
    pass


class SelfLoop(GraphError):
    pass


class MultiEdge(GraphError):
    pass


class DegreeOutOfRange(GraphError):
    pass


class PathBudgetExceeded(QergoError):
    pass


class RejectionBudgetExceeded(QergoError):
    pass


class EigensolveFailure(QergoError):
    pass


class SizeCapExceeded(QergoError):
    pass


class RealAxisParameter(QergoError, ValueError):
    pass


class NoConvergence(QergoError):
    def __init__(self, message, iterations=None, rung=None):
        super().__init__(message)
        self.iterations = iterations
        self.rung = rung


class HalfPlaneViolation(QergoError):
    pass


class SupBoundViolated(QergoError, ValueError):
    pass


class KZeroNotEdgeBased(QergoError, ValueError):
    pass


class DegenerateDenominator(QergoError):
    pass


class OracleBudgetExceeded(QergoError):
    pass


class ConfigError(QergoError, ValueError):
    pass
