"""Exception hierarchy shared by every subpackage."""


class HyperAdmmError(Exception):
    """Base class for all library errors."""


class GraphValidationError(HyperAdmmError):
    """A bipartite graph violates a structural invariant."""


class GraphFormatError(HyperAdmmError):
    """A graph, assignment or problem file could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class GenerationError(HyperAdmmError):
    """The synthetic generator could not produce a valid graph."""


class InfeasibleBalanceError(HyperAdmmError):
    """No assignment can satisfy the requested balance constraint."""


class SizeMismatchError(HyperAdmmError):
    """Problem, graph and assignment disagree on their dimensions."""


class DivergenceError(HyperAdmmError):
    """An ADMM iterate became non-finite."""

    def __init__(self, kind, vertex, step):
        self.kind = kind
        self.vertex = vertex
        self.step = step
        super().__init__(f"non-finite iterate at {kind} vertex {vertex} in superstep {step}")
