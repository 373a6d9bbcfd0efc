"""Exception hierarchy shared across the package."""


class DigraphFlowError(Exception):
    """Base class for all package errors."""


class CyclicGraph(DigraphFlowError):
    pass


class InvalidPermutation(DigraphFlowError):
    pass


class ParseError(DigraphFlowError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvalidParam(DigraphFlowError, ValueError):
    pass


class EmptyDataset(DigraphFlowError, ValueError):
    pass


class EigenFailure(DigraphFlowError):
    pass


class SingularMatrix(DigraphFlowError):
    pass


class NonConvergent(DigraphFlowError):
    pass


class ShapeMismatch(DigraphFlowError, ValueError):
    pass


class AllMasked(DigraphFlowError, ValueError):
    pass


class ZeroSupport(DigraphFlowError, ValueError):
    pass


class EmptySet(DigraphFlowError, ValueError):
    pass


class InferenceFailure(DigraphFlowError):
    pass


class DegenerateSequence(DigraphFlowError, ValueError):
    pass


class UnmappedClass(DigraphFlowError, ValueError):
    pass


class UnlabeledData(DigraphFlowError, ValueError):
    pass


class NonFinite(DigraphFlowError, FloatingPointError):
    pass


class CheckpointError(DigraphFlowError):
    pass
