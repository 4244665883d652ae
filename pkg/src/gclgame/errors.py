class GclError(RuntimeError):
    pass


class InvalidConfig(GclError, ValueError):
    def __init__(self, field, message):
        super().__init__("invalid '{}': {}".format(field, message))
        self.field = field
        self.message = message


# graph data model

class GraphError(GclError):
    def __init__(self, message, *, where=None):
        if where:
            message = "{}: {}".format(where, message)
        super().__init__(message)
        self.where = where


class VertexOutOfUniverse(GraphError):
    pass


class DanglingEdge(GraphError):
    pass


class ShapeMismatch(GraphError):
    pass


class NonFiniteValue(GraphError):
    pass


class DuplicateEdge(GraphError):
    pass


class InconsistentTask(GraphError):
    pass


class InconsistentStream(GraphError):
    pass


# stream files

class StreamFileError(GclError):
    pass


class ParseError(StreamFileError):
    def __init__(self, message, *, line=None, column=None):
        if line is not None:
            message = "{} (line {}, column {})".format(message, line, column)
        super().__init__(message)
        self.line = line
        self.column = column


class SchemaError(StreamFileError):
    pass


class InvariantError(StreamFileError):
    pass


class IoError(StreamFileError):
    pass


# autodiff

class EmptyMask(GclError):
    pass


class NonFiniteResult(GclError, ArithmeticError):
    pass


class NotScalarOutput(GclError):
    pass


class DisconnectedGraph(GclError):
    pass


class LayoutMismatch(GclError):
    pass


# training

class EmptyTask(GclError):
    pass


class EmptyNewData(GclError):
    pass


class Divergence(GclError, ArithmeticError):
    def __init__(self, task_id, outer_j, inner_i, cause):
        where = "task {} outer iteration {}".format(task_id, outer_j)
        if inner_i is not None:
            where += " ascent step {}".format(inner_i)
        super().__init__("non-finite cost at {}: {}".format(where, cause))
        self.task_id = task_id
        self.outer_j = outer_j
        self.inner_i = inner_i


# metrics

class LengthMismatch(GclError, ValueError):
    pass


class EmptyInput(GclError, ValueError):
    pass


class EmptyMatrix(GclError, ValueError):
    pass


class TooFewTasks(GclError, ValueError):
    pass


# diagnostics and search

class BoundViolation(GclError):
    pass


class InsufficientGrid(GclError, ValueError):
    pass


class NoSuccessfulTrials(GclError):
    pass
