"""Exception hierarchy shared by all gridex modules."""


class GridexError(Exception):
    """Base class for every error raised by gridex."""


class ModelError(GridexError):
    """Invalid object model declaration or instance."""


class FactBaseError(GridexError):
    """A fact-base invariant would be violated."""


class DocumentError(GridexError):
    """Malformed or inconsistent grid document."""


class AnnotatorError(GridexError):
    """Invalid annotator configuration."""


class DescriptorSyntaxError(GridexError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class DescriptorError(GridexError):
    """Semantic error in a descriptor (unbound variable, bad axis, ...)."""


class LinkError(GridexError):
    """Descriptors cannot be linked against the object model."""


class DatalogError(GridexError):
    """Ill-formed Datalog rule or program."""


class SchemaError(GridexError):
    """Invalid target schema or mapping rule."""


class ProjectError(GridexError):
    """Project configuration could not be loaded."""
