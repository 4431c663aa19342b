"""Exception hierarchy shared by all stages of the pipeline."""


class CoupledMFError(Exception):
    """Base class for every error raised by this package."""


class ParseError(CoupledMFError):
    """A raw input line could not be parsed."""

    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")


class IntegrityError(CoupledMFError):
    """A rating references an entity missing from its attribute file."""


class DecodeError(CoupledMFError):
    """Raw bytes could not be decoded with the declared encoding."""

    def __init__(self, path, offset, message):
        self.path = str(path)
        self.offset = offset
        super().__init__(f"{self.path}: byte offset {offset}: {message}")


class ConfigError(CoupledMFError, ValueError):
    """Invalid configuration or argument value."""


class DomainError(CoupledMFError, ValueError):
    """An input lies outside the domain of a similarity measure."""


class NumericError(CoupledMFError, ArithmeticError):
    """Non-finite values were found where finite values are required."""


class TrainingFailure(CoupledMFError):
    """Gradient descent diverged even after the step size was exhausted."""

    def __init__(self, message, trace=None, fold=None):
        self.trace = trace
        self.fold = fold
        super().__init__(message if fold is None else f"fold {fold}: {message}")
