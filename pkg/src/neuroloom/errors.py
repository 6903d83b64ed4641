"""Exception hierarchy shared across the package."""


class NeuroloomError(Exception):
    """Base class for all package errors."""


class ConnectomeError(NeuroloomError, ValueError):
    """Invalid or unreadable connectome data."""


class DslError(NeuroloomError, ValueError):
    """Model description failed to parse, validate or compile.

    ``line`` is the 1-based line in the XML source when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(NeuroloomError, ValueError):
    """Inconsistent simulation, monitor or run configuration."""


class NumericFault(NeuroloomError, ArithmeticError):
    """A state or derivative became non-finite."""

    def __init__(self, message, step=None, node=None, variable=None):
        self.step = step
        self.node = node
        self.variable = variable
        super().__init__(message)


class TransportError(NeuroloomError, RuntimeError):
    """Co-simulation message exchange failed."""

    def __init__(self, message, window_index=None):
        self.window_index = window_index
        super().__init__(message)
