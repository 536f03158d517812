"""Exception hierarchy shared across the package.

Every error carries a short machine-readable code; the CLI prints it as a
single ``error=<CODE>`` line and maps the class to a process exit status.
"""


class PedscanError(Exception):
    """Base class for all errors raised by this package."""

    code = "ERROR"
    exit_status = 1


class InputError(PedscanError):
    """Missing or unreadable input file."""

    code = "IO"
    exit_status = 2


class FileFormatError(PedscanError):
    """Malformed input file (carries a line number when known)."""

    code = "PARSE"
    exit_status = 3

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}: "
        if line is not None:
            loc = f"{loc}line {line}: "
        super().__init__(f"{loc}{message}")
        self.path = path
        self.line = line


class ValidationError(PedscanError):
    """Structurally invalid data (cycles, dangling references, ...)."""

    code = "DATA"
    exit_status = 4


class ComputationError(PedscanError):
    """Numerical failure that the caller cannot recover from."""

    code = "NUMERIC"
    exit_status = 5


class ConfigError(PedscanError):
    """Inconsistent or incomplete run configuration."""

    code = "CONFIG"
    exit_status = 6
