"""Exception hierarchy. Each class carries the CLI exit code for its category."""


class OctowallError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class InvalidParameterError(OctowallError):
    """Bad user input: degenerate geometry, invalid counts, out-of-domain points."""

    exit_code = 2


class GeometryParseError(OctowallError):
    """Malformed primitive text file or STL file."""

    exit_code = 3

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}: "
        if line is not None:
            loc += f"line {line}: "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class CapacityError(OctowallError):
    """A fixed-capacity structure (bin indicator, cell-face links) overflowed."""

    exit_code = 4


class ValidationFailure(OctowallError):
    """A cross-check in the validation suite failed."""

    exit_code = 5
