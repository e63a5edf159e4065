"""Exception types shared across the package."""


class GdgatError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(GdgatError):
    """Tensor shapes or model dimensions are inconsistent."""


class NumericError(GdgatError):
    """A numeric invariant was violated (NaN/Inf, divergence, failed check)."""


class FormatError(GdgatError):
    """An input file violates its format contract.

    Carries enough location information to point the user at the offending
    line.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        loc = ""
        if path is not None:
            loc = str(path)
            if line is not None:
                loc += f":{line}"
            loc += ": "
        elif line is not None:
            loc = f"line {line}: "
        super().__init__(loc + message)
