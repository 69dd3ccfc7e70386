"""Error and warning types shared across the package."""


class ParseError(ValueError):
    """Raised when an input file does not match its expected format."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}: "
            if line is not None:
                loc = f"{path}:{line}: "
        super().__init__(f"{loc}{message}")
        self.path = path
        self.line = line


class DegeneracyError(RuntimeError):
    """Raised when an algorithm cannot produce a meaningful result,
    e.g. no A-scan ever crosses threshold or a mesh has no faces."""


class DegeneracyWarning(UserWarning):
    """Emitted when an algorithm hits a degenerate case it can absorb,
    e.g. Otsu on a constant image or a saturated noise region."""
