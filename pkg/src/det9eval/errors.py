"""Exception hierarchy shared across the package."""


class Det9Error(Exception):
    """Base class for all package errors."""


class BehindCamera(Det9Error):
    """A box center lies at non-positive optical depth and cannot be projected."""


class ParseError(Det9Error):
    """Input file is not well-formed JSON or does not follow the schema layout."""

    def __init__(self, message, path=None, line=None, column=None):
        self.path = path
        self.line = line
        self.column = column
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}:{column}"
            where += ": "
        super().__init__(where + message)


class ValidationError(Det9Error):
    """A parsed value violates a type invariant."""

    def __init__(self, message, frame=None, field=None, path=None):
        self.frame = frame
        self.field = field
        self.path = path
        parts = []
        if path is not None:
            parts.append(str(path))
        if frame is not None:
            parts.append(f"frame {frame!r}")
        if field is not None:
            parts.append(f"field {field!r}")
        prefix = ", ".join(parts)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class NotFound(Det9Error, KeyError):
    """Lookup of an unknown key."""

    def __str__(self):
        return Exception.__str__(self)


class NoDetections(Det9Error):
    """A precision-recall curve has no points."""


class EmptyComparison(Det9Error):
    """Two annotation sets share no instances."""


class OracleBound(Det9Error):
    """Instance is too large for exhaustive reference evaluation."""
