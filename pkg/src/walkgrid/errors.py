"""Exception types raised by walkgrid."""


class WalkgridError(Exception):
    """Base class for all walkgrid errors."""


class ParseError(WalkgridError, ValueError):
    """Malformed input file. ``location`` is a 1-based line, row or feature."""

    def __init__(self, message, path=None, location=None):
        self.path = path
        self.location = location
        parts = []
        if path is not None:
            parts.append(str(path))
        if location is not None:
            parts.append(str(location))
        prefix = ":".join(parts)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class InvalidGeometryError(WalkgridError, ValueError):
    pass


class AlignmentError(WalkgridError, ValueError):
    pass


class GraphError(WalkgridError, ValueError):
    pass


class UnsupportedKindError(WalkgridError, ValueError):
    pass


class InsufficientDataError(WalkgridError, ValueError):
    pass


class DegenerateFieldError(WalkgridError, ValueError):
    """A statistic needs spread that the field does not have (zero variance)."""


class DegenerateWeightsError(WalkgridError, ValueError):
    """Spatial weights sum to zero."""


class ConfigError(WalkgridError, ValueError):
    pass
