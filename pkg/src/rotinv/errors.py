"""Exception types raised across the toolkit."""


class RotinvError(Exception):
    """Base class for all toolkit errors."""


class DegenerateCloud(RotinvError):
    pass


class BadK(RotinvError, ValueError):
    pass


class BadCount(RotinvError, ValueError):
    pass


class ZeroVector(RotinvError, ValueError):
    pass


class MissingNormals(RotinvError):
    pass


class AmbiguousAnchor(RotinvError):
    """Anchor vector is (near) orthogonal to a frame axis; the sign is undecidable."""


class DegenerateSpectrum(RotinvError):
    """Singular values are too close for a stable canonical frame."""


class ShapeMismatch(RotinvError, ValueError):
    pass


class BadLabel(RotinvError, ValueError):
    pass


class ParseError(RotinvError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MixedNormals(ParseError):
    pass


class IoError(RotinvError, OSError):
    pass


class CheckpointError(RotinvError):
    pass
