"""Exception types shared across the package."""


class LocalDeformError(Exception):
    """Base class for all errors raised by this package."""


class EmptyMeshError(LocalDeformError):
    pass


class IndexOutOfRangeError(LocalDeformError):
    pass


class AllElementsDegenerateError(LocalDeformError):
    pass


class ShapeMismatchError(LocalDeformError):
    pass


class NonFiniteInputError(LocalDeformError):
    pass


class NonpositiveThresholdError(LocalDeformError):
    pass


class SafeguardViolatedError(LocalDeformError):
    """rho is too small relative to w * max(a_i) / s; shrinkage would have local minima."""


class ZeroRestPatchError(LocalDeformError):
    pass


class NonpositiveSigmaError(LocalDeformError):
    pass


class NonManifoldEdgeError(LocalDeformError):
    pass


class SingularSystemError(LocalDeformError):
    pass


class OverlappingConstraintsError(LocalDeformError):
    pass


class ParseError(LocalDeformError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix += str(path)
        if line is not None:
            prefix += f":{line}"
        super().__init__(f"{prefix}: {message}" if prefix else message)


class UnsupportedFeatureError(LocalDeformError):
    pass


class IoError(LocalDeformError):
    pass


class SchemaError(LocalDeformError):
    """A session/trajectory/report document failed schema validation."""
