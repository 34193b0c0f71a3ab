"""Exception hierarchy. Each class carries a stable machine-readable ``code``."""


class M3GError(Exception):
    code = "E_M3G"


class GeometryError(M3GError, ValueError):
    code = "E_GEOMETRY"


class CoordinateError(GeometryError):
    code = "E_COORD"


class GraphError(M3GError, ValueError):
    code = "E_GRAPH"


class NoContextError(GraphError):
    """Anchor has no qualifying outgoing edge for the modality."""

    code = "E_NO_CONTEXT"


class EmptyNegativeSetError(GraphError):
    code = "E_NO_NEGATIVE"


class SamplingError(M3GError, ValueError):
    code = "E_SAMPLING"


class DimensionError(M3GError, ValueError):
    code = "E_DIMENSION"


class VocabularyError(M3GError, KeyError):
    code = "E_OOV"

    def __str__(self):  # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else ""


class TrainingError(M3GError, FloatingPointError):
    code = "E_NONFINITE"


class EvaluationError(M3GError, ValueError):
    code = "E_EVAL"


class ConfigError(M3GError, ValueError):
    code = "E_CONFIG"


class DataFormatError(M3GError, ValueError):
    code = "E_FORMAT"
