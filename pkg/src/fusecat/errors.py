"""Exception types raised by fusecat."""


class FusecatError(Exception):
    """Base class for every error the toolkit raises on purpose."""


class ShapeMismatchError(FusecatError, ValueError):
    pass


class InvalidGeometryError(FusecatError, ValueError):
    pass


class UnknownTapError(FusecatError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown tap"


class WeightShapeError(FusecatError, ValueError):
    """A weight blob does not fit the layer it is attached to."""

    def __init__(self, layer, message):
        super().__init__(f"layer {layer!r}: {message}")
        self.layer = layer


class StructuralError(FusecatError, ValueError):
    pass


class UnknownPresetError(FusecatError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown preset"


class CorruptFileError(FusecatError, OSError):
    pass


class DecodeError(FusecatError, OSError):
    pass


class DegenerateInputError(FusecatError, ValueError):
    pass


class ProvenanceMismatchError(FusecatError, ValueError):
    pass


class UnknownLabelError(FusecatError, ValueError):
    pass


class ManifestError(FusecatError, ValueError):
    pass
