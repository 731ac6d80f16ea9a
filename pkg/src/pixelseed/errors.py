"""Exception taxonomy shared by the whole pipeline."""


class PixelSeedError(Exception):
    """Base class for all pipeline errors."""


class ParseError(PixelSeedError):
    """Malformed line-oriented input; message carries the line number."""


class ValidationError(PixelSeedError):
    """Structurally valid input that violates a catalog or map constraint."""


class RangeError(PixelSeedError):
    """Scalar argument outside its permitted range."""


class FormatError(PixelSeedError):
    """Bad magic, truncation, or inconsistent binary/text framing."""


class CapacityError(PixelSeedError):
    """Raster larger than the configured element cap."""


class DimError(PixelSeedError):
    """Mismatched vector or raster dimensions."""


class ShapeError(PixelSeedError):
    """Mismatched matrix shapes in score refinement."""


class SpecError(PixelSeedError):
    """Invalid synthetic scene specification."""


class SeedError(PixelSeedError):
    """Annotated seed pixel outside the image it names."""


class EmptyError(PixelSeedError):
    """Operation on an empty region set."""


class MissingSeedError(PixelSeedError):
    """No encoded artifacts for a class's seed image."""


class LearnerError(PixelSeedError):
    """Learner failure, wrapped with the iteration round index."""


class ClassStarvationError(PixelSeedError):
    """A class has zero training regions."""


class CoverageError(PixelSeedError):
    """A pixel is contained in no slice of its plan."""
