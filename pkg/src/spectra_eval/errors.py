"""Exception types shared across the package.

Input and format problems raise subclasses of :class:`InputError`; the CLI
maps those to exit code 2 and everything else to exit code 3.
"""


class SpectraEvalError(Exception):
    """Base class for all package errors."""


class InputError(SpectraEvalError):
    """Malformed or unusable caller input (file, argument, or value)."""


# raster
class UnsupportedFormat(InputError):
    """Raster layout the baseline reader does not handle."""


class CorruptRaster(InputError):
    """Raster file is truncated or internally inconsistent."""


class InvalidTarget(InputError):
    """Requested conversion target is impossible for the given source."""


class BandNotFound(InputError):
    """No band matches the requested center wavelength."""


# annotate
class DegenerateFootprint(InputError):
    """Footprint polygon has zero width or height."""


class InvalidArea(InputError):
    """Negative area passed where a physical area is required."""


class EmptyInput(InputError):
    """An operation that needs at least one element received none."""


class NegativeSamplingExhausted(SpectraEvalError):
    """Could not place enough building-free patches by rejection sampling.

    Carries the patches collected so far in ``partial`` and the number that
    was requested in ``requested``.
    """

    def __init__(self, partial, requested):
        self.partial = partial
        self.requested = requested
        super().__init__(
            f"placed {len(partial)} of {requested} negative patches before "
            f"exhausting attempts"
        )


# matcheval
class SceneMismatch(InputError):
    """Ground truth and detections from different scenes passed to match()."""


class DuplicateScene(InputError):
    """The same scene_id appears more than once in a report input."""


# stats
class InsufficientFolds(InputError):
    """Fewer than two fold values where a spread is required."""


class DegenerateVariance(InputError):
    """Zero variance in both groups with unequal means; t is undefined."""


# netexpand
class MissingWavelengths(InputError):
    """Weight tensor lacks the channel wavelengths a strategy needs."""


class CorruptTensorFile(InputError):
    """Tensor container has a bad magic, version, or length."""


# synth
class PlacementExhausted(SpectraEvalError):
    """Could not place the requested boxes without overlap."""
