"""Domain exception types shared across the workbench."""


class NerveTraceError(Exception):
    """Base class for domain errors; the CLI maps these to exit code 1."""


class IngestError(NerveTraceError):
    """Video source could not be turned into a frame sequence."""


class MetadataError(NerveTraceError):
    """Required acquisition metadata is missing or invalid."""


class MaskError(NerveTraceError):
    """A binary mask violates its contract (dimensions, values, provenance)."""


class GeometryError(NerveTraceError):
    """Boxes, patches or masks with incompatible geometry."""


class SeedError(NerveTraceError):
    """Seed annotation rejected (e.g. empty box list)."""


class StateError(NerveTraceError):
    """Operation not legal in the current annotation-session state."""


class ParamError(NerveTraceError):
    """Out-of-range algorithm or augmentation parameter."""


class EmptyVideoError(NerveTraceError):
    """A video offered zero evaluable frames."""


class EmptyReportError(NerveTraceError):
    """Aggregation requested over an empty collection of videos."""
