"""Exception hierarchy.

Every failure surfaced to callers is a SpcgridError subclass so that the CLI
(and the corruption-fuzz harness) can distinguish data problems from bugs.
"""


class SpcgridError(Exception):
    """Base class for all errors raised by spcgrid."""


class GridError(SpcgridError):
    """Invalid grid content or misuse (e.g. sampling outside world bounds)."""


class GridFormatError(GridError):
    """Malformed grid descriptor or raw payload."""


class RenderError(SpcgridError):
    """Renderer failure (non-finite intermediates, malformed cameras)."""


class EncodeError(SpcgridError):
    """Entropy-coder input violates its alphabet or range contract."""


class DecodeError(SpcgridError):
    """Corrupt or truncated coded stream."""


class ContainerFormatError(SpcgridError):
    """Malformed .spcv container (magic, version, table, crc)."""


class PipelineError(SpcgridError):
    """A compression-pipeline stage failed; message names the stage."""


class InternalError(SpcgridError):
    """Invariant violation: indicates a bug, mapped to CLI exit code 3."""
