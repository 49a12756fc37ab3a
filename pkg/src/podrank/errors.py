"""Exception types shared across the package.

Every error raised deliberately by podrank derives from PodrankError so the
CLI can distinguish data problems (exit code 2) from usage problems (exit
code 1, raised as ConfigError or by argument parsing).
"""


class PodrankError(Exception):
    """Base class for all podrank errors."""


class CorpusError(PodrankError):
    """Malformed corpus or queries record; carries the 1-based line number."""

    def __init__(self, message: str, line_no: int | None = None):
        super().__init__(message)
        self.line_no = line_no


class DuplicateIdError(PodrankError):
    """A document or episode id occurred more than once."""


class UnknownDocError(PodrankError):
    """A doc_id was requested that the index does not contain."""


class EmptyCollectionError(PodrankError):
    """An operation requires a non-empty collection (N >= 1)."""


class ExpansionError(PodrankError):
    """Query expansion is unavailable (no feedback documents retrievable)."""


class FormatError(PodrankError):
    """A binary or text artifact violates its file format."""


class MissingEmbeddingError(PodrankError):
    """An embedding provider has no record for the requested key."""


class DimensionError(PodrankError):
    """Tensor or parameter dimensions are incompatible."""


class TrainingDataError(PodrankError):
    """Training data is unusable (for example, only one class present)."""


class RunFileError(PodrankError):
    """A TREC run file is malformed or violates rank/score invariants."""


class QrelsError(PodrankError):
    """A qrels file is malformed."""


class FusionError(PodrankError):
    """Score fusion received inputs outside its documented domain."""


class ConfigError(PodrankError):
    """Bad configuration key, value, or type. Treated as a usage error."""


class StageError(PodrankError):
    """Wraps an error with the pipeline stage in which it occurred."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
