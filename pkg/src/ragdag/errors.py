"""Exception hierarchy shared across the package.

Every error raised by library code derives from RagdagError so callers
(and the CLI exit-code mapping) can distinguish our failures from bugs.
"""

from __future__ import annotations


class RagdagError(Exception):
    """Base class for all package errors."""


# --- query graph ------------------------------------------------------------


class GraphError(RagdagError):
    """Base class for graph construction and validation failures."""


class MalformedPayloadError(GraphError):
    """Builder output could not be parsed into a node array."""


class DuplicateIdError(GraphError):
    """Two nodes share the same id."""


class UnknownParentError(GraphError):
    """A node lists a dependency id that is not in the graph."""


class CycleDetectedError(GraphError):
    """The dependency relation contains a cycle."""


class MultipleSinksError(GraphError):
    """More than one sink in strict mode."""


class DanglingPlaceholderError(GraphError):
    """A template placeholder references an id not in the node's parents."""


class UnresolvedDependencyError(GraphError):
    """Substitution hit a placeholder whose node has no stored answer."""

    def __init__(self, node_id: str, message: str | None = None):
        self.node_id = node_id
        super().__init__(message or f"no answer recorded for {node_id}")


# --- answer memory ----------------------------------------------------------


class MemoryError_(RagdagError):
    """Base class for answer-memory failures."""


class DuplicateKeyError(MemoryError_):
    """An entry for this node id already exists."""


class MissingKeyError(MemoryError_):
    """No entry stored under this node id."""


# --- gateway ----------------------------------------------------------------


class GatewayError(RagdagError):
    """Base class for generation-backend failures."""


class BackendUnreachableError(GatewayError):
    """Transport-level failure reaching the backend."""


class BackendTimeoutError(GatewayError):
    """Backend did not answer within the configured timeout."""


class BackendStatusError(GatewayError):
    """Backend answered with a non-success status."""

    def __init__(self, status: int, body: str):
        self.status = status
        self.body = body
        super().__init__(f"backend returned status {status}: {body[:200]}")


class NoScriptMatchError(GatewayError):
    """No scripted rule matched the prompt (scripted backend only)."""


class MalformedAdapterError(GatewayError):
    """Adapter file is structurally invalid."""


class RoleCountMismatchError(GatewayError):
    """Adapter roles or per-role token counts do not match expectations."""


class AdapterFingerprintError(GatewayError):
    """Adapter payload does not match its recorded checksum."""


# --- retrieval --------------------------------------------------------------


class RetrievalError(RagdagError):
    """Base class for retrieval failures."""


class IndexNotBuiltError(RetrievalError):
    """Search attempted before the index was built."""


class EndpointUnreachableError(RetrievalError):
    """Remote search endpoint could not be reached."""


class EmptyQueryError(RetrievalError):
    """Query was empty or whitespace-only."""


class MalformedCorpusLineError(RetrievalError):
    """A corpus line is not a valid record."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class EmptyCorpusError(RetrievalError):
    """Corpus contains no records."""


class EmptyResultError(RetrievalError):
    """Operation requires at least one passage."""


# --- evaluation -------------------------------------------------------------


class DatasetError(RagdagError):
    """Base class for dataset loading and scoring failures."""


class MalformedLineError(DatasetError):
    """A dataset line is not valid JSON."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class MissingFieldError(DatasetError):
    """A dataset record lacks a required field."""

    def __init__(self, name: str, line_no: int | None = None):
        self.name = name
        where = f" (line {line_no})" if line_no is not None else ""
        super().__init__(f"missing field {name!r}{where}")


class IdMismatchError(DatasetError):
    """Result ids and dataset item ids do not line up."""


# --- data collection --------------------------------------------------------


class SampleCorpusError(RagdagError):
    """Base class for training-sample corpus validation failures."""


class SchemaViolationError(SampleCorpusError):
    """A sample record does not match the sample schema."""


class ThresholdViolationError(SampleCorpusError):
    """A sample's outcome score is below the filter threshold."""


class CountInconsistencyError(SampleCorpusError):
    """Per-task sample counts violate the structural relations."""


# --- cost model -------------------------------------------------------------


class MissingTelemetryError(RagdagError):
    """Trace lacks the per-role token tallies needed for comparison."""


# --- pipeline / cli ---------------------------------------------------------


class PipelineError(RagdagError):
    """A stage failed while resolving a query; carries partial state."""

    def __init__(self, stage: str, node_id: str | None, cause: Exception, partial=None):
        self.stage = stage
        self.node_id = node_id
        self.cause = cause
        self.partial = partial
        where = f"{stage}" + (f"/{node_id}" if node_id else "")
        super().__init__(f"pipeline failed at {where}: {cause}")


class ConfigError(RagdagError):
    """Invalid configuration file or flag combination."""
