"""Exception types shared across the package.

Every error carries a short machine-readable ``code`` so the CLI and the
service can emit one-line parsable diagnostics.
"""


class HyperKTError(Exception):
    """Base class; ``code`` is stable across releases."""

    code = "error"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    def one_line(self) -> str:
        return f"error: {self.code}: {self.message}"


class ShapeError(HyperKTError):
    code = "shape-mismatch"


class DomainError(HyperKTError):
    """Input outside an operation's mathematical domain."""

    code = "domain"

    def __init__(self, op: str, message: str):
        super().__init__(f"{op}: {message}")
        self.op = op


class TapeError(HyperKTError):
    code = "tape"


class CurvatureMismatchError(HyperKTError):
    code = "curvature-mismatch"


class GraphBuildError(HyperKTError):
    code = "graph-build"


class HyperbolicityError(HyperKTError):
    code = "hyperbolicity"


class TransportError(HyperKTError):
    """Retriable LLM-client transport failure."""

    code = "llm-transport"


class AnnotationParseError(HyperKTError):
    """Raised after retries are exhausted; keeps the raw response for audit."""

    code = "annotation-parse"

    def __init__(self, message: str, raw_response: str):
        super().__init__(message)
        self.raw_response = raw_response


class DataFormatError(HyperKTError):
    code = "data-format"


class ConfigError(HyperKTError):
    code = "config"


class MetricError(HyperKTError):
    code = "metric"


class DivergenceError(HyperKTError):
    code = "training-diverged"

    def __init__(self, epoch: int, step: int, message: str):
        super().__init__(f"epoch {epoch}, step {step}: {message}")
        self.epoch = epoch
        self.step = step


class CheckpointError(HyperKTError):
    code = "checkpoint"
