"""Exception types shared across the pipeline.

Operational failures that callers are expected to handle carry their own
class; programming errors (violated preconditions) raise plain ValueError.
"""


class PipelineError(Exception):
    """Base class for all toolkit errors."""


# -- corpus ------------------------------------------------------------

class MalformedRecord(PipelineError):
    """A record in a parallel-corpus file could not be parsed."""

    def __init__(self, path, line_number: int, reason: str):
        super().__init__(f"{path}:{line_number}: {reason}")
        self.path = path
        self.line_number = line_number
        self.reason = reason


class EncodingError(PipelineError):
    """Input file is not valid UTF-8."""


class EmptyCorpus(PipelineError):
    """A corpus file contained no records."""


class UnrepresentableInTsv(PipelineError):
    """Pair text contains a tab and cannot be written as TSV."""


class CorpusTooSmall(PipelineError):
    """Corpus has too few pairs to split."""


# -- segmenter ---------------------------------------------------------

class AnalyzerUnavailable(PipelineError):
    """External morphological analyzer could not be reached."""


class InvalidOrder(PipelineError):
    """Requested n-gram order is not a positive integer."""


class EmptyDocument(PipelineError):
    """Document text contains no non-blank content."""


# -- metrics -----------------------------------------------------------

class LengthMismatch(PipelineError):
    """Parallel sequences have different lengths."""


class EmptyInput(PipelineError):
    """An operation requiring a non-empty input received none."""


class ScorerUnreachable(PipelineError):
    """External scorer endpoint did not answer."""


class ScorerProtocolError(PipelineError):
    """External scorer answered with a malformed response."""


class MissingMetric(PipelineError):
    """A report lacks the metric required by the selection criterion."""


# -- filters -----------------------------------------------------------

class EmptySource(PipelineError):
    """Length ratio is undefined for an empty source side."""


# -- backtranslate -----------------------------------------------------

class BackendUnreachable(PipelineError):
    """Translator backend never produced a successful batch."""


class ProtocolError(PipelineError):
    """Translator backend violated the wire protocol."""


# -- assemble ----------------------------------------------------------

class TemplateInvalid(PipelineError):
    """Prompt template is missing or misordering its placeholders."""


class ProvenanceViolation(PipelineError):
    """A pair arrived with provenance its position does not allow."""


class EmptySeed(PipelineError):
    """Mixing requires a non-empty seed corpus."""


# -- cli ---------------------------------------------------------------

class ConfigError(PipelineError):
    """Run configuration failed validation."""
