"""Exception hierarchy for the screening pipeline.

Every error raised by this package derives from CardioRagError so callers
can catch pipeline failures without swallowing programming errors.
"""


class CardioRagError(Exception):
    """Base class for all pipeline errors."""


# record-io ----------------------------------------------------------------

class MissingLeads(CardioRagError):
    """Record does not declare the 12 canonical leads."""


class UnsupportedFormat(CardioRagError):
    """File format (or WFDB storage format) outside the supported subset."""


class CorruptFile(CardioRagError):
    """File contents inconsistent with its own header."""


class EmptySignal(CardioRagError):
    """Record carries no samples."""


class IoFailure(CardioRagError):
    """Filesystem read/write failed."""


# delineation / clinical ---------------------------------------------------

class InsufficientPeaks(CardioRagError):
    """Not enough R peaks to measure beats or RR statistics."""


class MissingLead(CardioRagError):
    """A rule needs a lead that is absent from the measurements."""


class DegenerateAxis(CardioRagError):
    """Frontal-plane net deflections too small to define an axis."""


# encoder weights ----------------------------------------------------------

class BadMagic(CardioRagError):
    """Weight or record file does not start with the expected magic."""


class ShapeMismatch(CardioRagError):
    """Tensor or signal shape inconsistent with the declared architecture."""


class TruncatedFile(CardioRagError):
    """File ended before all declared data was read."""


# retrieval ----------------------------------------------------------------

class ZeroVector(CardioRagError):
    """Cosine similarity is undefined for a zero vector."""


class EmptyDatabase(CardioRagError):
    """Case database holds no entries."""


# llm ----------------------------------------------------------------------

class NoJsonFound(CardioRagError):
    """Model response contains no JSON object."""


class SchemaViolation(CardioRagError):
    """JSON found but the mandatory diagnosis field is missing or invalid."""


class TransportFailure(CardioRagError):
    """Network or HTTP failure talking to the model endpoint."""


# evaluation ---------------------------------------------------------------

class EmptyEvaluation(CardioRagError):
    """No evaluable cases (empty manifest or everything excluded)."""
