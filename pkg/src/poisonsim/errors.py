"""Exception hierarchy shared across poisonsim modules."""


class PoisonsimError(Exception):
    """Base class for all poisonsim errors."""


# -- PE parsing / writing -------------------------------------------------

class MalformedMagic(PoisonsimError):
    """Missing 'MZ' or 'PE\\0\\0' signature."""


class TruncatedHeader(PoisonsimError):
    """Input ends before a required header or section extent."""


class AlignmentViolation(PoisonsimError):
    """Alignment fields are not powers of two or offsets break them."""


class OverlappingSections(PoisonsimError):
    """Section virtual ranges overlap or are not sorted ascending."""


class InvariantViolation(PoisonsimError):
    """A caller-constructed image breaks a structural invariant."""


class UnsupportedImage(PoisonsimError):
    """Image variant is readable but not writable (PE32 write path)."""


class AddressSpaceExhausted(PoisonsimError):
    """No room left in the 32-bit RVA space for another section."""


# -- corpus ----------------------------------------------------------------

class EmptyInput(PoisonsimError):
    """An operation that needs at least one sample received none."""


# -- fuzzy hashing ----------------------------------------------------------

class InputTooSmall(PoisonsimError):
    """Byte stream is below the minimum digestible length."""


# -- learners ----------------------------------------------------------------

class DegenerateLabels(PoisonsimError):
    """Training data contains a single class."""


class DimensionMismatch(PoisonsimError):
    """Feature vector width differs from the model's training width."""


class TooFewSamples(PoisonsimError):
    """Not enough samples for the requested fold/partition structure."""


# -- attack ------------------------------------------------------------------

class EmptyPool(PoisonsimError):
    """Donor pool has no material to inject."""


# -- pipeline ----------------------------------------------------------------

class DuplicateId(PoisonsimError):
    """A sample id appears twice where uniqueness is required."""


# -- cli ----------------------------------------------------------------------

class ConfigInvalid(PoisonsimError):
    """Run configuration failed validation."""


class StageFailed(PoisonsimError):
    """A pipeline stage raised; carries the stage name for diagnostics."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
