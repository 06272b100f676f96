"""Exception hierarchy shared across the toolkit."""


class ModuleportError(Exception):
    """Base class for all toolkit errors."""


class ShapeMismatchError(ModuleportError, ValueError):
    """Operands have incompatible shapes; the message names both."""


class TooFewSamplesError(ModuleportError, ValueError):
    """A statistic needs at least two rows of samples."""


class StudentWiderThanTeacherError(ModuleportError, ValueError):
    """Pruning only goes from a wider teacher to a narrower student."""


class MissingSamplesError(ModuleportError, ValueError):
    """Dimensionality differs but no sample batch was provided."""


class LayerCountError(ModuleportError, ValueError):
    """Teacher/student layer counts cannot be reconciled."""


class SizeLimitError(ModuleportError, ValueError):
    """Input exceeds a hard guard (e.g. brute-force factorial blowup)."""


class ContainerFormatError(ModuleportError, ValueError):
    """Base class for on-disk container problems."""


class BadMagicError(ContainerFormatError):
    """File does not start with the expected magic bytes."""


class MalformedHeaderError(ContainerFormatError):
    """Header JSON is missing, truncated, or structurally invalid."""


class TruncatedPayloadError(ContainerFormatError):
    """Declared tensor payload extends past the end of the file."""


class ShapeInconsistencyError(ContainerFormatError):
    """Declared shape, dtype, and byte count disagree."""
