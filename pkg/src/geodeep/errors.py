"""Exception types shared across the pipeline.

The CLI maps these onto exit codes: ConfigError -> 2, InputError -> 3,
ResumableRunError -> 4.
"""


class GeodeepError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(GeodeepError):
    """Invalid or inconsistent run configuration."""


class InputError(GeodeepError):
    """Unusable input data: missing files, unsupported rasters, bad points."""


class ResumableRunError(GeodeepError):
    """A failure that leaves a valid checkpoint; rerunning resumes the work."""


class FingerprintMismatch(ConfigError):
    """Resume attempted with a configuration that does not match the checkpoint."""
