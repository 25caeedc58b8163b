"""Exception types shared across the package.

Shape/range/format problems raise plain ``ValueError`` like any numpy
code would; the classes here exist where callers (mainly the CLI) need
to tell failure modes apart.
"""


class RelightError(Exception):
    """Base class for package-specific failures."""


class ConfigError(RelightError, ValueError):
    """Invalid configuration value, unknown key, or bad CLI override."""


class DataError(RelightError):
    """Dataset problems: empty dataset, orphan filenames, all files skipped."""


class BackendError(RelightError):
    """A guidance encoder backend could not be constructed or used."""


class TrainingError(RelightError):
    """Non-finite loss or other unrecoverable failure inside a training step."""


class CheckpointError(RelightError):
    """Corrupted, truncated, or version-incompatible checkpoint file."""
