"""Exception types shared across the package."""


class TurboaeError(Exception):
    """Base class for package-specific failures."""


class ConfigError(TurboaeError):
    """Invalid or inconsistent run configuration (CLI exit code 2)."""


class CheckpointError(TurboaeError):
    """Checkpoint file is missing, corrupt, or incompatible."""


class TrainingDivergedError(TurboaeError):
    """Training loss became non-finite."""


class DegenerateInputError(ValueError):
    """Power normalization received an (almost) constant batch."""
