"""Exception types shared across the toolkit."""


class FormatError(ValueError):
    """Unsupported or malformed file content (e.g. non PCM-16/float-32 WAV)."""


class InvalidChirpError(ValueError):
    """Chirp rate makes the time warp non-monotone over the frame."""


class ConfigError(ValueError):
    """Inconsistent or incomplete configuration."""
