"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value, shape mismatch, or precondition violation."""


class DataFormatError(ValueError):
    """Malformed input file (IDX or CSV)."""


class ProtocolError(RuntimeError):
    """Server-side state machine received inconsistent round data."""


class NumericError(ArithmeticError):
    """A computation produced NaN or Inf."""
