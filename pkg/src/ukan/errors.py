"""Exception hierarchy shared across the library."""


class UkanError(Exception):
    pass


class DimensionError(UkanError, ValueError):
    """Operand shapes are incompatible."""


class DomainError(UkanError, ValueError):
    """A numeric argument is outside the operation's domain."""


class ContractError(UkanError, ValueError):
    """An API contract was violated (e.g. non-scalar loss)."""


class ConfigError(UkanError, ValueError):
    """Invalid run configuration."""


class FormatError(UkanError, ValueError):
    """Malformed external file (IDX data, checkpoint)."""
