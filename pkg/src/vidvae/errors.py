"""Exception hierarchy. Contract violations and I/O failures are kept apart so the
CLI can map them to distinct exit codes (1 and 2 respectively)."""


class VidVaeError(Exception):
    """Base class for all package errors."""


class ContractError(VidVaeError):
    """A caller violated an operation's precondition."""


class ShapeError(ContractError):
    """Tensor extents do not satisfy the operation's shape contract."""


class ConfigError(ContractError):
    """Invalid model or training configuration."""


class InflationError(ContractError):
    """2D and 3D model topologies do not line up for weight inflation."""


class NumericError(VidVaeError):
    """A non-finite value appeared where the contract requires finite values."""


class FormatError(VidVaeError):
    """A file does not conform to its byte-level format."""
