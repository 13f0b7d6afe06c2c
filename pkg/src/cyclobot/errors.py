"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A config file or structured input failed validation.

    The message names the offending field or element so the failure can
    be traced back to the file without a debugger.
    """


class SimulationError(RuntimeError):
    """A procedure could not run with the given physical parameters."""
