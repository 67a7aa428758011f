"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: configuration problems exit with 2,
domain violations with 3 and numerical failures with 4.
"""


class AltrustError(Exception):
    exit_code = 1


class ConfigError(AltrustError, ValueError):
    """Invalid configuration, schedule, chain settings or input file."""

    exit_code = 2


class DomainError(AltrustError, ValueError):
    """A state or parameter lies outside the region where the model is defined."""

    exit_code = 3


class NumericalError(AltrustError, RuntimeError):
    """Quadrature, integration or sampling failed to produce a usable result."""

    exit_code = 4
