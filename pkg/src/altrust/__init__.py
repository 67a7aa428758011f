"""Asset, leverage and trust dynamics of a leveraged firm."""

from __future__ import annotations

from .core import EconState, Params, derivatives, diagonal_roa, growth_rates, roa, roe
from .errors import AltrustError, ConfigError, DomainError, NumericalError
from .trajectory import IntegratorConfig, Terminal, TerminalKind, TrajectoryRecord, integrate

__version__ = "0.1.0"

__all__ = [
    "EconState",
    "Params",
    "derivatives",
    "diagonal_roa",
    "growth_rates",
    "roa",
    "roe",
    "AltrustError",
    "ConfigError",
    "DomainError",
    "NumericalError",
    "IntegratorConfig",
    "Terminal",
    "TerminalKind",
    "TrajectoryRecord",
    "integrate",
]
