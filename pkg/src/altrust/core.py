"""Model types and right-hand sides of the assets/leverage/trust system.

Everything here is written in non-dimensional time ``tau = k * t``. Rates
in calendar time are recovered by multiplying by ``k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .errors import DomainError

__all__ = [
    "Params",
    "DerivedParams",
    "EconState",
    "RateVector",
    "GrowthRates",
    "derivatives",
    "roa",
    "roe",
    "growth_rates",
    "diagonal_roa",
]


@dataclass(frozen=True)
class Params:
    """Non-dimensional exogenous parameters plus the trust adjustment rate.

    Attributes
    ----------
    a_tilde : float
        Debt adjustment rate; ``1/a_tilde`` is the time for debt to reach ``T*A``.
    g_tilde : float
        EBITA/Assets ratio. Negative values model crisis regimes.
    r_tilde : float
        Interest rate paid on debt.
    k : float
        Trust adjustment rate in calendar units (1/time). Only used when
        converting to dimensional time.
    """

    a_tilde: float
    g_tilde: float
    r_tilde: float
    k: float = 0.05

    def __post_init__(self):
        for name in ("a_tilde", "g_tilde", "r_tilde", "k"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise DomainError(f"{name} must be finite, got {v!r}")
        if self.a_tilde <= 0:
            raise DomainError(f"a_tilde must be > 0, got {self.a_tilde}")
        if self.k <= 0:
            raise DomainError(f"k must be > 0, got {self.k}")

    @property
    def beta(self) -> float:
        return self.a_tilde + self.r_tilde

    @property
    def L0(self) -> float:
        """Leverage coordinate of the off-diagonal fixed points."""
        den = self.r_tilde + self.a_tilde
        if den == 0:
            raise DomainError("L0 undefined: r_tilde + a_tilde == 0")
        return (self.g_tilde + self.a_tilde) / den

    def derived(self) -> DerivedParams:
        return DerivedParams(beta=self.beta, L0=self.L0)

    def with_regime(self, g_tilde: float, r_tilde: float) -> Params:
        return Params(self.a_tilde, g_tilde, r_tilde, self.k)


@dataclass(frozen=True)
class DerivedParams:
    beta: float
    L0: float


@dataclass(frozen=True)
class EconState:
    """A point (A, L, T). ``A`` in currency units, ``L = D/A``, ``T`` is trust."""

    A: float
    L: float
    T: float

    def __post_init__(self):
        if not (math.isfinite(self.A) and self.A > 0):
            raise DomainError(f"asset value must be finite and > 0, got {self.A!r}")
        if not 0.0 <= self.L <= 1.0:
            raise DomainError(f"leverage must lie in [0, 1], got {self.L!r}")
        if not 0.0 <= self.T <= 1.0:
            raise DomainError(f"trust must lie in [0, 1], got {self.T!r}")

    @property
    def debt(self) -> float:
        return self.L * self.A

    @property
    def equity(self) -> float:
        return (1.0 - self.L) * self.A


class RateVector(NamedTuple):
    dA: float
    dL: float
    dT: float


class GrowthRates(NamedTuple):
    r_A: float
    r_L: float
    r_D: float


def _rates(L, T, a, g, r):
    """(r_A, dL/dtau, dT/dtau) with no validation.

    Uses only arithmetic so that it evaluates elementwise on numpy arrays
    as well as on floats. The integrators depend on that.
    """
    om = 1.0 - T
    d = T - L
    r_a = (g - r * L + a * d) / om + d * T
    dL = d * ((g - r * L + a * (1.0 - L)) / om + (1.0 - L) * T)
    dT = T * d * om
    return r_a, dL, dT


def _dL_beta_form(L, T, beta, L0):
    # same derivative written around L0; convenient near fixed points
    return (T - L) * (beta * (L0 - L) / (1.0 - T) + T * (1.0 - L))


def _require_open_trust(s: EconState):
    if s.T >= 1.0:
        raise DomainError(f"right-hand side is singular at T >= 1 (T={s.T!r})")


def derivatives(s: EconState, p: Params) -> RateVector:
    """Time derivatives (dA, dL, dT) per unit non-dimensional time."""
    _require_open_trust(s)
    r_a, dL, dT = _rates(s.L, s.T, p.a_tilde, p.g_tilde, p.r_tilde)
    return RateVector(r_a * s.A, dL, dT)


def roa(s: EconState, p: Params) -> float:
    """Return on assets, ``(1/A) dA/dtau``."""
    _require_open_trust(s)
    return _rates(s.L, s.T, p.a_tilde, p.g_tilde, p.r_tilde)[0]


def roe(L: float, p: Params) -> float:
    """Return on equity. Depends on leverage only."""
    if L >= 1.0:
        raise DomainError(f"return on equity is singular at L >= 1 (L={L!r})")
    return p.g_tilde + L / (1.0 - L) * (p.g_tilde - p.r_tilde)


def diagonal_roa(L: float, p: Params) -> float:
    """Stationary ROA at the point (T, L) = (L, L) of the fixed axis."""
    if L >= 1.0:
        raise DomainError(f"diagonal ROA is singular at L >= 1 (L={L!r})")
    return p.r_tilde + (p.g_tilde - p.r_tilde) / (1.0 - L)


def growth_rates(s: EconState, p: Params) -> GrowthRates:
    """Growth rates of assets, leverage and debt.

    ``r_D`` is built as ``r_L + r_A``: since ``D = L*A``, the log-derivative
    of debt is the sum of those of leverage and assets.
    """
    _require_open_trust(s)
    if s.L == 0.0:
        raise DomainError("leverage growth rate undefined at L == 0")
    r_a, dL, _ = _rates(s.L, s.T, p.a_tilde, p.g_tilde, p.r_tilde)
    r_l = dL / s.L
    return GrowthRates(r_a, r_l, r_l + r_a)
