"""Analytical leverage-versus-trust curves L(T).

Eliminating time between the leverage and trust equations gives a linear
first-order equation in L(T) whose solution is

    L(T) = 1 - K h(T) + (L0 - 1) { beta/(1+beta) + (1-T)/(1+beta)
                                   + beta/(1+beta) T^2/(1-T) I(beta+1, c) }

with ``h(T) = (1-T)^(1+beta) T^(-beta) exp(-beta/(1-T))``,
``c = beta T/(1-T)`` and ``I(m, c) = int_0^1 (1-y)^m exp(-c y) dy``.
Integrating by parts twice gives the equivalent form

    L(T) = L0 - K h(T) + (L0 - 1)(1-T) { -1/beta + I(beta-1, c) },

which behaves better as T -> 1. Both share the same constant K.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import quad

from .core import EconState, Params
from .errors import DomainError, NumericalError
from .trajectory import IntegratorConfig, integrate

__all__ = [
    "ClosedFormTrajectory",
    "embedded_integral",
    "log_prefactor",
    "slope",
    "solve_K",
    "through",
    "leverage_of_trust",
    "roa_on_curve",
    "sample_curve",
    "write_curve_csv",
    "ode_crosscheck",
    "T_MIN",
]

T_MIN = 1e-3
FORMS = ("primary", "by_parts")

# beyond this c the integrand is a boundary layer at y = 0
_C_SWITCH = 50.0
# exp(-60) is far below the target absolute accuracy
_U_MAX = 60.0
_EPSABS = 1e-13


def embedded_integral(m: float, c: float) -> float:
    """``int_0^1 (1-y)^m exp(-c y) dy`` for ``m > -1``.

    The algebraic end-point behaviour at y = 1 is handled by an
    algebraic-weight rule. For large ``c`` the variable ``u = c y`` is used
    and the range truncated where ``exp(-u)`` is negligible.
    """
    if not m > -1.0:
        raise DomainError(f"integral diverges for exponent m={m} <= -1")
    if not math.isfinite(c):
        raise NumericalError(f"non-finite decay constant c={c!r}")
    if c <= _C_SWITCH:
        val, err = quad(lambda y: math.exp(-c * y), 0.0, 1.0, weight="alg", wvar=(0.0, m),
                        epsabs=_EPSABS, epsrel=1e-13, limit=200)
    else:
        upper = min(c, _U_MAX)
        val, err = quad(lambda u: math.exp(-u) * (1.0 - u / c) ** m, 0.0, upper,
                        epsabs=_EPSABS * c, epsrel=1e-13, limit=200)
        val /= c
        err /= c
    if not (math.isfinite(val) and err < 1e-11):
        raise NumericalError(f"quadrature did not converge (m={m}, c={c}, err={err:.3g})")
    return val


def log_prefactor(T: float, beta: float) -> float:
    """``ln h(T)`` where ``h`` multiplies the integration constant."""
    return (1.0 + beta) * math.log1p(-T) - beta * math.log(T) - beta / (1.0 - T)


def _check(T: float, beta: float, form: str):
    if form not in FORMS:
        raise DomainError(f"unknown form {form!r}; expected one of {FORMS}")
    if beta == 0.0 or not math.isfinite(beta):
        raise DomainError("closed form requires beta = a_tilde + r_tilde to be nonzero and finite")
    if form == "by_parts" and beta <= 0.0:
        raise DomainError("integrated-by-parts form requires beta > 0")
    if not (T_MIN <= T < 1.0):
        raise DomainError(f"closed form evaluated only for T in [{T_MIN}, 1), got {T!r}")


def _particular(T: float, beta: float, L0: float, form: str) -> float:
    """L(T) with K = 0."""
    c = beta * T / (1.0 - T)
    if form == "primary":
        if L0 == 1.0:
            return 1.0
        I = embedded_integral(beta + 1.0, c)
        return 1.0 + (L0 - 1.0) * (beta / (1.0 + beta) + (1.0 - T) / (1.0 + beta)
                                   + beta / (1.0 + beta) * T * T / (1.0 - T) * I)
    if L0 == 1.0:
        return 1.0
    return L0 + (L0 - 1.0) * (1.0 - T) * (-1.0 / beta + embedded_integral(beta - 1.0, c))


def _homogeneous(K: float, T: float, beta: float) -> float:
    # K h(T) without overflow for large |K| or underflow of h
    if K == 0.0:
        return 0.0
    return math.copysign(math.exp(math.log(abs(K)) + log_prefactor(T, beta)), K)


@dataclass(frozen=True)
class ClosedFormTrajectory:
    params: Params
    K: float
    form: str = "primary"

    def __post_init__(self):
        _check(0.5, self.params.beta, self.form)
        if not math.isfinite(self.K):
            raise DomainError(f"integration constant must be finite, got {self.K!r}")

    def __call__(self, T: float) -> float:
        return leverage_of_trust(T, self)

    def with_form(self, form: str) -> ClosedFormTrajectory:
        return ClosedFormTrajectory(self.params, self.K, form)


def leverage_of_trust(T: float, traj: ClosedFormTrajectory) -> float:
    p = traj.params
    beta, L0 = p.beta, p.L0
    _check(T, beta, traj.form)
    return _particular(T, beta, L0, traj.form) - _homogeneous(traj.K, T, beta)


def solve_K(T0: float, L_init: float, p: Params, form: str = "primary") -> float:
    """Integration constant of the curve through ``(T0, L_init)``."""
    beta = p.beta
    _check(T0, beta, form)
    lh = log_prefactor(T0, beta)
    resid = _particular(T0, beta, p.L0, form) - L_init
    if resid == 0.0:
        return 0.0
    try:
        K = math.copysign(math.exp(math.log(abs(resid)) - lh), resid)
    except OverflowError:
        raise NumericalError(f"integration constant overflows at T0={T0}") from None
    if not math.isfinite(K):
        raise NumericalError(f"integration constant overflows at T0={T0}")
    return K


def through(T0: float, L_init: float, p: Params, form: str = "primary") -> ClosedFormTrajectory:
    return ClosedFormTrajectory(p, solve_K(T0, L_init, p, form), form)


def slope(T: float, L: float, p: Params) -> float:
    """dL/dT along a trajectory off the fixed axis."""
    return (p.beta * (p.L0 - L) / (1.0 - T) + T * (1.0 - L)) / (T * (1.0 - T))


def roa_on_curve(T: float, traj: ClosedFormTrajectory) -> float:
    """Return on assets at ``(T, L(T))``.

    Uses ``r_A = -a + beta (L0 - L)/(1-T) + (T - L) T`` with the
    integrated-by-parts expression substituted for ``(L0 - L)/(1-T)`` so that
    the ratio stays finite as ``T -> 1``.
    """
    p = traj.params
    beta, L0 = p.beta, p.L0
    _check(T, beta, "by_parts")
    c = beta * T / (1.0 - T)
    I = embedded_integral(beta - 1.0, c)
    kh = 0.0 if traj.K == 0.0 else math.copysign(
        math.exp(math.log(abs(traj.K)) + beta * (math.log1p(-T) - math.log(T)) - beta / (1.0 - T)),
        traj.K)
    ratio = kh + (1.0 - L0) * (-1.0 / beta + I)
    L = leverage_of_trust(T, traj.with_form("by_parts"))
    return -p.a_tilde + beta * ratio + (T - L) * T


def sample_curve(traj: ClosedFormTrajectory, T_grid) -> np.ndarray:
    return np.array([leverage_of_trust(float(T), traj) for T in np.asarray(T_grid, dtype=float)])


def write_curve_csv(path, T_grid, L_values) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["T", "L"])
        for T, L in zip(T_grid, L_values):
            w.writerow([format(float(T), ".17g"), format(float(L), ".17g")])


@dataclass(frozen=True)
class CrossCheck:
    K: float
    max_abs_diff: float
    T_range: tuple[float, float]
    n_compared: int


def ode_crosscheck(T0: float, L_init: float, p: Params, form: str = "primary",
                   cfg: IntegratorConfig | None = None, max_points: int = 400) -> CrossCheck:
    """Compare the closed-form curve with the integrated path from the same seed."""
    if L_init == T0:
        raise DomainError("seed lies on the fixed axis; the curve degenerates to a point")
    traj = through(T0, L_init, p, form)
    cfg = cfg or IntegratorConfig(rel_tol=1e-11, abs_tol=1e-13)
    rec = integrate(EconState(1.0, L_init, T0), p, cfg)
    mask = (rec.T >= T_MIN) & (rec.T < 1.0)
    idx = np.flatnonzero(mask)
    if idx.size > max_points:
        idx = idx[np.linspace(0, idx.size - 1, max_points).astype(int)]
    diffs = [abs(leverage_of_trust(float(rec.T[i]), traj) - rec.L[i]) for i in idx]
    Ts = rec.T[idx]
    return CrossCheck(traj.K, float(max(diffs)) if diffs else 0.0,
                      (float(Ts.min()), float(Ts.max())) if idx.size else (T0, T0), len(diffs))
