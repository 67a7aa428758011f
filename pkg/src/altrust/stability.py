"""Fixed points of the (T, L) subsystem and their linear stability.

The subsystem has a whole line of stationary states, the axis ``T = L``,
plus the isolated points ``(0, L0)`` and ``(1, L0)``. The Jacobian is
singular at ``T = 1``, so ``(1, L0)`` is assessed by integrating a small
perturbation and measuring how fast ``1 - T`` decays.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import EconState, Params, _rates, diagonal_roa
from .errors import DomainError
from .trajectory import IntegratorConfig, integrate

__all__ = [
    "FixedPointKind",
    "Classification",
    "FixedPointReport",
    "DecayReport",
    "jacobian",
    "eigenvalues_2x2",
    "classify_eigenvalues",
    "diagonal_eigenvalue",
    "classify_diagonal",
    "diagonal_roa_slope",
    "fixed_points",
    "verify_point_one_L0",
    "report_json",
]

ZERO_TOL = 1e-12
_GAP_FLOOR = 1e-7
DEFAULT_DIAGONAL_L = tuple(i / 10 for i in range(10))


class FixedPointKind(str, Enum):
    DIAGONAL = "DiagonalAxisPoint"
    ORIGIN_L0 = "Origin-L0"
    ONE_L0 = "One-L0"


class Classification(str, Enum):
    ATTRACTIVE = "attractive"
    REPULSIVE = "repulsive"
    SADDLE = "saddle"
    MARGINAL = "marginal"


def jacobian(T: float, L: float, p: Params) -> np.ndarray:
    """Partial derivatives of (dT/dtau, dL/dtau) with respect to (T, L)."""
    if T >= 1.0:
        raise DomainError(f"Jacobian is singular at T >= 1 (T={T!r})")
    beta, L0 = p.beta, p.L0
    om = 1.0 - T
    return np.array([
        [(2 * T - L) * om - T * (T - L), -T * om],
        [(1 - L) * (beta * (L0 - L) / om ** 2 + 2 * T - L),
         -beta * (L0 + T - 2 * L) / om - T * (1 + T - 2 * L)],
    ])


def eigenvalues_2x2(J) -> tuple:
    """Eigenvalues from trace and determinant, ordered by real part."""
    tr = J[0][0] + J[1][1]
    det = J[0][0] * J[1][1] - J[0][1] * J[1][0]
    disc = tr * tr / 4 - det
    if disc >= 0:
        s = math.sqrt(disc)
        # avoid cancellation in the smaller-magnitude root
        big = tr / 2 + math.copysign(s, tr) if tr != 0 else s
        small = det / big if big != 0 else -big
        return tuple(sorted((float(big), float(small))))
    s = cmath.sqrt(disc)
    return (complex(tr / 2 - s), complex(tr / 2 + s))


def classify_eigenvalues(eigs, tol: float = ZERO_TOL) -> tuple[Classification, bool]:
    """Classification plus a flag telling whether an eigenvalue is (numerically) zero.

    Zero eigenvalues are left out of the sign test, so a point with one
    negative and one zero eigenvalue is attractive with the marginal flag set.
    """
    re = [complex(e).real for e in eigs]
    marginal = any(abs(complex(e)) < tol for e in eigs)
    nz = [x for x, e in zip(re, eigs) if abs(complex(e)) >= tol]
    if not nz:
        return Classification.MARGINAL, True
    neg = any(x < 0 for x in nz)
    pos = any(x > 0 for x in nz)
    if neg and pos:
        return Classification.SADDLE, marginal
    if pos:
        return Classification.REPULSIVE, marginal
    if neg and all(x < 0 for x in nz):
        return Classification.ATTRACTIVE, marginal
    return Classification.MARGINAL, True


def diagonal_eigenvalue(L: float, p: Params) -> float:
    """Non-zero eigenvalue on the fixed axis, ``-beta (L0 - L)/(1 - L)``."""
    if L >= 1.0:
        raise DomainError(f"diagonal eigenvalue undefined at L >= 1 (L={L!r})")
    return -p.beta * (p.L0 - L) / (1.0 - L)


def classify_diagonal(L: float, p: Params) -> Classification:
    if not 0.0 <= L < 1.0:
        raise DomainError(f"axis point must have L in [0, 1), got {L!r}")
    lam = diagonal_eigenvalue(L, p)
    if abs(lam) < ZERO_TOL:
        return Classification.MARGINAL
    return Classification.ATTRACTIVE if lam < 0 else Classification.REPULSIVE


def diagonal_roa_slope(L: float, p: Params) -> float:
    """d/dL of the stationary ROA on the axis; carries the sign of g - r."""
    return (p.g_tilde - p.r_tilde) / (1.0 - L) ** 2


@dataclass
class FixedPointReport:
    location: tuple[float, float]  # (T*, L*)
    kind: FixedPointKind
    jacobian: np.ndarray | None
    eigenvalues: tuple
    classification: Classification
    marginal: bool
    stationary_roa: float
    in_domain: bool
    note: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def num(x):
            c = complex(x)
            return c.real if c.imag == 0 else {"re": c.real, "im": c.imag}

        return {
            "location": {"T": self.location[0], "L": self.location[1]},
            "kind": self.kind.value,
            "jacobian": None if self.jacobian is None else self.jacobian.tolist(),
            "eigenvalues": [num(e) for e in self.eigenvalues],
            "classification": self.classification.value,
            "marginal": self.marginal,
            "stationary_roa": self.stationary_roa,
            "in_domain": self.in_domain,
            "note": self.note,
            **self.extra,
        }


def _origin_report(p: Params) -> FixedPointReport:
    L0 = p.L0
    J = jacobian(0.0, L0, p)
    eigs = eigenvalues_2x2(J)
    cls, marg = classify_eigenvalues(eigs)
    note = "" if not marg else "zero eigenvalue: linear analysis inconclusive"
    return FixedPointReport((0.0, L0), FixedPointKind.ORIGIN_L0, J, eigs, cls, marg,
                            stationary_roa=p.g_tilde - (p.r_tilde + p.a_tilde) * L0,
                            in_domain=0.0 <= L0 <= 1.0, note=note)


def _one_report(p: Params) -> FixedPointReport:
    L0 = p.L0
    rate = 1.0 - L0
    if L0 < 1.0:
        cls, note = Classification.ATTRACTIVE, f"1-T decays like exp(-{rate:.6g} tau)"
    elif L0 > 1.0:
        cls, note = Classification.REPULSIVE, "L0 > 1: perturbations of T grow"
    else:
        cls, note = Classification.MARGINAL, "L0 == 1: first-order decay rate vanishes"
    # Jacobian not defined at T = 1; classification from the perturbation rate
    return FixedPointReport((1.0, L0), FixedPointKind.ONE_L0, None, (), cls, L0 == 1.0,
                            stationary_roa=-p.a_tilde, in_domain=0.0 <= L0 <= 1.0, note=note,
                            extra={"decay_rate": rate})


def _diagonal_report(L: float, p: Params) -> FixedPointReport:
    J = jacobian(L, L, p)
    lam2 = diagonal_eigenvalue(L, p)
    eigs = tuple(sorted((0.0, lam2)))
    cls, marg = classify_eigenvalues(eigs)
    note = "non-hyperbolic: one zero eigenvalue along the axis; class follows the transverse eigenvalue"
    return FixedPointReport((L, L), FixedPointKind.DIAGONAL, J, eigs, cls, marg,
                            stationary_roa=diagonal_roa(L, p), in_domain=True, note=note,
                            extra={"trace": float(J[0, 0] + J[1, 1])})


def fixed_points(p: Params, diagonal_L=DEFAULT_DIAGONAL_L) -> list[FixedPointReport]:
    """(0, L0), (1, L0), then one report per requested point of the axis."""
    p.L0  # raises DomainError when r + a == 0
    out = [_origin_report(p), _one_report(p)]
    for L in diagonal_L:
        if not 0.0 <= L < 1.0:
            raise DomainError(f"axis samples must lie in [0, 1), got {L!r}")
        out.append(_diagonal_report(float(L), p))
    return out


@dataclass
class DecayReport:
    attractive: bool
    L0: float
    expected_rate: float
    fitted_rate: float | None
    relative_error: float | None
    terminal_roa: float | None
    n_points: int
    note: str = ""

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def verify_point_one_L0(p: Params, eps0: float = 1e-3, cfg: IntegratorConfig | None = None,
                        decades: float = 3.0) -> DecayReport:
    """Integrate from ``(T, L) = (1 - |eps0|, L0)`` and fit the decay of ``1 - T``.

    The slope of ``ln(1 - T)`` against ``tau`` is fitted by least squares
    until ``1 - T`` has shrunk by ``decades`` orders of magnitude, but not
    below 1e-7. For ``L0 >= 1`` nothing is integrated and the report
    states that the point does not attract.
    """
    L0 = p.L0
    eps = abs(eps0)
    if not 0.0 < eps < 1e-2:
        raise DomainError(f"perturbation must satisfy 0 < |eps0| < 1e-2, got {eps0!r}")
    if L0 >= 1.0:
        return DecayReport(False, L0, 1.0 - L0, None, None, None, 0,
                           note="L0 >= 1: (1, L0) is not attractive, no decay to fit")
    if L0 < 0.0:
        return DecayReport(False, L0, 1.0 - L0, None, None, None, 0,
                           note="L0 < 0: (1, L0) lies outside the leverage domain")
    rate = 1.0 - L0
    base = cfg or IntegratorConfig(rel_tol=1e-10, abs_tol=1e-14)
    # the leverage direction stiffens like 1/(1-T); stop the fit at 1e-7
    floor = max(eps * 10.0 ** -decades, _GAP_FLOOR)
    run_cfg = base.replace(max_tau=math.log(eps / floor) / rate,
                           guard_eps=min(base.guard_eps, floor / 10),
                           point_eps=1e-300, convergence_eps=1e-300)
    rec = integrate(EconState(1.0, L0, 1.0 - eps), p, run_cfg)
    gap = 1.0 - rec.T
    ok = gap > 0
    tau, y = rec.tau[ok], np.log(gap[ok])
    if tau.size < 3:
        return DecayReport(True, L0, rate, None, None, None, int(tau.size),
                           note="too few samples to fit a decay rate")
    slope = np.polyfit(tau, y, 1)[0]
    fitted = -float(slope)
    L, T = float(rec.L[-1]), float(rec.T[-1])
    r_a = _rates(L, T, p.a_tilde, p.g_tilde, p.r_tilde)[0]
    return DecayReport(True, L0, rate, fitted, abs(fitted - rate) / rate, float(r_a), int(tau.size),
                       note="attractive: perturbation decays")


def report_json(reports, decay: DecayReport | None = None, params: Params | None = None) -> str:
    doc = {"fixed_points": [r.to_dict() for r in reports]}
    if params is not None:
        doc["params"] = {"a_tilde": params.a_tilde, "g_tilde": params.g_tilde,
                         "r_tilde": params.r_tilde, "k": params.k,
                         "beta": params.beta, "L0": params.L0}
    if decay is not None:
        doc["one_L0_perturbation"] = decay.to_dict()
    return json.dumps(doc, indent=2)
