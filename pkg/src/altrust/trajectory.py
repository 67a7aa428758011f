"""Time integration of the (A, L, T) system with terminal-event detection.

Two integrators are provided. The default is an embedded Dormand-Prince
5(4) pair with standard step-size control. A fixed-step explicit Euler
scheme is kept because the calibration works with the discrete scheme.
Asset value is carried as ``ln A`` internally so that long horizons in
growing regimes do not overflow.

A trajectory stops at the first of these events (checked after every
accepted step, then located by bisection on that step):

* the state sits on the fixed axis: ``|T - L| < convergence_eps`` and
  ``|dL/dtau| < convergence_eps``;
* the state is within ``point_eps`` of ``(T, L) = (1, L0)``;
* leverage leaves ``[0, 1]``;
* ``1 - T`` or ``1 - L`` drops below ``guard_eps``;
* ``tau`` reaches ``max_tau``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .core import EconState, Params, _rates
from .errors import ConfigError, DomainError, NumericalError

__all__ = [
    "IntegratorConfig",
    "TerminalKind",
    "Terminal",
    "TrajectoryRecord",
    "Piece",
    "integrate",
    "integrate_piecewise",
    "integrate_dimensional",
    "euler_state_step",
    "BatchTerminals",
    "integrate_terminals",
]


class TerminalKind(str, Enum):
    CONVERGED_TO_DIAGONAL = "ConvergedToDiagonal"
    CONVERGED_TO_POINT = "ConvergedToPoint"
    EXITED_LEVERAGE_DOMAIN = "ExitedLeverageDomain"
    SINGULAR_APPROACH = "SingularApproach"
    HORIZON_REACHED = "HorizonReached"


# integer codes used by the vectorised driver, same priority order
_KIND_BY_CODE = list(TerminalKind)
_CONVERGED = (TerminalKind.CONVERGED_TO_DIAGONAL, TerminalKind.CONVERGED_TO_POINT)


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "adaptive"
    step: float = 1e-3
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_tau: float = 1e4
    convergence_eps: float = 1e-6
    guard_eps: float = 1e-6
    point_eps: float = 1e-4
    max_steps: int = 5_000_000

    def __post_init__(self):
        method = {"adaptive-rk": "adaptive", "rk45": "adaptive"}.get(self.method, self.method)
        if method not in ("adaptive", "euler"):
            raise ConfigError(f"unknown integration method {self.method!r}")
        object.__setattr__(self, "method", method)
        for name in ("step", "rel_tol", "abs_tol", "max_tau", "convergence_eps", "point_eps"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be finite and > 0, got {v!r}")
        if not 0.0 < self.guard_eps <= 1e-2:
            raise ConfigError(f"guard_eps must lie in (0, 1e-2], got {self.guard_eps!r}")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")

    def replace(self, **changes) -> IntegratorConfig:
        return IntegratorConfig(**{**asdict(self), **changes})


@dataclass(frozen=True)
class Terminal:
    kind: TerminalKind
    tau: float
    L: float
    T: float
    detail: str = ""

    @property
    def converged(self) -> bool:
        return self.kind in _CONVERGED

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "tau": self.tau, "L": self.L, "T": self.T,
                "detail": self.detail}


@dataclass
class TrajectoryRecord:
    """Accepted integration steps plus the terminal classification.

    ``segment`` holds the index of the parameter regime active at each
    sample; it is all zeros for a plain integration.
    """

    tau: np.ndarray
    A: np.ndarray
    L: np.ndarray
    T: np.ndarray
    rA: np.ndarray
    rE: np.ndarray
    log_A: np.ndarray
    terminal: Terminal
    segment: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.segment is None:
            self.segment = np.zeros(self.tau.size, dtype=int)

    def __len__(self):
        return self.tau.size

    @property
    def final_state(self) -> EconState:
        return EconState(float(self.A[-1]), float(self.L[-1]), float(self.T[-1]))

    def write_csv(self, path, sidecar: dict | None = None) -> None:
        """Write ``tau,A,L,T,rA,rE`` rows; the terminal goes to ``<path>.json``."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau", "A", "L", "T", "rA", "rE"])
            for row in zip(self.tau, self.A, self.L, self.T, self.rA, self.rE):
                w.writerow([format(float(x), ".17g") for x in row])
        meta = {"terminal": self.terminal.to_dict(), "n_samples": len(self)}
        if sidecar:
            meta.update(sidecar)
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, default=_jsonable))


def _jsonable(obj):
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serialisable: {type(obj)}")


# -- Dormand-Prince 5(4) tableau -------------------------------------------

_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# difference between the 5th and embedded 4th order weights
_E1, _E3, _E4, _E5, _E6, _E7 = (71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200,
                                22 / 525, -1 / 40)


def _dopri_step(f, y, h, k1):
    """One DOPRI5 step on a 3-tuple state. Works on floats or arrays.

    Returns (y_new, error_vector, f(y_new)); the last entry is reused as the
    first stage of the next step (FSAL).
    """
    y0, y1, y2 = y
    a0, a1, a2 = k1
    b0, b1, b2 = f((y0 + h * (_A21 * a0), y1 + h * (_A21 * a1), y2 + h * (_A21 * a2)))
    c0, c1, c2 = f((y0 + h * (_A31 * a0 + _A32 * b0), y1 + h * (_A31 * a1 + _A32 * b1),
                         y2 + h * (_A31 * a2 + _A32 * b2)))
    d0, d1, d2 = f((y0 + h * (_A41 * a0 + _A42 * b0 + _A43 * c0),
                         y1 + h * (_A41 * a1 + _A42 * b1 + _A43 * c1),
                         y2 + h * (_A41 * a2 + _A42 * b2 + _A43 * c2)))
    e0, e1, e2 = f((y0 + h * (_A51 * a0 + _A52 * b0 + _A53 * c0 + _A54 * d0),
                         y1 + h * (_A51 * a1 + _A52 * b1 + _A53 * c1 + _A54 * d1),
                         y2 + h * (_A51 * a2 + _A52 * b2 + _A53 * c2 + _A54 * d2)))
    q0, q1, q2 = f((y0 + h * (_A61 * a0 + _A62 * b0 + _A63 * c0 + _A64 * d0 + _A65 * e0),
                    y1 + h * (_A61 * a1 + _A62 * b1 + _A63 * c1 + _A64 * d1 + _A65 * e1),
                    y2 + h * (_A61 * a2 + _A62 * b2 + _A63 * c2 + _A64 * d2 + _A65 * e2)))
    y_new = (y0 + h * (_B1 * a0 + _B3 * c0 + _B4 * d0 + _B5 * e0 + _B6 * q0),
             y1 + h * (_B1 * a1 + _B3 * c1 + _B4 * d1 + _B5 * e1 + _B6 * q1),
             y2 + h * (_B1 * a2 + _B3 * c2 + _B4 * d2 + _B5 * e2 + _B6 * q2))
    k7 = z0, z1, z2 = f(y_new)
    err = (h * (_E1 * a0 + _E3 * c0 + _E4 * d0 + _E5 * e0 + _E6 * q0 + _E7 * z0),
           h * (_E1 * a1 + _E3 * c1 + _E4 * d1 + _E5 * e1 + _E6 * q1 + _E7 * z1),
           h * (_E1 * a2 + _E3 * c2 + _E4 * d2 + _E5 * e2 + _E6 * q2 + _E7 * z2))
    return y_new, err, k7


def _euler_step(f, y, h, k1):
    y_new = tuple(yi + h * ki for yi, ki in zip(y, k1))
    return y_new, None, f(y_new)


def _rhs(p: Params):
    a, g, r = p.a_tilde, p.g_tilde, p.r_tilde

    def f(y):
        # y = (ln A, L, T)
        return _rates(y[1], y[2], a, g, r)

    return f


def _classify(L, T, dL, L0, cfg: IntegratorConfig, detect_convergence: bool):
    """First triggered event at a state, or None."""
    if detect_convergence:
        if abs(T - L) < cfg.convergence_eps and abs(dL) < cfg.convergence_eps:
            return TerminalKind.CONVERGED_TO_DIAGONAL, ""
        if L0 is not None and math.hypot(1.0 - T, L - L0) < cfg.point_eps:
            return TerminalKind.CONVERGED_TO_POINT, ""
    if L < 0.0:
        return TerminalKind.EXITED_LEVERAGE_DOMAIN, "L<0"
    if L > 1.0:
        return TerminalKind.EXITED_LEVERAGE_DOMAIN, "L>1"
    if 1.0 - T < cfg.guard_eps:
        return TerminalKind.SINGULAR_APPROACH, "T->1"
    if 1.0 - L < cfg.guard_eps:
        return TerminalKind.SINGULAR_APPROACH, "L->1"
    return None


def _safe_L0(p: Params):
    try:
        return p.L0
    except DomainError:
        return None


@dataclass(frozen=True)
class Piece:
    """Integrate with ``params`` over ``[tau_start, tau_end]``."""

    tau_start: float
    tau_end: float
    params: Params


class _Recorder:
    def __init__(self):
        self.rows = []
        self.seg = []

    def add(self, tau, y, p: Params, seg: int, r_a: float | None = None):
        lnA, L, T = y
        if r_a is None:
            r_a = _rates(L, T, p.a_tilde, p.g_tilde, p.r_tilde)[0]
        r_e = p.g_tilde + L / (1.0 - L) * (p.g_tilde - p.r_tilde) if L < 1.0 else math.nan
        self.rows.append((tau, lnA, L, T, r_a, r_e))
        self.seg.append(seg)

    def build(self, terminal: Terminal) -> TrajectoryRecord:
        arr = np.array(self.rows, dtype=float).reshape(-1, 6)
        log_A = arr[:, 1]
        with np.errstate(over="ignore"):
            A = np.exp(log_A)
        return TrajectoryRecord(
            tau=arr[:, 0], A=A, L=arr[:, 2], T=arr[:, 3], rA=arr[:, 4], rE=arr[:, 5],
            log_A=log_A, terminal=terminal, segment=np.array(self.seg, dtype=int),
        )


def _valid_step(y):
    _, L, T = y
    return math.isfinite(L) and math.isfinite(T) and 0.0 <= T < 1.0 and math.isfinite(y[0])


def _locate(stepper, f, y, h, k1, L0, cfg, detect):
    """Bisect the step size to the earliest event on [0, h].

    Returns (h_lo, y_lo, h_hi, y_hi, kind, detail): no event at ``h_lo``
    (``y_lo`` is None when h_lo == 0), the event fires at ``h_hi``.
    """
    tol = cfg.convergence_eps / 10
    lo, y_lo = 0.0, None
    hi = h
    y_hi, _, k_hi = stepper(f, y, h, k1)
    ev = _classify(y_hi[1], y_hi[2], k_hi[1], L0, cfg, detect) if _valid_step(y_hi) else (
        TerminalKind.SINGULAR_APPROACH, "T->1")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        y_mid, _, k_mid = stepper(f, y, mid, k1)
        ev_mid = None
        if not _valid_step(y_mid):
            ev_mid = (TerminalKind.SINGULAR_APPROACH, "T->1")
        else:
            ev_mid = _classify(y_mid[1], y_mid[2], k_mid[1], L0, cfg, detect)
        if ev_mid is None:
            lo, y_lo = mid, y_mid
        else:
            hi, y_hi, ev = mid, y_mid, ev_mid
    return lo, y_lo, hi, y_hi, ev[0], ev[1]


def _segment_error(msg: str, idx: int) -> NumericalError:
    exc = NumericalError(f"{msg} (segment {idx})")
    exc.segment = idx
    return exc


def integrate_piecewise(s0: EconState, pieces: list[Piece],
                        cfg: IntegratorConfig | None = None) -> TrajectoryRecord:
    """Integrate across consecutive parameter regimes.

    Steps are clipped so that every regime boundary is hit exactly.
    Convergence events are only detected in the last piece, since a later
    regime can move a state that has settled; domain exits and singular
    approaches end the run in any piece. The last piece runs until an event
    or until ``tau_end`` (which is treated as the horizon).
    """
    cfg = cfg or IntegratorConfig()
    if not pieces:
        raise ConfigError("at least one piece is required")
    if s0.T >= 1.0:
        raise DomainError("initial trust must be < 1")
    for prev, nxt in zip(pieces, pieces[1:]):
        if prev.tau_end != nxt.tau_start:
            raise ConfigError("pieces must be contiguous")
    for pc in pieces:
        if not pc.tau_end > pc.tau_start:
            raise ConfigError(f"empty piece [{pc.tau_start}, {pc.tau_end}]")

    stepper = _dopri_step if cfg.method == "adaptive" else _euler_step
    rec = _Recorder()
    y = (math.log(s0.A), s0.L, s0.T)
    tau = pieces[0].tau_start
    h = cfg.step
    n_steps = 0
    last = len(pieces) - 1
    atol, rtol = cfg.abs_tol, cfg.rel_tol

    for idx, pc in enumerate(pieces):
        p = pc.params
        f = _rhs(p)
        L0 = _safe_L0(p)
        detect = idx == last
        k1 = f(y)
        if idx == 0:
            rec.add(tau, y, p, idx)
        else:
            # boundary sample belongs to the new regime
            rec.rows.pop()
            rec.seg.pop()
            rec.add(tau, y, p, idx)
        ev = _classify(y[1], y[2], k1[1], L0, cfg, detect)
        if ev is not None:
            return rec.build(Terminal(ev[0], tau, y[1], y[2], ev[1]))

        while True:
            remaining = pc.tau_end - tau
            if remaining <= 1e-13 * max(1.0, abs(pc.tau_end)):
                tau = pc.tau_end
                break
            hh = cfg.step if cfg.method == "euler" else h
            clipped = hh >= remaining
            if clipped:
                hh = remaining
            y_new, err, k_new = stepper(f, y, hh, k1)
            n_steps += 1
            if n_steps > cfg.max_steps:
                raise _segment_error(f"step budget of {cfg.max_steps} exhausted at tau={tau}", idx)

            if cfg.method == "adaptive":
                valid = _valid_step(y_new)
                ok = valid
                if ok:
                    en = 0.0
                    for yi, yn, ei in zip(y, y_new, err):
                        ay, an = abs(yi), abs(yn)
                        e = abs(ei) / (atol + rtol * (ay if ay > an else an))
                        if e > en:
                            en = e
                    ok = en <= 1.0
                if not ok:
                    if not valid or not math.isfinite(en):
                        h = hh * 0.25
                    else:
                        h = hh * max(0.2, 0.9 * en ** -0.2)
                    if h < 1e-14 * max(1.0, abs(tau)):
                        raise _segment_error(f"step size underflow at tau={tau}", idx)
                    continue
                grow = 5.0 if en == 0.0 else min(5.0, 0.9 * en ** -0.2)
                h_next = hh * grow
            else:
                h_next = hh

            if cfg.method != "adaptive":
                valid = _valid_step(y_new)
            ev = (_classify(y_new[1], y_new[2], k_new[1], L0, cfg, detect)
                  if valid else (TerminalKind.SINGULAR_APPROACH, "T->1"))
            if ev is not None:
                lo, y_lo, hi, y_hi, kind, detail = _locate(stepper, f, y, hh, k1, L0, cfg, detect)
                if kind in _CONVERGED:
                    tau_ev, y_ev = tau + hi, y_hi
                    rec.add(tau_ev, y_ev, p, idx)
                else:
                    # keep the last admissible state as the final sample
                    if y_lo is not None and lo > 0.0:
                        rec.add(tau + lo, y_lo, p, idx)
                    tau_ev = tau + lo
                    y_ev = y_lo if y_lo is not None else y
                return rec.build(Terminal(kind, tau_ev, y_ev[1], y_ev[2], detail))

            tau = pc.tau_end if clipped else tau + hh
            y, k1 = y_new, k_new
            # the first stage already holds d(ln A)/dtau = r_A
            rec.add(tau, y, p, idx, k1[0])
            if not clipped:
                h = h_next

    return rec.build(Terminal(TerminalKind.HORIZON_REACHED, tau, y[1], y[2]))


def integrate(s0: EconState, p: Params, cfg: IntegratorConfig | None = None) -> TrajectoryRecord:
    """Integrate from ``s0`` at tau = 0 until a terminal event."""
    cfg = cfg or IntegratorConfig()
    return integrate_piecewise(s0, [Piece(0.0, cfg.max_tau, p)], cfg)


# -- discrete dimensional scheme ---------------------------------------------

def euler_state_step(L, T, g, r, a, k, dt):
    """One explicit Euler step of the calendar-time leverage/trust recursion.

    ``g``, ``r`` and ``a`` are calendar-time rates (per year), ``k`` the trust
    adjustment rate. Returns ``(L_next, T_next)``. The leverage bracket
    mixes rates that are already dimensional with ``k`` on the trust term,
    which is the non-dimensional update multiplied through by ``k``.
    """
    d = T - L
    L_next = L + d * ((g - r * L + a * (1.0 - L)) / (1.0 - T) + k * (1.0 - L) * T) * dt
    T_next = T + k * T * d * (1.0 - T) * dt
    return L_next, T_next


def integrate_dimensional(s0: EconState, p: Params, dt: float, n_steps: int,
                          k: float | None = None) -> TrajectoryRecord:
    """Explicit Euler in calendar time with step ``dt`` for ``n_steps`` steps.

    Calendar rates are ``k`` times the non-dimensional ones. ``k`` defaults
    to ``p.k``; an explicit ``k=0`` freezes the state. Samples are reported
    on the clock ``tau = k * t`` (or on ``t`` itself when ``k == 0``). The
    run stops early if a step leaves ``L`` in ``[0, 1]`` or pushes ``T`` to 1.
    """
    if not (dt > 0 and math.isfinite(dt)):
        raise ConfigError(f"dt must be finite and > 0, got {dt!r}")
    if n_steps < 0:
        raise ConfigError("n_steps must be >= 0")
    if s0.T >= 1.0:
        raise DomainError("initial trust must be < 1")
    k = p.k if k is None else float(k)
    if not (k >= 0 and math.isfinite(k)):
        raise ConfigError(f"k must be finite and >= 0, got {k!r}")
    a, g, r = p.a_tilde * k, p.g_tilde * k, p.r_tilde * k
    clock = k if k > 0 else 1.0
    rec = _Recorder()
    lnA, L, T = math.log(s0.A), s0.L, s0.T
    rec.add(0.0, (lnA, L, T), p, 0)
    terminal = None
    for n in range(1, n_steps + 1):
        # calendar-time ROA is k times the non-dimensional one
        r_a = k * _rates(L, T, p.a_tilde, p.g_tilde, p.r_tilde)[0]
        L_new, T_new = euler_state_step(L, T, g, r, a, k, dt)
        lnA_new = lnA + math.log1p(r_a * dt) if r_a * dt > -1.0 else -math.inf
        tau = clock * n * dt
        if not (math.isfinite(L_new) and math.isfinite(T_new)) or T_new >= 1.0 or T_new < 0.0:
            terminal = Terminal(TerminalKind.SINGULAR_APPROACH, clock * (n - 1) * dt, L, T, "T->1")
            break
        if L_new < 0.0 or L_new > 1.0:
            terminal = Terminal(TerminalKind.EXITED_LEVERAGE_DOMAIN, clock * (n - 1) * dt, L, T,
                                "L<0" if L_new < 0.0 else "L>1")
            break
        if 1.0 - L_new < 1e-15:
            terminal = Terminal(TerminalKind.SINGULAR_APPROACH, clock * (n - 1) * dt, L, T, "L->1")
            break
        lnA, L, T = lnA_new, L_new, T_new
        rec.add(tau, (lnA, L, T), p, 0)
    if terminal is None:
        terminal = Terminal(TerminalKind.HORIZON_REACHED, clock * n_steps * dt, L, T)
    return rec.build(terminal)


# -- vectorised driver for many initial conditions -------------------------

@dataclass
class BatchTerminals:
    kind: np.ndarray   # TerminalKind per node
    tau: np.ndarray
    L: np.ndarray
    T: np.ndarray

    def kinds(self) -> list[TerminalKind]:
        return [_KIND_BY_CODE[c] for c in self.kind]


def _classify_vec(L, T, dL, L0, cfg: IntegratorConfig):
    code = np.full(L.shape, -1, dtype=int)

    def put(mask, c):
        sel = (code < 0) & mask
        code[sel] = c

    put((np.abs(T - L) < cfg.convergence_eps) & (np.abs(dL) < cfg.convergence_eps), 0)
    if L0 is not None:
        put(np.hypot(1.0 - T, L - L0) < cfg.point_eps, 1)
    put((L < 0.0) | (L > 1.0), 2)
    put((1.0 - T < cfg.guard_eps) | (1.0 - L < cfg.guard_eps), 3)
    return code


def integrate_terminals(L0s, T0s, p: Params, cfg: IntegratorConfig | None = None) -> BatchTerminals:
    """Terminal event of the (L, T) subsystem for many seeds at once.

    Each seed carries its own step size and is integrated exactly as it
    would be alone, so results do not depend on batch composition. Event
    times are those of the triggering step (no bisection); use ``integrate``
    when the path itself is needed.
    """
    cfg = cfg or IntegratorConfig()
    L = np.array(L0s, dtype=float).ravel()
    T = np.array(T0s, dtype=float).ravel()
    if L.shape != T.shape:
        raise ConfigError("L and T seeds must have the same shape")
    if np.any(T >= 1.0) or np.any(T < 0.0):
        raise DomainError("seed trust values must lie in [0, 1)")
    n = L.size
    a, g, r = p.a_tilde, p.g_tilde, p.r_tilde
    L0 = _safe_L0(p)

    def f(y):
        return _rates(y[1], y[2], a, g, r)

    out_kind = np.full(n, -1, dtype=int)
    out_tau = np.zeros(n)
    out_L = L.copy()
    out_T = T.copy()

    zeros = np.zeros(n)
    k1 = f((zeros, L, T))
    code = _classify_vec(L, T, k1[1], L0, cfg)
    out_kind[code >= 0] = code[code >= 0]

    idx = np.flatnonzero(code < 0)
    L, T = L[idx], T[idx]
    k1 = tuple(k[idx] for k in k1)
    tau = np.zeros(idx.size)
    h = np.full(idx.size, cfg.step)
    adaptive = cfg.method == "adaptive"
    stepper = _dopri_step if adaptive else _euler_step
    it = 0
    while idx.size:
        it += 1
        if it > cfg.max_steps:
            raise NumericalError(f"step budget of {cfg.max_steps} exhausted")
        hh = np.minimum(h, cfg.max_tau - tau)
        y_new, err, k_new = stepper(f, (np.zeros(idx.size), L, T), hh, k1)
        Ln, Tn = y_new[1], y_new[2]
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            bad = ~(np.isfinite(Ln) & np.isfinite(Tn)) | (Tn >= 1.0) | (Tn < 0.0)
            if adaptive:
                en = np.maximum(
                    np.abs(err[1]) / (cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(L), np.abs(Ln))),
                    np.abs(err[2]) / (cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(T), np.abs(Tn))),
                )
                en[bad] = np.inf
                acc = en <= 1.0
                fac = np.where(en == 0.0, 5.0, np.clip(0.9 * en ** -0.2, 0.2, 5.0))
                fac[bad] = 0.25
                h_next = np.where(hh < h, h, hh * fac)
                h_next[~acc] = hh[~acc] * fac[~acc]
            else:
                acc = np.ones(idx.size, dtype=bool)
                h_next = h
        if adaptive and np.any(h_next < 1e-14 * np.maximum(1.0, tau)):
            raise NumericalError("step size underflow in batch integration")

        tau = np.where(acc, tau + hh, tau)
        L = np.where(acc, Ln, L)
        T = np.where(acc, Tn, T)
        k1 = tuple(np.where(acc, kn, ko) for kn, ko in zip(k_new, k1))
        h = h_next

        code = np.full(idx.size, -1, dtype=int)
        if np.any(acc):
            with np.errstate(invalid="ignore"):
                code_acc = _classify_vec(L, T, k1[1], L0, cfg)
            code = np.where(acc, code_acc, -1)
            if not adaptive:
                code = np.where(acc & bad & (code < 0), 3, code)
        horizon = (code < 0) & (tau >= cfg.max_tau * (1 - 1e-15))
        code[horizon] = 4
        done = code >= 0
        if np.any(done):
            sel = idx[done]
            out_kind[sel] = code[done]
            out_tau[sel] = tau[done]
            out_L[sel] = L[done]
            out_T[sel] = T[done]
            keep = ~done
            idx, L, T, tau, h = idx[keep], L[keep], T[keep], tau[keep], h[keep]
            k1 = tuple(k[keep] for k in k1)

    return BatchTerminals(kind=out_kind, tau=out_tau, L=out_L, T=out_T)
