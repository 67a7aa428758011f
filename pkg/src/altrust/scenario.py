"""Regime-shift experiments with piecewise-constant (g, r) schedules.

A schedule is a list of segments, each switching ``(g_tilde, r_tilde)`` at
its start time while ``a_tilde`` stays fixed. Switches are discontinuous, so
the ROA and ROE series jump at every boundary while leverage and trust only
show kinks.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import EconState, Params, _rates, diagonal_roa
from .errors import ConfigError
from .trajectory import IntegratorConfig, Piece, TerminalKind, TrajectoryRecord, integrate_piecewise

__all__ = [
    "RegimeSegment",
    "Diagnostics",
    "ScenarioResult",
    "SweepResult",
    "DEFAULT_S0",
    "DEFAULT_A_TILDE",
    "DEFAULT_SCHEDULE",
    "run_schedule",
    "asset_growth_diagnostics",
    "negative_roa_duration",
    "log_assets_at",
    "intervention_sweep",
]

DEFAULT_S0 = EconState(1.0, 0.0, 0.26)
# module-chosen defaults, flagged as such in result metadata
DEFAULT_A_TILDE = 0.05
DEFAULT_CRISIS_START = 5.0
DEFAULT_INTERVENTIONS = (7.0, 12.0, 20.0)
DEFAULT_HORIZON = 100.0

PRE_CRISIS = (0.06, 0.04)
CRISIS = (-0.08, 0.04)
INTERVENTION = (0.04, 0.01)


@dataclass(frozen=True)
class RegimeSegment:
    tau_start: float
    g_tilde: float
    r_tilde: float


DEFAULT_SCHEDULE = (
    RegimeSegment(0.0, *PRE_CRISIS),
    RegimeSegment(DEFAULT_CRISIS_START, *CRISIS),
    RegimeSegment(12.0, *INTERVENTION),
)


def _validate(schedule) -> list[RegimeSegment]:
    sched = list(schedule)
    if not sched:
        raise ConfigError("schedule is empty")
    if sched[0].tau_start != 0.0:
        raise ConfigError("first segment must start at tau = 0")
    for i, seg in enumerate(sched):
        if not all(math.isfinite(v) for v in (seg.tau_start, seg.g_tilde, seg.r_tilde)):
            raise ConfigError(f"segment {i} has non-finite values")
        if i and not seg.tau_start > sched[i - 1].tau_start:
            raise ConfigError(f"segment {i} does not start after segment {i - 1}")
    return sched


@dataclass
class Diagnostics:
    tau: np.ndarray
    rA: np.ndarray
    rA_tau: np.ndarray        # instantaneous-rate shortcut r_A * tau
    log_growth: np.ndarray    # ln(A/A0) from the integrated asset value
    difference: np.ndarray    # rA_tau - log_growth


@dataclass
class ScenarioResult:
    path: TrajectoryRecord
    schedule: list[RegimeSegment]
    a_tilde: float
    diagnostics: Diagnostics
    stationary_roa: float | None
    metadata: dict = field(default_factory=dict)

    def params_of(self, segment: int) -> Params:
        seg = self.schedule[segment]
        return Params(self.a_tilde, seg.g_tilde, seg.r_tilde)

    @property
    def converged(self) -> bool:
        return self.path.terminal.converged


def asset_growth_diagnostics(result: ScenarioResult) -> Diagnostics:
    """``r_A * tau`` next to the exact ``ln(A(tau)/A(0))``."""
    path = result.path
    if len(path) == 0:
        raise ConfigError("empty path")
    log_growth = path.log_A - path.log_A[0]
    rA_tau = path.rA * path.tau
    return Diagnostics(path.tau.copy(), path.rA.copy(), rA_tau, log_growth, rA_tau - log_growth)


def run_schedule(s0: EconState = DEFAULT_S0, a_tilde: float = DEFAULT_A_TILDE,
                 schedule=DEFAULT_SCHEDULE, cfg: IntegratorConfig | None = None) -> ScenarioResult:
    """Integrate across the schedule; the last segment runs to ``cfg.max_tau``.

    Every boundary is hit exactly and its sample is reported with the
    incoming regime. Intermediate segments never stop on convergence, only
    on leaving the domain.
    """
    cfg = cfg or IntegratorConfig()
    sched = _validate(schedule)
    if not cfg.max_tau > sched[-1].tau_start:
        raise ConfigError("max_tau must exceed the start of the last segment")
    ends = [seg.tau_start for seg in sched[1:]] + [cfg.max_tau]
    pieces = [Piece(seg.tau_start, end, Params(a_tilde, seg.g_tilde, seg.r_tilde))
              for seg, end in zip(sched, ends)]
    path = integrate_piecewise(s0, pieces, cfg)

    last = int(path.segment[-1])
    p_last = Params(a_tilde, sched[last].g_tilde, sched[last].r_tilde)
    t = path.terminal
    stationary = None
    if t.kind is TerminalKind.CONVERGED_TO_DIAGONAL:
        stationary = diagonal_roa(t.L, p_last)
    elif t.kind is TerminalKind.CONVERGED_TO_POINT:
        stationary = -a_tilde
    meta = {
        "a_tilde": a_tilde,
        "a_tilde_source": "module-chosen" if a_tilde == DEFAULT_A_TILDE else "user",
        "terminal": t.to_dict(),
        "terminal_segment": last,
        "schedule": [seg.__dict__ for seg in sched],
    }
    res = ScenarioResult(path, sched, a_tilde, None, stationary, meta)
    res.diagnostics = asset_growth_diagnostics(res)
    return res


def _left_values(result: ScenarioResult) -> np.ndarray:
    """ROA approached from the left at each sample (old regime at boundaries)."""
    path = result.path
    left = path.rA.copy()
    for i in np.flatnonzero(np.diff(path.segment) != 0) + 1:
        p = result.params_of(int(path.segment[i - 1]))
        left[i] = _rates(path.L[i], path.T[i], p.a_tilde, p.g_tilde, p.r_tilde)[0]
    return left


def negative_roa_duration(result: ScenarioResult, horizon: float | None = None) -> float:
    """Total tau with ``r_A < 0``.

    Between samples the ROA is interpolated linearly within a regime; at a
    switch the left limit of the old regime is used, so the jump itself is
    not smeared. A converged path with negative stationary ROA stays negative
    up to ``horizon`` (infinite when no horizon is given).
    """
    path = result.path
    left = _left_values(result)
    total = 0.0
    for i in range(len(path) - 1):
        t0, t1 = path.tau[i], path.tau[i + 1]
        v0, v1 = path.rA[i], left[i + 1]
        if horizon is not None and t0 >= horizon:
            break
        if v0 < 0 and v1 < 0:
            frac = 1.0
        elif v0 >= 0 and v1 >= 0:
            frac = 0.0
        else:
            z = v0 / (v0 - v1)
            frac = z if v0 < 0 else 1.0 - z
        dt = t1 - t0
        if horizon is not None and t1 > horizon:
            # only the part before the horizon counts, assuming sign is constant there
            dt = horizon - t0
        total += frac * dt
    end = path.tau[-1]
    if result.stationary_roa is not None and result.stationary_roa < 0:
        total += math.inf if horizon is None else max(0.0, horizon - end)
    return float(total)


def log_assets_at(result: ScenarioResult, tau_h: float) -> float:
    """``ln A`` at ``tau_h``; extrapolated with the stationary ROA after convergence."""
    path = result.path
    if tau_h <= path.tau[-1]:
        return float(np.interp(tau_h, path.tau, path.log_A))
    if result.stationary_roa is None:
        return math.nan
    return float(path.log_A[-1] + result.stationary_roa * (tau_h - path.tau[-1]))


@dataclass
class SweepResult:
    intervention_times: list[float]
    results: list[ScenarioResult]
    rows: list[dict]
    metadata: dict

    def write_summary_csv(self, path) -> None:
        cols = ["intervention_tau", "stationary_rA", "crisis_duration", "lnA_at_horizon"]
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for row in self.rows:
                w.writerow([format(float(row[c]), ".17g") for c in cols])


def intervention_sweep(s0: EconState = DEFAULT_S0, a_tilde: float = DEFAULT_A_TILDE,
                       pre_crisis: RegimeSegment = RegimeSegment(0.0, *PRE_CRISIS),
                       crisis: tuple[float, float] = CRISIS,
                       intervention: tuple[float, float] = INTERVENTION,
                       crisis_start: float = DEFAULT_CRISIS_START,
                       intervention_times=DEFAULT_INTERVENTIONS,
                       cfg: IntegratorConfig | None = None,
                       horizon: float = DEFAULT_HORIZON) -> SweepResult:
    """One scenario per intervention time, in increasing order of that time.

    An intervention at the crisis start removes the crisis segment altogether.
    """
    times = sorted(float(t) for t in intervention_times)
    if not times:
        raise ConfigError("no intervention times given")
    if not crisis_start > pre_crisis.tau_start:
        raise ConfigError("crisis must start after the pre-crisis segment")
    if times[0] < crisis_start:
        raise ConfigError("intervention times must not precede the crisis start")
    results, rows = [], []
    for t_i in times:
        sched = [RegimeSegment(0.0, pre_crisis.g_tilde, pre_crisis.r_tilde)]
        if t_i > crisis_start:
            sched.append(RegimeSegment(crisis_start, *crisis))
        sched.append(RegimeSegment(t_i, *intervention))
        res = run_schedule(s0, a_tilde, sched, cfg)
        res.metadata["intervention_tau"] = t_i
        results.append(res)
        rows.append({
            "intervention_tau": t_i,
            "stationary_rA": res.stationary_roa if res.stationary_roa is not None else math.nan,
            "crisis_duration": negative_roa_duration(res),
            "lnA_at_horizon": log_assets_at(res, horizon),
        })
    meta = {
        "a_tilde": a_tilde,
        "crisis_start": crisis_start,
        "intervention_times": times,
        "horizon": horizon,
        "module_chosen": [k for k, v in (("a_tilde", a_tilde == DEFAULT_A_TILDE),
                                         ("crisis_start", crisis_start == DEFAULT_CRISIS_START),
                                         ("intervention_times", tuple(times) == DEFAULT_INTERVENTIONS))
                          if v],
    }
    return SweepResult(times, results, rows, meta)
