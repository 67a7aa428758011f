from __future__ import annotations

import json
import math

import numpy as np
import pytest

from altrust.core import EconState, Params, roa
from altrust.errors import ConfigError, DomainError
from altrust.trajectory import (
    IntegratorConfig, Piece, TerminalKind, euler_state_step, integrate, integrate_dimensional,
    integrate_piecewise, integrate_terminals,
)

PRESETS = {
    "regular": Params(0.05, 0.06, 0.04),
    "crisis": Params(0.05, -0.01, 0.04),
    "stagnation": Params(0.05, 0.0, 0.0),
}


def test_config_validation():
    with pytest.raises(ConfigError):
        IntegratorConfig(method="leapfrog")
    with pytest.raises(ConfigError):
        IntegratorConfig(step=0)
    with pytest.raises(ConfigError):
        IntegratorConfig(guard_eps=0.05)
    with pytest.raises(ConfigError):
        IntegratorConfig(rel_tol=-1)
    assert IntegratorConfig(method="adaptive-rk").method == "adaptive"


def test_start_on_axis_terminates_immediately(regular):
    rec = integrate(EconState(1.0, 0.3, 0.3), regular)
    assert rec.terminal.kind is TerminalKind.CONVERGED_TO_DIAGONAL
    assert rec.terminal.tau == 0.0
    assert len(rec) == 1


def test_regular_seed_moves_up_the_axis(regular):
    rec = integrate(EconState(1.0, 0.2, 0.4), regular)
    assert rec.terminal.kind is TerminalKind.CONVERGED_TO_DIAGONAL
    assert rec.terminal.L > 0.4
    assert np.all(np.diff(rec.tau) > 0)


def test_crisis_seed_reaches_one_L0(crisis):
    rec = integrate(EconState(1.0, 0.1, 0.5), crisis)
    t = rec.terminal
    assert t.kind is TerminalKind.CONVERGED_TO_POINT
    assert t.L == pytest.approx(4 / 9, abs=1e-3)
    assert rec.rA[-1] == pytest.approx(-0.05, abs=1e-3)


def test_crisis_terminal_roa_matches_fine_euler(crisis):
    fine = integrate(EconState(1.0, 0.1, 0.5), crisis, IntegratorConfig(method="euler", step=1e-4))
    rk = integrate(EconState(1.0, 0.1, 0.5), crisis)
    assert fine.terminal.kind is rk.terminal.kind is TerminalKind.CONVERGED_TO_POINT
    assert rk.rA[-1] == pytest.approx(fine.rA[-1], abs=1e-3)


def test_samples_valid_and_recorded_quantities(regular):
    rec = integrate(EconState(2.0, 0.5, 0.2), regular)
    assert np.all(np.diff(rec.tau) > 0)
    assert np.all((rec.L >= 0) & (rec.L <= 1) & (rec.T >= 0) & (rec.T < 1))
    for i in range(0, len(rec), 7):
        s = EconState(float(rec.A[i]), float(rec.L[i]), float(rec.T[i]))
        assert rec.rA[i] == pytest.approx(roa(s, regular), rel=1e-12)
    assert rec.A[0] == pytest.approx(2.0)


def test_downward_sloping_below_axis(regular):
    rec = integrate(EconState(1.0, 0.6, 0.3), regular)
    assert rec.terminal.kind is TerminalKind.CONVERGED_TO_DIAGONAL
    assert np.all(np.diff(rec.T) <= 0)
    assert rec.terminal.T < 0.3


def test_exit_and_singular_events(crisis):
    rec = integrate(EconState(1.0, 0.8, 0.2), crisis)
    assert rec.terminal.kind is TerminalKind.SINGULAR_APPROACH
    assert rec.terminal.detail == "L->1"
    # last recorded sample is still admissible
    assert 1 - rec.L[-1] >= IntegratorConfig().guard_eps


def test_leverage_exit_is_detected():
    # L0 < 0: leverage is pushed down through zero above the axis
    p = Params(0.05, -0.2, 0.04)
    rec = integrate(EconState(1.0, 0.05, 0.3), p)
    assert rec.terminal.kind is TerminalKind.EXITED_LEVERAGE_DOMAIN
    assert rec.terminal.detail == "L<0"
    assert rec.L.min() >= 0.0
    assert abs(rec.terminal.L) < 1e-4


def test_horizon(regular):
    rec = integrate(EconState(1.0, 0.2, 0.4), regular, IntegratorConfig(max_tau=1.0))
    assert rec.terminal.kind is TerminalKind.HORIZON_REACHED
    assert rec.tau[-1] == 1.0


def test_initial_state_checks(regular):
    with pytest.raises(DomainError):
        integrate(EconState(1.0, 0.2, 1.0), regular)


@pytest.mark.parametrize("name", list(PRESETS))
def test_barrier_and_monotone_trust(name):
    p = PRESETS[name]
    rng = np.random.default_rng(5)
    for _ in range(15):
        L0, T0 = np.sort(rng.uniform(0, 0.95, 2))
        if T0 - L0 < 1e-3:
            continue
        rec = integrate(EconState(1.0, float(L0), float(T0)), p)
        assert np.all(rec.T - rec.L >= -1e-12)
        assert np.all(np.diff(rec.T) >= 0)


def test_euler_and_adaptive_agree_on_battery():
    battery = [
        ("regular", 0.2, 0.4), ("regular", 0.6, 0.3), ("stagnation", 0.1, 0.7),
        ("crisis", 0.7, 0.4), ("crisis", 0.1, 0.5),
    ]
    for name, L, T in battery:
        p = PRESETS[name]
        s0 = EconState(1.0, L, T)
        a = integrate(s0, p)
        e = integrate(s0, p, IntegratorConfig(method="euler", step=1e-3))
        assert a.terminal.kind is e.terminal.kind, name
        assert a.terminal.L == pytest.approx(e.terminal.L, abs=1e-3)
        assert a.terminal.T == pytest.approx(e.terminal.T, abs=1e-3)


def test_euler_first_order(regular):
    s0 = EconState(1.0, 0.2, 0.5)
    h = 1e-2

    def run(step):
        cfg = IntegratorConfig(method="euler", step=step, max_tau=2.0)
        return integrate(s0, regular, cfg)

    ref = run(h / 10)
    errs = []
    for step in (h, h / 2):
        r = run(step)
        Lref = np.interp(r.tau, ref.tau, ref.L)
        errs.append(np.max(np.abs(r.L - Lref)))
    ratio = errs[0] / errs[1]
    assert 1.8 < ratio < 2.5


def test_adaptive_accuracy_against_tight_reference(regular):
    s0 = EconState(1.0, 0.2, 0.5)
    cfg = IntegratorConfig(max_tau=5.0)
    loose = integrate(s0, regular, cfg)
    tight = integrate(s0, regular, cfg.replace(rel_tol=1e-12, abs_tol=1e-14))
    assert loose.L[-1] == pytest.approx(tight.L[-1], abs=1e-7)
    assert loose.log_A[-1] == pytest.approx(tight.log_A[-1], abs=1e-7)


def test_piecewise_hits_boundaries():
    a = 0.05
    pieces = [Piece(0.0, 5.0, Params(a, 0.06, 0.04)), Piece(5.0, 12.0, Params(a, -0.08, 0.04)),
              Piece(12.0, 400.0, Params(a, 0.04, 0.01))]
    rec = integrate_piecewise(EconState(1.0, 0.0, 0.26), pieces)
    assert 5.0 in rec.tau and 12.0 in rec.tau
    i = int(np.flatnonzero(rec.tau == 5.0)[0])
    assert rec.segment[i] == 1 and rec.segment[i - 1] == 0
    assert np.all(np.diff(rec.tau) > 0)
    with pytest.raises(ConfigError):
        integrate_piecewise(EconState(1.0, 0.0, 0.26), [pieces[0], pieces[2]])


def test_euler_state_step_by_hand():
    L, T = euler_state_step(0.25, 0.35, 0.10, 0.01, 0.05, 0.05, 0.1)
    bracket = (0.10 - 0.0025 + 0.0375) / 0.65 + 0.05 * 0.75 * 0.35
    assert L == pytest.approx(0.25 + 0.1 * bracket * 0.1, rel=1e-15)
    assert L == pytest.approx(0.2522081730769231, rel=1e-14)
    assert T == pytest.approx(0.35 + 0.05 * 0.35 * 0.1 * 0.65 * 0.1, rel=1e-15)


def test_dimensional_one_step_matches_hand_value():
    # non-dimensional values chosen so that k*g = 0.10, k*r = 0.01, k*a = 0.05
    p = Params(1.0, 2.0, 0.2, k=0.05)
    rec = integrate_dimensional(EconState(1.0, 0.25, 0.35), p, dt=0.1, n_steps=1)
    assert rec.L[1] == pytest.approx(0.2522081730769231, rel=1e-14)
    assert rec.T[1] == pytest.approx(0.35011375, rel=1e-14)
    assert rec.tau[1] == pytest.approx(0.005)


def test_dimensional_fixed_cases(regular):
    frozen = integrate_dimensional(EconState(1.0, 0.25, 0.35), regular, dt=0.1, n_steps=50, k=0.0)
    assert np.all(frozen.L == 0.25) and np.all(frozen.T == 0.35)
    axis = integrate_dimensional(EconState(1.0, 0.3, 0.3), regular, dt=0.1, n_steps=50)
    assert np.all(axis.L == 0.3) and np.all(axis.T == 0.3)
    a = integrate_dimensional(EconState(1.0, 0.2, 0.4), regular, dt=0.1, n_steps=30)
    b = integrate_dimensional(EconState(1.0, 0.2, 0.4), regular, dt=0.1, n_steps=30)
    assert np.array_equal(a.L, b.L) and np.array_equal(a.T, b.T)


def test_dimensional_equals_k_scaled_euler(regular):
    dt = 0.1
    dim = integrate_dimensional(EconState(1.0, 0.2, 0.4), regular, dt=dt, n_steps=100)
    nd = integrate(EconState(1.0, 0.2, 0.4), regular,
                   IntegratorConfig(method="euler", step=regular.k * dt, max_tau=100 * regular.k * dt))
    assert np.allclose(dim.L, nd.L, rtol=0, atol=1e-13)
    assert np.allclose(dim.T, nd.T, rtol=0, atol=1e-13)


def test_batch_matches_single(crisis):
    seeds = [(0.1, 0.5), (0.7, 0.4), (0.8, 0.2), (0.3, 0.3), (0.2, 0.9)]
    L = [s[0] for s in seeds]
    T = [s[1] for s in seeds]
    batch = integrate_terminals(L, T, crisis)
    for i, (l, t) in enumerate(seeds):
        single = integrate(EconState(1.0, l, t), crisis)
        kind = batch.kinds()[i]
        if single.terminal.kind is TerminalKind.SINGULAR_APPROACH:
            assert kind in (TerminalKind.SINGULAR_APPROACH, TerminalKind.EXITED_LEVERAGE_DOMAIN)
        else:
            assert kind is single.terminal.kind
            assert batch.L[i] == pytest.approx(single.terminal.L, abs=1e-4)
    # independence of batch composition
    alone = integrate_terminals(L[:1], T[:1], crisis)
    assert alone.tau[0] == batch.tau[0] and alone.L[0] == batch.L[0]


def test_csv_and_sidecar(tmp_path, regular):
    rec = integrate(EconState(1.0, 0.2, 0.4), regular)
    out = tmp_path / "traj.csv"
    rec.write_csv(out, {"seed": None})
    lines = out.read_text().splitlines()
    assert lines[0] == "tau,A,L,T,rA,rE"
    assert len(lines) == len(rec) + 1
    first = [float(x) for x in lines[1].split(",")]
    assert first[2] == 0.2 and first[3] == 0.4
    meta = json.loads(out.with_suffix(".json").read_text())
    assert meta["terminal"]["kind"] == "ConvergedToDiagonal"
    assert math.isclose(meta["terminal"]["L"], rec.terminal.L)
