"""Exit criteria of the build, one test per criterion.

Each test records a single pass/fail line (shown in the terminal summary)
and then asserts it. Thresholds and runtimes are the stated ones.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from altrust.calibration import (
    ChainConfig, GibbsSampler, MsmParams, ObservationSeries, generate_synthetic, gibbs_run,
    log_likelihood, posterior_summary,
)
from altrust.closed_form import ode_crosscheck
from altrust.core import EconState, Params, _rates, diagonal_roa
from altrust.phase_portrait import PRESETS, BasinLabel, GridSpec, basin_map
from altrust.scenario import intervention_sweep
from altrust.stability import Classification, classify_diagonal, eigenvalues_2x2, jacobian
from altrust.trajectory import IntegratorConfig, Piece, TerminalKind, integrate, integrate_piecewise

pytestmark = pytest.mark.acceptance


def test_c01_stationary_roa_at_one_L0(acceptance_report):
    t0 = time.perf_counter()
    p = Params(0.05, -0.01, 0.04)
    rec = integrate(EconState(1.0, 0.1, 0.5), p)
    r_a = float(rec.rA[-1])
    dt = time.perf_counter() - t0
    ok = rec.terminal.kind is TerminalKind.CONVERGED_TO_POINT and abs(r_a + 0.05) < 1e-3 and dt < 1.0
    assert acceptance_report(1, "stationary ROA at (1, L0)", ok,
                             f"L0={p.L0:.4f}, terminal {rec.terminal.kind.value}, r_A={r_a:.6f}", dt)


def test_c02_eigenvalue_formulas(acceptance_report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst, flips = 0.0, True
    for _ in range(50):
        a, r = rng.uniform(0.01, 0.2), rng.uniform(-0.005, 0.2)
        g = rng.uniform(-0.05, 0.2)
        p = Params(a, g, r)
        if not 0.0 < p.L0 < 1.0:
            continue
        e = sorted(eigenvalues_2x2(jacobian(0.0, p.L0, p)), key=lambda z: complex(z).real)
        want = sorted((-p.L0, p.beta * p.L0))
        worst = max(worst, max(abs(complex(x) - y) for x, y in zip(e, want)))
        d = 1e-9
        flips &= (classify_diagonal(p.L0 - d, p) is Classification.ATTRACTIVE
                  and classify_diagonal(p.L0 + d, p) is Classification.REPULSIVE
                  and classify_diagonal(p.L0, p) is Classification.MARGINAL)
    dt = time.perf_counter() - t0
    ok = worst < 1e-10 and flips
    assert acceptance_report(2, "eigenvalues at (0, L0) and axis sign flip", ok,
                             f"max |eig - (-L0, beta L0)| = {worst:.2e}, flip at L0: {flips}", dt)


def test_c03_closed_form_matches_ode(acceptance_report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst, cases = 0.0, []
    for _ in range(20):
        beta, L0 = rng.uniform(0.05, 1.0), rng.uniform(0.2, 3.0)
        a = 0.5 * beta
        p = Params(a, L0 * beta - a, beta - a)
        T0 = rng.uniform(0.2, 0.8)
        L_init = rng.uniform(0.0, T0 - 0.05)
        cc = ode_crosscheck(T0, L_init, p)
        worst = max(worst, cc.max_abs_diff)
        cases.append(cc.n_compared)
    dt = time.perf_counter() - t0
    ok = worst < 1e-4 and dt < 30.0 and min(cases) > 0
    assert acceptance_report(3, "closed form vs integrated path", ok,
                             f"20 parameter sets, max |L_closed - L_ode| = {worst:.2e}", dt)


def test_c04_growth_identity(acceptance_report):
    t0 = time.perf_counter()
    p = Params(0.05, 0.06, 0.04)
    h = 1e-4
    cfg = IntegratorConfig(rel_tol=1e-13, abs_tol=1e-15, step=h)
    path = integrate(EconState(1.0, 0.1, 0.5), p)
    idx = np.linspace(0, len(path) - 2, 25).astype(int)
    worst = 0.0
    for i in idx:
        s = EconState(1.0, float(path.L[i]), float(path.T[i]))
        if s.L <= 0.0:
            continue
        rec = integrate_piecewise(s, [Piece(0.0, h, p), Piece(h, 2 * h, p)], cfg)
        k = [int(np.flatnonzero(rec.tau == t)[0]) for t in (0.0, h, 2 * h)]
        lnD = [math.log(rec.L[j]) + rec.log_A[j] for j in k]
        r_d_fd = (-3 * lnD[0] + 4 * lnD[1] - lnD[2]) / (2 * h)
        r_a, dL, _ = _rates(s.L, s.T, p.a_tilde, p.g_tilde, p.r_tilde)
        worst = max(worst, abs(r_d_fd - (dL / s.L + r_a)))
    dt = time.perf_counter() - t0
    ok = worst < 1e-5 and dt < 5.0
    assert acceptance_report(4, "r_D = r_L + r_A", ok,
                             f"max |finite-difference r_D - (r_L + r_A)| = {worst:.2e} at step {h:g}", dt)


def test_c05_basin_topology(acceptance_report):
    t0 = time.perf_counter()
    grid = GridSpec(51, 51)
    reg = basin_map(PRESETS["regular"], grid)
    cri = basin_map(PRESETS["crisis"], grid)
    sta = basin_map(PRESETS["stagnation"], grid)
    D, P, E = BasinLabel.DIAGONAL, BasinLabel.POINT, BasinLabel.EXIT
    below = cri.counts("below")
    L_axis = np.linspace(0.0, 1.0, 51)[:-1]
    roa_axis = max(abs(diagonal_roa(float(L), PRESETS["stagnation"])) for L in L_axis)
    checks = {
        "regular all diagonal": reg.fraction(D) == 1.0,
        "crisis T>L all point": cri.fraction(P, "above") == 1.0,
        "crisis T<L exit+diagonal only": below[E] > 0 and below[D] > 0 and below[P] == 0,
        "stagnation all diagonal": sta.fraction(D) == 1.0,
        "stagnation axis r_A = 0": roa_axis < 1e-12,
    }
    dt = time.perf_counter() - t0
    ok = all(checks.values()) and dt < 60.0
    above = cri.counts("above")
    detail = "; ".join(f"{k}: {'ok' if v else 'NO'}" for k, v in checks.items())
    detail += (f"; crisis T>L counts point={above[P]} diagonal={above[D]} exit={above[E]}"
               f"; crisis T<L exit={below[E]} diagonal={below[D]}")
    assert acceptance_report(5, "basin topology", ok, detail, dt)


@pytest.fixture(scope="module")
def sweep():
    t0 = time.perf_counter()
    sw = intervention_sweep()
    return sw, time.perf_counter() - t0


def test_c06_intervention_ordering(acceptance_report, sweep):
    sw, dt = sweep
    roa = [r["stationary_rA"] for r in sw.rows]
    dur = [r["crisis_duration"] for r in sw.rows]
    ok = (all(b > a for a, b in zip(roa, roa[1:])) and all(b > a for a, b in zip(dur, dur[1:]))
          and dt < 10.0)
    assert acceptance_report(6, "intervention-time ordering", ok,
                             f"tau_i={sw.intervention_times}, stationary r_A={[round(x, 4) for x in roa]}, "
                             f"negative-ROA duration={[round(x, 3) for x in dur]}", dt)


def test_c07_roa_overshoot(acceptance_report, sweep):
    sw, dt = sweep
    parts, ok = [], True
    for t_i, res in zip(sw.intervention_times, sw.results):
        post = res.path.rA[res.path.tau >= t_i]
        ok &= res.stationary_roa is not None and post.max() > res.stationary_roa
        parts.append(f"tau_i={t_i:g}: max {post.max():.4f} > {res.stationary_roa:.4f}")
    assert acceptance_report(7, "ROA overshoot after intervention", ok, "; ".join(parts), dt)


@pytest.mark.slow
def test_c08_calibration_recovery(acceptance_report):
    t0 = time.perf_counter()
    truth = MsmParams(0.10, -0.16, 0.05 ** 2, 0.5, 0.5, 0.25, 0.35)
    obs, path = generate_synthetic(truth, 168, seed=2024)
    draws = gibbs_run(obs, ChainConfig(n_iter=5000, burn_in=2500), seed=7)
    summ = posterior_summary(draws)
    ci = {n: np.percentile(draws.scalar(n), [5, 95]) for n in ("c1", "c2")}
    inside = {n: ci[n][0] <= getattr(truth, n) <= ci[n][1] for n in ci}
    s2 = path.s == 1
    hit = float(np.mean(summ.p_s2[s2] > 0.9)) if s2.any() else math.nan
    dt = time.perf_counter() - t0
    ok = all(inside.values()) and hit >= 0.9 and dt < 300.0
    assert acceptance_report(
        8, "calibration recovery", ok,
        f"c1 90% CI [{ci['c1'][0]:.4f}, {ci['c1'][1]:.4f}], c2 90% CI [{ci['c2'][0]:.4f}, {ci['c2'][1]:.4f}], "
        f"P(s2)>0.9 on {hit:.1%} of {int(s2.sum())} true-s2 months", dt)


def _tv_on_deciles(draws, grid, weights, n_bins=10):
    cdf = np.cumsum(weights) / np.sum(weights)
    edges = np.interp(np.linspace(0, 1, n_bins + 1)[1:-1], cdf, grid)
    exact = np.diff(np.concatenate(([0.0], np.interp(edges, grid, cdf), [1.0])))
    counts = np.bincount(np.searchsorted(edges, draws), minlength=n_bins) / len(draws)
    return 0.5 * float(np.abs(counts - exact).sum())


def test_c09_sampler_block_oracles(acceptance_report):
    t0 = time.perf_counter()
    # sigma2 conditional on a 3-observation problem
    obs3 = ObservationSeries(np.array([0.08, 0.15, -0.02]), np.array([0.03, 0.03, 0.02]))
    base = MsmParams(0.1, -0.1, 0.01, 1.0, 1.0, 0.25, 0.35)
    s3 = [0, 0, 1]
    smp = GibbsSampler(obs3, ChainConfig(n_iter=2, burn_in=0, blocks=("sigma2",)), seed=1,
                       init=base, states=s3)
    sig = np.empty(20000)
    for i in range(sig.size):
        smp.update_sigma2()
        sig[i] = smp.sigma2
    grid = np.exp(np.linspace(math.log(1e-7), math.log(1e4), 40001))
    lp = np.array([-1.01 * math.log(v) - 0.01 / v
                   + log_likelihood(MsmParams(0.1, -0.1, v, 1, 1, 0.25, 0.35), s3, obs3) for v in grid])
    tv_sigma = _tv_on_deciles(sig, grid, np.exp(lp - lp.max()) * np.gradient(grid))

    # random-walk Metropolis block for c1 on a 2-observation problem
    obs2 = ObservationSeries(np.array([0.06, 0.11]), np.array([0.03, 0.02]))
    start = MsmParams(0.0, 0.0, 0.01, 1.0, 1.0, 0.25, 0.35)
    smp = GibbsSampler(obs2, ChainConfig(n_iter=2, burn_in=0, blocks=("c",), scale_c=0.08), seed=2,
                       init=start, states=[0, 0])
    cs = np.empty(100000)
    for i in range(cs.size):
        smp.update_c()
        cs[i] = smp.c[0]
    cgrid = np.linspace(-0.25, 0.25, 5001)
    ll = np.array([log_likelihood(MsmParams(c, 0.0, 0.01, 1, 1, 0.25, 0.35), [0, 0], obs2) for c in cgrid])
    tv_c = _tv_on_deciles(cs, cgrid, np.exp(ll - ll.max()))
    dt = time.perf_counter() - t0
    ok = tv_sigma < 0.03 and tv_c < 0.03 and dt < 60.0
    assert acceptance_report(9, "sampler blocks vs grid posteriors", ok,
                             f"TV(sigma2 conditional)={tv_sigma:.4f}, TV(c1 Metropolis)={tv_c:.4f}", dt)


def test_c10_trust_and_barrier_invariants(acceptance_report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(10)
    T = rng.uniform(1e-3, 0.999, 1000)
    L = rng.uniform(0.0, 1.0, 1000) * T
    crossings = drops = 0
    for p in PRESETS.values():
        for l, t in zip(L, T):
            rec = integrate(EconState(1.0, float(l), float(t)), p)
            crossings += int(np.sum(rec.T < rec.L))
            drops += int(np.sum(np.diff(rec.T) < 0))
    dt = time.perf_counter() - t0
    ok = crossings == 0 and drops == 0 and dt < 30.0
    assert acceptance_report(10, "monotone trust and T>=L barrier", ok,
                             f"1000 seeds x {len(PRESETS)} presets: {crossings} barrier crossings, "
                             f"{drops} trust decreases", dt)
