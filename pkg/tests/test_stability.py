from __future__ import annotations

import json

import numpy as np
import pytest

from altrust.core import Params, _rates, diagonal_roa
from altrust.errors import DomainError
from altrust.stability import (
    Classification, FixedPointKind, classify_diagonal, classify_eigenvalues, diagonal_eigenvalue,
    diagonal_roa_slope, eigenvalues_2x2, fixed_points, jacobian, report_json, verify_point_one_L0,
)


def _fd_jacobian(T, L, p, h=1e-6):
    def f(T, L):
        _, dL, dT = _rates(L, T, p.a_tilde, p.g_tilde, p.r_tilde)
        return np.array([dT, dL])

    cols = [(f(T + h, L) - f(T - h, L)) / (2 * h), (f(T, L + h) - f(T, L - h)) / (2 * h)]
    return np.column_stack(cols)


def test_jacobian_matches_finite_differences_at_example():
    p = Params(0.05, 0.06, 0.04)
    J = jacobian(0.3, 0.6, p)
    assert np.allclose(J, _fd_jacobian(0.3, 0.6, p), rtol=1e-6, atol=1e-9)


def test_jacobian_matches_finite_differences_random():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        beta = rng.uniform(0.02, 2.0)
        a = rng.uniform(0.1, 0.9) * beta
        p = Params(a, rng.uniform(-0.3, 0.5), beta - a)
        T = rng.uniform(0.0, 0.95)
        L = rng.uniform(0.0, 1.0)
        J = jacobian(T, L, p)
        fd = _fd_jacobian(T, L, p)
        scale = np.max(np.abs(J)) + 1e-3
        assert np.max(np.abs(J - fd)) <= 1e-6 * scale


def test_origin_L0_matrix_and_eigenvalues(crisis):
    L0 = crisis.L0
    J = jacobian(0.0, L0, crisis)
    expect = np.array([[-L0, 0.0], [-(1 - L0) * L0, crisis.beta * L0]])
    assert np.allclose(J, expect, rtol=0, atol=1e-15)
    eig = eigenvalues_2x2(J)
    assert eig[0] == pytest.approx(-L0, abs=1e-10)
    assert eig[1] == pytest.approx(crisis.beta * L0, abs=1e-10)


@pytest.mark.parametrize("L", [0.0, 0.2, 0.5, 0.9])
def test_axis_eigenvalues(L, crisis, regular):
    for p in (crisis, regular):
        eig = eigenvalues_2x2(jacobian(L, L, p))
        lam2 = diagonal_eigenvalue(L, p)
        vals = sorted(eig, key=abs)
        assert abs(vals[0]) < 1e-12
        assert vals[1] == pytest.approx(lam2, rel=1e-10, abs=1e-14)


def test_eigenvalues_against_numpy():
    rng = np.random.default_rng(2)
    for _ in range(200):
        J = rng.normal(size=(2, 2))
        ours = np.sort_complex(np.array(eigenvalues_2x2(J), dtype=complex))
        ref = np.sort_complex(np.linalg.eigvals(J))
        assert np.allclose(ours, ref, atol=1e-12)


def test_classify_eigenvalues():
    assert classify_eigenvalues((-1.0, -2.0)) == (Classification.ATTRACTIVE, False)
    assert classify_eigenvalues((-1.0, 2.0)) == (Classification.SADDLE, False)
    assert classify_eigenvalues((1.0, 2.0)) == (Classification.REPULSIVE, False)
    assert classify_eigenvalues((0.0, -2.0)) == (Classification.ATTRACTIVE, True)
    assert classify_eigenvalues((0.0, 1e-13)) == (Classification.MARGINAL, True)
    assert classify_eigenvalues((complex(-1, 2), complex(-1, -2)))[0] is Classification.ATTRACTIVE


def test_classify_diagonal(regular, crisis):
    for L in np.linspace(0, 0.99, 12):
        assert classify_diagonal(L, regular) is Classification.ATTRACTIVE
    assert classify_diagonal(0.6, crisis) is Classification.REPULSIVE
    assert classify_diagonal(0.2, crisis) is Classification.ATTRACTIVE
    assert classify_diagonal(crisis.L0, crisis) is Classification.MARGINAL
    with pytest.raises(DomainError):
        classify_diagonal(1.0, crisis)


def test_sign_flip_exactly_at_L0(crisis):
    L0 = crisis.L0
    below = np.nextafter(L0, 0)
    above = np.nextafter(L0, 1)
    assert diagonal_eigenvalue(below, crisis) < 0 < diagonal_eigenvalue(above, crisis)


def test_fixed_point_list(regular, crisis):
    reps = fixed_points(regular)
    assert reps[0].kind is FixedPointKind.ORIGIN_L0
    assert reps[0].location[1] == pytest.approx(0.11 / 0.09)
    assert not reps[0].in_domain
    assert reps[1].kind is FixedPointKind.ONE_L0 and reps[1].jacobian is None
    assert all(r.classification is Classification.ATTRACTIVE for r in reps[2:])
    assert all(r.marginal for r in reps[2:])

    reps = fixed_points(crisis, [0.2, 0.6])
    origin, one, d1, d2 = reps
    assert origin.classification is Classification.SADDLE and origin.in_domain
    assert origin.stationary_roa == pytest.approx(-0.05, abs=1e-15)
    assert one.classification is Classification.ATTRACTIVE
    assert one.stationary_roa == -0.05
    assert d1.classification is Classification.ATTRACTIVE
    assert d2.classification is Classification.REPULSIVE
    assert d1.stationary_roa == pytest.approx(diagonal_roa(0.2, crisis))
    assert fixed_points(Params(0.05, 0.03, 0.03), [])[0].location[1] == 1.0
    with pytest.raises(DomainError):
        fixed_points(Params(0.05, 0.1, -0.05))


def test_saddle_whenever_L0_and_beta_positive():
    rng = np.random.default_rng(9)
    for _ in range(100):
        a = rng.uniform(0.01, 0.5)
        r = rng.uniform(0.0, 0.5)
        L0 = rng.uniform(0.01, 3.0)
        p = Params(a, L0 * (a + r) - a, r)
        assert fixed_points(p, [])[0].classification is Classification.SADDLE


@pytest.mark.parametrize("p", [Params(0.05, 0.06, 0.04), Params(0.05, -0.01, 0.04),
                               Params(0.05, 0.0, 0.0)])
def test_axis_roa_slope_sign(p):
    sign = np.sign(p.g_tilde - p.r_tilde)
    for L in np.arange(10) / 10:
        h = 1e-6
        fd = (diagonal_roa(L + h, p) - diagonal_roa(L - h, p)) / (2 * h) if L > 0 else \
            (diagonal_roa(L + h, p) - diagonal_roa(L, p)) / h
        assert np.sign(diagonal_roa_slope(L, p)) == sign
        if sign != 0:
            assert np.sign(fd) == sign
        else:
            assert diagonal_roa(L, p) == 0.0


def test_perturbation_decay(crisis):
    rep = verify_point_one_L0(crisis, 1e-3)
    assert rep.attractive
    assert rep.fitted_rate == pytest.approx(1 - 4 / 9, rel=0.05)
    assert rep.terminal_roa == pytest.approx(-0.05, abs=1e-3)
    # negative eps0 is taken by magnitude
    assert verify_point_one_L0(crisis, -5e-3).fitted_rate == pytest.approx(5 / 9, rel=0.05)


def test_critical_slowing():
    beta = 0.09
    rates = []
    for L0 in (0.5, 0.9, 0.97):
        p = Params(0.05, L0 * beta - 0.05, 0.04)
        rep = verify_point_one_L0(p, 1e-3)
        assert rep.fitted_rate == pytest.approx(1 - L0, rel=0.05)
        rates.append(rep.fitted_rate)
    assert rates[0] > rates[1] > rates[2]


def test_perturbation_reports_non_attractive(regular):
    rep = verify_point_one_L0(regular, 1e-3)
    assert not rep.attractive and rep.fitted_rate is None
    with pytest.raises(DomainError):
        verify_point_one_L0(regular, 0.5)


def test_report_json(crisis):
    doc = json.loads(report_json(fixed_points(crisis, [0.1]), verify_point_one_L0(crisis), crisis))
    assert doc["params"]["L0"] == pytest.approx(4 / 9)
    kinds = [fp["kind"] for fp in doc["fixed_points"]]
    assert kinds == ["Origin-L0", "One-L0", "DiagonalAxisPoint"]
    assert doc["fixed_points"][0]["classification"] == "saddle"
    assert doc["one_L0_perturbation"]["attractive"] is True
