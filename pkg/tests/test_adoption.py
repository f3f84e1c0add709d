import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from release_ladder.adoption import (adoption_comparative_statics, buyer_value, count_sign_changes,
                                     smooth_fit_gap, smooth_fit_residual, solve_adoption, solve_alpha_general,
                                     solve_alpha_linear)
from release_ladder.errors import NoSignChange


def _linear(kappa=1.0, m_bar=1.0, a=1.0, p=0.0):
    return (lambda m: kappa * (m_bar - m)), (lambda m: a * m - p)


@pytest.mark.parametrize("p, alpha", [(0.0, 0.952381), (0.5, 0.976190)])
def test_closed_form_examples(p, alpha):
    assert solve_alpha_linear(1.0, 1.0, 0.05, 1.0, p) == pytest.approx(alpha, abs=1e-6)


def test_patient_limit():
    assert solve_alpha_linear(1.0, 1.0, 1e-12, 1.0, 0.3) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("p", [0.0, 0.5, -0.3])
def test_general_solver_matches_closed_form(p):
    mu, s = _linear(p=p)
    got = solve_alpha_general(mu, s, 0.05, (-1.0, 1.0 - 1e-8), d_surplus=lambda m: 1.0)
    assert got == pytest.approx(solve_alpha_linear(1.0, 1.0, 0.05, 1.0, p), abs=1e-10)


def test_concave_surplus_single_root_below_m_bar():
    mu = lambda m: 1.0 * (1.0 - m)
    s = lambda m: math.sqrt(m + 1.0) - 1.0
    ds = lambda m: 0.5 / math.sqrt(m + 1.0)
    alpha = solve_alpha_general(mu, s, 0.05, (0.0, 1.0 - 1e-8), d_surplus=ds)
    assert abs(smooth_fit_gap(mu, s, 0.05, ds)(alpha)) <= 1e-12
    assert alpha <= 1.0
    assert count_sign_changes(mu, s, 0.05, (0.0, 1.0 - 1e-8), d_surplus=ds) == 1
    assert smooth_fit_residual(alpha, s, 0.05, mu_bar=mu, d_surplus=ds) <= 1e-6


def test_no_root_at_m_bar_when_surplus_positive():
    mu, s = _linear(p=0.0)
    assert smooth_fit_gap(mu, s, 0.05)(1.0) < 0


def test_no_sign_change_raises():
    mu, s = _linear(p=0.0)
    with pytest.raises(NoSignChange):
        solve_alpha_general(mu, s, 0.05, (0.96, 0.99))
    with pytest.raises(NoSignChange):
        solve_alpha_general(mu, s, 0.05, (0.5, 0.5))


def test_buyer_value_examples():
    w, _ = buyer_value(0.0, 0.5, 0.05, 1.0, 0.05, 1.0)
    assert w == pytest.approx(0.5, abs=1e-15)
    _, tau = buyer_value(0.0, 0.5, 1.0, 1.0, 0.05, 1.0)
    assert tau == pytest.approx(math.log(2.0), abs=1e-15)
    w, _ = buyer_value(0.5 - 1e-12, 0.5, 1.0, 1.0, 0.05, 0.7)
    assert w == pytest.approx(0.7, abs=1e-12)


def test_buyer_value_at_or_above_cutoff_adopts_now():
    assert buyer_value(0.8, 0.5, 1.0, 1.0, 0.05, lambda m: 2 * m) == (1.6, 0.0)
    with pytest.raises(ValueError):
        buyer_value(0.8, 0.5, 1.0, 1.0, 0.05, 1.0)


def test_smooth_fit_residual_and_perturbation():
    alpha = solve_alpha_linear(1.0, 1.0, 0.5, 1.0, 0.0)
    s = lambda m: m
    assert smooth_fit_residual(alpha, s, 0.5, 1.0, 1.0, d_surplus=lambda m: 1.0) <= 1e-6
    bad = smooth_fit_residual(alpha + 0.05, s, 0.5, 1.0, 1.0, d_surplus=lambda m: 1.0)
    assert bad > 0.1


def test_exact_smooth_fit_identity():
    kappa, m_bar, r, a, p = 1.0, 1.0, 0.05, 1.0, 0.2
    alpha = solve_alpha_linear(kappa, m_bar, r, a, p)
    # dW/dm at alpha- from the closed form equals r S(alpha) / mu_bar(alpha), which equals S'(alpha) = a
    slope = r * (a * alpha - p) / (kappa * (m_bar - alpha))
    assert slope == pytest.approx(a, rel=1e-12)


def test_comparative_statics_examples_and_central_differences():
    dp, dm = adoption_comparative_statics(1.0, 1.0, 0.05, 1.0, 0.0)
    assert dp == pytest.approx(0.047619, abs=1e-6) and dm == pytest.approx(0.952381, abs=1e-6)
    h = 1e-5
    fd_p = (solve_alpha_linear(1.0, 1.0, 0.05, 1.0, h) - solve_alpha_linear(1.0, 1.0, 0.05, 1.0, -h)) / (2 * h)
    fd_m = (solve_alpha_linear(1.0, 1.0 + h, 0.05, 1.0, 0.0) - solve_alpha_linear(1.0, 1.0 - h, 0.05, 1.0, 0.0)) / (2 * h)
    assert abs(fd_p - dp) <= 1e-8 and abs(fd_m - dm) <= 1e-8


@settings(max_examples=100, deadline=None)
@given(kappa=st.floats(0.1, 5), r=st.floats(0.01, 1), a=st.floats(0.1, 5), p=st.floats(-2, 2),
       m_bar=st.floats(-2, 2), dp=st.floats(0.01, 1))
def test_alpha_monotone_in_p_and_m_bar(kappa, r, a, p, m_bar, dp):
    base = solve_alpha_linear(kappa, m_bar, r, a, p)
    assert solve_alpha_linear(kappa, m_bar, r, a, p + dp) > base
    assert solve_alpha_linear(kappa, m_bar + dp, r, a, p) > base


@settings(max_examples=100, deadline=None)
@given(kappa=st.floats(0.1, 5), r=st.floats(0.01, 1), m_bar=st.floats(-2, 2), p=st.floats(-2, 2))
def test_alpha_below_m_bar_when_surplus_nonnegative(kappa, r, m_bar, p):
    alpha = solve_alpha_linear(kappa, m_bar, r, 1.0, p)
    if alpha - p >= 0:
        assert alpha <= m_bar + 1e-12


def test_solve_adoption_value_matching_and_table():
    sol = solve_adoption(1.0, 1.0, 0.5, 1.0, 0.5)
    assert sol.alpha == pytest.approx(5 / 6) and sol.smooth_fit_residual <= 1e-6
    assert sol.w(sol.alpha - 1e-12) == pytest.approx(sol.s_alpha, abs=1e-10)
    tab = sol.table(0.0, 11)
    assert tab.shape == (11, 3) and np.all(np.diff(tab[:, 1]) > 0) and np.all(np.diff(tab[:, 2]) < 0)


def test_degenerate_cutoff_reports_nan():
    sol = solve_adoption(1.0, 0.0, 0.05, 1.0, 0.0)
    assert math.isnan(sol.smooth_fit_residual) and sol.table(-1.0).shape == (0, 3)
