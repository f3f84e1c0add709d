from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from release_ladder.config import load_config
from release_ladder.errors import InfeasibleMode
from release_ladder.financing import (McSettings, debt_value_mc, solve_levered_equity, takeover_envelope,
                                      tightness_construction, wedge_report)
from release_ladder.ladder import solve_ladder

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
MC = McSettings(n_paths=400, horizon=5.0)


@pytest.fixture(scope="module")
def wd():
    params = load_config(CONFIGS / "with_default.ini").params
    fb = solve_ladder(params)
    return params, fb, solve_levered_equity(params, "with-default", first_best=fb)


def _ladder(s):
    return np.array([s.beta1, s.z1_star, s.z2_star, s.beta2])


def test_zero_coupon_reproduces_first_best(scenario, ladder):
    lev = solve_levered_equity(replace(scenario.params, c_d=0.0), first_best=ladder)
    assert np.array_equal(_ladder(lev), _ladder(ladder))


def test_safe_block_keeps_first_best_patch_side(scenario, ladder):
    p = replace(scenario.params, c_d=0.05, phi1=0.0)
    lev = solve_levered_equity(p, first_best=ladder)
    assert np.max(np.abs(_ladder(lev) - _ladder(ladder))) <= 1e-9
    z = np.linspace(lev.beta1, lev.beta2, 101)
    assert np.all(lev.S(z) > 0)


def test_safe_block_infeasible_for_large_coupon(scenario, ladder):
    with pytest.raises(InfeasibleMode):
        solve_levered_equity(replace(scenario.params, c_d=5.0), first_best=ladder)


def test_safe_block_debt_is_riskless_perpetuity(scenario, ladder):
    p = replace(scenario.params, c_d=0.05, r=0.05)
    fb = solve_ladder(p)
    lev = solve_levered_equity(p, first_best=fb)
    for z0 in (lev.z1_star, 0.5 * (lev.z1_star + lev.z2_star), lev.z2_star):
        y, se = debt_value_mc(p, lev, 50, z0=z0, first_best=fb, mc=MC)
        assert abs(y - 1.0) <= 3 * se + 1e-12


def test_with_default_boundary_conditions(wd):
    _, _, lev = wd
    assert lev.z_d is not None and lev.beta1 < lev.z1_star < lev.z_d
    assert abs(lev.equity(lev.z_d)) <= 1e-10
    h = 1e-6
    fd = (lev.equity(lev.z_d + h) - lev.equity(lev.z_d - h)) / (2 * h)
    assert abs(fd) <= 1e-8
    inner = np.linspace(lev.beta1, lev.z_d, 1001)[1:-1]
    assert np.all(lev.S(inner) > 0)


def _debt_ode(params, lev, n=4001):
    """Finite-difference solve of r Y = c_d + mu Y' + sigma^2/2 Y'' with the reset at beta1."""
    z = np.linspace(lev.beta1, lev.z_d, n)
    h = z[1] - z[0]
    s2, mu, r = params.sigma ** 2, float(np.atleast_1d(params.mu)[0]), params.r
    A = np.zeros((n, n))
    rhs = np.full(n, params.c_d)
    i = np.arange(1, n - 1)
    A[i, i - 1] = -(0.5 * s2 / h**2 - 0.5 * mu / h)
    A[i, i] = r + s2 / h**2
    A[i, i + 1] = -(0.5 * s2 / h**2 + 0.5 * mu / h)
    A[-1, -1], rhs[-1] = 1.0, lev.y_to
    # Y(beta1) = Y(z1*), with z1* interpolated linearly on the grid
    j = int((lev.z1_star - lev.beta1) // h)
    w = (lev.z1_star - z[j]) / h
    A[0, 0] = 1.0
    A[0, j] -= 1.0 - w
    A[0, j + 1] -= w
    rhs[0] = 0.0
    return z, np.linalg.solve(A, rhs)


def test_with_default_debt_matches_ode(wd):
    params, fb, lev = wd
    z, y = _debt_ode(params, lev)
    assert np.interp(lev.z1_star, z, y) == pytest.approx(float(lev.Y(lev.z1_star)), abs=1e-5)
    est, se = debt_value_mc(params, lev, 400, first_best=fb, mc=MC)
    assert abs(est - np.interp(lev.z1_star, z, y)) <= 3 * se


def test_debt_continuous_across_patch(wd):
    _, _, lev = wd
    assert float(lev.Y(lev.beta1)) == pytest.approx(float(lev.Y(lev.z1_star)), abs=1e-12)


def test_takeover_envelope_examples():
    assert takeover_envelope(0.3, 2.0, 0.0) == 2.0
    assert takeover_envelope(0.3, 2.0, 2.0) == 0.0
    vals = [takeover_envelope(0.3, 2.0, phi) for phi in np.linspace(0, 2, 11)]
    assert np.all(np.diff(vals) < 0)
    arr = takeover_envelope(np.zeros(3), lambda z: z + 1.0, 0.5)
    assert np.allclose(arr, 0.5)


def test_wedge_report_invariants(wd):
    params, fb, lev = wd
    rep = wedge_report(params, lev, fb, 400, mc=MC)
    assert rep.agency_nonnegative and rep.bound_holds
    assert rep.decomposition_residual <= 1e-9
    assert rep.wedge.value == pytest.approx(rep.wedge_analytic, abs=3 * rep.wedge.se + 1e-3)


def test_wedge_vanishes_without_switching_costs(wd):
    params, _, _ = wd
    p = replace(params, phi1=0.0, phi2=0.0)
    fb = solve_ladder(p)
    lev = solve_levered_equity(p, "with-default", first_best=fb)
    rep = wedge_report(p, lev, fb, 400, mc=MC)
    assert rep.irreversibility.value == 0.0
    assert abs(rep.wedge.value - rep.agency.value) <= 1e-12
    assert rep.bound_holds


def test_tightness_construction_is_sharp(scenario, ladder):
    p = replace(scenario.params, phi2=0.05)
    lev = tightness_construction(p, ladder)
    rep = wedge_report(p, lev, ladder, 400, mc=MC)
    target = rep.expected_discount.value * p.phi2
    assert abs(rep.wedge.value - target) <= 3 * rep.wedge.se + 1e-12
    assert rep.bound_holds and rep.agency_nonnegative


def test_wedge_report_is_deterministic(wd):
    params, fb, lev = wd
    mc = McSettings(n_paths=20, horizon=1.0)
    assert wedge_report(params, lev, fb, 20, mc=mc).to_dict() == wedge_report(params, lev, fb, 20, mc=mc).to_dict()
